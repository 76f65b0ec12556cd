#pragma once

// Parameterised attack inputs.

#include <cstdint>
#include <string>
#include <vector>

#include "rewb/error.hpp"

namespace rewb {

// prefix . unit^head . fence . unit^tail . nsuffix, where
//   head = head_base + head_k1 * k1
//   tail = tail_base + tail_k1 * k1 + tail_k2 * k2   (arity 2 only)
// Arity-1 families have no fence and no tail block.
struct AttackFamily {
  std::string prefix;
  std::string unit;
  std::string fence;
  std::string nsuffix;
  int arity = 1;
  long head_base = 0;
  long head_k1 = 1;
  long tail_base = 0;
  long tail_k1 = 0;
  long tail_k2 = 0;

  long head_units(long k1) const { return head_base + head_k1 * k1; }
  long tail_units(long k1, long k2) const { return arity == 2 ? tail_base + tail_k1 * k1 + tail_k2 * k2 : 0; }

  std::size_t length(const std::vector<long>& pumps) const {
    check(pumps);
    long k1 = pumps[0], k2 = arity == 2 ? pumps[1] : 0;
    return prefix.size() + fence.size() + nsuffix.size() +
           unit.size() * static_cast<std::size_t>(head_units(k1) + tail_units(k1, k2));
  }

  void check(const std::vector<long>& pumps) const {
    if (unit.empty()) throw Error(ErrorKind::degenerate_family, "empty pump unit");
    if (static_cast<int>(pumps.size()) != arity)
      throw Error(ErrorKind::arity_mismatch, "family takes " + std::to_string(arity) + " pump count(s), got " +
                                                 std::to_string(pumps.size()));
    for (long k : pumps)
      if (k < 0) throw Error(ErrorKind::arity_mismatch, "negative pump count");
  }

  // Pump vector for one sample: (k) or the diagonal (k, k).
  std::vector<long> diagonal(long k) const { return arity == 2 ? std::vector<long>{k, k} : std::vector<long>{k}; }
};

inline std::string materialize(const AttackFamily& f, const std::vector<long>& pumps) {
  f.check(pumps);
  long k1 = pumps[0], k2 = f.arity == 2 ? pumps[1] : 0;
  std::string s;
  s.reserve(f.length(pumps));
  s += f.prefix;
  for (long i = 0; i < f.head_units(k1); ++i) s += f.unit;
  s += f.fence;
  for (long i = 0; i < f.tail_units(k1, k2); ++i) s += f.unit;
  s += f.nsuffix;
  return s;
}

// Largest diagonal pump count whose materialised length does not exceed n
// (at least 0).
inline long pump_for_length(const AttackFamily& f, std::size_t n) {
  long lo = 0, hi = 1;
  while (f.length(f.diagonal(hi)) <= n && hi < (1L << 40)) hi *= 2;
  while (lo + 1 < hi) {
    long mid = lo + (hi - lo) / 2;
    if (f.length(f.diagonal(mid)) <= n)
      lo = mid;
    else
      hi = mid;
  }
  // Pick whichever neighbour lands closer to n.
  std::size_t a = f.length(f.diagonal(lo)), b = f.length(f.diagonal(lo + 1));
  if (a > n) return 0;
  return (b - n < n - a) ? lo + 1 : lo;
}

}  // namespace rewb
