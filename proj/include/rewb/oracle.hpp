#pragma once

// Brute-force reference computations over small automata and inputs.
// Everything here is written recursively and independently of the matcher so
// that the two can be compared.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "rewb/error.hpp"
#include "rewb/matcher.hpp"
#include "rewb/mfa.hpp"
#include "rewb/syntax.hpp"

namespace rewb {

inline constexpr std::size_t kOracleBound = 24;

struct SinkMfa {
  TwoPhaseMfa automaton;
  int sink = 0;
};

// Adds an accepting sink reached by epsilon from every state, looping on every byte.
inline SinkMfa sink(const TwoPhaseMfa& a) {
  SinkMfa r;
  r.automaton = a;
  TwoPhaseMfa& s = r.automaton;
  const int n = a.size();
  r.sink = s.add_state();
  for (int q = 0; q < n; ++q) {
    s.accepting[static_cast<std::size_t>(q)] = 0;
    s.add(q, Label::epsilon(), r.sink);
  }
  s.add(r.sink, Label::symbol(CharSet::all()), r.sink);
  s.accepting[static_cast<std::size_t>(r.sink)] = 1;
  return r;
}

enum class SinkCount {
  accepting_paths,  // 1 + sum recursion on the automaton itself
  call_nodes,       // the same recursion applied to the sink automaton
  distinct_traces,  // sink-accepting paths modulo zero-width steps
};

namespace oracle_detail {

// Memory as a flat vector: [pending_1, open_1, close_1, pending_2, ...].
using Mem = std::vector<std::int64_t>;
inline constexpr std::int64_t kBot = -1;

inline Mem empty_mem(int groups) { return Mem(static_cast<std::size_t>(groups) * 3, kBot); }
inline std::int64_t& pending(Mem& m, int i) { return m[static_cast<std::size_t>(i - 1) * 3]; }
inline std::int64_t& open_at(Mem& m, int i) { return m[static_cast<std::size_t>(i - 1) * 3 + 1]; }
inline std::int64_t& close_at(Mem& m, int i) { return m[static_cast<std::size_t>(i - 1) * 3 + 2]; }

// Result of evaluating \i at j: (matched, consumed, calibrated cost).
struct Br {
  bool ok;
  std::size_t len;
  std::uint64_t cost;
  std::size_t committed_len;
};

inline Br backref(std::string_view s, std::size_t j, Mem& m, int i, UnsetRef unset) {
  if (close_at(m, i) == kBot) {
    if (unset == UnsetRef::empty) return {true, 0, 0, 0};
    return {false, 0, 1, 0};
  }
  auto b = static_cast<std::size_t>(open_at(m, i));
  auto l = static_cast<std::size_t>(close_at(m, i)) - b;
  if (j + l > s.size()) return {false, 0, 1, l};
  for (std::size_t p = 0; p < l; ++p)
    if (s[b + p] != s[j + p]) return {false, 0, p + 1, l};
  return {true, l, l, l};
}

// Generic walk over configurations. `visit(q, j, m)` is called on entry; the
// zero-length backref guard keeps each walk finite.
class Walker {
 public:
  Walker(const TwoPhaseMfa& a, std::string_view s, UnsetRef unset) : a_(a), s_(s), unset_(unset) {
    std::size_t id = 0;
    for (int q = 0; q < a.size(); ++q) {
      ids_.emplace_back();
      for (std::size_t k = 0; k < a.edges(q).size(); ++k) ids_.back().push_back(id++);
    }
    guard_.assign(id, -1);
  }

  struct Step {
    int target;
    std::size_t j;
    std::size_t edge;
    std::size_t consumed;
  };

  // Applies every transition of q at (j, m) in order, calling `f` for each
  // successful one with updated memory; memory is restored afterwards.
  template <class F>
  void expand(int q, std::size_t j, Mem& m, F&& f) {
    const auto& es = a_.edges(q);
    for (std::size_t k = 0; k < es.size(); ++k) {
      const Transition& t = es[k];
      const Label& l = t.label;
      std::size_t id = ids_[static_cast<std::size_t>(q)][k];
      switch (l.kind) {
        case LabelKind::Symbol:
          if (j < s_.size() && l.set.test(static_cast<unsigned char>(s_[j]))) f(Step{t.target, j + 1, id, 1});
          break;
        case LabelKind::Epsilon:
          f(Step{t.target, j, id, 0});
          break;
        case LabelKind::Open: {
          auto old = pending(m, l.group);
          pending(m, l.group) = static_cast<std::int64_t>(j);
          f(Step{t.target, j, id, 0});
          pending(m, l.group) = old;
          break;
        }
        case LabelKind::Close: {
          if (pending(m, l.group) == kBot) break;
          auto oo = open_at(m, l.group), oc = close_at(m, l.group);
          open_at(m, l.group) = pending(m, l.group);
          close_at(m, l.group) = static_cast<std::int64_t>(j);
          f(Step{t.target, j, id, 0});
          open_at(m, l.group) = oo;
          close_at(m, l.group) = oc;
          break;
        }
        case LabelKind::Backref: {
          Br r = backref(s_, j, m, l.group, unset_);
          if (!r.ok) break;
          if (r.len == 0) {
            if (guard_[id] == static_cast<std::int64_t>(j)) break;
            auto old = guard_[id];
            guard_[id] = static_cast<std::int64_t>(j);
            f(Step{t.target, j, id, 0});
            guard_[id] = old;
          } else {
            f(Step{t.target, j + r.len, id, r.len});
          }
          break;
        }
      }
    }
  }

  const TwoPhaseMfa& a_;
  std::string_view s_;
  UnsetRef unset_;
  std::vector<std::vector<std::size_t>> ids_;
  std::vector<std::int64_t> guard_;
};

inline void check_bound(std::string_view s, std::size_t bound) {
  if (s.size() > bound)
    throw Error(ErrorKind::bound_exceeded,
                "oracle input length " + std::to_string(s.size()) + " exceeds bound " + std::to_string(bound));
}

// 1 + sum over successful transitions, i.e. the number of path prefixes.
inline std::uint64_t prefix_count(const TwoPhaseMfa& a, std::string_view s, UnsetRef unset) {
  Walker w(a, s, unset);
  Mem m = empty_mem(a.group_count);
  std::function<std::uint64_t(int, std::size_t)> rec = [&](int q, std::size_t j) -> std::uint64_t {
    std::uint64_t total = 1;
    w.expand(q, j, m, [&](const Walker::Step& st) { total += rec(st.target, st.j); });
    return total;
  };
  return rec(a.initial, 0);
}

}  // namespace oracle_detail

// Number of complete accepting paths of the automaton itself on s.
inline std::uint64_t abg_s(const TwoPhaseMfa& a, std::string_view s, UnsetRef unset = UnsetRef::fail,
                           std::size_t bound = kOracleBound) {
  using namespace oracle_detail;
  check_bound(s, bound);
  Walker w(a, s, unset);
  Mem m = empty_mem(a.group_count);
  std::function<std::uint64_t(int, std::size_t)> rec = [&](int q, std::size_t j) -> std::uint64_t {
    std::uint64_t total = (a.is_accepting(q) && j == s.size()) ? 1 : 0;
    w.expand(q, j, m, [&](const Walker::Step& st) { total += rec(st.target, st.j); });
    return total;
  };
  return rec(a.initial, 0);
}

inline std::uint64_t sink_abg_s(const TwoPhaseMfa& a, std::string_view s, SinkCount variant = SinkCount::accepting_paths,
                                UnsetRef unset = UnsetRef::fail, std::size_t bound = kOracleBound) {
  using namespace oracle_detail;
  check_bound(s, bound);
  switch (variant) {
    case SinkCount::accepting_paths:
      return prefix_count(a, s, unset);
    case SinkCount::call_nodes:
      return prefix_count(sink(a).automaton, s, unset);
    case SinkCount::distinct_traces: {
      // Signature: consuming steps as (edge, start, end), zero-length backrefs dropped.
      Walker w(a, s, unset);
      Mem m = empty_mem(a.group_count);
      std::set<std::vector<std::size_t>> seen;
      std::vector<std::size_t> sig;
      std::function<void(int, std::size_t)> rec = [&](int q, std::size_t j) {
        seen.insert(sig);
        w.expand(q, j, m, [&](const Walker::Step& st) {
          if (st.consumed) {
            sig.insert(sig.end(), {st.edge, j, st.j});
            rec(st.target, st.j);
            sig.resize(sig.size() - 3);
          } else {
            rec(st.target, st.j);
          }
        });
      };
      rec(a.initial, 0);
      return seen.size();
    }
  }
  return 0;
}

struct RuntimeResult {
  std::uint64_t cost = 0;
  bool accepted = false;
};

// Recursive backtracking cost under the calibrated model: acceptance is
// checked on entry to a state; with `exhaustive` the search does not stop there.
inline RuntimeResult bt_rt_s(const TwoPhaseMfa& a, std::string_view s, UnsetRef unset = UnsetRef::fail,
                             bool exhaustive = false, std::size_t bound = kOracleBound) {
  using namespace oracle_detail;
  check_bound(s, bound);
  Mem m = empty_mem(a.group_count);
  std::vector<std::vector<std::size_t>> ids;
  std::size_t nid = 0;
  for (int q = 0; q < a.size(); ++q) {
    ids.emplace_back();
    for (std::size_t k = 0; k < a.edges(q).size(); ++k) ids.back().push_back(nid++);
  }
  std::vector<std::int64_t> guard(nid, -1);
  RuntimeResult res;
  bool stop = false;
  std::function<void(int, std::size_t)> rec = [&](int q, std::size_t j) {
    if (a.is_accepting(q) && j == s.size()) {
      res.accepted = true;
      if (!exhaustive) {
        stop = true;
        return;
      }
    }
    const auto& es = a.edges(q);
    for (std::size_t k = 0; k < es.size() && !stop; ++k) {
      const Label& l = es[k].label;
      int to = es[k].target;
      switch (l.kind) {
        case LabelKind::Symbol:
          if (j < s.size() && l.set.test(static_cast<unsigned char>(s[j]))) {
            res.cost += 1;
            rec(to, j + 1);
          }
          break;
        case LabelKind::Epsilon:
          rec(to, j);
          break;
        case LabelKind::Open: {
          auto saved = m;
          pending(m, l.group) = static_cast<std::int64_t>(j);
          rec(to, j);
          m = saved;
          break;
        }
        case LabelKind::Close: {
          if (pending(m, l.group) == kBot) break;
          auto saved = m;
          open_at(m, l.group) = pending(m, l.group);
          close_at(m, l.group) = static_cast<std::int64_t>(j);
          rec(to, j);
          m = saved;
          break;
        }
        case LabelKind::Backref: {
          Br r = backref(s, j, m, l.group, unset);
          res.cost += r.cost;
          if (!r.ok) break;
          std::size_t id = ids[static_cast<std::size_t>(q)][k];
          if (r.len == 0) {
            if (guard[id] == static_cast<std::int64_t>(j)) break;
            auto old = guard[id];
            guard[id] = static_cast<std::int64_t>(j);
            rec(to, j);
            guard[id] = old;
          } else {
            rec(to, j + r.len);
          }
          break;
        }
      }
    }
  };
  rec(a.initial, 0);
  return res;
}

// Constants of the scaled-up runtime bound.
struct RuntimeConstants {
  std::uint64_t max_out = 0;
  std::uint64_t max_fbrl = 1;  // 1 + longest bounded backref capture
  std::uint64_t ibrrct = 0;    // unbounded backref edges x worst evaluation count
  std::uint64_t xi() const { return max_out * max_fbrl + ibrrct; }
};

namespace oracle_detail {

// Longest consumed length of group i, or none when unbounded.
inline std::optional<std::uint64_t> capture_bound(const TwoPhaseMfa& a, int group,
                                                  std::map<int, std::optional<std::uint64_t>>& memo,
                                                  std::set<int>& active) {
  if (auto it = memo.find(group); it != memo.end()) return it->second;
  if (active.count(group)) return std::nullopt;  // group refers back to itself
  active.insert(group);
  const int n = a.size();
  std::vector<int> starts, ends;
  for (int q = 0; q < n; ++q)
    for (auto& t : a.edges(q)) {
      if (t.label.kind == LabelKind::Open && t.label.group == group) starts.push_back(t.target);
      if (t.label.kind == LabelKind::Close && t.label.group == group) ends.push_back(q);
    }
  auto inside = [&](const Transition& t) {
    return !((t.label.kind == LabelKind::Close || t.label.kind == LabelKind::Open) && t.label.group == group);
  };
  std::vector<char> fwd(static_cast<std::size_t>(n), 0), bwd(static_cast<std::size_t>(n), 0);
  std::vector<int> work(starts);
  for (int q : starts) fwd[static_cast<std::size_t>(q)] = 1;
  while (!work.empty()) {
    int q = work.back();
    work.pop_back();
    for (auto& t : a.edges(q))
      if (inside(t) && !fwd[static_cast<std::size_t>(t.target)]) {
        fwd[static_cast<std::size_t>(t.target)] = 1;
        work.push_back(t.target);
      }
  }
  std::vector<std::vector<int>> rev(static_cast<std::size_t>(n));
  for (int q = 0; q < n; ++q)
    for (auto& t : a.edges(q))
      if (inside(t)) rev[static_cast<std::size_t>(t.target)].push_back(q);
  work = ends;
  for (int q : ends) bwd[static_cast<std::size_t>(q)] = 1;
  while (!work.empty()) {
    int q = work.back();
    work.pop_back();
    for (int p : rev[static_cast<std::size_t>(q)])
      if (!bwd[static_cast<std::size_t>(p)]) {
        bwd[static_cast<std::size_t>(p)] = 1;
        work.push_back(p);
      }
  }
  // Longest path over the span; a cycle means unbounded.
  std::vector<std::optional<std::uint64_t>> best(static_cast<std::size_t>(n));
  std::vector<int> colour(static_cast<std::size_t>(n), 0);
  bool unbounded = false;
  std::function<std::optional<std::uint64_t>(int)> longest = [&](int q) -> std::optional<std::uint64_t> {
    auto& c = colour[static_cast<std::size_t>(q)];
    if (c == 1) {
      unbounded = true;
      return std::nullopt;
    }
    if (c == 2) return best[static_cast<std::size_t>(q)];
    c = 1;
    std::optional<std::uint64_t> r;
    for (int e : ends)
      if (e == q) r = 0;
    for (auto& t : a.edges(q)) {
      if (!inside(t) || !fwd[static_cast<std::size_t>(t.target)] || !bwd[static_cast<std::size_t>(t.target)]) continue;
      auto sub = longest(t.target);
      if (unbounded) break;
      if (!sub) continue;
      std::uint64_t w = 0;
      if (t.label.kind == LabelKind::Symbol) w = 1;
      if (t.label.kind == LabelKind::Backref) {
        auto inner = capture_bound(a, t.label.group, memo, active);
        if (!inner) {
          unbounded = true;
          break;
        }
        w = *inner;
      }
      r = std::max(r.value_or(0), *sub + w);
    }
    c = 2;
    best[static_cast<std::size_t>(q)] = r;
    return r;
  };
  std::optional<std::uint64_t> result = 0;
  for (int q : starts) {
    if (!bwd[static_cast<std::size_t>(q)]) continue;
    auto v = longest(q);
    if (unbounded) break;
    if (v) result = std::max(*result, *v);
  }
  if (unbounded) result = std::nullopt;
  active.erase(group);
  memo[group] = result;
  return result;
}

}  // namespace oracle_detail

// Throws precondition when an unbounded backref can be evaluated an unbounded
// number of times (it lies after a cycle), since then no constant exists.
inline RuntimeConstants runtime_constants(const TwoPhaseMfa& a) {
  using namespace oracle_detail;
  RuntimeConstants c;
  const int n = a.size();
  for (int q = 0; q < n; ++q) c.max_out = std::max<std::uint64_t>(c.max_out, a.edges(q).size());
  std::map<int, std::optional<std::uint64_t>> memo;
  std::set<int> active;
  std::uint64_t unbounded_edges = 0, worst_evals = 0;

  // Acyclic path counts from the initial state; -1 marks "reachable through a cycle".
  std::vector<char> on_cycle_path(static_cast<std::size_t>(n), 0);
  {
    int ncomp = 0;
    auto comp = strongly_connected(a, [](int, const Transition&) { return true; }, &ncomp);
    std::vector<int> size(static_cast<std::size_t>(ncomp), 0);
    std::vector<char> self(static_cast<std::size_t>(ncomp), 0);
    for (int q = 0; q < n; ++q) {
      ++size[static_cast<std::size_t>(comp[static_cast<std::size_t>(q)])];
      for (auto& t : a.edges(q))
        if (t.target == q) self[static_cast<std::size_t>(comp[static_cast<std::size_t>(q)])] = 1;
    }
    auto cyclic = [&](int q) {
      int k = comp[static_cast<std::size_t>(q)];
      return size[static_cast<std::size_t>(k)] > 1 || self[static_cast<std::size_t>(k)];
    };
    // A state is "after a cycle" if it is cyclic or reachable from a cyclic state.
    std::vector<int> work;
    for (int q = 0; q < n; ++q)
      if (cyclic(q)) {
        on_cycle_path[static_cast<std::size_t>(q)] = 1;
        work.push_back(q);
      }
    while (!work.empty()) {
      int q = work.back();
      work.pop_back();
      for (auto& t : a.edges(q))
        if (!on_cycle_path[static_cast<std::size_t>(t.target)]) {
          on_cycle_path[static_cast<std::size_t>(t.target)] = 1;
          work.push_back(t.target);
        }
    }
  }
  std::vector<std::uint64_t> paths(static_cast<std::size_t>(n), 0);
  {
    // Topological order restricted to states not after a cycle.
    std::function<std::uint64_t(int)> count_to;
    std::vector<std::vector<int>> rev(static_cast<std::size_t>(n));
    for (int q = 0; q < n; ++q)
      for (auto& t : a.edges(q)) rev[static_cast<std::size_t>(t.target)].push_back(q);
    std::vector<char> done(static_cast<std::size_t>(n), 0);
    count_to = [&](int q) -> std::uint64_t {
      if (done[static_cast<std::size_t>(q)]) return paths[static_cast<std::size_t>(q)];
      std::uint64_t r = q == a.initial ? 1 : 0;
      for (int p : rev[static_cast<std::size_t>(q)]) r += count_to(p);
      done[static_cast<std::size_t>(q)] = 1;
      paths[static_cast<std::size_t>(q)] = r;
      return r;
    };
    for (int q = 0; q < n; ++q) {
      for (auto& t : a.edges(q)) {
        if (t.label.kind != LabelKind::Backref) continue;
        auto b = capture_bound(a, t.label.group, memo, active);
        if (b) {
          c.max_fbrl = std::max<std::uint64_t>(c.max_fbrl, 1 + *b);
          continue;
        }
        if (on_cycle_path[static_cast<std::size_t>(q)])
          throw Error(ErrorKind::precondition,
                      "unbounded backreference \\" + std::to_string(t.label.group) + " is evaluated after a loop");
        ++unbounded_edges;
        worst_evals = std::max(worst_evals, count_to(q));
      }
    }
  }
  c.ibrrct = unbounded_edges * worst_evals;
  return c;
}

// Scaled-up runtime: MaxOut * MaxFBrL * SinkAbgS + IBrRCt * |s|.
inline std::uint64_t bt_rt_upper(const TwoPhaseMfa& a, std::string_view s, std::size_t bound = kOracleBound) {
  RuntimeConstants c = runtime_constants(a);
  return c.max_out * c.max_fbrl * sink_abg_s(a, s, SinkCount::accepting_paths, UnsetRef::fail, bound) +
         c.ibrrct * s.size();
}

// Direct backtracking interpreter over the AST (anchored, acceptance only).
// A Star iteration that consumes nothing ends the loop.
inline bool interpret_accepts(const Node& ast, std::string_view s, int group_count, UnsetRef unset = UnsetRef::fail) {
  std::vector<std::int64_t> open(static_cast<std::size_t>(group_count) + 1, -1),
      close(static_cast<std::size_t>(group_count) + 1, -1);
  using K = std::function<bool(std::size_t)>;
  std::function<bool(const Node&, std::size_t, const K&)> m = [&](const Node& n, std::size_t j, const K& k) -> bool {
    switch (n.kind) {
      case NodeKind::Empty:
        return k(j);
      case NodeKind::Symbol:
        return j < s.size() && n.set.test(static_cast<unsigned char>(s[j])) && k(j + 1);
      case NodeKind::Group:
        return m(n.children[0], j, k);
      case NodeKind::Alt:
        return m(n.children[0], j, k) || m(n.children[1], j, k);
      case NodeKind::Concat: {
        std::function<bool(std::size_t, std::size_t)> seq = [&](std::size_t idx, std::size_t p) -> bool {
          if (idx == n.children.size()) return k(p);
          return m(n.children[idx], p, [&](std::size_t q) { return seq(idx + 1, q); });
        };
        return seq(0, j);
      }
      case NodeKind::Capture: {
        auto i = static_cast<std::size_t>(n.group);
        return m(n.children[0], j, [&, i, j](std::size_t e) {
          auto oo = open[i], oc = close[i];
          open[i] = static_cast<std::int64_t>(j);
          close[i] = static_cast<std::int64_t>(e);
          bool r = k(e);
          open[i] = oo;
          close[i] = oc;
          return r;
        });
      }
      case NodeKind::Backref: {
        auto i = static_cast<std::size_t>(n.group);
        if (close[i] < 0) return unset == UnsetRef::empty && k(j);
        auto b = static_cast<std::size_t>(open[i]), l = static_cast<std::size_t>(close[i]) - b;
        if (j + l > s.size() || s.substr(b, l) != s.substr(j, l)) return false;
        return k(j + l);
      }
      case NodeKind::Star: {
        std::function<bool(std::size_t)> loop = [&](std::size_t p) -> bool {
          auto body = [&] { return m(n.children[0], p, [&](std::size_t q) { return q == p ? k(q) : loop(q); }); };
          return n.greedy ? (body() || k(p)) : (k(p) || body());
        };
        return loop(j);
      }
    }
    return false;
  };
  return m(ast, 0, [&](std::size_t e) { return e == s.size(); });
}

}  // namespace rewb
