#pragma once

// Path fragments of a memory automaton and the algebra the detectors need:
// emptiness, membership, product on backref-free fragments, power queries
// and the overlap-string search.
//
// Open and close labels are erased to epsilon inside fragments. Backref
// labels are kept; operations that need a regular language either reject
// them or work on `approximate_backrefs`, which replaces each backref edge
// by a Sigma* gadget (a superset of what the backref can match).

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "rewb/charset.hpp"
#include "rewb/error.hpp"
#include "rewb/mfa.hpp"

namespace rewb {

enum class FragKind : std::uint8_t { Symbol, Epsilon, Backref };

struct FragEdge {
  FragKind kind = FragKind::Epsilon;
  CharSet set;  // Symbol only
  int group = 0;
  int target = 0;
};

struct PathAutomaton {
  std::vector<std::vector<FragEdge>> out;
  std::vector<char> accepting;
  std::vector<int> initial;
  std::vector<int> origin;  // state of the parent automaton, or -1

  int add_state(int from = -1) {
    out.emplace_back();
    accepting.push_back(0);
    origin.push_back(from);
    return static_cast<int>(out.size()) - 1;
  }
  void add(int from, FragEdge e) { out[static_cast<std::size_t>(from)].push_back(e); }
  void add_symbol(int from, const CharSet& s, int to) { add(from, {FragKind::Symbol, s, 0, to}); }
  void add_epsilon(int from, int to) { add(from, {FragKind::Epsilon, {}, 0, to}); }
  int size() const { return static_cast<int>(out.size()); }
  bool is_accepting(int q) const { return accepting[static_cast<std::size_t>(q)] != 0; }

  bool has_backrefs() const {
    for (auto& es : out)
      for (auto& e : es)
        if (e.kind == FragKind::Backref) return true;
    return false;
  }

  using StateSet = std::vector<char>;

  void close_epsilon(StateSet& set) const {
    std::vector<int> work;
    for (int q = 0; q < size(); ++q)
      if (set[static_cast<std::size_t>(q)]) work.push_back(q);
    while (!work.empty()) {
      int q = work.back();
      work.pop_back();
      for (auto& e : out[static_cast<std::size_t>(q)]) {
        if (e.kind != FragKind::Epsilon || set[static_cast<std::size_t>(e.target)]) continue;
        set[static_cast<std::size_t>(e.target)] = 1;
        work.push_back(e.target);
      }
    }
  }
  StateSet start_set() const {
    StateSet s(static_cast<std::size_t>(size()), 0);
    for (int q : initial) s[static_cast<std::size_t>(q)] = 1;
    close_epsilon(s);
    return s;
  }
  StateSet step(const StateSet& from, unsigned char c) const {
    StateSet s(static_cast<std::size_t>(size()), 0);
    for (int q = 0; q < size(); ++q) {
      if (!from[static_cast<std::size_t>(q)]) continue;
      for (auto& e : out[static_cast<std::size_t>(q)])
        if (e.kind == FragKind::Symbol && e.set.test(c)) s[static_cast<std::size_t>(e.target)] = 1;
    }
    close_epsilon(s);
    return s;
  }
  bool any_accepting(const StateSet& s) const {
    for (int q = 0; q < size(); ++q)
      if (s[static_cast<std::size_t>(q)] && is_accepting(q)) return true;
    return false;
  }

  // States from which an accepting state is reachable along any edge.
  StateSet coreachable() const {
    std::vector<std::vector<int>> rev(static_cast<std::size_t>(size()));
    for (int q = 0; q < size(); ++q)
      for (auto& e : out[static_cast<std::size_t>(q)]) rev[static_cast<std::size_t>(e.target)].push_back(q);
    StateSet co(static_cast<std::size_t>(size()), 0);
    std::vector<int> work;
    for (int q = 0; q < size(); ++q)
      if (is_accepting(q)) {
        co[static_cast<std::size_t>(q)] = 1;
        work.push_back(q);
      }
    while (!work.empty()) {
      int q = work.back();
      work.pop_back();
      for (int p : rev[static_cast<std::size_t>(q)])
        if (!co[static_cast<std::size_t>(p)]) {
          co[static_cast<std::size_t>(p)] = 1;
          work.push_back(p);
        }
    }
    return co;
  }

  bool is_empty() const {
    auto co = coreachable();
    for (int q : initial)
      if (co[static_cast<std::size_t>(q)]) return false;
    return true;
  }

  bool contains_epsilon() const { return any_accepting(start_set()); }

  bool accepts(std::string_view s) const {
    if (has_backrefs()) throw Error(ErrorKind::backref_fragment, "membership on a fragment with backreferences");
    StateSet cur = start_set();
    for (char c : s) cur = step(cur, static_cast<unsigned char>(c));
    return any_accepting(cur);
  }

  // Shortest accepted string, one representative byte per class label.
  std::optional<std::string> shortest() const {
    if (has_backrefs()) throw Error(ErrorKind::backref_fragment, "shortest string of a fragment with backreferences");
    const int n = size();
    std::vector<int> dist(static_cast<std::size_t>(n), -1);
    std::vector<std::pair<int, char>> prev(static_cast<std::size_t>(n), {-1, 0});
    std::deque<int> dq;
    for (int q : initial)
      if (dist[static_cast<std::size_t>(q)] < 0) {
        dist[static_cast<std::size_t>(q)] = 0;
        dq.push_back(q);
      }
    std::vector<char> done(static_cast<std::size_t>(n), 0);
    while (!dq.empty()) {
      int q = dq.front();
      dq.pop_front();
      if (done[static_cast<std::size_t>(q)]) continue;
      done[static_cast<std::size_t>(q)] = 1;
      if (is_accepting(q)) {
        std::string s;
        for (int x = q; prev[static_cast<std::size_t>(x)].first >= 0; x = prev[static_cast<std::size_t>(x)].first)
          if (prev[static_cast<std::size_t>(x)].second) s.push_back(prev[static_cast<std::size_t>(x)].second);
        std::reverse(s.begin(), s.end());
        return s;
      }
      for (auto& e : out[static_cast<std::size_t>(q)]) {
        int w = e.kind == FragKind::Epsilon ? 0 : 1;
        int nd = dist[static_cast<std::size_t>(q)] + w;
        auto& d = dist[static_cast<std::size_t>(e.target)];
        if (done[static_cast<std::size_t>(e.target)] || (d >= 0 && d <= nd)) continue;
        d = nd;
        char c = w ? static_cast<char>(e.set.representative()) : 0;
        prev[static_cast<std::size_t>(e.target)] = {q, c};
        if (w)
          dq.push_back(e.target);
        else
          dq.push_front(e.target);
      }
    }
    return std::nullopt;
  }

  // Keeps states reachable from an initial state and co-reachable to an
  // accepting one. An empty language yields the automaton with no states.
  PathAutomaton trimmed() const {
    StateSet reach(static_cast<std::size_t>(size()), 0);
    std::vector<int> work;
    for (int q : initial)
      if (!reach[static_cast<std::size_t>(q)]) {
        reach[static_cast<std::size_t>(q)] = 1;
        work.push_back(q);
      }
    while (!work.empty()) {
      int q = work.back();
      work.pop_back();
      for (auto& e : out[static_cast<std::size_t>(q)])
        if (!reach[static_cast<std::size_t>(e.target)]) {
          reach[static_cast<std::size_t>(e.target)] = 1;
          work.push_back(e.target);
        }
    }
    auto co = coreachable();
    std::vector<int> id(static_cast<std::size_t>(size()), -1);
    PathAutomaton r;
    for (int q = 0; q < size(); ++q)
      if (reach[static_cast<std::size_t>(q)] && co[static_cast<std::size_t>(q)]) {
        id[static_cast<std::size_t>(q)] = r.add_state(origin[static_cast<std::size_t>(q)]);
        r.accepting[static_cast<std::size_t>(id[static_cast<std::size_t>(q)])] = accepting[static_cast<std::size_t>(q)];
      }
    for (int q = 0; q < size(); ++q) {
      if (id[static_cast<std::size_t>(q)] < 0) continue;
      for (auto e : out[static_cast<std::size_t>(q)]) {
        if (id[static_cast<std::size_t>(e.target)] < 0) continue;
        e.target = id[static_cast<std::size_t>(e.target)];
        r.add(id[static_cast<std::size_t>(q)], e);
      }
    }
    for (int q : initial)
      if (id[static_cast<std::size_t>(q)] >= 0) r.initial.push_back(id[static_cast<std::size_t>(q)]);
    std::sort(r.initial.begin(), r.initial.end());
    r.initial.erase(std::unique(r.initial.begin(), r.initial.end()), r.initial.end());
    return r;
  }

  // Every class label, used to partition the alphabet.
  void collect_labels(std::vector<CharSet>& into) const {
    for (auto& es : out)
      for (auto& e : es)
        if (e.kind == FragKind::Symbol) into.push_back(e.set);
  }
};

// Accepts exactly the empty string.
inline PathAutomaton epsilon_fragment() {
  PathAutomaton p;
  int q = p.add_state();
  p.accepting[0] = 1;
  p.initial = {q};
  return p;
}

// Accepts unit^+.
inline PathAutomaton power_fragment(std::string_view unit) {
  if (unit.empty()) throw Error(ErrorKind::precondition, "empty unit");
  PathAutomaton p;
  int first = p.add_state();
  int cur = first;
  for (char c : unit) {
    int nxt = p.add_state();
    p.add_symbol(cur, CharSet::single(static_cast<unsigned char>(c)), nxt);
    cur = nxt;
  }
  p.accepting[static_cast<std::size_t>(cur)] = 1;
  p.add_epsilon(cur, first);
  p.initial = {first};
  return p;
}

// Restriction of which parent edges a fragment may use.
struct PathFilter {
  int exclude_open = 0;   // group id whose open(i) edges are dropped, 0 for none
  int exclude_close = 0;  // group id whose close(i) edges are dropped, 0 for none
  const std::vector<char>* allowed = nullptr;  // optional state mask
  bool drop_backrefs = false;

  bool keep_state(int q) const { return !allowed || (*allowed)[static_cast<std::size_t>(q)]; }
  bool keep(int from, const Transition& t) const {
    if (!keep_state(from) || !keep_state(t.target)) return false;
    const Label& l = t.label;
    if (exclude_open && l.kind == LabelKind::Open && l.group == exclude_open) return false;
    if (exclude_close && l.kind == LabelKind::Close && l.group == exclude_close) return false;
    if (drop_backrefs && l.kind == LabelKind::Backref) return false;
    return true;
  }
};

namespace detail {

inline FragEdge frag_edge(const Label& l, int target) {
  switch (l.kind) {
    case LabelKind::Symbol: return {FragKind::Symbol, l.set, 0, target};
    case LabelKind::Backref: return {FragKind::Backref, {}, l.group, target};
    default: return {FragKind::Epsilon, {}, 0, target};
  }
}

inline PathAutomaton copy_filtered(const TwoPhaseMfa& a, const PathFilter& f) {
  PathAutomaton p;
  for (int q = 0; q < a.size(); ++q) p.add_state(q);
  for (int q = 0; q < a.size(); ++q)
    for (auto& t : a.edges(q))
      if (f.keep(q, t)) p.add(q, frag_edge(t.label, t.target));
  return p;
}

}  // namespace detail

inline PathAutomaton paths_from_to(const TwoPhaseMfa& a, const std::vector<int>& sources,
                                   const std::vector<int>& targets, const PathFilter& filter) {
  PathAutomaton p = detail::copy_filtered(a, filter);
  for (int q : sources)
    if (filter.keep_state(q)) p.initial.push_back(q);
  for (int q : targets)
    if (filter.keep_state(q)) p.accepting[static_cast<std::size_t>(q)] = 1;
  return p.trimmed();
}

inline PathAutomaton paths_from_to(const TwoPhaseMfa& a, const std::vector<int>& sources,
                                   const std::vector<int>& targets, std::optional<int> excluded_group = std::nullopt) {
  PathFilter f;
  if (excluded_group) f.exclude_close = *excluded_group;
  return paths_from_to(a, sources, targets, f);
}

// Walks from pivot back to pivot that take at least one edge. The result is
// empty when no such walk consumes input.
inline PathAutomaton loop_paths(const TwoPhaseMfa& a, int pivot, const PathFilter& filter) {
  if (!filter.keep_state(pivot)) return {};
  PathAutomaton p = detail::copy_filtered(a, filter);
  int start = p.add_state(pivot);
  for (auto& t : a.edges(pivot))
    if (filter.keep(pivot, t)) p.add(start, detail::frag_edge(t.label, t.target));
  p.initial = {start};
  p.accepting[static_cast<std::size_t>(pivot)] = 1;
  PathAutomaton r = p.trimmed();
  if (r.size() == 0) return r;
  // Only zero-width walks: nothing but epsilon (the automaton has no zero-width cycles).
  bool consumes = false;
  for (auto& es : r.out)
    for (auto& e : es)
      if (e.kind != FragKind::Epsilon) consumes = true;
  return consumes ? r : PathAutomaton{};
}

inline PathAutomaton loop_paths(const TwoPhaseMfa& a, int pivot, std::optional<int> excluded_group = std::nullopt) {
  PathFilter f;
  if (excluded_group) f.exclude_close = *excluded_group;
  return loop_paths(a, pivot, f);
}

inline PathAutomaton concat(const PathAutomaton& x, const PathAutomaton& y) {
  if (x.size() == 0 || y.size() == 0) return {};
  PathAutomaton r = x;
  const int off = r.size();
  for (int q = 0; q < y.size(); ++q) r.add_state(y.origin[static_cast<std::size_t>(q)]);
  for (int q = 0; q < y.size(); ++q)
    for (auto e : y.out[static_cast<std::size_t>(q)]) {
      e.target += off;
      r.add(q + off, e);
    }
  for (int q = 0; q < x.size(); ++q)
    if (x.is_accepting(q)) {
      r.accepting[static_cast<std::size_t>(q)] = 0;
      for (int i : y.initial) r.add_epsilon(q, i + off);
    }
  for (int q = 0; q < y.size(); ++q) r.accepting[static_cast<std::size_t>(q + off)] = y.accepting[static_cast<std::size_t>(q)];
  return r;
}

// Backref edges become: epsilon into a fresh state with a universal loop,
// epsilon out to the original target.
inline PathAutomaton approximate_backrefs(const PathAutomaton& x) {
  PathAutomaton r = x;
  for (int q = 0; q < x.size(); ++q) {
    auto& es = r.out[static_cast<std::size_t>(q)];
    for (auto& e : es) {
      if (e.kind != FragKind::Backref) continue;
      int g = r.add_state();
      int tgt = e.target;
      e = {FragKind::Epsilon, {}, 0, g};
      r.add_symbol(g, CharSet::all(), g);
      r.add_epsilon(g, tgt);
    }
  }
  return r;
}

// Same, except that a backref to a group listed in `content` is replaced by a
// copy of that (backref-free) fragment, which holds every string the group can
// capture.
inline PathAutomaton approximate_backrefs(const PathAutomaton& x, const std::map<int, PathAutomaton>& content) {
  PathAutomaton r = x;
  for (int q = 0; q < x.size(); ++q) {
    for (std::size_t k = 0; k < x.out[static_cast<std::size_t>(q)].size(); ++k) {
      const FragEdge e = x.out[static_cast<std::size_t>(q)][k];
      if (e.kind != FragKind::Backref) continue;
      auto it = content.find(e.group);
      if (it == content.end() || it->second.size() == 0 || it->second.has_backrefs()) continue;
      const PathAutomaton& c = it->second;
      const int off = r.size();
      for (int p = 0; p < c.size(); ++p) r.add_state();
      for (int p = 0; p < c.size(); ++p) {
        for (auto ce : c.out[static_cast<std::size_t>(p)]) {
          ce.target += off;
          r.add(p + off, ce);
        }
        if (c.is_accepting(p)) r.add_epsilon(p + off, e.target);
      }
      auto& slot = r.out[static_cast<std::size_t>(q)][k];
      slot = {FragKind::Epsilon, {}, 0, c.initial.empty() ? e.target : c.initial.front() + off};
      for (std::size_t i = 1; i < c.initial.size(); ++i) r.add_epsilon(q, c.initial[i] + off);
    }
  }
  return approximate_backrefs(r);
}

inline PathAutomaton intersect_backref_free(const PathAutomaton& x, const PathAutomaton& y) {
  if (x.has_backrefs() || y.has_backrefs())
    throw Error(ErrorKind::backref_fragment, "intersection of fragments with backreferences");
  PathAutomaton r;
  std::map<std::pair<int, int>, int> id;
  std::vector<std::pair<int, int>> work;
  auto get = [&](int p, int q) {
    auto [it, fresh] = id.emplace(std::make_pair(p, q), 0);
    if (fresh) {
      it->second = r.add_state();
      r.accepting[static_cast<std::size_t>(it->second)] = x.is_accepting(p) && y.is_accepting(q);
      work.emplace_back(p, q);
    }
    return it->second;
  };
  for (int p : x.initial)
    for (int q : y.initial) r.initial.push_back(get(p, q));
  while (!work.empty()) {
    auto [p, q] = work.back();
    work.pop_back();
    int from = id[{p, q}];
    for (auto& e : x.out[static_cast<std::size_t>(p)])
      if (e.kind == FragKind::Epsilon) r.add_epsilon(from, get(e.target, q));
    for (auto& e : y.out[static_cast<std::size_t>(q)])
      if (e.kind == FragKind::Epsilon) r.add_epsilon(from, get(p, e.target));
    for (auto& ex : x.out[static_cast<std::size_t>(p)]) {
      if (ex.kind != FragKind::Symbol) continue;
      for (auto& ey : y.out[static_cast<std::size_t>(q)]) {
        if (ey.kind != FragKind::Symbol) continue;
        CharSet both = ex.set & ey.set;
        if (!both.empty()) r.add_symbol(from, both, get(ex.target, ey.target));
      }
    }
  }
  return r.trimmed();
}

// Some unit^u with u >= 1 is in the language (backrefs over-approximated).
inline bool contains_power(const PathAutomaton& x, std::string_view unit) {
  if (x.has_backrefs()) return contains_power(approximate_backrefs(x), unit);
  return !intersect_backref_free(x, power_fragment(unit)).is_empty();
}

// Smallest u >= min_u with unit^u in the language, searching up to `limit`.
inline std::optional<int> min_power(const PathAutomaton& x, std::string_view unit, int min_u = 0, int limit = 64) {
  PathAutomaton approx = x.has_backrefs() ? approximate_backrefs(x) : x;
  PathAutomaton::StateSet cur = approx.start_set();
  for (int u = 0; u <= limit; ++u) {
    if (u >= min_u && approx.any_accepting(cur)) return u;
    for (char c : unit) cur = approx.step(cur, static_cast<unsigned char>(c));
  }
  return std::nullopt;
}

// Language contains neither epsilon nor any power of unit.
inline bool power_free(const PathAutomaton& x, std::string_view unit) {
  PathAutomaton approx = x.has_backrefs() ? approximate_backrefs(x) : x;
  return !approx.contains_epsilon() && !contains_power(approx, unit);
}

// Byte alphabet partition induced by a set of class labels; one representative
// byte per block, blocks ordered by representative preference.
struct AtomPartition {
  std::vector<CharSet> atoms;
  std::vector<unsigned char> reps;

  static AtomPartition of(const std::vector<CharSet>& labels, bool include_uncovered = false) {
    std::vector<CharSet> uniq = labels;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    std::map<std::vector<bool>, CharSet> blocks;
    for (int c = 0; c < CharSet::kSize; ++c) {
      std::vector<bool> sig(uniq.size());
      bool any = false;
      for (std::size_t k = 0; k < uniq.size(); ++k) {
        sig[k] = uniq[k].test(static_cast<unsigned char>(c));
        any = any || sig[k];
      }
      if (!any && !include_uncovered) continue;
      blocks[sig].add(CharSet::single(static_cast<unsigned char>(c)));
    }
    AtomPartition p;
    for (auto& [sig, set] : blocks) p.atoms.push_back(set);
    std::sort(p.atoms.begin(), p.atoms.end(), [](const CharSet& a, const CharSet& b) {
      int ra = a.representative(), rb = b.representative();
      int ka = CharSet::preference_rank(static_cast<unsigned char>(ra));
      int kb = CharSet::preference_rank(static_cast<unsigned char>(rb));
      return ka != kb ? ka < kb : ra < rb;
    });
    for (auto& a : p.atoms) p.reps.push_back(static_cast<unsigned char>(a.representative()));
    return p;
  }
};

struct OverlapOptions {
  int bound = 64;                      // longest candidate unit
  std::uint64_t node_budget = 20000;   // distinct action tuples before giving up
};

namespace detail {

// Word action on one fragment: row q is the (closed) state set reached from q.
struct Action {
  int n = 0, words = 0;
  std::vector<std::uint64_t> bits;  // n rows of `words` 64-bit words

  bool test(int q, int r) const { return (bits[static_cast<std::size_t>(q * words + r / 64)] >> (r % 64)) & 1U; }
  void set(int q, int r) { bits[static_cast<std::size_t>(q * words + r / 64)] |= std::uint64_t{1} << (r % 64); }
};

// Per-fragment data for the overlap search: one-symbol actions per atom, the
// start set, accepting and co-reachable masks.
struct PowerProbe {
  const PathAutomaton* frag;
  int n, words;
  std::vector<std::uint64_t> start, accept, live;
  std::vector<Action> atom;

  PowerProbe(const PathAutomaton& f, const std::vector<unsigned char>& reps) : frag(&f), n(f.size()) {
    words = (n + 63) / 64;
    auto pack = [&](const PathAutomaton::StateSet& s) {
      std::vector<std::uint64_t> b(static_cast<std::size_t>(words), 0);
      for (int q = 0; q < n; ++q)
        if (s[static_cast<std::size_t>(q)]) b[static_cast<std::size_t>(q / 64)] |= std::uint64_t{1} << (q % 64);
      return b;
    };
    start = pack(f.start_set());
    PathAutomaton::StateSet acc(static_cast<std::size_t>(n), 0);
    for (int q = 0; q < n; ++q) acc[static_cast<std::size_t>(q)] = f.accepting[static_cast<std::size_t>(q)];
    accept = pack(acc);
    live = pack(f.coreachable());
    for (unsigned char c : reps) {
      Action a{n, words, std::vector<std::uint64_t>(static_cast<std::size_t>(n * words), 0)};
      for (int q = 0; q < n; ++q) {
        PathAutomaton::StateSet one(static_cast<std::size_t>(n), 0);
        one[static_cast<std::size_t>(q)] = 1;
        f.close_epsilon(one);
        auto nx = f.step(one, c);
        for (int r = 0; r < n; ++r)
          if (nx[static_cast<std::size_t>(r)]) a.set(q, r);
      }
      atom.push_back(std::move(a));
    }
  }

  std::vector<std::uint64_t> apply(const Action& a, const std::vector<std::uint64_t>& set) const {
    std::vector<std::uint64_t> out(static_cast<std::size_t>(words), 0);
    for (int q = 0; q < n; ++q)
      if ((set[static_cast<std::size_t>(q / 64)] >> (q % 64)) & 1U)
        for (int w = 0; w < words; ++w) out[static_cast<std::size_t>(w)] |= a.bits[static_cast<std::size_t>(q * words + w)];
    return out;
  }

  Action extend(const Action& a, std::size_t atom_index) const {
    const Action& s = atom[atom_index];
    Action r{n, words, std::vector<std::uint64_t>(a.bits.size(), 0)};
    for (int q = 0; q < n; ++q)
      for (int p = 0; p < n; ++p)
        if (a.test(q, p))
          for (int w = 0; w < words; ++w)
            r.bits[static_cast<std::size_t>(q * words + w)] |= s.bits[static_cast<std::size_t>(p * words + w)];
    return r;
  }

  static bool meets(const std::vector<std::uint64_t>& x, const std::vector<std::uint64_t>& y) {
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] & y[i]) return true;
    return false;
  }

  // Some w^u with u >= 1 is accepted, where `a` is the action of w.
  bool some_power_accepts(const Action& a) const {
    std::set<std::vector<std::uint64_t>> seen;
    std::vector<std::uint64_t> cur = start;
    for (;;) {
      cur = apply(a, cur);
      if (meets(cur, accept)) return true;
      if (!seen.insert(cur).second) return false;
    }
  }
};

inline std::uint64_t mix_hash(std::uint64_t h, std::uint64_t v) {
  v += 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  v ^= v >> 30;
  v *= 0xbf58476d1ce4e5b9ULL;
  v ^= v >> 27;
  v *= 0x94d049bb133111ebULL;
  return h ^ (v ^ (v >> 31));
}

}  // namespace detail

// Shortest string s such that every segment contains some s^u, with u = 0
// allowed exactly for segments whose language contains epsilon. The search
// runs breadth-first over tuples of word actions on the segments, so two
// words with equal actions are interchangeable and only the first is kept.
// Returns none once every reachable tuple has been seen (no such s exists);
// throws search_bound_exceeded when the length bound or node budget is hit.
inline std::optional<std::string> nonempty_overlap_witness(const std::vector<PathAutomaton>& segments,
                                                           const OverlapOptions& opts = {}) {
  std::vector<PathAutomaton> hard;
  std::vector<CharSet> labels;
  for (auto& s : segments) {
    if (s.has_backrefs()) throw Error(ErrorKind::backref_fragment, "overlap search on a fragment with backreferences");
    if (s.size() == 0) return std::nullopt;  // empty language: no power at all
    if (!s.contains_epsilon()) hard.push_back(s.trimmed());
    s.collect_labels(labels);
  }
  if (hard.empty()) {
    // Any unit works; take the shortest non-empty string of some segment.
    for (auto& s : segments) {
      auto lab = std::vector<CharSet>{};
      s.collect_labels(lab);
      if (!lab.empty()) return std::string(1, static_cast<char>(lab.front().representative()));
    }
    throw Error(ErrorKind::precondition, "every segment accepts only the empty string");
  }
  for (auto& h : hard)
    if (h.size() == 0) return std::nullopt;
  AtomPartition part = AtomPartition::of(labels);
  std::vector<detail::PowerProbe> probes;
  for (auto& h : hard) probes.emplace_back(h, part.reps);

  struct Node {
    std::string word;
    std::vector<detail::Action> act;
  };
  std::set<std::uint64_t> seen;
  std::deque<Node> queue;
  std::uint64_t nodes = 0;
  auto consider = [&](Node&& nd) -> std::optional<std::string> {
    std::uint64_t h = 0;
    bool all_accept = true;
    for (std::size_t k = 0; k < probes.size(); ++k) {
      auto img = probes[k].apply(nd.act[k], probes[k].start);
      if (!detail::PowerProbe::meets(img, probes[k].live)) return std::nullopt;  // every extension is dead too
      for (auto w : nd.act[k].bits) h = detail::mix_hash(h, w);
    }
    if (!seen.insert(h).second) return std::nullopt;
    if (++nodes > opts.node_budget)
      throw Error(ErrorKind::search_bound_exceeded, "overlap search exceeded its node budget");
    for (std::size_t k = 0; k < probes.size() && all_accept; ++k) all_accept = probes[k].some_power_accepts(nd.act[k]);
    if (all_accept) return nd.word;
    queue.push_back(std::move(nd));
    return std::nullopt;
  };
  for (std::size_t c = 0; c < part.reps.size(); ++c) {
    Node nd{std::string(1, static_cast<char>(part.reps[c])), {}};
    for (auto& p : probes) nd.act.push_back(p.atom[c]);
    if (auto w = consider(std::move(nd))) return w;
  }
  while (!queue.empty()) {
    Node cur = std::move(queue.front());
    queue.pop_front();
    if (static_cast<int>(cur.word.size()) >= opts.bound)
      throw Error(ErrorKind::search_bound_exceeded,
                  "no overlap string up to length " + std::to_string(opts.bound) + " and the search is not exhausted");
    for (std::size_t c = 0; c < part.reps.size(); ++c) {
      Node nd{cur.word + static_cast<char>(part.reps[c]), {}};
      for (std::size_t k = 0; k < probes.size(); ++k) nd.act.push_back(probes[k].extend(cur.act[k], c));
      if (auto w = consider(std::move(nd))) return w;
    }
  }
  return std::nullopt;
}

}  // namespace rewb
