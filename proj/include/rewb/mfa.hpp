#pragma once

// Two-phase memory finite automata: construction from an AST, zero-width loop
// elimination, trimming and a textual dump.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rewb/charset.hpp"
#include "rewb/syntax.hpp"

namespace rewb {

enum class LabelKind : std::uint8_t { Symbol, Epsilon, Open, Close, Backref };

struct Label {
  LabelKind kind = LabelKind::Epsilon;
  CharSet set;  // Symbol only
  int group = 0;

  static Label symbol(CharSet s) { return {LabelKind::Symbol, s, 0}; }
  static Label epsilon() { return {}; }
  static Label open(int g) { return {LabelKind::Open, {}, g}; }
  static Label close(int g) { return {LabelKind::Close, {}, g}; }
  static Label backref(int g) { return {LabelKind::Backref, {}, g}; }

  // Epsilon, open and close never consume input; a backref may, depending on memory.
  bool zero_width() const { return kind == LabelKind::Epsilon || kind == LabelKind::Open || kind == LabelKind::Close; }

  bool operator==(const Label& o) const { return kind == o.kind && group == o.group && set == o.set; }

  std::string to_string() const {
    switch (kind) {
      case LabelKind::Symbol: return set.to_string();
      case LabelKind::Epsilon: return "eps";
      case LabelKind::Open: return "open(" + std::to_string(group) + ")";
      case LabelKind::Close: return "close(" + std::to_string(group) + ")";
      case LabelKind::Backref: return "\\" + std::to_string(group);
    }
    return "?";
  }
};

struct Transition {
  Label label;
  int target = 0;
  bool operator==(const Transition& o) const { return target == o.target && label == o.label; }
};

// States are dense ids; out[q] lists q's transitions in exploration priority order.
struct TwoPhaseMfa {
  std::vector<std::vector<Transition>> out;
  std::vector<char> accepting;
  int initial = 0;
  int group_count = 0;
  bool anchor_start = false;  // honoured by unanchored matching only
  bool anchor_end = false;

  int add_state() {
    out.emplace_back();
    accepting.push_back(0);
    return static_cast<int>(out.size()) - 1;
  }
  void add(int from, Label l, int to) { out[static_cast<std::size_t>(from)].push_back({std::move(l), to}); }
  int size() const { return static_cast<int>(out.size()); }
  bool is_accepting(int q) const { return accepting[static_cast<std::size_t>(q)] != 0; }
  const std::vector<Transition>& edges(int q) const { return out[static_cast<std::size_t>(q)]; }

  std::size_t transition_count() const {
    std::size_t n = 0;
    for (auto& e : out) n += e.size();
    return n;
  }
  // Global id of the k-th transition of q, stable for a given automaton.
  std::vector<std::size_t> edge_offsets() const {
    std::vector<std::size_t> off(out.size() + 1, 0);
    for (std::size_t q = 0; q < out.size(); ++q) off[q + 1] = off[q] + out[q].size();
    return off;
  }
  bool has_backrefs() const {
    for (auto& es : out)
      for (auto& t : es)
        if (t.label.kind == LabelKind::Backref) return true;
    return false;
  }

  bool operator==(const TwoPhaseMfa& o) const {
    return out == o.out && accepting == o.accepting && initial == o.initial && group_count == o.group_count &&
           anchor_start == o.anchor_start && anchor_end == o.anchor_end;
  }
};

// Strongly connected components (iterative Tarjan). `use` filters edges.
// Component ids are in reverse topological order of the condensation.
template <class EdgeFilter>
std::vector<int> strongly_connected(const TwoPhaseMfa& a, EdgeFilter use, int* count = nullptr) {
  const int n = a.size();
  std::vector<int> index(static_cast<std::size_t>(n), -1), low(static_cast<std::size_t>(n), 0),
      comp(static_cast<std::size_t>(n), -1);
  std::vector<char> on_stack(static_cast<std::size_t>(n), 0);
  std::vector<int> stack;
  std::vector<std::pair<int, std::size_t>> call;
  int next = 0, ncomp = 0;
  for (int root = 0; root < n; ++root) {
    if (index[static_cast<std::size_t>(root)] != -1) continue;
    call.push_back({root, 0});
    while (!call.empty()) {
      auto& [v, k] = call.back();
      auto vi = static_cast<std::size_t>(v);
      if (k == 0 && index[vi] == -1) {
        index[vi] = low[vi] = next++;
        stack.push_back(v);
        on_stack[vi] = 1;
      }
      const auto& es = a.edges(v);
      bool descended = false;
      while (k < es.size()) {
        const Transition& t = es[k++];
        if (!use(v, t)) continue;
        auto w = static_cast<std::size_t>(t.target);
        if (index[w] == -1) {
          call.push_back({t.target, 0});
          descended = true;
          break;
        }
        if (on_stack[w]) low[vi] = std::min(low[vi], index[w]);
      }
      if (descended) continue;
      if (low[vi] == index[vi]) {
        while (true) {
          int w = stack.back();
          stack.pop_back();
          on_stack[static_cast<std::size_t>(w)] = 0;
          comp[static_cast<std::size_t>(w)] = ncomp;
          if (w == v) break;
        }
        ++ncomp;
      }
      int done = v;
      call.pop_back();
      if (!call.empty()) {
        auto p = static_cast<std::size_t>(call.back().first);
        low[p] = std::min(low[p], low[static_cast<std::size_t>(done)]);
      }
    }
  }
  if (count) *count = ncomp;
  return comp;
}

// Removes states that are unreachable from the initial state or cannot reach an
// accepting state, and renumbers the rest in depth-first preorder over
// transitions in priority order. Idempotent.
inline TwoPhaseMfa trim(const TwoPhaseMfa& a) {
  const int n = a.size();
  std::vector<char> fwd(static_cast<std::size_t>(n), 0), bwd(static_cast<std::size_t>(n), 0);
  std::vector<std::vector<int>> rev(static_cast<std::size_t>(n));
  for (int q = 0; q < n; ++q)
    for (auto& t : a.edges(q)) rev[static_cast<std::size_t>(t.target)].push_back(q);
  std::vector<int> work;
  for (int q = 0; q < n; ++q)
    if (a.is_accepting(q)) {
      bwd[static_cast<std::size_t>(q)] = 1;
      work.push_back(q);
    }
  while (!work.empty()) {
    int q = work.back();
    work.pop_back();
    for (int p : rev[static_cast<std::size_t>(q)])
      if (!bwd[static_cast<std::size_t>(p)]) {
        bwd[static_cast<std::size_t>(p)] = 1;
        work.push_back(p);
      }
  }
  // Preorder DFS restricted to live states.
  std::vector<int> order, newid(static_cast<std::size_t>(n), -1);
  auto live = [&](int q) { return bwd[static_cast<std::size_t>(q)] != 0; };
  std::vector<std::pair<int, std::size_t>> stack;
  newid[static_cast<std::size_t>(a.initial)] = 0;
  order.push_back(a.initial);
  stack.push_back({a.initial, 0});
  while (!stack.empty()) {
    auto& [q, k] = stack.back();
    const auto& es = a.edges(q);
    if (k == es.size()) {
      stack.pop_back();
      continue;
    }
    int t = es[k++].target;
    if (!live(t) || newid[static_cast<std::size_t>(t)] != -1) continue;
    newid[static_cast<std::size_t>(t)] = static_cast<int>(order.size());
    order.push_back(t);
    stack.push_back({t, 0});
  }
  (void)fwd;
  TwoPhaseMfa r;
  r.group_count = a.group_count;
  r.anchor_start = a.anchor_start;
  r.anchor_end = a.anchor_end;
  for (std::size_t i = 0; i < order.size(); ++i) r.add_state();
  r.initial = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    int q = order[i];
    r.accepting[i] = a.accepting[static_cast<std::size_t>(q)];
    if (!live(q)) continue;
    for (auto& t : a.edges(q)) {
      int nt = newid[static_cast<std::size_t>(t.target)];
      if (nt != -1) r.add(static_cast<int>(i), t.label, nt);
    }
  }
  return r;
}

namespace detail {

struct Frag {
  int start, end;
};

class Thompson {
 public:
  TwoPhaseMfa a;

  Frag build(const Node& n) {
    switch (n.kind) {
      case NodeKind::Empty: {
        Frag f{a.add_state(), a.add_state()};
        a.add(f.start, Label::epsilon(), f.end);
        return f;
      }
      case NodeKind::Symbol: {
        Frag f{a.add_state(), a.add_state()};
        a.add(f.start, Label::symbol(n.set), f.end);
        return f;
      }
      case NodeKind::Backref: {
        Frag f{a.add_state(), a.add_state()};
        a.add(f.start, Label::backref(n.group), f.end);
        a.group_count = std::max(a.group_count, n.group);
        return f;
      }
      case NodeKind::Group: return build(n.child());
      case NodeKind::Capture: {
        int s = a.add_state();
        Frag c = build(n.child());
        int e = a.add_state();
        a.add(s, Label::open(n.group), c.start);
        a.add(c.end, Label::close(n.group), e);
        a.group_count = std::max(a.group_count, n.group);
        return {s, e};
      }
      case NodeKind::Concat: {
        Frag f = build(n.children.front());
        for (std::size_t i = 1; i < n.children.size(); ++i) {
          Frag g = build(n.children[i]);
          a.add(f.end, Label::epsilon(), g.start);
          f.end = g.end;
        }
        return f;
      }
      case NodeKind::Alt: {
        int s = a.add_state();
        Frag l = build(n.children[0]);
        Frag r = build(n.children[1]);
        int e = a.add_state();
        a.add(s, Label::epsilon(), l.start);
        a.add(s, Label::epsilon(), r.start);
        a.add(l.end, Label::epsilon(), e);
        a.add(r.end, Label::epsilon(), e);
        return {s, e};
      }
      case NodeKind::Star: {
        int loop = a.add_state();
        Frag c = build(n.child());
        int e = a.add_state();
        if (n.greedy) {
          a.add(loop, Label::epsilon(), c.start);
          a.add(loop, Label::epsilon(), e);
        } else {
          a.add(loop, Label::epsilon(), e);
          a.add(loop, Label::epsilon(), c.start);
        }
        a.add(c.end, Label::epsilon(), loop);
        return {loop, e};
      }
    }
    return {0, 0};
  }
};

// Merges epsilon-linked states without changing the order in which the
// matcher explores alternatives:
//  - a non-initial, non-accepting state whose only transition is eps->r is
//    bypassed (its incoming transitions point at r instead);
//  - a non-initial, non-accepting state with a single incoming transition,
//    which is eps from p, has its transitions spliced into p at that position.
inline void merge_epsilon_chains(TwoPhaseMfa& a) {
  const int n = a.size();
  auto idx = [](int q) { return static_cast<std::size_t>(q); };
  for (bool changed = true; changed;) {
    changed = false;
    // Bypass single-exit epsilon states, following chains.
    std::vector<int> fwd(idx(n), -1);
    for (int q = 0; q < n; ++q) {
      const auto& es = a.out[idx(q)];
      if (q != a.initial && !a.accepting[idx(q)] && es.size() == 1 && es[0].label.kind == LabelKind::Epsilon &&
          es[0].target != q)
        fwd[idx(q)] = es[0].target;
    }
    auto resolve = [&](int q) {
      int cur = q, steps = 0;
      while (fwd[idx(cur)] != -1 && steps <= n) {
        cur = fwd[idx(cur)];
        ++steps;
      }
      return steps > n ? q : cur;
    };
    for (int q = 0; q < n; ++q)
      for (auto& t : a.out[idx(q)]) {
        int r = resolve(t.target);
        if (r != t.target && r != q) {
          t.target = r;
          changed = true;
        }
      }
    // Splice single-entry states reached by epsilon into their predecessor.
    std::vector<int> indeg(idx(n), 0), pred(idx(n), -1);
    std::vector<char> via_eps(idx(n), 0);
    for (int q = 0; q < n; ++q)
      for (auto& t : a.out[idx(q)]) {
        ++indeg[idx(t.target)];
        pred[idx(t.target)] = q;
        via_eps[idx(t.target)] = t.label.kind == LabelKind::Epsilon;
      }
    std::vector<char> absorbed(idx(n), 0);
    for (int q = 0; q < n; ++q)
      absorbed[idx(q)] = q != a.initial && !a.accepting[idx(q)] && indeg[idx(q)] == 1 && via_eps[idx(q)] &&
                         pred[idx(q)] != q;
    std::vector<char> done(idx(n), 0);
    std::function<void(int, std::vector<Transition>&)> expand = [&](int q, std::vector<Transition>& sink) {
      for (auto& t : a.out[idx(q)]) {
        if (t.label.kind == LabelKind::Epsilon && absorbed[idx(t.target)] && !done[idx(t.target)]) {
          done[idx(t.target)] = 1;
          expand(t.target, sink);
          changed = true;
        } else {
          sink.push_back(t);
        }
      }
    };
    std::vector<std::vector<Transition>> next(idx(n));
    for (int q = 0; q < n; ++q) {
      if (absorbed[idx(q)]) continue;
      expand(q, next[idx(q)]);
    }
    for (int q = 0; q < n; ++q)
      if (absorbed[idx(q)] && !done[idx(q)]) next[idx(q)] = a.out[idx(q)];
    a.out = std::move(next);
  }
}

}  // namespace detail

// Thompson-style construction. The result is trimmed but may still contain
// zero-width cycles when a Star body can match the empty string; apply
// eliminate_epsilon_loops before matching.
inline TwoPhaseMfa compile(const Node& ast) {
  detail::Thompson t;
  detail::Frag f = t.build(ast);
  t.a.initial = f.start;
  t.a.accepting[static_cast<std::size_t>(f.end)] = 1;
  detail::merge_epsilon_chains(t.a);
  return trim(t.a);
}

inline bool has_zero_width_cycle(const TwoPhaseMfa& a) {
  auto zw = [](int, const Transition& t) { return t.label.zero_width(); };
  int ncomp = 0;
  auto comp = strongly_connected(a, zw, &ncomp);
  std::vector<int> size(static_cast<std::size_t>(ncomp), 0);
  for (int c : comp) ++size[static_cast<std::size_t>(c)];
  for (int q = 0; q < a.size(); ++q) {
    if (size[static_cast<std::size_t>(comp[static_cast<std::size_t>(q)])] > 1) return true;
    for (auto& t : a.edges(q))
      if (t.label.zero_width() && t.target == q) return true;
  }
  return false;
}

// Collapses every strongly connected component of zero-width transitions into
// its smallest state. Open/close labels that lived on a collapsed cycle are
// re-emitted as a lowest-priority acyclic chain (all opens, then all closes)
// into a copy of the collapsed state, so an empty capture can still be committed.
inline TwoPhaseMfa eliminate_epsilon_loops(const TwoPhaseMfa& in) {
  if (!has_zero_width_cycle(in)) return in;
  auto zw = [](int, const Transition& t) { return t.label.zero_width(); };
  int ncomp = 0;
  auto comp = strongly_connected(in, zw, &ncomp);
  const int n = in.size();
  std::vector<std::vector<int>> members(static_cast<std::size_t>(ncomp));
  for (int q = 0; q < n; ++q) members[static_cast<std::size_t>(comp[static_cast<std::size_t>(q)])].push_back(q);
  std::vector<int> rep(static_cast<std::size_t>(n));
  for (int q = 0; q < n; ++q) rep[static_cast<std::size_t>(q)] = members[static_cast<std::size_t>(comp[static_cast<std::size_t>(q)])].front();

  TwoPhaseMfa a;
  a.group_count = in.group_count;
  a.anchor_start = in.anchor_start;
  a.anchor_end = in.anchor_end;
  for (int q = 0; q < n; ++q) a.add_state();
  a.initial = rep[static_cast<std::size_t>(in.initial)];
  for (int q = 0; q < n; ++q)
    if (in.is_accepting(q)) a.accepting[static_cast<std::size_t>(rep[static_cast<std::size_t>(q)])] = 1;

  for (int c = 0; c < ncomp; ++c) {
    const auto& mem = members[static_cast<std::size_t>(c)];
    int r = mem.front();
    bool cyclic = mem.size() > 1;
    std::vector<int> opens, closes;
    std::vector<Transition> external;
    for (int q : mem) {
      for (auto& t : in.edges(q)) {
        bool internal = comp[static_cast<std::size_t>(t.target)] == c && t.label.zero_width();
        if (internal && t.target == q) cyclic = true;
        if (internal) {
          if (t.label.kind == LabelKind::Open) opens.push_back(t.label.group);
          if (t.label.kind == LabelKind::Close) closes.push_back(t.label.group);
          continue;
        }
        external.push_back({t.label, rep[static_cast<std::size_t>(t.target)]});
      }
    }
    if (!cyclic) {
      opens.clear();
      closes.clear();
    }
    a.out[static_cast<std::size_t>(r)] = external;
    std::sort(opens.begin(), opens.end());
    opens.erase(std::unique(opens.begin(), opens.end()), opens.end());
    std::sort(closes.begin(), closes.end());
    closes.erase(std::unique(closes.begin(), closes.end()), closes.end());
    if (!opens.empty() || !closes.empty()) {
      int copy = a.add_state();
      a.out[static_cast<std::size_t>(copy)] = external;
      a.accepting[static_cast<std::size_t>(copy)] = a.accepting[static_cast<std::size_t>(r)];
      int cur = r;
      std::vector<Label> chain;
      for (int g : opens) chain.push_back(Label::open(g));
      for (int g : closes) chain.push_back(Label::close(g));
      for (std::size_t k = 0; k < chain.size(); ++k) {
        int nxt = k + 1 == chain.size() ? copy : a.add_state();
        a.add(cur, chain[k], nxt);
        cur = nxt;
      }
    }
  }
  detail::merge_epsilon_chains(a);
  return trim(a);
}

// compile followed by zero-width loop elimination, carrying anchor flags.
inline TwoPhaseMfa compile_pattern(const Pattern& p) {
  TwoPhaseMfa a = eliminate_epsilon_loops(compile(p.ast));
  a.group_count = std::max(a.group_count, p.group_count);
  a.anchor_start = p.anchor_start;
  a.anchor_end = p.anchor_end;
  return a;
}

// One line per state header and one per transition.
inline std::string dump(const TwoPhaseMfa& a) {
  std::ostringstream os;
  os << "states " << a.size() << " initial q" << a.initial << " accepting {";
  bool first = true;
  for (int q = 0; q < a.size(); ++q)
    if (a.is_accepting(q)) {
      os << (first ? "" : ",") << "q" << q;
      first = false;
    }
  os << "}\n";
  for (int q = 0; q < a.size(); ++q)
    for (auto& t : a.edges(q)) os << "q" << q << " -" << t.label.to_string() << "-> q" << t.target << "\n";
  return os.str();
}

// Breadth-first structural check used by tests: trim invariants hold.
inline bool is_trim(const TwoPhaseMfa& a) { return trim(a).size() == a.size(); }

}  // namespace rewb
