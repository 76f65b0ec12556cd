#pragma once

// Structural detection of two-overlap loops (IDA) and of the three
// backreference patterns, plus construction of their attack families.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "rewb/error.hpp"
#include "rewb/family.hpp"
#include "rewb/matcher.hpp"
#include "rewb/mfa.hpp"
#include "rewb/paths.hpp"

namespace rewb {

enum class PatternId { IDA, P1, P2, P3 };

inline const char* to_string(PatternId p) {
  switch (p) {
    case PatternId::IDA: return "IDA";
    case PatternId::P1: return "P1";
    case PatternId::P2: return "P2";
    case PatternId::P3: return "P3";
  }
  return "?";
}

inline std::optional<PatternId> pattern_from_string(std::string_view s) {
  if (s == "IDA") return PatternId::IDA;
  if (s == "P1" || s == "1") return PatternId::P1;
  if (s == "P2" || s == "2") return PatternId::P2;
  if (s == "P3" || s == "3") return PatternId::P3;
  return std::nullopt;
}

// One transition of the parent automaton.
struct EdgeRef {
  int from = -1;
  std::size_t index = 0;
  int to = -1;
  bool operator==(const EdgeRef& o) const { return from == o.from && index == o.index && to == o.to; }
};

struct PatternFinding {
  PatternId pattern = PatternId::IDA;
  int group = 0;         // P1-P3
  int pump_pivot = -1;   // P1-P3: loop inside the group; IDA: first loop
  int loop_pivot = -1;   // P2/P3: evaluation loop; IDA: second loop (same as first for one-state IDA)
  EdgeRef open, close, backref;
  // Keys: prefix, left, pump, right, fence, loop, bridge, suffix (those that apply).
  std::map<std::string, PathAutomaton> segments;
  std::string overlap;               // s_ovlp, or the shared loop word for IDA
  std::optional<std::string> fence;  // shortest fence string (P2/P3)
  bool unconfirmed = false;          // a segment needed the backref over-approximation
  std::vector<std::string> notes;

  std::tuple<int, int, int, int> key() const { return {static_cast<int>(pattern), group, pump_pivot, loop_pivot}; }
};

struct DetectOptions {
  bool ida = true, p1 = true, p2 = true, p3 = true;
  bool search = false;  // analyse with an implicit leading lazy Sigma-loop
  OverlapOptions overlap;
};

struct DetectionResult {
  TwoPhaseMfa automaton;  // the automaton the findings refer to
  std::vector<PatternFinding> findings;
  std::vector<int> chained_groups;  // groups whose span contains a backreference
  std::vector<std::string> notes;

  bool has(PatternId p) const {
    return std::any_of(findings.begin(), findings.end(), [&](const PatternFinding& f) { return f.pattern == p; });
  }
};

// New initial state with a lazy universal loop in front of the old one.
inline TwoPhaseMfa with_search_prefix(const TwoPhaseMfa& a) {
  TwoPhaseMfa r = a;
  int s = r.add_state();
  r.add(s, Label::epsilon(), a.initial);
  r.add(s, Label::symbol(CharSet::all()), s);
  r.initial = s;
  return r;
}

namespace detect_detail {

using Mask = std::vector<char>;

inline Mask forward(const TwoPhaseMfa& a, const std::vector<int>& from, const PathFilter& f) {
  Mask m(static_cast<std::size_t>(a.size()), 0);
  std::vector<int> work;
  for (int q : from)
    if (f.keep_state(q) && !m[static_cast<std::size_t>(q)]) {
      m[static_cast<std::size_t>(q)] = 1;
      work.push_back(q);
    }
  while (!work.empty()) {
    int q = work.back();
    work.pop_back();
    for (auto& t : a.edges(q))
      if (f.keep(q, t) && !m[static_cast<std::size_t>(t.target)]) {
        m[static_cast<std::size_t>(t.target)] = 1;
        work.push_back(t.target);
      }
  }
  return m;
}

inline Mask backward(const TwoPhaseMfa& a, const std::vector<int>& to, const PathFilter& f) {
  std::vector<std::vector<int>> rev(static_cast<std::size_t>(a.size()));
  for (int q = 0; q < a.size(); ++q)
    for (auto& t : a.edges(q))
      if (f.keep(q, t)) rev[static_cast<std::size_t>(t.target)].push_back(q);
  Mask m(static_cast<std::size_t>(a.size()), 0);
  std::vector<int> work;
  for (int q : to)
    if (f.keep_state(q) && !m[static_cast<std::size_t>(q)]) {
      m[static_cast<std::size_t>(q)] = 1;
      work.push_back(q);
    }
  while (!work.empty()) {
    int q = work.back();
    work.pop_back();
    for (int p : rev[static_cast<std::size_t>(q)])
      if (!m[static_cast<std::size_t>(p)]) {
        m[static_cast<std::size_t>(p)] = 1;
        work.push_back(p);
      }
  }
  return m;
}

inline Mask both(const Mask& x, const Mask& y) {
  Mask r(x.size(), 0);
  for (std::size_t i = 0; i < x.size(); ++i) r[i] = x[i] && y[i];
  return r;
}

// Smallest state of every cyclic strongly connected component of the
// filtered graph, ascending.
inline std::vector<int> loop_pivots(const TwoPhaseMfa& a, const PathFilter& f) {
  int ncomp = 0;
  auto comp = strongly_connected(a, [&](int q, const Transition& t) { return f.keep(q, t); }, &ncomp);
  std::vector<int> size(static_cast<std::size_t>(ncomp), 0), rep(static_cast<std::size_t>(ncomp), -1);
  std::vector<char> self(static_cast<std::size_t>(ncomp), 0);
  for (int q = 0; q < a.size(); ++q) {
    if (!f.keep_state(q)) continue;
    auto c = static_cast<std::size_t>(comp[static_cast<std::size_t>(q)]);
    ++size[c];
    if (rep[c] < 0) rep[c] = q;
    for (auto& t : a.edges(q))
      if (t.target == q && f.keep(q, t)) self[c] = 1;
  }
  std::vector<int> out;
  for (std::size_t c = 0; c < size.size(); ++c)
    if (size[c] > 1 || self[c]) out.push_back(rep[c]);
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<int> component_of(const TwoPhaseMfa& a, const PathFilter& f) {
  return strongly_connected(a, [&](int q, const Transition& t) { return f.keep(q, t); });
}

inline std::vector<int> accepting_states(const TwoPhaseMfa& a) {
  std::vector<int> r;
  for (int q = 0; q < a.size(); ++q)
    if (a.is_accepting(q)) r.push_back(q);
  return r;
}

inline std::vector<EdgeRef> edges_with(const TwoPhaseMfa& a, LabelKind k, int group) {
  std::vector<EdgeRef> r;
  for (int q = 0; q < a.size(); ++q)
    for (std::size_t i = 0; i < a.edges(q).size(); ++i) {
      const auto& t = a.edges(q)[i];
      if (t.label.kind == k && t.label.group == group) r.push_back({q, i, t.target});
    }
  return r;
}

inline PathAutomaton regular_view(const PathAutomaton& p, bool& approximated) {
  if (!p.has_backrefs()) return p;
  approximated = true;
  return approximate_backrefs(p);
}

}  // namespace detect_detail

// Two loops sharing a word: either two distinct loops through one state
// (found by a product search with a divergence flag) or p -w-> p, p -w-> q,
// q -w-> q for distinct components. Backreference edges are ignored.
inline std::vector<PatternFinding> detect_ida(const TwoPhaseMfa& a) {
  using namespace detect_detail;
  std::vector<PatternFinding> out;
  const int n = a.size();
  PathFilter nobr;
  nobr.drop_backrefs = true;
  int ncomp = 0;
  auto comp = strongly_connected(a, [&](int q, const Transition& t) { return nobr.keep(q, t); }, &ncomp);
  std::vector<int> pivots = loop_pivots(a, nobr);

  // Zero-width path counts (capped at 2) between states.
  std::vector<std::vector<int>> zw(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n), 0));
  {
    std::vector<char> done(static_cast<std::size_t>(n), 0);
    std::function<void(int)> fill = [&](int q) {
      if (done[static_cast<std::size_t>(q)]) return;
      done[static_cast<std::size_t>(q)] = 1;
      auto& row = zw[static_cast<std::size_t>(q)];
      row[static_cast<std::size_t>(q)] = 1;
      for (auto& t : a.edges(q)) {
        if (!t.label.zero_width()) continue;
        fill(t.target);
        auto& sub = zw[static_cast<std::size_t>(t.target)];
        for (int r = 0; r < n; ++r) row[static_cast<std::size_t>(r)] = std::min(2, row[static_cast<std::size_t>(r)] + sub[static_cast<std::size_t>(r)]);
      }
    };
    for (int q = 0; q < n; ++q) fill(q);
  }
  struct Macro {
    int target;
    CharSet set;
    int via;
    std::size_t edge;
    int mult;
  };
  std::vector<std::vector<Macro>> macro(static_cast<std::size_t>(n));
  for (int q = 0; q < n; ++q)
    for (int r = 0; r < n; ++r) {
      int c = zw[static_cast<std::size_t>(q)][static_cast<std::size_t>(r)];
      if (!c) continue;
      for (std::size_t k = 0; k < a.edges(r).size(); ++k) {
        const auto& t = a.edges(r)[k];
        if (t.label.kind == LabelKind::Symbol) macro[static_cast<std::size_t>(q)].push_back({t.target, t.label.set, r, k, c});
      }
    }

  std::set<int> reported_components;
  for (int p : pivots) {
    int cp = comp[static_cast<std::size_t>(p)];
    if (reported_components.count(cp)) continue;
    // Product search from (p, p, same) for (p, p, diverged), staying in the component.
    for (int start = p; start < n; ++start) {
      if (comp[static_cast<std::size_t>(start)] != cp) continue;
      using St = std::tuple<int, int, int>;
      std::map<St, std::pair<St, char>> parent;
      std::deque<St> dq;
      St s0{start, start, 0};
      parent[s0] = {s0, 0};
      dq.push_back(s0);
      std::optional<St> hit;
      while (!dq.empty() && !hit) {
        auto [x, y, d] = dq.front();
        dq.pop_front();
        for (auto& m1 : macro[static_cast<std::size_t>(x)]) {
          if (comp[static_cast<std::size_t>(m1.target)] != cp) continue;
          for (auto& m2 : macro[static_cast<std::size_t>(y)]) {
            if (comp[static_cast<std::size_t>(m2.target)] != cp) continue;
            CharSet common = m1.set & m2.set;
            if (common.empty()) continue;
            bool same_step = m1.via == m2.via && m1.edge == m2.edge;
            int nd = d || x != y || !same_step || (same_step && m1.mult > 1) ? 1 : 0;
            St nx{m1.target, m2.target, nd};
            if (parent.count(nx)) continue;
            parent[nx] = {St{x, y, d}, static_cast<char>(common.representative())};
            if (m1.target == start && m2.target == start && nd) {
              hit = nx;
              break;
            }
            dq.push_back(nx);
          }
          if (hit) break;
        }
      }
      if (!hit) continue;
      std::string w;
      for (St cur = *hit; cur != s0; cur = parent[cur].first) w.push_back(parent[cur].second);
      std::reverse(w.begin(), w.end());
      PatternFinding f;
      f.pattern = PatternId::IDA;
      f.pump_pivot = f.loop_pivot = start;
      f.overlap = w;
      f.segments["loop"] = loop_paths(a, start, nobr);
      out.push_back(std::move(f));
      reported_components.insert(cp);
      break;
    }
  }

  // Distinct components.
  std::set<std::pair<int, int>> reported_pairs;
  for (int p : pivots) {
    auto reach = forward(a, {p}, nobr);
    for (int q : pivots) {
      if (q == p || !reach[static_cast<std::size_t>(q)]) continue;
      int cp = comp[static_cast<std::size_t>(p)], cq = comp[static_cast<std::size_t>(q)];
      if (cp == cq || reported_pairs.count({cp, cq})) continue;
      PathAutomaton lp = loop_paths(a, p, nobr), lq = loop_paths(a, q, nobr);
      PathAutomaton mid = paths_from_to(a, {p}, {q}, nobr);
      PathAutomaton x = intersect_backref_free(intersect_backref_free(lp, mid), lq);
      if (x.is_empty()) continue;
      PatternFinding f;
      f.pattern = PatternId::IDA;
      f.pump_pivot = p;
      f.loop_pivot = q;
      f.overlap = x.shortest().value_or("");
      f.segments["loop"] = lp;
      f.segments["bridge"] = mid;
      f.segments["pump"] = lq;
      out.push_back(std::move(f));
      reported_pairs.insert({cp, cq});
    }
  }
  return out;
}

namespace detect_detail {

struct GroupContext {
  int group;
  EdgeRef open, close, backref;
  Mask span;  // between open target and close source, without open/close of the group
  Mask post;  // between close target and backref source, same restriction
  PathFilter span_filter, post_filter;
};

inline void add_unique(std::vector<PatternFinding>& out, PatternFinding f) {
  for (auto& g : out)
    if (g.key() == f.key()) return;
  out.push_back(std::move(f));
}

// Runs the overlap search; a bound hit becomes a note and no finding.
inline std::optional<std::string> overlap_of(const std::vector<PathAutomaton>& segs, const OverlapOptions& o,
                                             std::vector<std::string>& notes, const std::string& what) {
  try {
    return nonempty_overlap_witness(segs, o);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::search_bound_exceeded) throw;
    notes.push_back(what + ": " + e.what());
    return std::nullopt;
  }
}

inline std::vector<GroupContext> group_contexts(const TwoPhaseMfa& a, std::vector<int>* chained) {
  std::vector<GroupContext> out;
  for (int i = 1; i <= a.group_count; ++i) {
    auto opens = edges_with(a, LabelKind::Open, i);
    auto closes = edges_with(a, LabelKind::Close, i);
    auto refs = edges_with(a, LabelKind::Backref, i);
    if (opens.empty() || closes.empty() || refs.empty()) continue;
    PathFilter base;
    base.exclude_open = i;
    base.exclude_close = i;
    for (auto& o : opens)
      for (auto& c : closes) {
        Mask span = both(forward(a, {o.to}, base), backward(a, {c.from}, base));
        if (!span[static_cast<std::size_t>(c.from)]) continue;
        if (chained) {
          for (int q = 0; q < a.size(); ++q) {
            if (!span[static_cast<std::size_t>(q)]) continue;
            for (auto& t : a.edges(q))
              if (t.label.kind == LabelKind::Backref && span[static_cast<std::size_t>(t.target)] &&
                  std::find(chained->begin(), chained->end(), i) == chained->end())
                chained->push_back(i);
          }
        }
        for (auto& b : refs) {
          Mask post = both(forward(a, {c.to}, base), backward(a, {b.from}, base));
          if (!post[static_cast<std::size_t>(b.from)]) continue;
          GroupContext g{i, o, c, b, span, post, base, base};
          out.push_back(std::move(g));
        }
      }
  }
  for (auto& g : out) {
    g.span_filter.allowed = &g.span;
    g.post_filter.allowed = &g.post;
  }
  return out;
}

}  // namespace detect_detail

inline void detect_patterns(const TwoPhaseMfa& a, const DetectOptions& opts, DetectionResult& res) {
  using namespace detect_detail;
  std::vector<GroupContext> ctxs = group_contexts(a, &res.chained_groups);
  PathFilter any;
  auto accept = accepting_states(a);
  std::vector<PatternFinding> found;
  for (auto& g : ctxs) {
    // Filters hold a pointer into g, so refresh them for this iteration.
    g.span_filter.allowed = &g.span;
    g.post_filter.allowed = &g.post;
    std::vector<int> pumps = loop_pivots(a, g.span_filter);
    if (pumps.empty()) continue;
    PathAutomaton prefix = paths_from_to(a, {a.initial}, {g.open.from}, any);
    PathAutomaton suffix = paths_from_to(a, {g.backref.to}, accept, any);
    auto base_finding = [&](PatternId id, int p, int r) {
      PatternFinding f;
      f.pattern = id;
      f.group = g.group;
      f.pump_pivot = p;
      f.loop_pivot = r;
      f.open = g.open;
      f.close = g.close;
      f.backref = g.backref;
      f.segments["prefix"] = prefix;
      f.segments["suffix"] = suffix;
      return f;
    };
    auto span_comp = component_of(a, g.span_filter);
    for (int p : pumps) {
      PathAutomaton left = paths_from_to(a, {g.open.to}, {p}, g.span_filter);
      PathAutomaton pump = loop_paths(a, p, g.span_filter);
      PathAutomaton right = paths_from_to(a, {p}, {g.close.from}, g.span_filter);
      PathAutomaton bridge = paths_from_to(a, {g.close.to}, {g.backref.from}, g.post_filter);
      if (pump.size() == 0) continue;

      if (opts.p1) {
        bool approx = false;
        std::vector<PathAutomaton> segs{regular_view(left, approx), regular_view(pump, approx),
                                        regular_view(concat(right, bridge), approx)};
        PatternFinding f = base_finding(PatternId::P1, p, p);
        if (auto s = overlap_of(segs, opts.overlap, res.notes, "P1 group " + std::to_string(g.group))) {
          f.overlap = *s;
          f.unconfirmed = approx;
          f.segments["left"] = left;
          f.segments["pump"] = pump;
          f.segments["right"] = right;
          f.segments["bridge"] = bridge;
          if (approx) f.notes.push_back("unconfirmed: a segment contains a backreference");
          add_unique(found, std::move(f));
        }
      }

      if (opts.p2) {
        for (int r : loop_pivots(a, g.post_filter)) {
          PathAutomaton fence = paths_from_to(a, {g.close.to}, {r}, g.post_filter);
          PathAutomaton loop = loop_paths(a, r, g.post_filter);
          PathAutomaton tail = paths_from_to(a, {r}, {g.backref.from}, g.post_filter);
          if (loop.size() == 0 || fence.size() == 0 || tail.size() == 0) continue;
          bool approx = false;
          std::vector<PathAutomaton> segs{regular_view(left, approx), regular_view(pump, approx),
                                          regular_view(loop, approx), regular_view(tail, approx)};
          auto s = overlap_of(segs, opts.overlap, res.notes, "P2 group " + std::to_string(g.group));
          if (!s || !power_free(fence, *s)) continue;
          PatternFinding f = base_finding(PatternId::P2, p, r);
          f.overlap = *s;
          f.unconfirmed = approx;
          f.segments["left"] = left;
          f.segments["pump"] = pump;
          f.segments["right"] = right;
          f.segments["fence"] = fence;
          f.segments["loop"] = loop;
          f.segments["bridge"] = tail;
          PathAutomaton fv = fence.has_backrefs() ? approximate_backrefs(fence) : fence;
          f.fence = fv.shortest();
          if (approx) f.notes.push_back("unconfirmed: a segment contains a backreference");
          add_unique(found, std::move(f));
        }
      }

      if (opts.p3) {
        auto reach = forward(a, {p}, g.span_filter);
        for (int r : pumps) {
          if (r == p || !reach[static_cast<std::size_t>(r)]) continue;
          if (span_comp[static_cast<std::size_t>(r)] == span_comp[static_cast<std::size_t>(p)]) continue;
          PathAutomaton fence = paths_from_to(a, {p}, {r}, g.span_filter);
          PathAutomaton loop = loop_paths(a, r, g.span_filter);
          PathAutomaton right2 = paths_from_to(a, {r}, {g.close.from}, g.span_filter);
          bool approx = false;
          std::vector<PathAutomaton> segs{regular_view(left, approx), regular_view(pump, approx),
                                          regular_view(loop, approx), regular_view(concat(right2, bridge), approx)};
          auto s = overlap_of(segs, opts.overlap, res.notes, "P3 group " + std::to_string(g.group));
          if (!s || !power_free(fence, *s)) continue;
          PatternFinding f = base_finding(PatternId::P3, p, r);
          f.overlap = *s;
          f.unconfirmed = approx;
          f.segments["left"] = left;
          f.segments["pump"] = pump;
          f.segments["fence"] = fence;
          f.segments["loop"] = loop;
          f.segments["right"] = right2;
          f.segments["bridge"] = bridge;
          PathAutomaton fv = fence.has_backrefs() ? approximate_backrefs(fence) : fence;
          f.fence = fv.shortest();
          if (approx) f.notes.push_back("unconfirmed: a segment contains a backreference");
          add_unique(found, std::move(f));
        }
      }
    }
  }
  for (auto& f : found) res.findings.push_back(std::move(f));
}

inline std::vector<PatternFinding> detect_pattern(const TwoPhaseMfa& a, PatternId id) {
  DetectOptions o;
  o.ida = false;
  o.p1 = id == PatternId::P1;
  o.p2 = id == PatternId::P2;
  o.p3 = id == PatternId::P3;
  DetectionResult r;
  detect_patterns(a, o, r);
  return r.findings;
}
inline std::vector<PatternFinding> detect_pattern1(const TwoPhaseMfa& a) { return detect_pattern(a, PatternId::P1); }
inline std::vector<PatternFinding> detect_pattern2(const TwoPhaseMfa& a) { return detect_pattern(a, PatternId::P2); }
inline std::vector<PatternFinding> detect_pattern3(const TwoPhaseMfa& a) { return detect_pattern(a, PatternId::P3); }

// All requested detectors; findings ordered by pattern, group, pivots.
inline DetectionResult detect_all(const TwoPhaseMfa& input, const DetectOptions& opts = {}) {
  DetectionResult res;
  // A start anchor pins every match to offset 0, so search adds nothing.
  res.automaton = opts.search && !input.anchor_start ? with_search_prefix(input) : input;
  const TwoPhaseMfa& a = res.automaton;
  detect_patterns(a, opts, res);
  if (opts.ida)
    for (auto& f : detect_ida(a)) res.findings.push_back(std::move(f));
  std::stable_sort(res.findings.begin(), res.findings.end(),
                   [](const PatternFinding& x, const PatternFinding& y) { return x.key() < y.key(); });
  std::sort(res.chained_groups.begin(), res.chained_groups.end());
  for (int g : res.chained_groups) res.notes.push_back("chained-backref, unclassified: group " + std::to_string(g));
  return res;
}

// ---------------------------------------------------------------------------
// Attack families

struct AttackAutomaton {
  AttackFamily family;
  PathAutomaton language;  // prefix unit* fence unit* nsuffix, pump counts left free
  PatternId pattern = PatternId::P1;
};

namespace detect_detail {

struct WalkStep {
  int from;
  std::size_t index;
};

// Fewest consumed symbols from any source to any target; backrefs count as zero.
inline std::optional<std::vector<WalkStep>> shortest_walk(const TwoPhaseMfa& a, const std::vector<int>& sources,
                                                          const std::vector<int>& targets, const PathFilter& f) {
  const int n = a.size();
  std::vector<int> dist(static_cast<std::size_t>(n), -1);
  std::vector<std::pair<int, std::size_t>> prev(static_cast<std::size_t>(n), {-1, 0});
  std::vector<char> done(static_cast<std::size_t>(n), 0), goal(static_cast<std::size_t>(n), 0);
  for (int t : targets) goal[static_cast<std::size_t>(t)] = 1;
  std::deque<int> dq;
  for (int s : sources)
    if (f.keep_state(s) && dist[static_cast<std::size_t>(s)] != 0) {
      dist[static_cast<std::size_t>(s)] = 0;
      dq.push_back(s);
    }
  while (!dq.empty()) {
    int q = dq.front();
    dq.pop_front();
    if (done[static_cast<std::size_t>(q)]) continue;
    done[static_cast<std::size_t>(q)] = 1;
    if (goal[static_cast<std::size_t>(q)]) {
      std::vector<WalkStep> w;
      for (int x = q; prev[static_cast<std::size_t>(x)].first >= 0; x = prev[static_cast<std::size_t>(x)].first)
        w.push_back({prev[static_cast<std::size_t>(x)].first, prev[static_cast<std::size_t>(x)].second});
      std::reverse(w.begin(), w.end());
      return w;
    }
    for (std::size_t k = 0; k < a.edges(q).size(); ++k) {
      const auto& t = a.edges(q)[k];
      if (!f.keep(q, t) || done[static_cast<std::size_t>(t.target)]) continue;
      int w = t.label.kind == LabelKind::Symbol ? 1 : 0;
      int nd = dist[static_cast<std::size_t>(q)] + w;
      auto& d = dist[static_cast<std::size_t>(t.target)];
      if (d >= 0 && d <= nd) continue;
      d = nd;
      prev[static_cast<std::size_t>(t.target)] = {q, k};
      if (w)
        dq.push_back(t.target);
      else
        dq.push_front(t.target);
    }
  }
  return std::nullopt;
}

// Builds input text along walks, replaying captures so backrefs copy text.
class WalkWriter {
 public:
  explicit WalkWriter(int groups)
      : pending_(static_cast<std::size_t>(groups) + 1, -1),
        open_(static_cast<std::size_t>(groups) + 1, -1),
        close_(static_cast<std::size_t>(groups) + 1, -1) {}

  void run(const TwoPhaseMfa& a, const std::vector<WalkStep>& walk) {
    for (auto& st : walk) apply(a.edges(st.from)[st.index].label);
  }
  void apply(const Label& l) {
    switch (l.kind) {
      case LabelKind::Symbol: text.push_back(static_cast<char>(l.set.representative())); break;
      case LabelKind::Epsilon: break;
      case LabelKind::Open: pending_[static_cast<std::size_t>(l.group)] = static_cast<long>(text.size()); break;
      case LabelKind::Close: {
        auto g = static_cast<std::size_t>(l.group);
        if (pending_[g] < 0) break;
        open_[g] = pending_[g];
        close_[g] = static_cast<long>(text.size());
        break;
      }
      case LabelKind::Backref: {
        auto g = static_cast<std::size_t>(l.group);
        if (close_[g] < 0) break;
        std::string copy = text.substr(static_cast<std::size_t>(open_[g]), static_cast<std::size_t>(close_[g] - open_[g]));
        text += copy;
        break;
      }
    }
  }
  void put(const std::string& s) { text += s; }

  std::string text;

 private:
  std::vector<long> pending_, open_, close_;
};

inline std::vector<WalkStep> require_walk(const TwoPhaseMfa& a, int from, int to, const PathFilter& f,
                                          const char* what) {
  auto w = shortest_walk(a, {from}, {to}, f);
  if (!w) throw Error(ErrorKind::degenerate_family, std::string("no walk for the ") + what + " segment");
  return *w;
}

inline int require_power(const PathAutomaton& p, const std::string& unit, int min_u, const char* what) {
  auto u = min_power(p, unit, min_u);
  if (!u) throw Error(ErrorKind::degenerate_family, std::string("the ") + what + " segment has no power of the unit");
  return *u;
}

inline std::string repeat(const std::string& s, long n) {
  std::string r;
  for (long i = 0; i < n; ++i) r += s;
  return r;
}

// Strings each group can capture: walks from an open(g) target to a close(g)
// source that do not reopen or close g. A backref inside a capture reads as
// the content of its own group, refined over a few rounds, and as Sigma*
// where the rounds run out.
inline std::map<int, PathAutomaton> capture_contents(const TwoPhaseMfa& a) {
  std::map<int, PathAutomaton> raw, content;
  for (int g = 1; g <= a.group_count; ++g) {
    std::vector<int> from, to;
    for (auto& e : edges_with(a, LabelKind::Open, g)) from.push_back(e.to);
    for (auto& e : edges_with(a, LabelKind::Close, g)) to.push_back(e.from);
    PathFilter f;
    f.exclude_open = g;
    f.exclude_close = g;
    raw.emplace(g, paths_from_to(a, from, to, f));
  }
  for (int round = 0; round < 3; ++round) {
    std::map<int, PathAutomaton> next;
    for (auto& [g, p] : raw) next.emplace(g, p.has_backrefs() ? approximate_backrefs(p, content) : p);
    content = std::move(next);
  }
  return content;
}

// Shortest x (up to 4 bytes) such that, for every m, the fragment has no live
// state after unit^m x. Backrefs read as the content of their group. Among
// such x the first one that `check` accepts wins; failing that, the first.
inline std::optional<std::string> negative_suffix(const PathAutomaton& frag_in, const std::string& unit,
                                                  const std::map<int, PathAutomaton>& content = {},
                                                  const std::function<bool(const std::string&)>& check = {}) {
  PathAutomaton frag = frag_in.has_backrefs() ? approximate_backrefs(frag_in, content) : frag_in;
  if (frag.size() == 0) return std::string();
  auto co = frag.coreachable();
  auto dead = [&](const PathAutomaton::StateSet& s) {
    for (std::size_t q = 0; q < s.size(); ++q)
      if (s[q] && co[q]) return false;
    return true;
  };
  std::vector<PathAutomaton::StateSet> starts;
  PathAutomaton::StateSet cur = frag.start_set();
  for (int m = 0; m < 4096; ++m) {
    if (std::find(starts.begin(), starts.end(), cur) != starts.end()) break;
    starts.push_back(cur);
    for (char c : unit) cur = frag.step(cur, static_cast<unsigned char>(c));
  }
  std::vector<CharSet> labels;
  frag.collect_labels(labels);
  for (char c : unit) labels.push_back(CharSet::single(static_cast<unsigned char>(c)));
  AtomPartition part = AtomPartition::of(labels, true);
  std::vector<std::pair<std::string, std::vector<PathAutomaton::StateSet>>> layer{{"", starts}};
  std::optional<std::string> first;
  for (int len = 1; len <= 4; ++len) {
    std::vector<std::pair<std::string, std::vector<PathAutomaton::StateSet>>> next;
    for (auto& [x, sets] : layer)
      for (unsigned char c : part.reps) {
        std::vector<PathAutomaton::StateSet> moved;
        bool all_dead = true;
        for (auto& s : sets) {
          moved.push_back(frag.step(s, c));
          all_dead = all_dead && dead(moved.back());
        }
        std::string y = x + static_cast<char>(c);
        if (all_dead) {
          if (!check || check(y)) return y;
          if (!first) first = y;
          continue;  // extending a dead prefix cannot help
        }
        next.emplace_back(y, std::move(moved));
      }
    if (next.size() > 20000) break;
    layer = std::move(next);
  }
  return first;
}

inline PathAutomaton literal_fragment(const std::string& s) {
  PathAutomaton p;
  int cur = p.add_state();
  p.initial = {cur};
  for (char c : s) {
    int nxt = p.add_state();
    p.add_symbol(cur, CharSet::single(static_cast<unsigned char>(c)), nxt);
    cur = nxt;
  }
  p.accepting[static_cast<std::size_t>(cur)] = 1;
  return p;
}

inline PathAutomaton star_fragment(const std::string& unit) {
  PathAutomaton p = power_fragment(unit);
  p.accepting[static_cast<std::size_t>(p.initial.front())] = 1;
  return p;
}

}  // namespace detect_detail

inline AttackAutomaton build_attack_automaton(const TwoPhaseMfa& a, const PatternFinding& f) {
  using namespace detect_detail;
  if (f.pattern == PatternId::IDA)
    throw Error(ErrorKind::precondition, "attack families are built for backreference patterns only");
  if (f.overlap.empty()) throw Error(ErrorKind::degenerate_family, "empty overlap string");
  const std::string& unit = f.overlap;
  const int i = f.group;
  PathFilter base;
  base.exclude_open = i;
  base.exclude_close = i;
  Mask span = both(forward(a, {f.open.to}, base), backward(a, {f.close.from}, base));
  Mask post = both(forward(a, {f.close.to}, base), backward(a, {f.backref.from}, base));
  PathFilter in_span = base, in_post = base;
  in_span.allowed = &span;
  in_post.allowed = &post;
  PathFilter any;

  auto seg = [&](const char* k) -> const PathAutomaton& {
    auto it = f.segments.find(k);
    if (it == f.segments.end()) throw Error(ErrorKind::precondition, std::string("finding lacks segment ") + k);
    return it->second;
  };

  WalkWriter w(a.group_count);
  w.run(a, require_walk(a, a.initial, f.open.from, any, "prefix"));
  AttackAutomaton out;
  out.pattern = f.pattern;
  AttackFamily& fam = out.family;
  fam.prefix = w.text;
  fam.unit = unit;
  const int u_l = require_power(seg("left"), unit, 0, "left");
  const int u_p = require_power(seg("pump"), unit, 1, "pump");
  PathAutomaton cont;  // continuation that the negative suffix must kill

  if (f.pattern == PatternId::P1) {
    const int u_rb = require_power(concat(seg("right"), seg("bridge")), unit, 0, "right-bridge");
    fam.arity = 1;
    fam.head_base = 2L * u_l + 2L * u_rb;
    fam.head_k1 = u_p;
    cont = seg("suffix");
  } else {
    const int u_o = require_power(seg("loop"), unit, 1, "loop");
    fam.arity = 2;
    fam.head_base = u_l;
    fam.head_k1 = u_p;
    fam.tail_k1 = u_p;
    fam.tail_k2 = u_o;
    // Replay the capture (left and one pump round) so the fence can copy it.
    w.apply(Label::open(i));
    w.put(repeat(unit, u_l + u_p));
    if (f.pattern == PatternId::P2) {
      const int u_b = require_power(seg("bridge"), unit, 0, "bridge");
      fam.tail_base = u_b + u_l;
      std::size_t mark = w.text.size();
      w.run(a, require_walk(a, f.pump_pivot, f.close.from, in_span, "right"));
      w.apply(Label::close(i));
      w.run(a, require_walk(a, f.close.to, f.loop_pivot, in_post, "fence"));
      fam.fence = w.text.substr(mark);
      cont = concat(seg("right"), seg("suffix"));
    } else {
      const int u_rb = require_power(concat(seg("right"), seg("bridge")), unit, 0, "right-bridge");
      fam.tail_base = u_rb + u_l;
      std::size_t mark = w.text.size();
      w.run(a, require_walk(a, f.pump_pivot, f.loop_pivot, in_span, "fence"));
      fam.fence = w.text.substr(mark);
      cont = concat(seg("right"), seg("suffix"));
    }
  }
  // The pump region may absorb a suffix that the continuation alone rejects,
  // so small family members are also run against the whole automaton.
  auto rejected = [&](const std::string& x) {
    AttackFamily trial = fam;
    trial.nsuffix = x;
    MatchOptions mo;
    mo.limit = 200000;
    for (long k = 0; k <= 5; ++k)
      if (bt_run(a, materialize(trial, trial.diagonal(k)), mo).accepted) return false;
    return true;
  };
  auto x = negative_suffix(cont, unit, capture_contents(a), rejected);
  if (!x) throw Error(ErrorKind::no_negative_suffix, "the continuation accepts every tail over the unit alphabet");
  fam.nsuffix = *x;

  out.language = concat(literal_fragment(fam.prefix), star_fragment(unit));
  if (fam.arity == 2) out.language = concat(concat(out.language, literal_fragment(fam.fence)), star_fragment(unit));
  out.language = concat(out.language, literal_fragment(fam.nsuffix));
  return out;
}

}  // namespace rewb
