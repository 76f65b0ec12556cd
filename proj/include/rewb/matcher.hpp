#pragma once

// Instrumented backtracking execution of a two-phase memory automaton.
//
// Cost model (steps):
//   symbol transition that consumes a character   1
//   epsilon, open, close, failed symbol test       0
//   backref that matches l characters              l
//   backref mismatch at offset p                   p + 1
//   backref longer than the remaining input        1
//   backref to an unset group, fail semantics      1
// On `(a*)\1b` against a^n this gives n^2/8 + 7n/4 exactly. The per-attempt
// count of the recursive formulation (1 per transition attempt, 1 + l per
// backref attempt) is kept separately as `attempts`.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

#include "rewb/family.hpp"
#include "rewb/mfa.hpp"

namespace rewb {

inline constexpr const char* kCostModelVersion = "calibrated-v1";
inline constexpr std::uint64_t kDefaultMatchLimit = 10'000'000;

// Behaviour of \i when group i has not been committed yet.
enum class UnsetRef { fail, empty };

struct MatchOptions {
  UnsetRef unset = UnsetRef::fail;
  bool anchored = true;  // full match from 0 to |s|; otherwise search
  std::optional<std::uint64_t> limit = kDefaultMatchLimit;
  bool exhaustive = false;  // keep exploring after an accepting path
};

struct MemoryTable {
  static constexpr std::int64_t kUnset = -1;
  // Index by group id; slot 0 unused.
  std::vector<std::int64_t> pending, open, close;

  MemoryTable() = default;
  explicit MemoryTable(int groups)
      : pending(static_cast<std::size_t>(groups) + 1, kUnset),
        open(static_cast<std::size_t>(groups) + 1, kUnset),
        close(static_cast<std::size_t>(groups) + 1, kUnset) {}

  int groups() const { return static_cast<int>(open.size()) - 1; }
  bool committed(int i) const { return close[static_cast<std::size_t>(i)] != kUnset; }
  void commit(int i, std::int64_t b, std::int64_t e) {
    open[static_cast<std::size_t>(i)] = b;
    close[static_cast<std::size_t>(i)] = e;
  }
  std::optional<std::string_view> capture(std::string_view s, int i) const {
    if (i < 1 || i > groups() || !committed(i)) return std::nullopt;
    auto b = static_cast<std::size_t>(open[static_cast<std::size_t>(i)]);
    auto e = static_cast<std::size_t>(close[static_cast<std::size_t>(i)]);
    return s.substr(b, e - b);
  }
  bool operator==(const MemoryTable& o) const { return pending == o.pending && open == o.open && close == o.close; }
};

struct BackrefResult {
  bool matched = false;
  std::size_t consumed = 0;
  std::uint64_t cost = 0;      // calibrated steps
  std::uint64_t compared = 0;  // characters compared
  std::size_t length = 0;      // committed capture length (0 when unset)
};

inline BackrefResult mt_br(std::string_view s, std::size_t j, const MemoryTable& m, int i, UnsetRef unset) {
  BackrefResult r;
  if (!m.committed(i)) {
    r.matched = unset == UnsetRef::empty;
    r.cost = r.matched ? 0 : 1;
    return r;
  }
  auto b = static_cast<std::size_t>(m.open[static_cast<std::size_t>(i)]);
  auto e = static_cast<std::size_t>(m.close[static_cast<std::size_t>(i)]);
  std::size_t l = e - b;
  r.length = l;
  if (l > s.size() - j) {
    r.cost = 1;
    return r;
  }
  auto mis = std::mismatch(s.begin() + static_cast<std::ptrdiff_t>(b), s.begin() + static_cast<std::ptrdiff_t>(e),
                           s.begin() + static_cast<std::ptrdiff_t>(j));
  auto p = static_cast<std::size_t>(mis.first - (s.begin() + static_cast<std::ptrdiff_t>(b)));
  if (p == l) {
    r.matched = true;
    r.consumed = l;
    r.cost = l;
    r.compared = l;
  } else {
    r.cost = p + 1;
    r.compared = p + 1;
  }
  return r;
}

struct BackrefStats {
  std::uint64_t count = 0;
  std::uint64_t compared = 0;
  bool operator==(const BackrefStats& o) const { return count == o.count && compared == o.compared; }
};

struct MatchOutcome {
  bool accepted = false;
  std::uint64_t steps = 0;
  std::uint64_t attempts = 0;
  std::map<int, BackrefStats> backref_evals;
  bool aborted = false;
  MemoryTable captures;  // snapshot at the first accepting configuration
  std::size_t match_start = 0;
  std::size_t match_end = 0;

  bool operator==(const MatchOutcome& o) const {
    return accepted == o.accepted && steps == o.steps && attempts == o.attempts &&
           backref_evals == o.backref_evals && aborted == o.aborted && captures == o.captures &&
           match_start == o.match_start && match_end == o.match_end;
  }
};

namespace detail {

class Runner {
 public:
  Runner(const TwoPhaseMfa& a, std::string_view s, const MatchOptions& o)
      : a_(a), s_(s), o_(o), mem_(a.group_count), offsets_(a.edge_offsets()),
        zero_guard_(offsets_.back(), -1) {}

  MatchOutcome run() {
    if (o_.anchored) {
      explore(0, true);
    } else {
      std::size_t last = a_.anchor_start ? 0 : s_.size();
      for (std::size_t start = 0; start <= last && !stop_; ++start) {
        mem_ = MemoryTable(a_.group_count);
        explore(start, a_.anchor_end);
      }
    }
    out_.aborted = aborted_ && !out_.accepted;
    return out_;
  }

 private:
  // undo log entry: slot kind 0 pending, 1 open, 2 close, 3 zero guard
  struct Undo {
    std::uint8_t kind;
    std::size_t slot;
    std::int64_t old;
  };
  struct Frame {
    int state;
    std::size_t pos;
    std::size_t next;
    std::size_t undo_mark;
  };

  void set(std::uint8_t kind, std::size_t slot, std::int64_t v) {
    std::int64_t* p = kind == 0   ? &mem_.pending[slot]
                      : kind == 1 ? &mem_.open[slot]
                      : kind == 2 ? &mem_.close[slot]
                                  : &zero_guard_[slot];
    undo_.push_back({kind, slot, *p});
    *p = v;
  }
  void undo_to(std::size_t mark) {
    while (undo_.size() > mark) {
      Undo u = undo_.back();
      undo_.pop_back();
      std::int64_t* p = u.kind == 0   ? &mem_.pending[u.slot]
                        : u.kind == 1 ? &mem_.open[u.slot]
                        : u.kind == 2 ? &mem_.close[u.slot]
                                      : &zero_guard_[u.slot];
      *p = u.old;
    }
  }

  bool charge(std::uint64_t c) {
    out_.steps += c;
    if (o_.limit && out_.steps >= *o_.limit) {
      aborted_ = true;
      stop_ = true;
      return false;
    }
    return true;
  }

  // Returns false when exploration must stop.
  bool enter(int q, std::size_t pos, std::size_t start, bool need_end) {
    if (a_.is_accepting(q) && (!need_end || pos == s_.size())) {
      if (!out_.accepted) {
        out_.accepted = true;
        out_.captures = mem_;
        out_.match_start = start;
        out_.match_end = pos;
      }
      if (!o_.exhaustive) {
        stop_ = true;
        return false;
      }
    }
    stack_.push_back({q, pos, 0, undo_.size()});
    return true;
  }

  void explore(std::size_t start, bool need_end) {
    stack_.clear();
    undo_.clear();
    if (!enter(a_.initial, start, start, need_end)) return;
    while (!stack_.empty() && !stop_) {
      Frame& f = stack_.back();
      const auto& es = a_.edges(f.state);
      if (f.next == es.size()) {
        undo_to(f.undo_mark);
        stack_.pop_back();
        continue;
      }
      std::size_t k = f.next++;
      const Transition& t = es[k];
      std::size_t pos = f.pos;
      std::size_t mark = undo_.size();
      const Label& l = t.label;
      switch (l.kind) {
        case LabelKind::Symbol:
          ++out_.attempts;
          if (pos < s_.size() && l.set.test(static_cast<unsigned char>(s_[pos]))) {
            if (!charge(1)) return;
            if (enter(t.target, pos + 1, start, need_end)) stack_.back().undo_mark = mark;
          }
          break;
        case LabelKind::Epsilon:
          ++out_.attempts;
          if (enter(t.target, pos, start, need_end)) stack_.back().undo_mark = mark;
          break;
        case LabelKind::Open:
          ++out_.attempts;
          set(0, static_cast<std::size_t>(l.group), static_cast<std::int64_t>(pos));
          if (enter(t.target, pos, start, need_end)) stack_.back().undo_mark = mark;
          else undo_to(mark);
          break;
        case LabelKind::Close: {
          ++out_.attempts;
          auto g = static_cast<std::size_t>(l.group);
          std::int64_t b = mem_.pending[g];
          if (b == MemoryTable::kUnset) break;
          set(1, g, b);
          set(2, g, static_cast<std::int64_t>(pos));
          if (enter(t.target, pos, start, need_end)) stack_.back().undo_mark = mark;
          else undo_to(mark);
          break;
        }
        case LabelKind::Backref: {
          BackrefResult r = mt_br(s_, pos, mem_, l.group, o_.unset);
          out_.attempts += 1 + r.length;
          auto& st = out_.backref_evals[l.group];
          ++st.count;
          st.compared += r.compared;
          if (!charge(r.cost)) return;
          if (!r.matched) break;
          if (r.consumed == 0) {
            std::size_t id = offsets_[static_cast<std::size_t>(f.state)] + k;
            if (zero_guard_[id] == static_cast<std::int64_t>(pos)) break;
            set(3, id, static_cast<std::int64_t>(pos));
          }
          if (enter(t.target, pos + r.consumed, start, need_end)) stack_.back().undo_mark = mark;
          else undo_to(mark);
          break;
        }
      }
    }
  }

  const TwoPhaseMfa& a_;
  std::string_view s_;
  MatchOptions o_;
  MemoryTable mem_;
  std::vector<std::size_t> offsets_;
  std::vector<std::int64_t> zero_guard_;
  std::vector<Undo> undo_;
  std::vector<Frame> stack_;
  MatchOutcome out_;
  bool aborted_ = false;
  bool stop_ = false;
};

}  // namespace detail

inline MatchOutcome bt_run(const TwoPhaseMfa& a, std::string_view s, const MatchOptions& opts = {}) {
  return detail::Runner(a, s, opts).run();
}

struct Sample {
  std::vector<long> pumps;
  std::size_t length = 0;
  std::uint64_t steps = 0;
  bool aborted = false;
};

// Exhaustive-mode step counts of the family at explicit pump vectors. Once a
// sample aborts, the remaining ones are not run.
inline std::vector<Sample> measure_pumps(const TwoPhaseMfa& a, const AttackFamily& family,
                                         const std::vector<std::vector<long>>& pumps, MatchOptions opts = {}) {
  if (family.unit.empty()) throw Error(ErrorKind::degenerate_family, "empty pump unit");
  opts.exhaustive = true;
  std::vector<Sample> out;
  for (const auto& p : pumps) {
    Sample smp;
    smp.pumps = p;
    std::string input = materialize(family, p);
    smp.length = input.size();
    MatchOutcome m = bt_run(a, input, opts);
    smp.steps = m.steps;
    smp.aborted = m.aborted;
    out.push_back(smp);
    if (m.aborted) break;
  }
  return out;
}

// Same, on the diagonal for two-pump families.
inline std::vector<Sample> measure_family(const TwoPhaseMfa& a, const AttackFamily& family,
                                          const std::vector<long>& pump_counts, MatchOptions opts = {}) {
  for (std::size_t i = 1; i < pump_counts.size(); ++i)
    if (pump_counts[i] <= pump_counts[i - 1]) throw Error(ErrorKind::precondition, "pump counts must increase");
  std::vector<std::vector<long>> pumps;
  for (long k : pump_counts) pumps.push_back(family.diagonal(k));
  return measure_pumps(a, family, pumps, opts);
}

}  // namespace rewb
