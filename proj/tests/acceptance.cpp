// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rewb/detect.hpp"
#include "rewb/fit.hpp"
#include "rewb/matcher.hpp"
#include "rewb/oracle.hpp"
#include "support/exploits.hpp"
#include "support/random_regex.hpp"

using namespace rewb;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

TwoPhaseMfa compile_str(std::string_view p) {
  auto r = parse_rewb(p);
  if (!r) throw Error(ErrorKind::precondition, "fixture does not parse: " + std::string(p));
  return compile_pattern(r.value());
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome closed_form() {
  auto t0 = Clock::now();
  auto a = compile_str("(a*)\\1b");
  MatchOptions o;
  o.exhaustive = true;
  o.limit = std::nullopt;
  for (std::uint64_t n = 8; n <= 64; n += 2) {
    auto m = bt_run(a, std::string(n, 'a'), o);
    std::uint64_t want = (n * n + 14 * n) / 8;
    if (m.steps != want)
      return {false, "n=" + std::to_string(n) + " steps " + std::to_string(m.steps) + " expected " + std::to_string(want)};
  }
  double t = since(t0);
  std::ostringstream d;
  d << "n=8..64 even exact, " << t << " s";
  return {t < 1.0, d.str()};
}

Outcome sink_count() {
  auto a = compile_str("(a*)\\1b");
  for (std::uint64_t n = 2; n <= 12; n += 2) {
    std::string s(n, 'a');
    s += 'b';
    auto c = sink_abg_s(a, s, SinkCount::distinct_traces);
    if (c != 3 * n / 2 + 2)
      return {false, "n=" + std::to_string(n) + " count " + std::to_string(c) + " expected " + std::to_string(3 * n / 2 + 2)};
  }
  return {true, "n=2..12 even exact"};
}

std::multiset<std::string> finding_ids(const TwoPhaseMfa& a) {
  std::multiset<std::string> r;
  for (auto& f : detect_all(a).findings) r.insert(to_string(f.pattern));
  return r;
}

Outcome detection_fixtures() {
  const std::vector<std::pair<const char*, std::multiset<std::string>>> fixtures{
      {"(a*)\\1b", {"P1"}}, {"(a*)ba*\\1c", {"P2"}}, {"(a*ba*)\\1c", {"P3"}}, {"a*a*", {"IDA"}},
      {"(a|a)*", {"IDA"}},  {"a(b*)c", {}},          {"(ab)c*\\1", {}}};
  for (auto& [p, want] : fixtures) {
    auto a = compile_str(p);
    auto first = finding_ids(a);
    for (int run = 0; run < 3; ++run)
      if (finding_ids(a) != first) return {false, std::string(p) + ": differs between runs"};
    if (first != want) {
      std::string got;
      for (auto& s : first) got += s + " ";
      return {false, std::string(p) + ": got {" + got + "}"};
    }
  }
  return {true, "7 fixtures exact, 4 runs each"};
}

Outcome linear_sink_quadratic_time() {
  std::ostringstream d;
  bool ok = true;
  for (const char* p : {"(a*)\\1b", "(a*)ba*\\1c", "(a*ba*)\\1c"}) {
    auto a = compile_str(p);
    auto det = detect_all(a);
    if (det.findings.size() != 1) return {false, std::string(p) + ": expected one finding"};
    auto fam = build_attack_automaton(det.automaton, det.findings[0]).family;
    // Sink ambiguity on the attack inputs up to 16 bytes: the ratio to the
    // length must never exceed its value at the first input of length >= 4.
    double bound = -1, worst = 0;
    for (long k = 0;; ++k) {
      std::string s = materialize(fam, fam.diagonal(k));
      if (s.size() > 16) break;
      if (s.size() < 4) continue;
      double r = static_cast<double>(sink_abg_s(a, s)) / static_cast<double>(s.size());
      if (bound < 0) bound = r;
      worst = std::max(worst, r);
    }
    auto v = validate_finding(a, det.findings[0]);
    int deg = v.fit ? v.fit->dominant_degree : -1;
    double r2 = v.fit ? v.fit->r_squared : 0;
    bool this_ok = bound > 0 && worst <= bound && v.confirmed && deg == 2 && r2 >= 0.99;
    ok = ok && this_ok;
    d << p << " sink/n<=" << bound << " degree " << deg << " R2 " << r2 << "; ";
  }
  return {ok, d.str()};
}

Outcome bounded_capture_sweep() {
  auto t0 = Clock::now();
  std::ostringstream d;
  bool ok = true;
  for (const char* p : {"(ab)c*\\1", "(a)b\\1c*"}) {
    auto a = compile_str(p);
    const std::uint64_t xi = runtime_constants(a).xi();
    MatchOptions o;
    o.limit = std::nullopt;
    std::uint64_t strings = 0, violations = 0;
    std::string s;
    std::function<void()> walk = [&] {
      ++strings;
      auto m = bt_run(a, s, o);
      if (m.steps > xi * sink_abg_s(a, s)) ++violations;
      if (s.size() == 16) return;
      for (char c : {'a', 'b', 'c'}) {
        s.push_back(c);
        walk();
        s.pop_back();
      }
    };
    walk();
    ok = ok && violations == 0;
    d << p << " xi=" << xi << " " << strings << " inputs, " << violations << " violations; ";
  }
  d << since(t0) << " s";
  return {ok, d.str()};
}

Outcome cubic() {
  auto t0 = Clock::now();
  auto a = compile_str(testing::kExploits[0]);
  DetectOptions dopt;
  dopt.search = true;
  auto det = detect_all(a, dopt);
  ValidationOptions v;
  v.anchored = false;
  v.limit = 2'000'000'000ULL;
  v.ladder = {16, 32, 64, 128, 256, 512};
  bool has_ida = false;
  for (auto& f : det.findings) has_ida = has_ida || f.pattern == PatternId::IDA;
  for (auto& f : det.findings) {
    if (f.pattern != PatternId::P2) continue;
    AttackFamily fam;
    try {
      fam = build_attack_automaton(det.automaton, f).family;
    } catch (const Error&) {
      continue;
    }
    // The unanchored matcher does its own scan, so it runs on the pattern automaton.
    auto r = validate_family(a, fam, v);
    if (!r.fit) continue;
    double t = since(t0);
    std::ostringstream d;
    d << "exploit 1 P2 family, unanchored, ladder up to " << r.ladder.back() << ": degree " << r.fit->dominant_degree
      << ", IDA also present: " << (has_ida ? "yes" : "no") << ", " << t << " s";
    return {r.fit->dominant_degree == 3 && has_ida && r.ladder.back() <= 4096 && t <= 60, d.str()};
  }
  return {false, "no measurable P2 family"};
}

Outcome exploit_corpus() {
  std::ostringstream d;
  bool ok = true;
  for (std::size_t n = 0; n < testing::kExploits.size(); ++n) {
    auto parsed = parse_rewb(testing::kExploits[n]);
    if (!parsed) return {false, "exploit " + std::to_string(n + 1) + " does not parse"};
    auto a = compile_pattern(parsed.value());
    DetectOptions dopt;
    dopt.search = true;
    auto det = detect_all(a, dopt);
    ValidationOptions v;
    v.anchored = false;
    bool confirmed = false;
    long tripped_at = 0;
    for (auto& f : det.findings) {
      if (f.pattern != PatternId::P1 && f.pattern != PatternId::P2) continue;
      AttackFamily fam;
      try {
        fam = build_attack_automaton(det.automaton, f).family;
      } catch (const Error&) {
        continue;
      }
      confirmed = confirmed || validate_family(a, fam, v).confirmed;
      if (tripped_at == 0) {
        MatchOptions mo;
        mo.anchored = false;
        mo.exhaustive = true;
        mo.limit = 10'000'000;
        for (long k : {250L, 500L, 1000L, 2000L})
          if (bt_run(a, materialize(fam, fam.diagonal(k)), mo).aborted) {
            tripped_at = k;
            break;
          }
      }
    }
    bool need_trip = n >= 2;
    bool this_ok = confirmed && (!need_trip || tripped_at > 0);
    ok = ok && this_ok;
    d << "exploit " << n + 1 << (confirmed ? " confirmed" : " unconfirmed");
    if (tripped_at) d << ", trips 1e7 at k=" << tripped_at;
    d << "; ";
  }
  return {ok, d.str()};
}

Outcome differential() {
  testing::RandomRegex gen(20240915);
  int mismatches = 0;
  for (int i = 0; i < 500; ++i) {
    std::string p = gen.pattern();
    auto r = parse_rewb(p);
    if (!r) return {false, "generated pattern does not parse: " + p};
    auto a = compile_pattern(r.value());
    std::string s = gen.input(10);
    MatchOptions o;
    o.limit = std::nullopt;
    auto m = bt_run(a, s, o);
    auto rt = bt_rt_s(a, s);
    if (m.steps != rt.cost || m.accepted != interpret_accepts(r.value().ast, s, r.value().group_count)) ++mismatches;
  }
  return {mismatches == 0, "500 instances, " + std::to_string(mismatches) + " mismatches"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> checks{
      {"closed-form runtime", closed_form},
      {"sink-ambiguity count", sink_count},
      {"pattern detection fixtures", detection_fixtures},
      {"super-linear runtime with linear sink ambiguity", linear_sink_quadratic_time},
      {"safe-backreference runtime bound", bounded_capture_sweep},
      {"cubic compounding", cubic},
      {"exploit corpus", exploit_corpus},
      {"oracle differential", differential},
  };
  int failed = 0;
  for (auto& [name, run] : checks) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s: %s (%s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
