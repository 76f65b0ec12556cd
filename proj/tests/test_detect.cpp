#include "catch_amalgamated.hpp"

#include <set>

#include "rewb/detect.hpp"
#include "rewb/report.hpp"
#include "support/exploits.hpp"

using namespace rewb;

namespace {

TwoPhaseMfa compile_str(std::string_view p) {
  auto r = parse_rewb(p);
  REQUIRE(r.ok());
  return compile_pattern(r.value());
}

std::multiset<std::string> ids(const DetectionResult& d) {
  std::multiset<std::string> r;
  for (auto& f : d.findings) r.insert(to_string(f.pattern));
  return r;
}

std::multiset<std::string> ids_of(std::string_view p, const DetectOptions& o = {}) {
  return ids(detect_all(compile_str(p), o));
}

using Ids = std::multiset<std::string>;

}  // namespace

TEST_CASE("canonical fixtures are classified exactly", "[detect]") {
  CHECK(ids_of("(a*)\\1b") == Ids{"P1"});
  CHECK(ids_of("(a*)ba*\\1c") == Ids{"P2"});
  CHECK(ids_of("(a*ba*)\\1c") == Ids{"P3"});
  CHECK(ids_of("a*a*") == Ids{"IDA"});
  CHECK(ids_of("(a|a)*") == Ids{"IDA"});
  CHECK(ids_of("a(b*)c").empty());
  CHECK(ids_of("(ab)c*\\1").empty());
  CHECK(ids_of("(a)b\\1c*").empty());
}

TEST_CASE("finding details on the canonical fixtures", "[detect]") {
  auto p1 = detect_all(compile_str("(a*)\\1b"));
  REQUIRE(p1.findings.size() == 1);
  CHECK(p1.findings[0].overlap == "a");
  CHECK(p1.findings[0].group == 1);
  CHECK_FALSE(p1.findings[0].fence.has_value());
  CHECK_FALSE(p1.findings[0].unconfirmed);

  for (const char* p : {"(a*)ba*\\1c", "(a*ba*)\\1c"}) {
    auto d = detect_all(compile_str(p));
    REQUIRE(d.findings.size() == 1);
    INFO(p);
    CHECK(d.findings[0].overlap == "a");
    REQUIRE(d.findings[0].fence.has_value());
    CHECK(*d.findings[0].fence == "b");
    CHECK(d.findings[0].pump_pivot != d.findings[0].loop_pivot);
  }

  auto ida = detect_all(compile_str("(a|a)*"));
  REQUIRE(ida.findings.size() == 1);
  CHECK(ida.findings[0].pump_pivot == ida.findings[0].loop_pivot);
  auto two = detect_all(compile_str("a*a*"));
  REQUIRE(two.findings.size() == 1);
  CHECK(two.findings[0].pump_pivot != two.findings[0].loop_pivot);
}

TEST_CASE("boundary cases of the backreference patterns", "[detect]") {
  // The bridge b cannot be a power of the pump unit a.
  CHECK(ids_of("(a*)b\\1").empty());
  // The a-loops overlap, so the fence is empty and the classical pattern fires.
  CHECK(ids_of("(a*)a*\\1").count("P2") == 0);
  CHECK(ids_of("(a*)a*\\1").count("IDA") == 1);
  // A single loop is pattern 1 only.
  CHECK(ids_of("(a*)\\1") == Ids{"P1"});
  CHECK(ids_of("^(a*)\\1b") == Ids{"P1"});
  CHECK(ids_of("(a*)\\1\\1b") == Ids{"P1"});
  CHECK(ids_of("(?:ab)*(a*)\\1c").count("P1") == 1);
}

TEST_CASE("pattern-only fixtures are invisible to the classical analysis", "[detect]") {
  for (const char* p : {"(a*)\\1b", "(a*)ba*\\1c", "(a*ba*)\\1c", "(a*)\\1"}) {
    INFO(p);
    auto d = detect_all(compile_str(p));
    CHECK(detect_ida(d.automaton).empty());
    CHECK_FALSE(d.findings.empty());
  }
}

TEST_CASE("chained references are flagged and noted", "[detect]") {
  auto d = detect_all(compile_str("((a*)\\2)\\1b"));
  CHECK(d.chained_groups == std::vector<int>{1});
  REQUIRE_FALSE(d.notes.empty());
  CHECK(d.notes[0].find("chained-backref") != std::string::npos);
  bool structural = false;
  for (auto& f : d.findings) structural = structural || f.unconfirmed;
  CHECK(structural);
}

TEST_CASE("selected patterns only", "[detect]") {
  DetectOptions o;
  o.ida = false;
  CHECK(ids_of("(a*)a*\\1", o) == Ids{"P1"});
  o = {};
  o.p1 = false;
  CHECK(ids_of("(a*)\\1b", o).empty());
  CHECK(detect_pattern2(compile_str("(a*)ba*\\1c")).size() == 1);
  CHECK(detect_pattern3(compile_str("(a*)ba*\\1c")).empty());
  CHECK(detect_pattern1(compile_str("(a*ba*)\\1c")).empty());
}

TEST_CASE("search mode adds an unanchored prefix loop", "[detect]") {
  auto a = compile_str("(a*)\\1b");
  auto s = with_search_prefix(a);
  CHECK(s.size() == a.size() + 1);
  CHECK(s.initial != a.initial);
  DetectOptions o;
  o.search = true;
  // The prefix loop overlaps the a-loop.
  CHECK(ids_of("(a*)\\1b", o) == Ids{"IDA", "P1"});
  CHECK(ids_of("^(a*)\\1b", o) == Ids{"P1"});
  CHECK(ids_of("xa*", o).empty());
}

TEST_CASE("attack families for the canonical fixtures", "[detect][family]") {
  auto p1 = compile_str("(a*)\\1b");
  auto d1 = detect_all(p1);
  auto f1 = build_attack_automaton(d1.automaton, d1.findings[0]).family;
  CHECK(f1.prefix.empty());
  CHECK(f1.unit == "a");
  CHECK(f1.nsuffix == "a");
  CHECK(materialize(f1, {4}) == "aaaa" + f1.nsuffix);

  auto p2 = compile_str("(a*)ba*\\1c");
  auto d2 = detect_all(p2);
  auto f2 = build_attack_automaton(d2.automaton, d2.findings[0]).family;
  CHECK(f2.arity == 2);
  CHECK(f2.fence == "b");
  CHECK(materialize(f2, {2, 3}) == "aabaaaaa" + f2.nsuffix);
  CHECK_FALSE(bt_run(p2, materialize(f2, {2, 3})).accepted);

  auto p3 = compile_str("(a*ba*)\\1c");
  auto d3 = detect_all(p3);
  auto f3 = build_attack_automaton(d3.automaton, d3.findings[0]).family;
  CHECK(f3.fence == "b");
  CHECK_FALSE(bt_run(p3, materialize(f3, {5, 5})).accepted);

  auto at = build_attack_automaton(d1.automaton, d1.findings[0]);
  CHECK(at.language.accepts(materialize(f1, {7})));
  CHECK_FALSE(at.language.accepts("b"));

  auto ida = detect_all(compile_str("a*a*"));
  CHECK_THROWS_AS(build_attack_automaton(ida.automaton, ida.findings[0]), Error);
}

TEST_CASE("negative suffixes read later references as their group content", "[detect][family]") {
  auto a = compile_str("(a*)\\1\\1b");
  auto d = detect_all(a);
  REQUIRE(d.findings.size() == 1);
  auto f = build_attack_automaton(d.automaton, d.findings[0]).family;
  for (long k : {1, 4, 9}) CHECK_FALSE(bt_run(a, materialize(f, {k})).accepted);
}

TEST_CASE("family inputs are rejected by the pattern they attack", "[detect][family]") {
  for (const char* p : {"(a*)\\1b", "(a*)ba*\\1c", "(a*ba*)\\1c", "(a*)\\1", "(?:ab)*(a*)\\1c", "(\\w+)=\\w*\\1;"}) {
    auto a = compile_str(p);
    auto d = detect_all(a);
    for (auto& f : d.findings) {
      if (f.pattern == PatternId::IDA) continue;
      auto fam = build_attack_automaton(d.automaton, f).family;
      for (long k = 0; k <= 6; ++k) {
        INFO(p << " " << to_string(f.pattern) << " k=" << k);
        CHECK_FALSE(bt_run(a, materialize(fam, fam.diagonal(k))).accepted);
      }
    }
  }
}

TEST_CASE("exploit regexes yield backreference findings", "[detect][exploits]") {
  for (std::size_t n = 0; n < testing::kExploits.size(); ++n) {
    INFO("exploit " << n + 1);
    auto a = compile_str(testing::kExploits[n]);
    DetectOptions o;
    o.search = true;
    auto d = detect_all(a, o);
    auto found = ids(d);
    CHECK(found.count("P1") + found.count("P2") >= 1);
    CHECK(found.count("P3") == 0);
    CHECK(found.count("IDA") >= 1);
  }
  auto d2 = detect_all(compile_str(testing::kExploits[1]));
  CHECK(ids(d2).count("P2") >= 1);
}

TEST_CASE("detection is deterministic", "[detect]") {
  for (auto p : {std::string_view("(a*)ba*\\1c"), testing::kExploits[0], testing::kExploits[3]}) {
    auto a = compile_str(p);
    DetectOptions o;
    o.search = true;
    auto x = detect_all(a, o), y = detect_all(a, o);
    REQUIRE(x.findings.size() == y.findings.size());
    for (std::size_t i = 0; i < x.findings.size(); ++i) {
      CHECK(x.findings[i].key() == y.findings[i].key());
      CHECK(x.findings[i].overlap == y.findings[i].overlap);
      CHECK(x.findings[i].fence == y.findings[i].fence);
    }
    CHECK(x.notes == y.notes);
  }
}

TEST_CASE("pattern reports", "[report]") {
  AnalysisOptions opts;
  AnalysisInput in;
  in.pattern = "(a*)\\1b";
  json r = analyze_pattern(in, opts);
  CHECK(r["status"] == "ok");
  REQUIRE(r["findings"].size() == 1);
  auto& f = r["findings"][0];
  CHECK(f["pattern_id"] == "P1");
  CHECK(f["confirmed"] == true);
  CHECK(f["dominant_degree"] == 2);
  CHECK(f["attack"]["length"].get<std::size_t>() <= opts.example_length);

  in.pattern = "a(?=b)";
  r = analyze_pattern(in, opts);
  CHECK(r["status"] == "unsupported");
  CHECK(r["diagnostics"][0]["kind"] == "unsupported-feature");

  in.pattern = "(a";
  CHECK(analyze_pattern(in, opts)["status"] == "error");

  in.pattern = "x";
  in.read_error = "unterminated option";
  CHECK(analyze_pattern(in, opts)["status"] == "error");

  Summary s;
  for (const char* p : {"(a*)\\1b", "(a*)ba*\\1c", "(a*ba*)\\1c", "a(b*)c", "(ab)c*\\1", "(a)b\\1c*"}) {
    AnalysisInput x;
    x.pattern = p;
    s.add(analyze_pattern(x, opts));
  }
  json j = s.to_json();
  CHECK(j["counts"] == json{{"IDA", 0}, {"P1", 1}, {"P2", 1}, {"P3", 1}});
  CHECK(j["invisible_to_ida"] == 3);
  CHECK(j["confirmed_patterns"] == 3);
  CHECK(s.any_confirmed());
}
