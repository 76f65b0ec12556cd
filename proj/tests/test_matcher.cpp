#include "catch_amalgamated.hpp"

#include "rewb/detect.hpp"
#include "rewb/matcher.hpp"
#include "rewb/oracle.hpp"

using namespace rewb;

namespace {

TwoPhaseMfa compile_str(std::string_view p, const Flags& f = {}) {
  auto r = parse_rewb(p, f);
  REQUIRE(r.ok());
  return compile_pattern(r.value());
}

MemoryTable table_with(int groups, int i, std::int64_t b, std::int64_t e) {
  MemoryTable m(groups);
  m.commit(i, b, e);
  return m;
}

}  // namespace

TEST_CASE("steps on (a*)\\1b follow n^2/8 + 7n/4", "[matcher]") {
  auto a = compile_str("(a*)\\1b");
  CHECK(bt_run(a, std::string(8, 'a')).steps == 22);
  CHECK(bt_run(a, std::string(16, 'a')).steps == 60);
  CHECK(bt_run(a, std::string(32, 'a')).steps == 184);
  for (std::uint64_t n = 2; n <= 128; n += 2) {
    auto m = bt_run(a, std::string(n, 'a'));
    INFO("n = " << n);
    CHECK_FALSE(m.accepted);
    CHECK(m.steps == (n * n + 14 * n) / 8);
  }
}

TEST_CASE("acceptance on (a*)\\1b", "[matcher]") {
  auto a = compile_str("(a*)\\1b");
  auto yes = bt_run(a, "aab");
  CHECK(yes.accepted);
  CHECK(yes.captures.capture("aab", 1) == "a");
  CHECK_FALSE(bt_run(a, "aaab").accepted);
  CHECK(bt_run(a, "b").accepted);
  CHECK(bt_run(a, "aaaab").accepted);
}

TEST_CASE("a self-referencing group grows its capture each iteration", "[matcher]") {
  auto a = compile_str("(\\1b|a)*");
  const std::string s = "aababb";
  for (UnsetRef u : {UnsetRef::fail, UnsetRef::empty}) {
    MatchOptions o;
    o.unset = u;
    auto m = bt_run(a, s, o);
    CHECK(m.accepted);
    CHECK(m.captures.capture(s, 1) == "abb");
  }
  // The first iteration cannot use the reference under fail semantics, but can under empty.
  MatchOptions fail_opts, empty_opts;
  empty_opts.unset = UnsetRef::empty;
  CHECK_FALSE(bt_run(a, "bab", fail_opts).accepted);
  CHECK(bt_run(a, "b", empty_opts).accepted);
  CHECK_FALSE(bt_run(a, "b", fail_opts).accepted);
}

TEST_CASE("backreference evaluation costs", "[matcher]") {
  const std::string s = "abcabdab";
  auto m = table_with(1, 1, 0, 3);  // "abc"

  auto hit = mt_br(s, 0, m, 1, UnsetRef::fail);
  CHECK(hit.matched);
  CHECK(hit.consumed == 3);
  CHECK(hit.cost == 3);

  auto miss = mt_br(s, 3, m, 1, UnsetRef::fail);  // "abd" against "abc"
  CHECK_FALSE(miss.matched);
  CHECK(miss.cost == 3);
  CHECK(miss.compared == 3);

  auto early = mt_br(s, 1, m, 1, UnsetRef::fail);  // mismatch at the first byte
  CHECK_FALSE(early.matched);
  CHECK(early.cost == 1);

  auto too_long = mt_br(s, 6, m, 1, UnsetRef::fail);  // two bytes left
  CHECK_FALSE(too_long.matched);
  CHECK(too_long.cost == 1);
  CHECK(too_long.compared == 0);

  MemoryTable unset(1);
  CHECK_FALSE(mt_br(s, 0, unset, 1, UnsetRef::fail).matched);
  CHECK(mt_br(s, 0, unset, 1, UnsetRef::fail).cost == 1);
  auto empty = mt_br(s, 0, unset, 1, UnsetRef::empty);
  CHECK(empty.matched);
  CHECK(empty.consumed == 0);
  CHECK(empty.cost == 0);

  auto zero = mt_br(s, 4, table_with(1, 1, 2, 2), 1, UnsetRef::fail);
  CHECK(zero.matched);
  CHECK(zero.consumed == 0);
  CHECK(zero.cost == 0);
}

TEST_CASE("search mode finds the leftmost match and honours anchors", "[matcher]") {
  MatchOptions search;
  search.anchored = false;
  auto m = bt_run(compile_str("(b+)a\\1"), "aabbabbc", search);
  REQUIRE(m.accepted);
  CHECK(m.match_start == 2);
  CHECK(m.match_end == 7);
  CHECK_FALSE(bt_run(compile_str("^ba"), "aba", search).accepted);
  CHECK(bt_run(compile_str("ba"), "aba", search).accepted);
  CHECK_FALSE(bt_run(compile_str("ab$"), "aba", search).accepted);
}

TEST_CASE("the step limit aborts the run", "[matcher]") {
  auto a = compile_str("(a*)*b");
  MatchOptions o;
  o.limit = 1000;
  auto m = bt_run(a, std::string(30, 'a'), o);
  CHECK(m.aborted);
  CHECK_FALSE(m.accepted);
  CHECK(m.steps >= 1000);
  o.limit = std::nullopt;
  CHECK_FALSE(bt_run(a, std::string(8, 'a'), o).aborted);
}

TEST_CASE("runs are deterministic", "[matcher]") {
  auto a = compile_str("(\\w+)\\s*=\\s*\\1x");
  std::string s = "abc = abcabc = abc";
  MatchOptions o;
  o.exhaustive = true;
  CHECK(bt_run(a, s, o) == bt_run(a, s, o));
  o.anchored = false;
  CHECK(bt_run(a, s, o) == bt_run(a, s, o));
}

TEST_CASE("families are checked before measuring", "[matcher]") {
  auto a = compile_str("(a*)\\1b");
  AttackFamily f;
  f.unit = "";
  CHECK_THROWS_AS(measure_family(a, f, {1, 2, 4}), Error);
  f.unit = "a";
  CHECK_THROWS_AS(measure_family(a, f, {4, 2}), Error);
  CHECK_THROWS_AS(materialize(f, {1, 2}), Error);
  try {
    AttackFamily empty;
    measure_family(a, empty, {1, 2});
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::degenerate_family);
  }
}

TEST_CASE("measurement stops after the first aborted sample", "[matcher]") {
  auto a = compile_str("(a*)\\1b");
  AttackFamily f;
  f.unit = "a";
  f.nsuffix = "a";
  MatchOptions o;
  o.limit = 2000;
  auto s = measure_family(a, f, {16, 32, 64, 128, 256, 512}, o);
  REQUIRE_FALSE(s.empty());
  CHECK(s.back().aborted);
  CHECK(s.size() < 6);
}

TEST_CASE("pattern 2 family steps grow in both pump counts", "[matcher]") {
  auto a = compile_str("(a*)ba*\\1c");
  auto det = detect_all(a);
  REQUIRE(det.findings.size() == 1);
  auto fam = build_attack_automaton(det.automaton, det.findings[0]).family;
  REQUIRE(fam.arity == 2);
  std::uint64_t prev_row = 0;
  for (long k1 : {4, 8, 16}) {
    std::uint64_t prev = 0;
    for (long k2 : {4, 8, 16, 32}) {
      auto s = measure_pumps(a, fam, {{k1, k2}});
      REQUIRE(s.size() == 1);
      CHECK(s[0].steps > prev);
      prev = s[0].steps;
    }
    CHECK(prev > prev_row);
    prev_row = prev;
  }
}
