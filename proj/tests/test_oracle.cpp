#include "catch_amalgamated.hpp"

#include <functional>

#include "rewb/matcher.hpp"
#include "rewb/oracle.hpp"
#include "support/random_regex.hpp"

using namespace rewb;

namespace {

TwoPhaseMfa compile_str(std::string_view p) {
  auto r = parse_rewb(p);
  REQUIRE(r.ok());
  return compile_pattern(r.value());
}

std::vector<std::string> all_strings(const std::string& alphabet, std::size_t max_len) {
  std::vector<std::string> out{""};
  std::size_t from = 0;
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::size_t to = out.size();
    for (std::size_t k = from; k < to; ++k)
      for (char c : alphabet) out.push_back(out[k] + c);
    from = to;
  }
  return out;
}

// Accepting paths of a backref-free automaton that consume all of s, by plain DFS.
std::uint64_t dfs_paths(const TwoPhaseMfa& a, std::string_view s) {
  std::function<std::uint64_t(int, std::size_t)> go = [&](int q, std::size_t j) -> std::uint64_t {
    std::uint64_t n = (a.is_accepting(q) && j == s.size()) ? 1 : 0;
    for (auto& t : a.edges(q)) {
      if (t.label.kind == LabelKind::Symbol) {
        if (j < s.size() && t.label.set.test(static_cast<unsigned char>(s[j]))) n += go(t.target, j + 1);
      } else {
        n += go(t.target, j);
      }
    }
    return n;
  };
  return go(a.initial, 0);
}

}  // namespace

TEST_CASE("sink traces on (a*)\\1b are 3n/2 + 2", "[oracle]") {
  auto a = compile_str("(a*)\\1b");
  for (std::uint64_t n = 2; n <= 12; n += 2) {
    std::string s(n, 'a');
    s += 'b';
    INFO("n = " << n);
    CHECK(sink_abg_s(a, s, SinkCount::distinct_traces) == 3 * n / 2 + 2);
    CHECK(sink_abg_s(a, s, SinkCount::accepting_paths) == 5 * n / 2 + 5);
    CHECK(abg_s(a, s) == 1);
  }
}

TEST_CASE("oracle runtime agrees with the closed form", "[oracle]") {
  auto a = compile_str("(a*)\\1b");
  CHECK(bt_rt_s(a, std::string(8, 'a')).cost == 22);
  CHECK(bt_rt_s(a, std::string(16, 'a')).cost == 60);
  CHECK_FALSE(bt_rt_s(a, std::string(8, 'a')).accepted);
  CHECK_THROWS_AS(bt_rt_s(a, std::string(kOracleBound + 1, 'a')), Error);
}

TEST_CASE("sink construction shape", "[oracle]") {
  auto a = compile_str("(a*)\\1b");
  auto s = sink(a);
  CHECK(s.automaton.size() == a.size() + 1);
  CHECK(s.automaton.transition_count() == a.transition_count() + static_cast<std::size_t>(a.size()) + 1);
  for (int q = 0; q < a.size(); ++q) CHECK_FALSE(s.automaton.is_accepting(q));
  CHECK(s.automaton.is_accepting(s.sink));
  REQUIRE(s.automaton.edges(s.sink).size() == 1);
  CHECK(s.automaton.edges(s.sink)[0].target == s.sink);
  CHECK(s.automaton.edges(s.sink)[0].label.set == CharSet::all());
}

TEST_CASE("sink counts on a*a* match an independent enumeration", "[oracle]") {
  auto a = compile_str("a*a*");
  auto sk = sink(a).automaton;
  for (std::uint64_t n = 0; n <= 10; ++n) {
    std::string s(n, 'a');
    INFO("n = " << n);
    CHECK(sink_abg_s(a, s) == dfs_paths(sk, s));
    CHECK(sink_abg_s(a, s) == (n + 1) * (n + 3));
    CHECK(abg_s(a, s) == dfs_paths(a, s));
    CHECK(abg_s(a, s) == n + 1);
  }
}

TEST_CASE("runtime bound constants", "[oracle]") {
  auto rc = runtime_constants(compile_str("(ab)\\1"));
  CHECK(rc.max_fbrl == 3);
  CHECK(rc.ibrrct == 0);
  for (const char* p : {"a(b*)c", "a*a*", "(a|a)*", "ab|ac"}) {
    INFO(p);
    auto r = runtime_constants(compile_str(p));
    CHECK(r.ibrrct == 0);
    CHECK(r.max_fbrl == 1);
  }
  // An unbounded capture always contains a loop, so the bound does not exist.
  CHECK_THROWS_AS(runtime_constants(compile_str("(a*)\\1b")), Error);
}

TEST_CASE("sink counts dominate plain counts and bound the runtime", "[oracle]") {
  for (const char* p : {"(a*)\\1b", "(ab)c*\\1", "(a)b\\1c*", "a*a*", "(a|b)*\\1", "((a)|b)+\\2"}) {
    auto a = compile_str(p);
    for (auto& s : all_strings("abc", 6)) {
      INFO(p << " on " << s);
      CHECK(sink_abg_s(a, s) >= abg_s(a, s));
    }
  }
  for (const char* p : {"(ab)c*\\1", "(a)b\\1c*", "a(b*)c", "a*a*"}) {
    auto a = compile_str(p);
    auto xi = runtime_constants(a).xi();
    for (auto& s : all_strings("abc", 7)) {
      INFO(p << " on " << s);
      CHECK(bt_rt_s(a, s).cost <= xi * sink_abg_s(a, s));
      CHECK(bt_rt_s(a, s).cost <= bt_rt_upper(a, s));
    }
  }
}

TEST_CASE("matcher and oracles agree on random instances", "[oracle][differential]") {
  testing::RandomRegex gen(20240915);
  int checked = 0;
  while (checked < 500) {
    std::string p = gen.pattern();
    auto r = parse_rewb(p);
    REQUIRE(r.ok());
    auto a = compile_pattern(r.value());
    std::string s = gen.input(10);
    INFO(p << " on '" << s << "'");
    for (UnsetRef u : {UnsetRef::fail, UnsetRef::empty}) {
      MatchOptions o;
      o.unset = u;
      o.limit = std::nullopt;
      auto m = bt_run(a, s, o);
      auto rt = bt_rt_s(a, s, u);
      CHECK(m.steps == rt.cost);
      CHECK(m.accepted == rt.accepted);
      CHECK(m.accepted == interpret_accepts(r.value().ast, s, r.value().group_count, u));
      o.exhaustive = true;
      CHECK(bt_run(a, s, o).steps == bt_rt_s(a, s, u, true).cost);
    }
    ++checked;
  }
}
