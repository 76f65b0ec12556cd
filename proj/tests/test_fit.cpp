#include "catch_amalgamated.hpp"

#include <cmath>
#include <random>

#include "rewb/fit.hpp"

using namespace rewb;

namespace {

std::vector<GrowthSample> synthetic(int degree, double noise, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> jitter(-noise, noise);
  std::vector<GrowthSample> s;
  for (double n = 16; n <= 2048; n *= 1.55) {
    double cost = 5 + 3 * n;
    if (degree >= 2) cost += 0.5 * n * n;
    if (degree >= 3) cost += 0.02 * n * n * n;
    s.push_back({std::round(n), cost * (1 + jitter(rng))});
  }
  return s;
}

TwoPhaseMfa compile_str(std::string_view p) {
  auto r = parse_rewb(p);
  REQUIRE(r.ok());
  return compile_pattern(r.value());
}

}  // namespace

TEST_CASE("the dominant degree of synthetic costs is recovered", "[fit]") {
  for (int d : {1, 2, 3}) {
    for (std::uint32_t seed : {1u, 2u, 3u}) {
      auto s = synthetic(d, 0.01, seed);
      REQUIRE(s.size() >= 10);
      auto g = fit_growth(s);
      INFO("degree " << d << " seed " << seed);
      CHECK(g.dominant_degree == d);
      CHECK(g.r_squared > 0.99);
    }
  }
}

TEST_CASE("exact polynomials are reproduced", "[fit]") {
  std::vector<GrowthSample> s;
  for (double n : {8.0, 16.0, 32.0, 64.0, 128.0, 256.0})
    s.push_back({n, n * n / 8 + 7 * n / 4});
  auto g = fit_growth(s);
  CHECK(g.dominant_degree == 2);
  CHECK(g.coefficients[2] == Catch::Approx(0.125).epsilon(1e-6));
  CHECK(g.coefficients[1] == Catch::Approx(1.75).epsilon(1e-6));
  CHECK(g.r_squared == Catch::Approx(1.0));
}

TEST_CASE("constant costs have degree 0", "[fit]") {
  std::vector<GrowthSample> s;
  for (double n : {8.0, 16.0, 32.0, 64.0, 128.0, 256.0}) s.push_back({n, 42});
  auto g = fit_growth(s);
  CHECK(g.dominant_degree == 0);
}

TEST_CASE("ill-conditioned inputs are refused", "[fit]") {
  auto kind = [](const std::vector<GrowthSample>& s) {
    try {
      fit_growth(s);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::precondition;
  };
  CHECK(kind({{1, 1}, {2, 2}, {4, 3}, {8, 4}, {16, 5}}) == ErrorKind::ill_conditioned);
  CHECK(kind({{1, 1}, {2, 2}, {2, 3}, {8, 4}, {16, 5}, {32, 6}}) == ErrorKind::ill_conditioned);
  CHECK(kind({{10, 1}, {11, 2}, {12, 3}, {13, 4}, {14, 5}, {15, 6}}) == ErrorKind::ill_conditioned);
}

TEST_CASE("validation confirms the canonical fixtures", "[fit][validate]") {
  for (const char* p : {"(a*)\\1b", "(a*)ba*\\1c", "(a*ba*)\\1c"}) {
    auto a = compile_str(p);
    auto d = detect_all(a);
    REQUIRE(d.findings.size() == 1);
    auto v = validate_finding(d.automaton, d.findings[0]);
    INFO(p << " " << v.note);
    CHECK(v.confirmed);
    REQUIRE(v.fit.has_value());
    CHECK(v.fit->dominant_degree == 2);
    CHECK(v.fit->r_squared >= 0.99);
  }
  auto p2 = compile_str("(a*)ba*\\1c");
  auto v = validate_finding(p2, detect_all(p2).findings[0]);
  REQUIRE(v.slice.has_value());
  CHECK(v.slice->dominant_degree == 1);
}

TEST_CASE("validation does not confirm safe patterns", "[fit][validate]") {
  auto a = compile_str("(ab)c*\\1");
  AttackFamily f;
  f.prefix = "ab";
  f.unit = "c";
  f.nsuffix = "x";
  auto v = validate_family(a, f, {});
  CHECK_FALSE(v.confirmed);
  REQUIRE(v.fit.has_value());
  CHECK(v.fit->dominant_degree <= 1);

  auto ida = detect_all(compile_str("a*a*"));
  CHECK_FALSE(validate_finding(ida.automaton, ida.findings[0]).confirmed);
}

TEST_CASE("a tight budget shrinks the ladder", "[fit][validate]") {
  auto a = compile_str("(a*)\\1b");
  auto d = detect_all(a);
  ValidationOptions o;
  o.limit = 20000;
  o.ladder = {16, 32, 64, 128, 256, 512, 1024, 2048};
  auto v = validate_finding(a, d.findings[0], o);
  CHECK(v.budget_exhausted);
  CHECK(v.ladder.back() < 2048);
  o.limit = 10;
  auto w = validate_finding(a, d.findings[0], o);
  CHECK_FALSE(w.confirmed);
  CHECK(w.budget_exhausted);
}
