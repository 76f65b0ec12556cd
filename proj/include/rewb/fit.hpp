#pragma once

// Polynomial growth fitting on (length, cost) samples and dynamic
// confirmation of detected findings.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "rewb/detect.hpp"
#include "rewb/error.hpp"
#include "rewb/family.hpp"
#include "rewb/matcher.hpp"

namespace rewb {

struct GrowthSample {
  double length = 0;
  double cost = 0;
};

struct GrowthFit {
  static constexpr int kDegree = 4;
  std::vector<GrowthSample> samples;
  std::array<double, kDegree + 1> coefficients{};  // in raw length units
  std::array<double, kDegree + 1> std_errors{};
  int dominant_degree = 0;
  double residual_norm = 0;
  double r_squared = 1;
};

namespace fit_detail {

struct Solved {
  Eigen::VectorXd coef;
  Eigen::VectorXd se;
  Eigen::VectorXd fitted;  // unweighted
  double rss = 0;
};

// Least squares of cost on {1, x, ..., x^degree} with x = length / longest.
// With `relative`, each row is divided by its cost, which treats the noise
// as proportional to the value.
inline Solved solve(const std::vector<GrowthSample>& samples, int degree, bool relative) {
  const auto m = static_cast<Eigen::Index>(samples.size());
  const double hi = samples.back().length;
  Eigen::MatrixXd X(m, degree + 1), raw(m, degree + 1);
  Eigen::VectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    double w = relative ? 1 / std::max(1.0, std::abs(s.cost)) : 1;
    double x = s.length / hi, p = 1;
    for (int d = 0; d <= degree; ++d, p *= x) {
      raw(i, d) = p;
      X(i, d) = p * w;
    }
    y(i) = s.cost * w;
  }
  Solved r;
  r.coef = Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(X).solve(y);
  r.rss = (y - X * r.coef).squaredNorm();
  r.fitted = raw * r.coef;
  double dof = static_cast<double>(m - (degree + 1));
  double sigma2 = dof > 0 ? r.rss / dof : 0;
  Eigen::MatrixXd cov =
      (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(degree + 1, degree + 1)) * sigma2;
  r.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return r;
}

}  // namespace fit_detail

// Ordinary least squares of cost on {1, n, ..., n^4}; the regression runs on
// lengths divided by the largest one and the coefficients are scaled back.
//
// The dominant degree comes from backward elimination on fits weighted by
// 1/cost: starting at 4, the degree-d fit is accepted when its top term
// contributes more than 5% of the fitted value at the longest sample and
// exceeds 4 standard errors. A single degree-4 fit is not used for this
// because its high-order terms can cancel each other and still look significant.
inline GrowthFit fit_growth(const std::vector<GrowthSample>& samples) {
  constexpr int D = GrowthFit::kDegree;
  if (samples.size() < 6) throw Error(ErrorKind::ill_conditioned, "fit needs at least 6 samples");
  for (std::size_t i = 1; i < samples.size(); ++i)
    if (!(samples[i].length > samples[i - 1].length))
      throw Error(ErrorKind::ill_conditioned, "sample lengths must be strictly increasing");
  const double lo = samples.front().length, hi = samples.back().length;
  if (lo <= 0 || hi < 8 * lo) throw Error(ErrorKind::ill_conditioned, "sample lengths must span at least 8x");

  auto full = fit_detail::solve(samples, D, false);
  double mean = 0;
  for (auto& s : samples) mean += s.cost;
  mean /= static_cast<double>(samples.size());
  double tss = 0;
  for (auto& s : samples) tss += (s.cost - mean) * (s.cost - mean);

  GrowthFit g;
  g.samples = samples;
  g.residual_norm = std::sqrt(full.rss);
  g.r_squared = tss > 0 ? 1 - full.rss / tss : (full.rss <= 1e-18 ? 1.0 : 0.0);
  double scale = 1;
  for (int d = 0; d <= D; ++d, scale *= hi) {
    g.coefficients[static_cast<std::size_t>(d)] = full.coef(d) / scale;
    g.std_errors[static_cast<std::size_t>(d)] = full.se(d) / scale;
  }
  for (int d = D; d >= 1; --d) {
    auto w = fit_detail::solve(samples, d, true);
    // At x = 1 the contribution of term d is simply its coefficient.
    double total = w.fitted(w.fitted.size() - 1);
    if (total > 0 && w.coef(d) > 0.05 * total && w.coef(d) > 4 * w.se(d)) {
      g.dominant_degree = d;
      break;
    }
  }
  return g;
}

struct ValidationOptions {
  std::vector<long> ladder{16, 32, 64, 128, 256, 512};
  std::uint64_t limit = kDefaultMatchLimit;  // per sample
  bool anchored = true;
  UnsetRef unset = UnsetRef::fail;
};

struct Validation {
  bool confirmed = false;
  bool budget_exhausted = false;
  std::optional<GrowthFit> fit;
  std::optional<GrowthFit> slice;  // steps against the second pump count, first held (two-pump families)
  std::vector<long> ladder;        // pump counts actually used
  std::optional<AttackFamily> family;
  std::string note;
};

inline std::vector<GrowthSample> to_growth(const std::vector<Sample>& s) {
  std::vector<GrowthSample> r;
  for (auto& x : s) r.push_back({static_cast<double>(x.length), static_cast<double>(x.steps)});
  return r;
}

// Measures the family on the diagonal ladder, halving it while any sample
// trips the budget, and confirms on a fitted degree of at least 2.
inline Validation validate_family(const TwoPhaseMfa& a, const AttackFamily& fam, const ValidationOptions& opts) {
  Validation v;
  v.family = fam;
  MatchOptions mo;
  mo.limit = opts.limit;
  mo.anchored = opts.anchored;
  mo.unset = opts.unset;
  std::vector<long> ladder = opts.ladder;
  std::vector<Sample> diag;
  for (;;) {
    diag = measure_family(a, fam, ladder, mo);
    bool aborted = std::any_of(diag.begin(), diag.end(), [](const Sample& s) { return s.aborted; });
    if (!aborted) break;
    v.budget_exhausted = true;
    std::vector<long> smaller;
    for (long k : ladder)
      if (k / 2 >= 1 && (smaller.empty() || smaller.back() != k / 2)) smaller.push_back(k / 2);
    if (smaller.size() < 6 || smaller.back() == ladder.back()) {
      v.note = "match budget exhausted on every ladder";
      v.ladder = ladder;
      return v;
    }
    ladder = smaller;
  }
  v.ladder = ladder;
  auto growth = to_growth(diag);
  if (growth.front().length <= 0 || growth.back().length < 8 * growth.front().length) {
    // A long fixed prefix keeps the lengths close together. Length is affine
    // in the pump count, so fitting against the count keeps the degree.
    for (std::size_t i = 0; i < growth.size(); ++i) growth[i].length = static_cast<double>(diag[i].pumps[0]);
    v.note = "fitted against the pump count: lengths span less than 8x";
  }
  try {
    v.fit = fit_growth(growth);
  } catch (const Error& e) {
    v.note = e.what();
    return v;
  }
  v.confirmed = v.fit->dominant_degree >= 2;
  if (fam.arity == 2) {
    long held = ladder[ladder.size() / 2];
    std::vector<std::vector<long>> pumps;
    for (long k : ladder) pumps.push_back({held, k});
    auto sl = measure_pumps(a, fam, pumps, mo);
    if (std::none_of(sl.begin(), sl.end(), [](const Sample& s) { return s.aborted; })) {
      // Abscissa is the varied pump count: with the first pump fixed the
      // lengths alone would not span enough for a fit.
      std::vector<GrowthSample> g;
      for (auto& x : sl) g.push_back({static_cast<double>(x.pumps[1]), static_cast<double>(x.steps)});
      try {
        v.slice = fit_growth(g);
      } catch (const Error&) {
      }
    }
  }
  return v;
}

inline Validation validate_finding(const TwoPhaseMfa& a, const PatternFinding& f, const ValidationOptions& opts = {}) {
  Validation v;
  if (f.pattern == PatternId::IDA) {
    v.note = "IDA findings are not validated dynamically";
    return v;
  }
  AttackAutomaton at;
  try {
    at = build_attack_automaton(a, f);
  } catch (const Error& e) {
    v.note = e.what();
    return v;
  }
  return validate_family(a, at.family, opts);
}

}  // namespace rewb
