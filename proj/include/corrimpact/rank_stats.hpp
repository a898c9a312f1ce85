#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "corrimpact/dataset.hpp"
#include "corrimpact/error.hpp"

namespace corrimpact {

enum class Magnitude { negligible, weak, medium, strong };

inline std::string_view to_string(Magnitude m) {
  switch (m) {
    case Magnitude::negligible: return "negligible";
    case Magnitude::weak: return "weak";
    case Magnitude::medium: return "medium";
    case Magnitude::strong: return "strong";
  }
  return "?";
}

// Romano et al. thresholds on |delta|; the lower bound of each bucket is inclusive.
inline Magnitude cliffs_magnitude(double delta) {
  const double a = std::abs(delta);
  if (a < 0.147) return Magnitude::negligible;
  if (a < 0.33) return Magnitude::weak;
  if (a < 0.474) return Magnitude::medium;
  return Magnitude::strong;
}

struct EffectSize {
  double delta = 0.0;
  Magnitude magnitude = Magnitude::negligible;
};

struct Correlation {
  double rho = 0.0;
  bool constant_input = false;  // one side had zero rank variance; rho reported as 0
};

struct CorrelationMatrix {
  std::vector<std::string> metric_names;
  Eigen::MatrixXd rho;
  std::vector<bool> constant;  // per metric

  double at(std::size_t i, std::size_t j) const { return rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); }
  std::size_t size() const noexcept { return metric_names.size(); }
  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < metric_names.size(); ++i)
      if (metric_names[i] == name) return i;
    throw data_error("metric '" + std::string(name) + "' not in correlation matrix");
  }
};

struct RSquared {
  double r2 = 0.0;
  bool perfect = false;         // residual sum of squares vanished (or constant target)
  bool rank_deficient = false;  // predictors were collinear among themselves
};

/// Average ranks (1-based), ties sharing the mean of the positions they span.
inline std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace detail {

inline Correlation pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return {0.0, true};
  return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

inline void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw usage_error("length mismatch: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  }
  if (x.size() < 3) throw usage_error("correlation needs at least 3 observations");
}

}  // namespace detail

inline Correlation spearman(std::span<const double> x, std::span<const double> y) {
  detail::check_pair(x, y);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return detail::pearson(rx, ry);
}

inline Correlation pearson(std::span<const double> x, std::span<const double> y) {
  detail::check_pair(x, y);
  return detail::pearson(x, y);
}

/// Cliff's delta of `defective_values` over `clean_values`: P(x > y) - P(x < y),
/// counted exactly with binary searches over the sorted second sample.
inline EffectSize cliffs_delta(std::span<const double> defective_values, std::span<const double> clean_values) {
  if (defective_values.empty() || clean_values.empty()) throw usage_error("cliffs_delta needs two non-empty samples");
  std::vector<double> sorted(clean_values.begin(), clean_values.end());
  std::sort(sorted.begin(), sorted.end());
  std::int64_t score = 0;
  for (double x : defective_values) {
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), x) - sorted.begin();
    const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), x);
    score += below - above;
  }
  const double delta =
      static_cast<double>(score) / (static_cast<double>(defective_values.size()) * static_cast<double>(clean_values.size()));
  return {delta, cliffs_magnitude(delta)};
}

inline CorrelationMatrix spearman_matrix(const Dataset& d) {
  const std::size_t p = d.n_metrics();
  if (p < 2) throw usage_error("correlation matrix needs at least 2 metrics");
  if (d.n_rows() < 3) throw usage_error("correlation needs at least 3 observations");
  std::vector<std::vector<double>> ranks;
  ranks.reserve(p);
  for (const auto& m : d.metrics()) ranks.push_back(average_ranks(m.values));

  CorrelationMatrix cm;
  cm.metric_names = d.metric_names();
  cm.rho = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  cm.constant.assign(p, false);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = i + 1; j < p; ++j) {
      const auto c = detail::pearson(ranks[i], ranks[j]);
      cm.rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c.rho;
      cm.rho(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = c.rho;
    }
    const auto& r = ranks[i];
    cm.constant[i] = std::all_of(r.begin(), r.end(), [&](double v) { return v == r.front(); });
  }
  return cm;
}

/// R^2 of the least-squares fit of `target` on `predictors` plus an intercept.
///
/// Predictors are centered and solved with column-pivoted QR, so collinear
/// predictors are flagged rather than fatal. A constant target, or a residual
/// sum of squares below 1e-12 of the total, reports exactly 1.
inline RSquared ols_r_squared(std::span<const double> target, std::span<const std::vector<double>> predictors) {
  const std::size_t n = target.size();
  const std::size_t k = predictors.size();
  if (n < k + 2) throw usage_error("ols_r_squared needs at least predictors + 2 rows");
  for (const auto& p : predictors)
    if (p.size() != n) throw usage_error("predictor length differs from target length");

  const Eigen::Index rows = static_cast<Eigen::Index>(n);
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(target.data(), rows);
  y.array() -= y.mean();
  const double tss = y.squaredNorm();
  if (tss <= 0.0) return {1.0, true, false};
  if (k == 0) return {0.0, false, false};

  Eigen::MatrixXd x(rows, static_cast<Eigen::Index>(k));
  for (std::size_t j = 0; j < k; ++j) {
    x.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Eigen::VectorXd>(predictors[j].data(), rows);
    x.col(static_cast<Eigen::Index>(j)).array() -= x.col(static_cast<Eigen::Index>(j)).mean();
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  RSquared out;
  out.rank_deficient = qr.rank() < static_cast<Eigen::Index>(k);
  const Eigen::VectorXd beta = qr.solve(y);
  const double rss = (y - x * beta).squaredNorm();
  if (rss <= 1e-12 * tss) {
    out.r2 = 1.0;
    out.perfect = true;
    return out;
  }
  out.r2 = std::clamp(1.0 - rss / tss, 0.0, 1.0);
  return out;
}

}  // namespace corrimpact
