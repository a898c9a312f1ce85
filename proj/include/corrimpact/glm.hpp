#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "corrimpact/dataset.hpp"
#include "corrimpact/error.hpp"
#include "corrimpact/importance.hpp"

namespace corrimpact {

/// Ordered list of metrics entering a model. Order matters for Type-I ANOVA.
struct ModelSpec {
  std::vector<std::string> metrics;

  void validate(const Dataset& d) const {
    if (metrics.empty()) throw usage_error("model specification is empty");
    std::unordered_set<std::string> seen;
    for (const auto& m : metrics) {
      if (!seen.insert(m).second) throw usage_error("metric '" + m + "' appears twice in the model specification");
      if (!d.index_of(m)) throw data_error("model specification names unknown metric '" + m + "'");
    }
  }

  static ModelSpec all_of(const Dataset& d) { return {d.metric_names()}; }
};

struct LogitOptions {
  int max_iterations = 25;
  double epsilon = 1e-8;          // |dDev| / (|Dev| + 0.1)
  double separation_cap = 30.0;   // any |beta| above this stops the fit, flagged
  double alias_tolerance = 1e-7;  // relative residual norm below which a column is aliased
};

struct FittedLogit {
  ModelSpec spec;
  std::vector<std::string> terms;  // non-aliased metrics, spec order
  std::vector<std::string> aliased;
  Eigen::VectorXd coefficients;    // intercept first, then one per term
  Eigen::MatrixXd covariance;      // inverse Fisher information at the optimum
  double deviance = 0.0;
  double null_deviance = 0.0;
  double pearson_chi2 = 0.0;
  bool converged = false;
  bool separation = false;
  int iterations = 0;
  std::size_t n_rows = 0;
  std::size_t n_params = 0;  // intercept + terms

  std::optional<double> coefficient(std::string_view metric) const {
    for (std::size_t j = 0; j < terms.size(); ++j)
      if (terms[j] == metric) return coefficients(static_cast<Eigen::Index>(j + 1));
    return std::nullopt;
  }
  std::optional<double> standard_error(std::string_view metric) const {
    for (std::size_t j = 0; j < terms.size(); ++j)
      if (terms[j] == metric) {
        const auto k = static_cast<Eigen::Index>(j + 1);
        return std::sqrt(covariance(k, k));
      }
    return std::nullopt;
  }
};

namespace detail {

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// -2 log-likelihood of binary labels under linear predictor eta.
inline double binomial_deviance(std::span<const std::uint8_t> y, const Eigen::VectorXd& eta) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) dev += y[static_cast<std::size_t>(i)] ? softplus(-eta(i)) : softplus(eta(i));
  return 2.0 * dev;
}

inline double null_deviance(std::span<const std::uint8_t> y) {
  double ones = 0.0;
  for (auto v : y) ones += v;
  const double n = static_cast<double>(y.size());
  const double p = ones / n;
  double dev = 0.0;
  if (ones > 0) dev -= ones * std::log(p);
  if (ones < n) dev -= (n - ones) * std::log1p(-p);
  return 2.0 * dev;
}

inline double chisq_upper(double stat, double df) {
  if (!(stat > 0.0) || df <= 0.0) return 1.0;
  if (std::isinf(stat)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), stat));
}

inline double f_upper(double stat, double df1, double df2) {
  if (!(stat > 0.0) || df1 <= 0.0 || df2 <= 0.0) return 1.0;
  if (std::isinf(stat)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::fisher_f(df1, df2), stat));
}

}  // namespace detail

/// Binomial logistic regression with intercept, fitted by iteratively
/// reweighted least squares.
///
/// Columns that are (numerically) linear combinations of the intercept and the
/// preceding spec columns are aliased: excluded from the design and reported.
/// Non-convergence and separation are flagged, never thrown.
inline FittedLogit fit_logit(const Dataset& d, const ModelSpec& spec, const LogitOptions& opt = {}) {
  spec.validate(d);
  const std::size_t n = d.n_rows();
  const auto rows = static_cast<Eigen::Index>(n);
  const auto y = d.label();

  FittedLogit fit;
  fit.spec = spec;
  fit.n_rows = n;

  // Aliasing by Gram-Schmidt against intercept + kept columns (re-orthogonalized).
  std::vector<Eigen::VectorXd> basis{Eigen::VectorXd::Constant(rows, 1.0 / std::sqrt(static_cast<double>(n)))};
  std::vector<const std::vector<double>*> kept;
  for (const auto& name : spec.metrics) {
    const auto& col = d.metric(name).values;
    const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(col.data(), rows);
    Eigen::VectorXd r = v;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : basis) r -= q.dot(r) * q;
    const double vn = v.norm();
    if (vn == 0.0 || r.norm() <= opt.alias_tolerance * vn) {
      fit.aliased.push_back(name);
      continue;
    }
    basis.push_back(r / r.norm());
    kept.push_back(&col);
    fit.terms.push_back(name);
  }
  const auto p = static_cast<Eigen::Index>(kept.size() + 1);
  fit.n_params = static_cast<std::size_t>(p);
  if (n <= fit.n_params) throw data_error("logistic fit needs more rows than parameters");

  Eigen::MatrixXd x(rows, p);
  x.col(0).setOnes();
  for (Eigen::Index j = 1; j < p; ++j) x.col(j) = Eigen::Map<const Eigen::VectorXd>(kept[static_cast<std::size_t>(j - 1)]->data(), rows);
  Eigen::VectorXd yv(rows);
  for (Eigen::Index i = 0; i < rows; ++i) yv(i) = y[static_cast<std::size_t>(i)];

  fit.null_deviance = detail::null_deviance(y);

  auto mu_of = [](const Eigen::VectorXd& eta) {
    Eigen::VectorXd mu(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) mu(i) = std::clamp(detail::sigmoid(eta(i)), DBL_EPSILON, 1.0 - DBL_EPSILON);
    return mu;
  };

  Eigen::VectorXd mu = (yv.array() + 0.5) / 2.0;
  Eigen::VectorXd eta = (mu.array() / (1.0 - mu.array())).log();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double dev_old = detail::binomial_deviance(y, eta);
  bool have_beta = false;

  for (int it = 1; it <= opt.max_iterations; ++it) {
    fit.iterations = it;
    const Eigen::VectorXd w = mu.array() * (1.0 - mu.array());
    const Eigen::VectorXd z = eta.array() + (yv - mu).array() / w.array();
    const Eigen::VectorXd sw = w.array().sqrt();
    Eigen::VectorXd next = (sw.asDiagonal() * x).householderQr().solve(sw.cwiseProduct(z));
    Eigen::VectorXd next_eta = x * next;
    double dev = detail::binomial_deviance(y, next_eta);
    // Step halving only when the update is numerically invalid.
    for (int h = 0; h < 30 && !std::isfinite(dev) && have_beta; ++h) {
      next = 0.5 * (next + beta);
      next_eta = x * next;
      dev = detail::binomial_deviance(y, next_eta);
    }
    beta = next;
    eta = next_eta;
    mu = mu_of(eta);
    have_beta = true;
    fit.deviance = dev;
    if (beta.cwiseAbs().maxCoeff() > opt.separation_cap) {
      fit.separation = true;
      break;
    }
    if (std::abs(dev - dev_old) / (std::abs(dev) + 0.1) < opt.epsilon) {
      fit.converged = true;
      break;
    }
    dev_old = dev;
  }

  fit.coefficients = beta;
  const Eigen::VectorXd w = mu.array() * (1.0 - mu.array());
  const Eigen::MatrixXd info = x.transpose() * w.asDiagonal() * x;
  Eigen::MatrixXd cov = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  fit.covariance = 0.5 * (cov + cov.transpose());
  fit.pearson_chi2 = ((yv - mu).array().square() / w.array()).sum();
  return fit;
}

/// Probability of the defective class for each row of `rows`.
inline std::vector<double> predict_prob(const FittedLogit& m, const Dataset& rows) {
  for (const auto& name : m.spec.metrics)
    if (!rows.index_of(name)) throw data_error("prediction rows lack metric '" + name + "'");
  std::vector<double> eta(rows.n_rows(), m.coefficients(0));
  for (std::size_t j = 0; j < m.terms.size(); ++j) {
    const double b = m.coefficients(static_cast<Eigen::Index>(j + 1));
    const auto& v = rows.metric(m.terms[j]).values;
    for (std::size_t i = 0; i < eta.size(); ++i) eta[i] += b * v[i];
  }
  for (auto& e : eta) e = detail::sigmoid(e);
  return eta;
}

/// Sequential (Type-I) analysis of deviance: each metric's deviance reduction
/// given only the metrics before it in the specification.
inline AnovaTable anova_type1(const Dataset& d, const ModelSpec& spec, const LogitOptions& opt = {}) {
  spec.validate(d);
  AnovaTable table;
  table.technique = Technique::type1;
  double previous = detail::null_deviance(d.label());
  ModelSpec prefix;
  for (const auto& name : spec.metrics) {
    prefix.metrics.push_back(name);
    const auto fit = fit_logit(d, prefix, opt);
    ImportanceRow row;
    row.metric = name;
    row.aliased = std::find(fit.aliased.begin(), fit.aliased.end(), name) != fit.aliased.end();
    row.score = row.aliased ? 0.0 : std::max(previous - fit.deviance, 0.0);
    row.df = row.aliased ? 0 : 1;
    row.p_value = detail::chisq_upper(row.score, row.df);
    table.rows.push_back(std::move(row));
    previous = fit.deviance;
  }
  table.compute_shares();
  return table;
}

enum class Type2Statistic { wald, lr, f, chisq };

inline constexpr Technique technique_of(Type2Statistic s) {
  switch (s) {
    case Type2Statistic::wald: return Technique::type2_wald;
    case Type2Statistic::lr: return Technique::type2_lr;
    case Type2Statistic::f: return Technique::type2_f;
    case Type2Statistic::chisq: return Technique::type2_chisq;
  }
  return Technique::type2_lr;
}

struct Type2Tables {
  AnovaTable wald, lr, f, chisq;

  const AnovaTable& get(Type2Statistic s) const {
    switch (s) {
      case Type2Statistic::wald: return wald;
      case Type2Statistic::lr: return lr;
      case Type2Statistic::f: return f;
      case Type2Statistic::chisq: return chisq;
    }
    return lr;
  }
};

/// Hierarchical (Type-II) analysis: each metric assessed after all others.
///
/// Every fit runs on the lexicographically sorted specification so the tables
/// are bit-identical under any permutation of the caller's ordering; rows are
/// reported in the caller's order. `with_reduced_fits` = false skips the
/// leave-one-out fits (Wald/Chisq only need the full model).
inline Type2Tables anova_type2_all(const Dataset& d, const ModelSpec& spec, const LogitOptions& opt = {},
                                   bool with_reduced_fits = true) {
  spec.validate(d);
  ModelSpec canonical = spec;
  std::sort(canonical.metrics.begin(), canonical.metrics.end());
  const auto full = fit_logit(d, canonical, opt);
  const double df_resid = static_cast<double>(full.n_rows) - static_cast<double>(full.n_params);
  const double dispersion = df_resid > 0 ? full.pearson_chi2 / df_resid : 1.0;

  Type2Tables out;
  out.wald.technique = Technique::type2_wald;
  out.lr.technique = Technique::type2_lr;
  out.f.technique = Technique::type2_f;
  out.chisq.technique = Technique::type2_chisq;
  out.chisq.note = "Wald chi-square on the same fit; coincides with type2-wald for single-df numeric metrics";

  for (const auto& name : spec.metrics) {
    const bool aliased = std::find(full.aliased.begin(), full.aliased.end(), name) != full.aliased.end();
    ImportanceRow base;
    base.metric = name;
    base.aliased = aliased;
    base.df = aliased ? 0 : 1;

    ImportanceRow wald = base;
    if (!aliased) {
      const double b = *full.coefficient(name);
      const double se = *full.standard_error(name);
      wald.score = se > 0.0 ? (b / se) * (b / se) : 0.0;
    }
    wald.p_value = detail::chisq_upper(wald.score, wald.df);
    ImportanceRow chisq = wald;

    ImportanceRow lr = base, f = base;
    if (!aliased && with_reduced_fits) {
      ModelSpec reduced;
      for (const auto& m : canonical.metrics)
        if (m != name) reduced.metrics.push_back(m);
      const double dev_reduced = reduced.metrics.empty() ? full.null_deviance : fit_logit(d, reduced, opt).deviance;
      lr.score = std::max(dev_reduced - full.deviance, 0.0);
      f.score = dispersion > 0.0 ? lr.score / dispersion : 0.0;
    }
    lr.p_value = detail::chisq_upper(lr.score, lr.df);
    f.p_value = detail::f_upper(f.score, f.df, df_resid);

    out.wald.rows.push_back(std::move(wald));
    out.chisq.rows.push_back(std::move(chisq));
    out.lr.rows.push_back(std::move(lr));
    out.f.rows.push_back(std::move(f));
  }
  out.wald.compute_shares();
  out.chisq.compute_shares();
  out.lr.compute_shares();
  out.f.compute_shares();
  return out;
}

inline AnovaTable anova_type2(const Dataset& d, const ModelSpec& spec, Type2Statistic statistic,
                              const LogitOptions& opt = {}) {
  const bool reduced = statistic == Type2Statistic::lr || statistic == Type2Statistic::f;
  return anova_type2_all(d, spec, opt, reduced).get(statistic);
}

}  // namespace corrimpact
