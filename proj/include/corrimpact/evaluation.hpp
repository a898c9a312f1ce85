#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "corrimpact/dataset.hpp"
#include "corrimpact/detail/parallel.hpp"
#include "corrimpact/detail/rng.hpp"
#include "corrimpact/error.hpp"
#include "corrimpact/forest.hpp"
#include "corrimpact/glm.hpp"
#include "corrimpact/importance.hpp"
#include "corrimpact/rank_stats.hpp"

namespace corrimpact {

struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const noexcept { return tp + fp + tn + fn; }
};

struct Measure {
  double value = 0.0;
  bool degenerate = false;  // a denominator was zero and the value defaulted to 0
};

/// Area under the ROC curve as the Mann-Whitney probability that a defective
/// row outscores a clean one, ties counting one half.
inline double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw usage_error("auc: scores and labels differ in length");
  const auto ranks = average_ranks(scores);
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) {
      rank_sum += ranks[i];
      ++pos;
    }
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw data_error("auc needs both defective and clean rows");
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

/// Rows scoring strictly above `threshold` are predicted defective.
inline ConfusionMatrix confusion(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                 double threshold = 0.5) {
  if (scores.size() != labels.size()) throw usage_error("confusion: scores and labels differ in length");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] > threshold;
    if (labels[i]) {
      predicted ? ++cm.tp : ++cm.fn;
    } else {
      predicted ? ++cm.fp : ++cm.tn;
    }
  }
  return cm;
}

inline Measure f_measure(const ConfusionMatrix& cm) {
  if (cm.tp + cm.fp == 0 || cm.tp + cm.fn == 0 || cm.tp == 0) return {0.0, true};
  const double precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
  const double recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  return {2.0 * precision * recall / (precision + recall), false};
}

inline Measure mcc(const ConfusionMatrix& cm) {
  const double tp = static_cast<double>(cm.tp), fp = static_cast<double>(cm.fp);
  const double tn = static_cast<double>(cm.tn), fn = static_cast<double>(cm.fn);
  const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  if (denom == 0.0) return {0.0, true};
  return {(tp * tn - fp * fn) / std::sqrt(denom), false};
}

struct Distribution {
  double mean = 0.0;
  double sd = 0.0;
};

inline Distribution describe(std::span<const double> v) {
  Distribution d;
  if (v.empty()) return d;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (*lo == *hi) {  // exact, so constant vectors report sd 0 and their own value
    d.mean = *lo;
    return d;
  }
  d.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - d.mean) * (x - d.mean);
    d.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return d;
}

struct BootstrapOptions {
  std::size_t n_boot = 100;
  std::uint64_t seed = 42;
  std::size_t max_retries = 20;
  double threshold = 0.5;
  ForestConfig forest;  // seed and threads are overridden per iteration
  LogitOptions logit;
  unsigned threads = 0;
};

struct BootstrapSample {
  std::vector<std::size_t> inbag;
  std::vector<std::size_t> oob;
  std::size_t retries = 0;
};

/// Draws n rows with replacement for bootstrap `iteration`. Draws whose in-bag
/// or out-of-bag part lacks a class are redrawn with a fresh sub-seed.
inline BootstrapSample draw_bootstrap(std::span<const std::uint8_t> labels, std::uint64_t seed, std::size_t iteration,
                                      std::size_t max_retries = 20) {
  const std::size_t n = labels.size();
  for (std::size_t attempt = 0; attempt <= max_retries; ++attempt) {
    detail::Rng rng(detail::mix_seed(seed, {iteration, attempt}));
    BootstrapSample s;
    s.retries = attempt;
    s.inbag.resize(n);
    std::vector<bool> drawn(n, false);
    std::size_t in_ones = 0;
    for (auto& r : s.inbag) {
      r = static_cast<std::size_t>(rng.below(n));
      drawn[r] = true;
      in_ones += labels[r];
    }
    std::size_t out_ones = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!drawn[i]) {
        s.oob.push_back(i);
        out_ones += labels[i];
      }
    }
    const bool ok = in_ones > 0 && in_ones < n && out_ones > 0 && out_ones < s.oob.size();
    if (ok) return s;
  }
  throw data_error("dataset too small/imbalanced for bootstrap: " + std::to_string(max_retries + 1) +
                   " consecutive resamples lacked a class");
}

struct BootstrapEvaluation {
  Learner learner = Learner::logit;
  std::size_t n_boot = 0;
  std::uint64_t seed = 0;
  std::vector<double> auc, f_measure, mcc, oob_fraction;
  std::size_t degenerate_f = 0, degenerate_mcc = 0, retries = 0;

  Distribution summary(std::string_view measure) const {
    if (measure == "auc") return describe(auc);
    if (measure == "f_measure") return describe(f_measure);
    if (measure == "mcc") return describe(mcc);
    if (measure == "oob_fraction") return describe(oob_fraction);
    throw usage_error("unknown measure '" + std::string(measure) + "'");
  }
};

/// Scores of `learner` trained on `train` and applied to `test`.
inline std::vector<double> fit_and_score(const Dataset& train, const Dataset& test, const ModelSpec& spec, Learner learner,
                                         const LogitOptions& logit, const ForestConfig& forest) {
  if (learner == Learner::logit) return predict_prob(fit_logit(train, spec, logit), test);
  return predict_prob_forest(fit_forest(train, spec, forest), test);
}

/// Out-of-sample bootstrap: fit on each draw, score the rows it left out.
inline BootstrapEvaluation bootstrap_evaluate(const Dataset& d, const ModelSpec& spec, Learner learner,
                                              const BootstrapOptions& opt = {}) {
  spec.validate(d);
  if (opt.n_boot < 1) throw usage_error("bootstrap needs at least one iteration");
  BootstrapEvaluation ev;
  ev.learner = learner;
  ev.n_boot = opt.n_boot;
  ev.seed = opt.seed;
  ev.auc.resize(opt.n_boot);
  ev.f_measure.resize(opt.n_boot);
  ev.mcc.resize(opt.n_boot);
  ev.oob_fraction.resize(opt.n_boot);
  std::vector<std::uint8_t> f_deg(opt.n_boot), mcc_deg(opt.n_boot);
  std::vector<std::size_t> retries(opt.n_boot);

  const Dataset model_data = d.select(spec.metrics);
  detail::parallel_for(opt.n_boot, opt.threads, [&](std::size_t it) {
    const auto sample = draw_bootstrap(d.label(), opt.seed, it, opt.max_retries);
    const Dataset train = model_data.rows(sample.inbag);
    const Dataset test = model_data.rows(sample.oob);
    ForestConfig fc = opt.forest;
    fc.seed = detail::mix_seed(opt.seed, {it, 0xF0});
    fc.threads = 1;
    const auto scores = fit_and_score(train, test, spec, learner, opt.logit, fc);
    const auto cm = confusion(scores, test.label(), opt.threshold);
    const auto f = f_measure(cm);
    const auto m = mcc(cm);
    ev.auc[it] = auc(scores, test.label());
    ev.f_measure[it] = f.value;
    ev.mcc[it] = m.value;
    f_deg[it] = f.degenerate;
    mcc_deg[it] = m.degenerate;
    ev.oob_fraction[it] = static_cast<double>(sample.oob.size()) / static_cast<double>(d.n_rows());
    retries[it] = sample.retries;
  });
  for (std::size_t i = 0; i < opt.n_boot; ++i) {
    ev.degenerate_f += f_deg[i];
    ev.degenerate_mcc += mcc_deg[i];
    ev.retries += retries[i];
  }
  return ev;
}

struct MeasureComparison {
  std::string measure;
  std::vector<double> differences_pp;  // per iteration: (non-mitigated - mitigated) * 100
  double mean_difference_pp = 0.0;
  EffectSize effect;                   // Cliff's delta, non-mitigated vs mitigated scores
  double sd_nonmitigated = 0.0;
  double sd_mitigated = 0.0;
  std::optional<double> stability_ratio;  // sd(non-mitigated) / sd(mitigated)
  bool ratio_degenerate = false;
};

struct StabilityReport {
  std::vector<MeasureComparison> measures;  // auc, f_measure, mcc

  const MeasureComparison& get(std::string_view measure) const {
    for (const auto& m : measures)
      if (m.measure == measure) return m;
    throw usage_error("unknown measure '" + std::string(measure) + "'");
  }
};

inline StabilityReport compare(const BootstrapEvaluation& nonmitigated, const BootstrapEvaluation& mitigated) {
  if (nonmitigated.n_boot != mitigated.n_boot) throw usage_error("compare: bootstrap evaluations differ in length");
  StabilityReport out;
  auto one = [&](const char* name, const std::vector<double>& a, const std::vector<double>& b) {
    MeasureComparison c;
    c.measure = name;
    c.differences_pp.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) c.differences_pp[i] = (a[i] - b[i]) * 100.0;
    c.mean_difference_pp = describe(c.differences_pp).mean;
    c.effect = cliffs_delta(a, b);
    c.sd_nonmitigated = describe(a).sd;
    c.sd_mitigated = describe(b).sd;
    if (c.sd_nonmitigated > 0.0 && c.sd_mitigated > 0.0) {
      c.stability_ratio = c.sd_nonmitigated / c.sd_mitigated;
    } else {
      c.ratio_degenerate = true;
      if (c.sd_nonmitigated == 0.0 && c.sd_mitigated == 0.0) c.stability_ratio = 1.0;
    }
    out.measures.push_back(std::move(c));
  };
  one("auc", nonmitigated.auc, mitigated.auc);
  one("f_measure", nonmitigated.f_measure, mitigated.f_measure);
  one("mcc", nonmitigated.mcc, mitigated.mcc);
  return out;
}

}  // namespace corrimpact
