#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "corrimpact/dataset.hpp"
#include "corrimpact/detail/parallel.hpp"
#include "corrimpact/detail/rng.hpp"
#include "corrimpact/error.hpp"
#include "corrimpact/evaluation.hpp"
#include "corrimpact/forest.hpp"
#include "corrimpact/glm.hpp"
#include "corrimpact/importance.hpp"
#include "corrimpact/mitigation.hpp"
#include "corrimpact/rank_stats.hpp"
#include "corrimpact/skesd.hpp"

namespace corrimpact {

struct ExperimentOptions {
  std::size_t n_boot = 100;  // bootstrap importance tables feeding Scott-Knott; at least 10
  std::uint64_t seed = 42;
  ForestConfig forest;
  LogitOptions logit;
  MitigationOptions mitigation;
  ScottKnottOptions scott_knott;
  std::vector<Technique> techniques{all_techniques.begin(), all_techniques.end()};
  unsigned threads = 0;

  void validate() const {
    if (n_boot < 10) throw usage_error("experiments need at least 10 bootstrap iterations");
    if (techniques.empty()) throw usage_error("no interpretation techniques selected");
  }
};

// ---------------------------------------------------------------------------
// Importance tables on one fitted pair of models

/// Every requested technique's table for models trained on `train`.
/// Forest seeds come from `seed`; permutations from a stream derived from it.
inline std::map<Technique, ImportanceTable> importance_tables(const Dataset& train, const ModelSpec& spec,
                                                              const std::vector<Technique>& techniques,
                                                              std::uint64_t seed, const ExperimentOptions& opt,
                                                              unsigned forest_threads = 1) {
  std::set<Technique> want(techniques.begin(), techniques.end());
  std::map<Technique, ImportanceTable> out;
  if (want.contains(Technique::type1)) out[Technique::type1] = anova_type1(train, spec, opt.logit);
  const bool any_t2 = want.contains(Technique::type2_wald) || want.contains(Technique::type2_lr) ||
                      want.contains(Technique::type2_f) || want.contains(Technique::type2_chisq);
  if (any_t2) {
    const bool reduced = want.contains(Technique::type2_lr) || want.contains(Technique::type2_f);
    const auto t2 = anova_type2_all(train, spec, opt.logit, reduced);
    for (auto s : {Type2Statistic::wald, Type2Statistic::lr, Type2Statistic::f, Type2Statistic::chisq})
      if (want.contains(technique_of(s))) out[technique_of(s)] = t2.get(s);
  }
  const bool any_forest = std::any_of(want.begin(), want.end(), [](Technique t) { return learner_of(t) == Learner::forest; });
  if (any_forest) {
    ForestConfig fc = opt.forest;
    fc.seed = detail::mix_seed(seed, {0xF0});
    fc.threads = forest_threads;
    const auto forest = fit_forest(train, spec, fc);
    if (want.contains(Technique::gini)) out[Technique::gini] = gini_importance(forest, false);
    if (want.contains(Technique::gini_scaled)) out[Technique::gini_scaled] = gini_importance(forest, true);
    if (want.contains(Technique::perm) || want.contains(Technique::perm_scaled)) {
      const auto per_tree = permutation_decreases(forest, train, detail::mix_seed(seed, {0xA1}), forest_threads);
      if (want.contains(Technique::perm))
        out[Technique::perm] = detail::importance_from_trees(forest, Technique::perm, per_tree, false, true);
      if (want.contains(Technique::perm_scaled))
        out[Technique::perm_scaled] = detail::importance_from_trees(forest, Technique::perm_scaled, per_tree, true, true);
    }
  }
  return out;
}

/// Bootstrap distribution of importance scores for each technique: one table
/// per out-of-sample bootstrap draw, seeded by (seed, iteration).
inline std::map<Technique, ScoreSamples> importance_samples(const Dataset& d, const ModelSpec& spec,
                                                            const std::vector<Technique>& techniques,
                                                            const ExperimentOptions& opt) {
  spec.validate(d);
  const Dataset model_data = d.select(spec.metrics);
  std::vector<std::map<Technique, ImportanceTable>> per_iter(opt.n_boot);
  detail::parallel_for(opt.n_boot, opt.threads, [&](std::size_t it) {
    const auto sample = draw_bootstrap(d.label(), opt.seed, it);
    const Dataset train = model_data.rows(sample.inbag);
    per_iter[it] = importance_tables(train, spec, techniques, detail::mix_seed(opt.seed, {it}), opt);
  });
  std::map<Technique, ScoreSamples> out;
  for (auto t : techniques) {
    ScoreSamples s;
    s.metrics = spec.metrics;
    s.samples.assign(spec.metrics.size(), std::vector<double>(opt.n_boot));
    for (std::size_t it = 0; it < opt.n_boot; ++it) {
      const auto& table = per_iter[it].at(t);
      for (std::size_t m = 0; m < spec.metrics.size(); ++m) s.samples[m][it] = table.rows[m].score;
    }
    out[t] = std::move(s);
  }
  return out;
}

inline std::map<Technique, ScottKnottRanking> rank_techniques(const Dataset& d, const ModelSpec& spec,
                                                              const std::vector<Technique>& techniques,
                                                              const ExperimentOptions& opt) {
  std::map<Technique, ScottKnottRanking> out;
  for (auto& [t, s] : importance_samples(d, spec, techniques, opt)) out[t] = scott_knott_esd(s, opt.scott_knott);
  return out;
}

/// The rank-1 metric with the largest mean score.
inline std::string highest_ranked(const ScottKnottRanking& r) { return r.metrics.front().metric; }

// ---------------------------------------------------------------------------
// Prevalence of correlated metrics

struct MetricEffect {
  std::string metric;
  EffectSize effect;
};

struct ClusterCensus {
  std::vector<std::string> members;
  std::vector<Magnitude> magnitudes;
  bool all_strong = false;
  bool same_magnitude = false;
};

struct PrevalenceReport {
  std::vector<MetricEffect> effects;  // column order
  std::vector<ClusterCensus> clusters;
  std::size_t n_multi_member_clusters = 0;
  std::size_t n_correlated_metrics = 0;  // metrics inside multi-member clusters
  bool has_strong_correlated_cluster = false;
};

inline PrevalenceReport prevalence_analysis(const Dataset& d, double rho_threshold = 0.7) {
  PrevalenceReport rep;
  const auto y = d.label();
  for (const auto& m : d.metrics()) {
    std::vector<double> defective, clean;
    for (std::size_t i = 0; i < d.n_rows(); ++i) (y[i] ? defective : clean).push_back(m.values[i]);
    rep.effects.push_back({m.name, cliffs_delta(defective, clean)});
  }
  if (d.n_metrics() < 2) return rep;
  const auto vc = varclus(spearman_matrix(d), rho_threshold);
  for (const auto& cluster : vc.clusters) {
    ClusterCensus c;
    c.members = cluster;
    for (const auto& name : cluster) c.magnitudes.push_back(rep.effects[*d.index_of(name)].effect.magnitude);
    c.all_strong = std::all_of(c.magnitudes.begin(), c.magnitudes.end(), [](Magnitude m) { return m == Magnitude::strong; });
    c.same_magnitude = std::all_of(c.magnitudes.begin(), c.magnitudes.end(), [&](Magnitude m) { return m == c.magnitudes.front(); });
    if (cluster.size() >= 2) {
      ++rep.n_multi_member_clusters;
      rep.n_correlated_metrics += cluster.size();
      rep.has_strong_correlated_cluster = rep.has_strong_correlated_cluster || c.all_strong;
    }
    rep.clusters.push_back(std::move(c));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Dilution: importance of one metric as correlated metrics are prepended

struct DilutionStep {
  std::size_t k = 0;
  std::vector<std::string> spec;
  std::map<Technique, double> share;                         // target's share of the table
  std::map<Technique, std::optional<double>> relative_difference;  // (share_k - share_0) / share_0
};

struct DilutionReport {
  std::string target;
  std::vector<std::string> pool;
  std::vector<double> pool_rho;  // |rho| of each pool metric with the target
  std::vector<Technique> techniques;
  std::vector<DilutionStep> steps;
};

inline std::vector<Technique> default_dilution_techniques() {
  return {Technique::type1, Technique::type2_lr, Technique::gini, Technique::perm_scaled, Technique::perm};
}

/// For k = 0..|pool|, prepend pool metrics one at a time to the first position
/// of the mitigated specification and record the target's importance share.
inline DilutionReport dilution_analysis(const Dataset& full, const std::vector<std::string>& mitigated_metrics,
                                        const std::string& target, const std::vector<std::string>& pool,
                                        const ExperimentOptions& opt) {
  if (std::find(mitigated_metrics.begin(), mitigated_metrics.end(), target) == mitigated_metrics.end())
    throw data_error("dilution target '" + target + "' is not among the mitigated metrics");
  DilutionReport rep;
  rep.target = target;
  rep.pool = pool;
  rep.techniques = opt.techniques;
  const auto& tv = full.metric(target).values;
  for (const auto& m : pool) {
    if (std::find(mitigated_metrics.begin(), mitigated_metrics.end(), m) != mitigated_metrics.end())
      throw data_error("pool metric '" + m + "' is already in the mitigated specification");
    const double rho = std::abs(spearman(full.metric(m).values, tv).rho);
    if (!(rho > opt.mitigation.rho_threshold)) {
      throw data_error("pool metric '" + m + "' is not correlated with '" + target + "' (|rho| = " + std::to_string(rho) +
                       ")");
    }
    rep.pool_rho.push_back(rho);
  }
  for (std::size_t k = 0; k <= pool.size(); ++k) {
    DilutionStep step;
    step.k = k;
    for (std::size_t j = k; j > 0; --j) step.spec.push_back(pool[j - 1]);
    step.spec.insert(step.spec.end(), mitigated_metrics.begin(), mitigated_metrics.end());
    const auto tables = importance_tables(full, ModelSpec{step.spec}, opt.techniques, opt.seed, opt, opt.threads);
    for (const auto& [t, table] : tables) step.share[t] = table.row(target).share;
    rep.steps.push_back(std::move(step));
  }
  for (auto& step : rep.steps) {
    for (const auto& [t, s] : step.share) {
      const double base = rep.steps.front().share.at(t);
      step.relative_difference[t] = base > 0.0 ? std::optional<double>((s - base) / base) : std::nullopt;
    }
  }
  return rep;
}

/// Default dilution setup: the mitigated metric with the largest Cliff's |delta|
/// that has correlated partners, and those partners by decreasing |rho|.
inline std::pair<std::string, std::vector<std::string>> default_dilution_target(const Dataset& full,
                                                                                const MitigationReport& mit) {
  const auto prev = prevalence_analysis(full, 0.7);
  std::optional<std::string> best;
  double best_abs = -1.0;
  std::vector<std::string> best_pool;
  for (const auto& cluster : mit.clusters) {
    if (cluster.size() < 2) continue;
    for (const auto& m : cluster) {
      if (std::find(mit.surviving.begin(), mit.surviving.end(), m) == mit.surviving.end()) continue;
      const double a = std::abs(prev.effects[*full.index_of(m)].effect.delta);
      if (a > best_abs) {
        best_abs = a;
        best = m;
        best_pool.clear();
        for (const auto& o : cluster)
          if (o != m) best_pool.push_back(o);
      }
    }
  }
  if (!best) throw data_error("no surviving metric has correlated partners; nothing to dilute");
  const auto& tv = full.metric(*best).values;
  std::stable_sort(best_pool.begin(), best_pool.end(), [&](const std::string& a, const std::string& b) {
    return std::abs(spearman(full.metric(a).values, tv).rho) > std::abs(spearman(full.metric(b).values, tv).rho);
  });
  return {*best, best_pool};
}

// ---------------------------------------------------------------------------
// Order swap: the target first vs the target last

struct OrderSwapSpec {
  std::vector<std::string> spec;
  std::map<Technique, ImportanceTable> tables;
  double auc_logit = 0.0;   // training-data AUC, for reference
  double auc_forest = 0.0;
};

struct OrderSwapReport {
  std::string target;
  double min_pairwise_rho = 1.0;
  OrderSwapSpec target_first;
  OrderSwapSpec target_last;
};

inline OrderSwapReport order_swap_analysis(const Dataset& d, const std::vector<std::string>& metrics,
                                           const std::string& target, const ExperimentOptions& opt) {
  if (metrics.size() < 2) throw usage_error("order swap needs at least 2 metrics");
  if (std::find(metrics.begin(), metrics.end(), target) == metrics.end())
    throw usage_error("order swap target '" + target + "' is not among the metrics");
  OrderSwapReport rep;
  rep.target = target;
  for (std::size_t a = 0; a < metrics.size(); ++a)
    for (std::size_t b = a + 1; b < metrics.size(); ++b)
      rep.min_pairwise_rho = std::min(rep.min_pairwise_rho,
                                      std::abs(spearman(d.metric(metrics[a]).values, d.metric(metrics[b]).values).rho));
  std::vector<std::string> others;
  for (const auto& m : metrics)
    if (m != target) others.push_back(m);
  rep.target_first.spec.push_back(target);
  rep.target_first.spec.insert(rep.target_first.spec.end(), others.begin(), others.end());
  rep.target_last.spec = others;
  rep.target_last.spec.push_back(target);
  for (auto* s : {&rep.target_first, &rep.target_last}) {
    const ModelSpec spec{s->spec};
    s->tables = importance_tables(d, spec, opt.techniques, opt.seed, opt, opt.threads);
    ForestConfig fc = opt.forest;
    fc.seed = detail::mix_seed(opt.seed, {0xF0});
    fc.threads = opt.threads;
    s->auc_logit = auc(predict_prob(fit_logit(d, spec, opt.logit), d), d.label());
    s->auc_forest = auc(predict_prob_forest(fit_forest(d, spec, fc), d), d.label());
  }
  return rep;
}

// ---------------------------------------------------------------------------
// RQ1: rank difference of the highest ranked metric when a correlated metric is prepended

struct RankDifferenceResult {
  Technique technique = Technique::type1;
  bool applicable = false;
  std::string reason;  // why not applicable
  std::string m_high;
  std::string m_c;
  double rho = 0.0;  // |rho(m_c, m_high)|
  std::size_t rank_mitigated = 0;
  std::size_t rank_nonmitigated = 0;
  long difference = 0;  // non-mitigated rank - mitigated rank
};

struct Rq1Report {
  MitigationReport mitigation;
  std::vector<RankDifferenceResult> results;
};

inline Rq1Report rq1(const Dataset& d, const ExperimentOptions& opt) {
  opt.validate();
  Rq1Report rep;
  auto mit = mitigate(d, opt.mitigation);
  rep.mitigation = mit.report;
  const auto& survivors = mit.report.surviving;
  const auto base = rank_techniques(d, ModelSpec{survivors}, opt.techniques, opt);

  // Techniques sharing m_high share the rebuilt specifications.
  std::map<std::string, std::vector<Technique>> by_high;
  for (auto t : opt.techniques) by_high[highest_ranked(base.at(t))].push_back(t);

  std::map<Technique, RankDifferenceResult> results;
  for (const auto& [high, techs] : by_high) {
    const auto cluster_it = std::find_if(mit.report.clusters.begin(), mit.report.clusters.end(), [&](const auto& c) {
      return std::find(c.begin(), c.end(), high) != c.end();
    });
    std::optional<std::string> partner;
    double best_rho = -1.0;
    const auto& hv = d.metric(high).values;
    if (cluster_it != mit.report.clusters.end()) {
      for (const auto& m : *cluster_it) {
        if (m == high) continue;
        const double r = std::abs(spearman(d.metric(m).values, hv).rho);
        if (r > best_rho) {
          best_rho = r;
          partner = m;
        }
      }
    }
    if (!partner) {
      for (auto t : techs) {
        RankDifferenceResult r;
        r.technique = t;
        r.m_high = high;
        r.reason = "no correlated partner for the highest ranked metric";
        results[t] = r;
      }
      continue;
    }
    std::vector<std::string> mitigated_spec{high};
    for (const auto& m : survivors)
      if (m != high) mitigated_spec.push_back(m);
    std::vector<std::string> polluted_spec{*partner};
    polluted_spec.insert(polluted_spec.end(), mitigated_spec.begin(), mitigated_spec.end());
    const auto rank_mit = rank_techniques(d, ModelSpec{mitigated_spec}, techs, opt);
    const auto rank_non = rank_techniques(d, ModelSpec{polluted_spec}, techs, opt);
    for (auto t : techs) {
      RankDifferenceResult r;
      r.technique = t;
      r.applicable = true;
      r.m_high = high;
      r.m_c = *partner;
      r.rho = best_rho;
      r.rank_mitigated = rank_mit.at(t).rank_of(high);
      r.rank_nonmitigated = rank_non.at(t).rank_of(high);
      r.difference = static_cast<long>(r.rank_nonmitigated) - static_cast<long>(r.rank_mitigated);
      results[t] = r;
    }
  }
  for (auto t : opt.techniques) rep.results.push_back(results.at(t));
  return rep;
}

// ---------------------------------------------------------------------------
// RQ2: is the highest ranked metric still rank 1 wherever it sits in the spec?

struct OrderingConsistency {
  Technique technique = Technique::type1;
  std::string m_high;
  std::vector<std::size_t> rank_by_position;  // rank of m_high with m_high at position i
  bool consistent = false;
};

struct Rq2Report {
  std::vector<std::string> metrics;
  std::vector<OrderingConsistency> results;
};

inline Rq2Report rq2(const Dataset& d_mitigated, const ExperimentOptions& opt) {
  opt.validate();
  Rq2Report rep;
  rep.metrics = d_mitigated.metric_names();
  const auto base = rank_techniques(d_mitigated, ModelSpec{rep.metrics}, opt.techniques, opt);
  std::map<std::string, std::vector<Technique>> by_high;
  for (auto t : opt.techniques) by_high[highest_ranked(base.at(t))].push_back(t);

  std::map<Technique, OrderingConsistency> results;
  for (const auto& [high, techs] : by_high) {
    std::vector<std::string> others;
    for (const auto& m : rep.metrics)
      if (m != high) others.push_back(m);
    for (auto t : techs) results[t] = {t, high, {}, true};
    for (std::size_t pos = 0; pos <= others.size(); ++pos) {
      std::vector<std::string> spec = others;
      spec.insert(spec.begin() + static_cast<std::ptrdiff_t>(pos), high);
      const auto ranks = rank_techniques(d_mitigated, ModelSpec{spec}, techs, opt);
      for (auto t : techs) {
        const auto r = ranks.at(t).rank_of(high);
        results[t].rank_by_position.push_back(r);
        results[t].consistent = results[t].consistent && r == 1;
      }
    }
  }
  for (auto t : opt.techniques) rep.results.push_back(results.at(t));
  return rep;
}

// ---------------------------------------------------------------------------
// RQ3: agreement of the top-k metrics between techniques

struct ConsistencyMatrix {
  std::vector<Technique> techniques;
  std::size_t k = 1;
  std::vector<std::vector<double>> cells;  // fraction of datasets whose top-k sets intersect
};

struct Rq3DatasetResult {
  std::string dataset;
  std::map<Technique, std::set<std::string>> top_nonmitigated;  // keyed by k below
  std::map<Technique, ScottKnottRanking> ranking_nonmitigated;
  std::map<Technique, ScottKnottRanking> ranking_mitigated;
};

struct Rq3Report {
  std::vector<std::string> datasets;
  std::vector<ConsistencyMatrix> nonmitigated;  // one per k
  std::vector<ConsistencyMatrix> mitigated;
  std::vector<Rq3DatasetResult> per_dataset;
};

inline ConsistencyMatrix consistency_matrix(const std::vector<std::map<Technique, ScottKnottRanking>>& rankings,
                                            const std::vector<Technique>& techniques, std::size_t k) {
  ConsistencyMatrix cm;
  cm.techniques = techniques;
  cm.k = k;
  const std::size_t n = techniques.size();
  cm.cells.assign(n, std::vector<double>(n, 0.0));
  for (const auto& ranking : rankings) {
    for (std::size_t a = 0; a < n; ++a) {
      const auto ta = top_k(ranking.at(techniques[a]), k);
      for (std::size_t b = 0; b < n; ++b) {
        const auto tb = top_k(ranking.at(techniques[b]), k);
        const bool meet = std::any_of(ta.begin(), ta.end(), [&](const std::string& m) { return tb.contains(m); });
        cm.cells[a][b] += meet ? 1.0 : 0.0;
      }
    }
  }
  if (!rankings.empty())
    for (auto& row : cm.cells)
      for (auto& c : row) c /= static_cast<double>(rankings.size());
  return cm;
}

inline Rq3Report rq3(const std::vector<Dataset>& datasets, const ExperimentOptions& opt,
                     const std::vector<std::size_t>& ks = {1, 3}) {
  opt.validate();
  if (datasets.empty()) throw usage_error("rq3 needs at least one dataset");
  Rq3Report rep;
  std::vector<std::map<Technique, ScottKnottRanking>> non, mit;
  for (const auto& d : datasets) {
    rep.datasets.push_back(d.name());
    Rq3DatasetResult r;
    r.dataset = d.name();
    r.ranking_nonmitigated = rank_techniques(d, ModelSpec::all_of(d), opt.techniques, opt);
    const auto m = mitigate(d, opt.mitigation);
    r.ranking_mitigated = rank_techniques(m.data, ModelSpec::all_of(m.data), opt.techniques, opt);
    non.push_back(r.ranking_nonmitigated);
    mit.push_back(r.ranking_mitigated);
    rep.per_dataset.push_back(std::move(r));
  }
  for (auto k : ks) {
    rep.nonmitigated.push_back(consistency_matrix(non, opt.techniques, k));
    rep.mitigated.push_back(consistency_matrix(mit, opt.techniques, k));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// RQ4: performance and stability cost of mitigation

struct LearnerComparison {
  Learner learner = Learner::logit;
  BootstrapEvaluation nonmitigated;
  BootstrapEvaluation mitigated;
  StabilityReport comparison;
};

struct Rq4Report {
  MitigationReport mitigation;
  std::vector<LearnerComparison> learners;
};

/// Both arms use the same bootstrap seed, so iteration i of each arm sees the
/// same rows and differences can be paired.
inline Rq4Report rq4(const Dataset& d, const ExperimentOptions& opt) {
  if (opt.n_boot < 1) throw usage_error("rq4 needs at least one bootstrap iteration");
  Rq4Report rep;
  const auto mit = mitigate(d, opt.mitigation);
  rep.mitigation = mit.report;
  BootstrapOptions bo;
  bo.n_boot = opt.n_boot;
  bo.seed = opt.seed;
  bo.forest = opt.forest;
  bo.logit = opt.logit;
  bo.threads = opt.threads;
  for (auto learner : {Learner::logit, Learner::forest}) {
    LearnerComparison lc;
    lc.learner = learner;
    lc.nonmitigated = bootstrap_evaluate(d, ModelSpec::all_of(d), learner, bo);
    lc.mitigated = bootstrap_evaluate(d, ModelSpec{mit.report.surviving}, learner, bo);
    lc.comparison = compare(lc.nonmitigated, lc.mitigated);
    rep.learners.push_back(std::move(lc));
  }
  return rep;
}

}  // namespace corrimpact
