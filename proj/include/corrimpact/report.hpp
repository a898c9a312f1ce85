#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "corrimpact/dataset.hpp"
#include "corrimpact/error.hpp"
#include "corrimpact/evaluation.hpp"
#include "corrimpact/experiments.hpp"
#include "corrimpact/forest.hpp"
#include "corrimpact/glm.hpp"
#include "corrimpact/importance.hpp"
#include "corrimpact/mitigation.hpp"
#include "corrimpact/rank_stats.hpp"
#include "corrimpact/skesd.hpp"
#include "corrimpact/synthetic.hpp"

// JSON views of library results. Non-finite numbers become null.
namespace corrimpact {

using json = nlohmann::ordered_json;

inline constexpr int report_schema_version = 1;

namespace detail {
inline json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }
inline json nums(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}
}  // namespace detail

inline json to_json(const DatasetSummary& s, const std::string& name) {
  return {{"name", name},
          {"n_modules", s.n_modules},
          {"n_metrics", s.n_metrics},
          {"n_defective", s.n_defective},
          {"defect_ratio", s.defect_ratio},
          {"epv", s.epv}};
}

inline json to_json(const ImportanceTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    json row{{"metric", r.metric}, {"score", detail::num(r.score)}, {"percentage", 100.0 * r.share}};
    if (r.sd) row["sd"] = detail::num(*r.sd);
    if (learner_of(t.technique) == Learner::logit) {
      row["df"] = r.df;
      row["p_value"] = r.p_value ? detail::num(*r.p_value) : json(nullptr);
      row["aliased"] = r.aliased;
    }
    if (r.degenerate) row["degenerate"] = true;
    rows.push_back(std::move(row));
  }
  json j{{"technique", technique_id(t.technique)}, {"learner", learner_id(learner_of(t.technique))}, {"rows", rows}};
  if (!t.note.empty()) j["note"] = t.note;
  return j;
}

inline json to_json(const ScottKnottRanking& r) {
  json groups = json::array();
  for (std::size_t g = 0; g < r.groups.size(); ++g) {
    json members = json::array();
    for (const auto& m : r.metrics) {
      if (m.rank != g + 1) continue;
      members.push_back({{"metric", m.metric}, {"mean", detail::num(m.mean)}, {"sd", detail::num(m.sd)}});
    }
    groups.push_back({{"rank", g + 1}, {"metrics", members}});
  }
  return {{"groups", groups}};
}

inline json to_json(const FittedLogit& m) {
  json coef = json::array();
  coef.push_back({{"term", "(intercept)"},
                  {"estimate", detail::num(m.coefficients(0))},
                  {"std_error", detail::num(std::sqrt(m.covariance(0, 0)))}});
  for (const auto& t : m.terms)
    coef.push_back({{"term", t}, {"estimate", detail::num(*m.coefficient(t))}, {"std_error", detail::num(*m.standard_error(t))}});
  return {{"spec", m.spec.metrics},         {"coefficients", coef},          {"aliased", m.aliased},
          {"deviance", detail::num(m.deviance)},
          {"null_deviance", m.null_deviance}, {"converged", m.converged},   {"separation", m.separation},
          {"iterations", m.iterations},     {"n_rows", m.n_rows},            {"n_params", m.n_params}};
}

inline json to_json(const ForestModel& f) {
  std::size_t nodes = 0;
  for (const auto& t : f.trees) nodes += t.nodes.size();
  return {{"spec", f.spec.metrics},
          {"n_trees", f.trees.size()},
          {"mtry", f.mtry},
          {"min_node_size", f.config.min_node_size},
          {"seed", f.config.seed},
          {"mean_nodes_per_tree", static_cast<double>(nodes) / static_cast<double>(f.trees.size())},
          {"mean_oob_fraction", mean_oob_fraction(f)}};
}

inline json to_json(const MitigationReport& r) {
  json rounds = json::array();
  for (const auto& round : r.rounds)
    rounds.push_back({{"clusters", round.clusters},
                      {"representatives", round.representatives.chosen},
                      {"removed", round.representatives.removed}});
  json vif = json::array();
  for (const auto& v : r.vif_trace)
    vif.push_back({{"metric", v.metric}, {"vif", detail::num(v.vif)}, {"perfect_collinearity", std::isinf(v.vif)}});
  return {{"clusters", r.clusters},
          {"representatives", r.representatives},
          {"removed_by_varclus", r.removed_by_varclus},
          {"rounds", rounds},
          {"vif_trace", vif},
          {"survivors", r.surviving},
          {"too_few_survivors", r.too_few_survivors}};
}

inline json to_json(const BootstrapEvaluation& e) {
  json j{{"learner", learner_id(e.learner)}, {"n_boot", e.n_boot}, {"seed", e.seed}};
  json summary = json::object();
  for (const char* m : {"auc", "f_measure", "mcc", "oob_fraction"}) {
    const auto d = e.summary(m);
    summary[m] = {{"mean", detail::num(d.mean)}, {"sd", detail::num(d.sd)}};
  }
  j["summary"] = summary;
  j["iterations"] = {{"auc", detail::nums(e.auc)},
                     {"f_measure", detail::nums(e.f_measure)},
                     {"mcc", detail::nums(e.mcc)},
                     {"oob_fraction", detail::nums(e.oob_fraction)}};
  j["degenerate_f_measure"] = e.degenerate_f;
  j["degenerate_mcc"] = e.degenerate_mcc;
  j["resample_retries"] = e.retries;
  return j;
}

inline json to_json(const EffectSize& e) {
  return {{"delta", e.delta}, {"magnitude", to_string(e.magnitude)}};
}

inline json to_json(const StabilityReport& s) {
  json a = json::array();
  for (const auto& m : s.measures) {
    a.push_back({{"measure", m.measure},
                 {"mean_difference_pp", detail::num(m.mean_difference_pp)},
                 {"cliffs_delta", to_json(m.effect)},
                 {"sd_nonmitigated", m.sd_nonmitigated},
                 {"sd_mitigated", m.sd_mitigated},
                 {"stability_ratio", m.stability_ratio ? detail::num(*m.stability_ratio) : json(nullptr)},
                 {"stability_ratio_degenerate", m.ratio_degenerate},
                 {"differences_pp", detail::nums(m.differences_pp)}});
  }
  return a;
}

inline json to_json(const PrevalenceReport& r) {
  json effects = json::array();
  for (const auto& e : r.effects) effects.push_back({{"metric", e.metric}, {"cliffs_delta", to_json(e.effect)}});
  json clusters = json::array();
  for (const auto& c : r.clusters) {
    json mags = json::array();
    for (auto m : c.magnitudes) mags.push_back(to_string(m));
    clusters.push_back({{"members", c.members},
                        {"magnitudes", mags},
                        {"all_strong", c.all_strong},
                        {"same_magnitude", c.same_magnitude}});
  }
  std::vector<std::size_t> sizes;
  for (const auto& c : r.clusters)
    if (c.members.size() >= 2) sizes.push_back(c.members.size());
  return {{"metrics", effects},
          {"clusters", clusters},
          {"n_multi_member_clusters", r.n_multi_member_clusters},
          {"multi_member_cluster_sizes", sizes},
          {"n_correlated_metrics", r.n_correlated_metrics},
          {"has_strong_correlated_cluster", r.has_strong_correlated_cluster}};
}

inline json to_json(const DilutionReport& r) {
  json techniques = json::array();
  for (auto t : r.techniques) techniques.push_back(technique_id(t));
  json steps = json::array();
  for (const auto& s : r.steps) {
    json share = json::object(), rel = json::object();
    for (auto t : r.techniques) {
      const std::string id(technique_id(t));
      share[id] = 100.0 * s.share.at(t);
      const auto& d = s.relative_difference.at(t);
      rel[id] = d ? detail::num(*d) : json(nullptr);
    }
    steps.push_back({{"k", s.k}, {"spec", s.spec}, {"percentage", share}, {"relative_difference", rel}});
  }
  return {{"target", r.target}, {"pool", r.pool}, {"pool_abs_rho", r.pool_rho}, {"techniques", techniques}, {"steps", steps}};
}

inline json to_json(const OrderSwapReport& r) {
  auto one = [](const OrderSwapSpec& s) {
    json tables = json::array();
    for (const auto& [t, table] : s.tables) tables.push_back(to_json(table));
    return json{{"spec", s.spec}, {"tables", tables}, {"training_auc", {{"logit", s.auc_logit}, {"forest", s.auc_forest}}}};
  };
  return {{"target", r.target},
          {"min_pairwise_abs_rho", r.min_pairwise_rho},
          {"target_first", one(r.target_first)},
          {"target_last", one(r.target_last)}};
}

inline json to_json(const Rq1Report& r) {
  json results = json::array();
  for (const auto& x : r.results) {
    json j{{"technique", technique_id(x.technique)}, {"applicable", x.applicable}, {"m_high", x.m_high}};
    if (x.applicable) {
      j["m_c"] = x.m_c;
      j["abs_rho"] = x.rho;
      j["rank_mitigated"] = x.rank_mitigated;
      j["rank_nonmitigated"] = x.rank_nonmitigated;
      j["rank_difference"] = x.difference;
    } else {
      j["reason"] = x.reason;
    }
    results.push_back(std::move(j));
  }
  return {{"mitigation", to_json(r.mitigation)}, {"results", results}};
}

inline json to_json(const Rq2Report& r) {
  json results = json::array();
  for (const auto& x : r.results)
    results.push_back({{"technique", technique_id(x.technique)},
                       {"m_high", x.m_high},
                       {"rank_by_position", x.rank_by_position},
                       {"consistent", x.consistent}});
  return {{"metrics", r.metrics}, {"results", results}};
}

inline json to_json(const ConsistencyMatrix& m) {
  json techniques = json::array();
  for (auto t : m.techniques) techniques.push_back(technique_id(t));
  return {{"k", m.k}, {"techniques", techniques}, {"cells", m.cells}};
}

inline json to_json(const Rq3Report& r) {
  json non = json::array(), mit = json::array(), per = json::array();
  for (const auto& m : r.nonmitigated) non.push_back(to_json(m));
  for (const auto& m : r.mitigated) mit.push_back(to_json(m));
  for (const auto& d : r.per_dataset) {
    json a = json::object(), b = json::object();
    for (const auto& [t, ranking] : d.ranking_nonmitigated) a[std::string(technique_id(t))] = to_json(ranking);
    for (const auto& [t, ranking] : d.ranking_mitigated) b[std::string(technique_id(t))] = to_json(ranking);
    per.push_back({{"dataset", d.dataset}, {"nonmitigated", a}, {"mitigated", b}});
  }
  return {{"datasets", r.datasets}, {"nonmitigated", non}, {"mitigated", mit}, {"rankings", per}};
}

inline json to_json(const Rq4Report& r) {
  json learners = json::array();
  for (const auto& l : r.learners)
    learners.push_back({{"learner", learner_id(l.learner)},
                        {"nonmitigated", to_json(l.nonmitigated)},
                        {"mitigated", to_json(l.mitigated)},
                        {"comparison", to_json(l.comparison)}});
  return {{"mitigation", to_json(r.mitigation)}, {"learners", learners}};
}

inline json to_json(const SyntheticDataset& s) {
  return {{"clusters", s.cluster_members}, {"min_within_cluster_abs_rho", s.min_within_cluster_rho}};
}

// ---------------------------------------------------------------------------
// Synthetic configuration from JSON, strict about keys and types

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw usage_error(where + ": expected a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.contains(k)) {
      std::string valid;
      for (const auto& a : allowed) valid += (valid.empty() ? "" : ", ") + a;
      throw usage_error(where + ": unknown key '" + k + "' (valid: " + valid + ")");
    }
}

template <class T>
T get_field(const json& j, const std::string& key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    if constexpr (std::is_same_v<T, std::size_t>) {
      if (!j.at(key).is_number_unsigned()) throw usage_error("");
    } else if constexpr (std::is_arithmetic_v<T>) {
      if (!j.at(key).is_number()) throw usage_error("");
    }
    return j.at(key).get<T>();
  } catch (const std::exception&) {
    throw usage_error(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace detail

inline SyntheticConfig synthetic_config_from_json(const json& j) {
  detail::check_keys(j, {"name", "n_rows", "intercept", "clusters", "noise_metrics", "combinations"}, "config");
  SyntheticConfig c;
  c.name = detail::get_field<std::string>(j, "name", c.name, "config");
  c.n_rows = detail::get_field<std::size_t>(j, "n_rows", c.n_rows, "config");
  c.intercept = detail::get_field<double>(j, "intercept", c.intercept, "config");
  c.noise_metrics = detail::get_field<std::size_t>(j, "noise_metrics", c.noise_metrics, "config");
  if (j.contains("clusters")) {
    if (!j["clusters"].is_array()) throw usage_error("config: 'clusters' must be an array");
    for (std::size_t i = 0; i < j["clusters"].size(); ++i) {
      const auto& cj = j["clusters"][i];
      const std::string where = "config.clusters[" + std::to_string(i) + "]";
      detail::check_keys(cj, {"size", "noise", "coefficient", "prefix"}, where);
      ClusterSpec s;
      s.size = detail::get_field<std::size_t>(cj, "size", s.size, where);
      s.noise = detail::get_field<double>(cj, "noise", s.noise, where);
      s.coefficient = detail::get_field<double>(cj, "coefficient", s.coefficient, where);
      s.prefix = detail::get_field<std::string>(cj, "prefix", s.prefix, where);
      c.clusters.push_back(std::move(s));
    }
  }
  if (j.contains("combinations")) {
    if (!j["combinations"].is_array()) throw usage_error("config: 'combinations' must be an array");
    for (std::size_t i = 0; i < j["combinations"].size(); ++i) {
      const auto& cj = j["combinations"][i];
      const std::string where = "config.combinations[" + std::to_string(i) + "]";
      detail::check_keys(cj, {"sources", "noise", "name"}, where);
      CombinationSpec s;
      s.sources = detail::get_field<std::vector<std::string>>(cj, "sources", {}, where);
      s.noise = detail::get_field<double>(cj, "noise", s.noise, where);
      s.name = detail::get_field<std::string>(cj, "name", s.name, where);
      c.combinations.push_back(std::move(s));
    }
  }
  return c;
}

inline json to_json(const SyntheticConfig& c) {
  json clusters = json::array(), combos = json::array();
  for (const auto& s : c.clusters)
    clusters.push_back({{"size", s.size}, {"noise", s.noise}, {"coefficient", s.coefficient}, {"prefix", s.prefix}});
  for (const auto& s : c.combinations) combos.push_back({{"sources", s.sources}, {"noise", s.noise}, {"name", s.name}});
  return {{"name", c.name},         {"n_rows", c.n_rows},   {"intercept", c.intercept},
          {"clusters", clusters},   {"noise_metrics", c.noise_metrics}, {"combinations", combos}};
}

}  // namespace corrimpact
