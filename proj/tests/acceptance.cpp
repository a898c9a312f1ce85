// Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and exits
// non-zero if any criterion fails.
//
//   acceptance <synthetic-config.json> [criterion...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "corrimpact/evaluation.hpp"
#include "corrimpact/experiments.hpp"
#include "corrimpact/glm.hpp"
#include "corrimpact/mitigation.hpp"
#include "corrimpact/rank_stats.hpp"
#include "corrimpact/report.hpp"
#include "corrimpact/skesd.hpp"
#include "corrimpact/synthetic.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace corrimpact;

namespace {

struct Outcome {
  enum Status { pass, fail, skip } status = pass;
  std::string detail;
};

// Collects failed requirements; the first few end up on the criterion's line.
class Checks {
 public:
  void require(bool ok, const std::string& what) {
    if (ok) return;
    ++failed_;
    if (messages_.size() < 4) messages_.push_back(what);
  }
  Outcome outcome(const std::string& summary) const {
    Outcome o;
    o.detail = summary;
    if (failed_ > 0) {
      o.status = Outcome::fail;
      o.detail += "; " + std::to_string(failed_) + " failed:";
      for (const auto& m : messages_) o.detail += " [" + m + "]";
    }
    return o;
  }

 private:
  std::size_t failed_ = 0;
  std::vector<std::string> messages_;
};

std::string fmt(double x, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << x;
  return s.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Dataset instance_dataset(const oracle::Instance& in) {
  std::vector<double> x0, x1;
  for (const auto& row : in.X) {
    x0.push_back(row[0]);
    x1.push_back(row[1]);
  }
  return fixtures::make({{"x0", x0}, {"x1", x1}}, in.y, "instance");
}

SyntheticConfig combination_config() {
  SyntheticConfig c;
  c.name = "combination";
  c.n_rows = 1000;
  c.clusters = {{1, 0, 1, "a"}, {1, 0, 1, "b"}, {1, 0, 1, "c"}};
  c.combinations = {{{"a_m0", "b_m0", "c_m0"}, 0.2, "total"}};
  return c;
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  Checks c;
  double worst_dev = 0.0, worst_vif = 0.0;
  std::size_t auc_mismatch = 0, cliff_mismatch = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto in = oracle::random_instance(seed);
    const auto d = instance_dataset(in);
    const auto ref = oracle::fit_logistic(in.X, in.y);
    c.require(ref.converged, "oracle fit did not converge, instance " + std::to_string(seed));
    worst_dev = std::max(worst_dev, std::abs(fit_logit(d, ModelSpec::all_of(d)).deviance - ref.deviance));

    // coarse scores so that ties occur
    const auto& x0 = d.metric("x0").values;
    std::vector<double> s(x0.size()), defective, clean;
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = std::round(2.0 * x0[i]) / 2.0;
      (in.y[i] ? defective : clean).push_back(s[i]);
    }
    auc_mismatch += auc(s, in.y) != oracle::auc(s, in.y);
    cliff_mismatch += cliffs_delta(defective, clean).delta != oracle::cliffs_delta(defective, clean);

    const double r = oracle::pearson(x0, d.metric("x1").values);
    for (double v : variance_inflation(d)) worst_vif = std::max(worst_vif, std::abs(v - 1.0 / (1.0 - r * r)));
  }
  c.require(worst_dev <= 1e-6, "deviance off by " + fmt(worst_dev));
  c.require(auc_mismatch == 0, std::to_string(auc_mismatch) + " AUC mismatches");
  c.require(cliff_mismatch == 0, std::to_string(cliff_mismatch) + " Cliff's delta mismatches");
  c.require(worst_vif <= 1e-10, "VIF off by " + fmt(worst_vif));
  return c.outcome("50 instances; max |deviance diff| " + fmt(worst_dev, 3) + ", AUC and Cliff's delta exact, max |VIF diff| " +
                   fmt(worst_vif, 3));
}

Outcome type1_telescoping() {
  std::vector<Dataset> data;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    data.push_back(synthesize(fixtures::tight_cluster(1000), seed).data);
    data.push_back(synthesize(fixtures::redundant_cluster(1000), seed).data);
    data.push_back(synthesize(fixtures::independent(5), seed).data);
  }
  data.push_back(synthesize(combination_config(), 1).data);
  for (std::uint64_t seed = 1; seed <= 50; ++seed) data.push_back(instance_dataset(oracle::random_instance(seed)));

  Checks c;
  double worst = 0.0;
  for (const auto& d : data) {
    const auto spec = ModelSpec::all_of(d);
    double sum = 0.0;
    for (const auto& row : anova_type1(d, spec).rows) sum += row.score;
    const auto full = fit_logit(d, spec);
    const double err = std::abs(sum - (full.null_deviance - full.deviance));
    worst = std::max(worst, err);
    c.require(err <= 1e-8, d.name() + " off by " + fmt(err));
  }
  return c.outcome(std::to_string(data.size()) + " fixtures; max |sum - (null - full)| " + fmt(worst, 3));
}

bool same_row(const ImportanceRow& a, const ImportanceRow& b) {
  return a.score == b.score && a.share == b.share && a.sd == b.sd && a.degenerate == b.degenerate;
}

Outcome order_sensitivity() {
  const auto synth = synthesize(fixtures::tight_cluster(1000, 0.1), 5);
  const auto& d = synth.data;
  auto names = d.metric_names();
  Checks c;
  c.require(synth.min_within_cluster_rho.at(0) >= 0.9, "cluster min |rho| " + fmt(synth.min_within_cluster_rho.at(0)));

  double min_first = 1.0, max_last = 0.0;
  for (const auto& target : names) {
    std::vector<std::string> others;
    for (const auto& m : names)
      if (m != target) others.push_back(m);
    std::vector<std::string> first{target}, last = others;
    first.insert(first.end(), others.begin(), others.end());
    last.push_back(target);
    const double s1 = anova_type1(d, {first}).row(target).share;
    const double s5 = anova_type1(d, {last}).row(target).share;
    min_first = std::min(min_first, s1);
    max_last = std::max(max_last, s5);
    c.require(s1 > 0.8, target + " first " + fmt(s1));
    c.require(s5 < 0.05, target + " last " + fmt(s5));
  }

  std::sort(names.begin(), names.end());
  const auto type2_base = anova_type2_all(d, {names});
  ExperimentOptions opt;
  const std::vector<Technique> forest_techniques{Technique::gini, Technique::gini_scaled, Technique::perm,
                                                 Technique::perm_scaled};
  const auto forest_base = importance_tables(d, {names}, forest_techniques, 11, opt);
  double type2_worst = 0.0;
  std::size_t perms = 0, forest_mismatch = 0;
  do {
    ++perms;
    const ModelSpec spec{names};
    const auto t2 = anova_type2_all(d, spec);
    for (auto s : {Type2Statistic::wald, Type2Statistic::lr, Type2Statistic::f, Type2Statistic::chisq})
      for (const auto& row : t2.get(s).rows) {
        const auto& base = type2_base.get(s).row(row.metric);
        type2_worst = std::max({type2_worst, std::abs(row.score - base.score), std::abs(row.share - base.share)});
      }
    const auto forest = importance_tables(d, spec, forest_techniques, 11, opt);
    for (const auto& [t, table] : forest)
      for (const auto& row : table.rows) forest_mismatch += !same_row(row, forest_base.at(t).row(row.metric));
  } while (std::next_permutation(names.begin(), names.end()));
  c.require(type2_worst <= 1e-8, "type2 differs by " + fmt(type2_worst));
  c.require(forest_mismatch == 0, std::to_string(forest_mismatch) + " forest rows differ");

  return c.outcome("type1 share first >= " + fmt(min_first) + ", last <= " + fmt(max_last) + "; " + std::to_string(perms) +
                   " specs: type2 max diff " + fmt(type2_worst, 3) + ", forest tables " +
                   (forest_mismatch == 0 ? "bit-identical" : "differ"));
}

Outcome dilution_direction() {
  auto cfg = fixtures::redundant_cluster(1000);
  cfg.clusters[0].size = 6;
  ExperimentOptions opt;
  opt.techniques = {Technique::type1, Technique::gini, Technique::perm, Technique::perm_scaled};
  const std::vector<Technique> forest{Technique::gini, Technique::perm, Technique::perm_scaled};
  Checks c;
  std::map<Technique, std::vector<std::vector<double>>> shares;  // technique -> k -> per-seed share
  for (auto t : forest) shares[t].resize(6);
  double worst_drop = -1.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto d = synthesize(cfg, seed).data;
    const auto m = mitigate(d);
    auto [target, pool] = default_dilution_target(d, m.report);
    if (pool.size() < 5) {
      c.require(false, "seed " + std::to_string(seed) + ": only " + std::to_string(pool.size()) + " partners");
      continue;
    }
    pool.resize(5);
    opt.seed = seed;
    const auto r = dilution_analysis(d, m.report.surviving, target, pool, opt);
    const auto drop = r.steps[1].relative_difference.at(Technique::type1);
    c.require(drop && *drop <= -0.5, "seed " + std::to_string(seed) + " type1 change " + (drop ? fmt(*drop) : "n/a"));
    if (drop) worst_drop = std::max(worst_drop, *drop);
    for (auto t : forest)
      for (std::size_t k = 0; k <= 5; ++k) shares[t][k].push_back(r.steps[k].share.at(t));
  }
  std::string medians;
  for (auto t : forest) {
    medians += std::string(medians.empty() ? "" : "; ") + std::string(technique_id(t)) + " median";
    double prev = 2.0;
    for (std::size_t k = 0; k <= 5; ++k) {
      const double m = median(shares[t][k]);
      medians += " " + fmt(m, 3);
      c.require(m <= prev, std::string(technique_id(t)) + " rises at k=" + std::to_string(k));
      prev = m;
    }
  }
  return c.outcome("type1 change at k=1 <= " + fmt(worst_drop) + " on every seed; " + medians);
}

Outcome oob_fraction() {
  const auto d = synthesize(fixtures::redundant_cluster(1000), 1).data;
  BootstrapOptions bo;
  bo.n_boot = 100;
  const double mean = bootstrap_evaluate(d, ModelSpec::all_of(d), Learner::logit, bo).summary("oob_fraction").mean;
  Checks c;
  c.require(std::abs(mean - 0.368) <= 0.015, "mean " + fmt(mean));
  return c.outcome("mean OOB fraction " + fmt(100 * mean) + "% over 100 iterations, n = 1000");
}

Outcome mitigation_cost(const std::string& config_path) {
  std::ifstream f(config_path);
  if (!f) return {Outcome::fail, "cannot open " + config_path};
  const auto cfg = synthetic_config_from_json(json::parse(f));
  ExperimentOptions opt;
  opt.n_boot = 100;
  const std::vector<std::string> measures{"auc", "f_measure", "mcc"};

  struct Cell {
    std::vector<double> nonmitigated_means, mitigated_means, ratios;
    double worst_diff = 0.0;
    std::size_t within_medium_or_strong = 0, degenerate = 0;
  };
  std::map<std::pair<Learner, std::string>, Cell> cells;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto d = synthesize(cfg, seed).data;
    opt.seed = seed;
    for (const auto& lc : rq4(d, opt).learners) {
      for (const auto& m : measures) {
        auto& cell = cells[{lc.learner, m}];
        const auto& cmp = lc.comparison.get(m);
        cell.worst_diff = std::max(cell.worst_diff, std::abs(cmp.mean_difference_pp));
        cell.nonmitigated_means.push_back(lc.nonmitigated.summary(m).mean);
        cell.mitigated_means.push_back(lc.mitigated.summary(m).mean);
        if (cmp.stability_ratio) cell.ratios.push_back(*cmp.stability_ratio);
        else ++cell.degenerate;
        cell.within_medium_or_strong += cmp.effect.magnitude >= Magnitude::medium;
      }
    }
  }

  Checks c;
  std::string summary, diagnostic;
  for (const auto& [key, cell] : cells) {
    const std::string id = std::string(learner_id(key.first)) + "/" + key.second;
    const auto delta = cliffs_delta(cell.nonmitigated_means, cell.mitigated_means);
    const double ratio = cell.ratios.empty() ? std::nan("") : median(cell.ratios);
    c.require(cell.worst_diff < 5.0, id + " |mean diff| " + fmt(cell.worst_diff) + " pp");
    c.require(delta.magnitude <= Magnitude::weak, id + " delta " + fmt(delta.delta) + " " + std::string(to_string(delta.magnitude)));
    c.require(ratio >= 0.8 && ratio <= 1.25, id + " ratio median " + fmt(ratio));
    summary += (summary.empty() ? "" : "; ") + id + " max|diff| " + fmt(cell.worst_diff, 3) + "pp delta " + fmt(delta.delta, 2) +
               " ratio " + fmt(ratio, 3);
    if (cell.degenerate) summary += " (" + std::to_string(cell.degenerate) + " degenerate)";
    diagnostic += " " + id + "=" + std::to_string(cell.within_medium_or_strong);
  }
  return c.outcome("10 datasets; " + summary + "; datasets with medium/strong within-dataset delta:" + diagnostic);
}

Outcome scott_knott_suite() {
  Checks c;
  {
    ScoreSamples s{{"low", "top", "mid", "bottom"},
                   {std::vector<double>(20, 2.0), std::vector<double>(20, 10.0), std::vector<double>(20, 5.0),
                    std::vector<double>(20, 0.0)}};
    const auto r = scott_knott_esd(s);
    c.require(r.rank_of("top") == 1 && r.rank_of("mid") == 2 && r.rank_of("low") == 3 && r.rank_of("bottom") == 4,
              "separated constants misranked");
  }
  std::mt19937_64 rng(3);
  auto normal = [&](double mean, double sd, std::size_t n) {
    std::normal_distribution<double> dist(mean, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
  };
  {
    const auto v = normal(1.0, 1.0, 100);
    c.require(scott_knott_esd({{"a", "b", "c", "d"}, {v, v, v, v}}).n_ranks() == 1, "identical groups split");
  }
  {
    // d = 0.1: the split test alone separates these at this sample size
    auto a = normal(0.0, 1.0, 100000);
    auto b = a;
    for (auto& x : b) x += 0.1;
    ScottKnottOptions no_merge;
    no_merge.negligible_d = 0.0;
    c.require(scott_knott_esd({{"a", "b"}, {a, b}}, no_merge).n_ranks() == 2, "split test did not fire");
    c.require(scott_knott_esd({{"a", "b"}, {a, b}}).n_ranks() == 1, "negligible difference not merged");
  }
  std::size_t affine = 0, permuted = 0;
  for (int rep = 0; rep < 20; ++rep) {
    ScoreSamples s;
    const std::vector<double> means{4.0, 3.9, 2.5, 1.0, 1.05, 0.0, 2.4};
    for (std::size_t i = 0; i < means.size(); ++i) {
      s.metrics.push_back("m" + std::to_string(i));
      s.samples.push_back(normal(means[i], 0.6, 50));
    }
    auto ranks = [](const ScottKnottRanking& r) {
      std::map<std::string, std::size_t> out;
      for (const auto& m : r.metrics) out[m.metric] = m.rank;
      return out;
    };
    const auto base = ranks(scott_knott_esd(s));
    auto scaled = s;
    for (auto& v : scaled.samples)
      for (auto& x : v) x = 0.25 * x + 100.0;
    affine += ranks(scott_knott_esd(scaled)) != base;
    auto shuffled = s;
    std::vector<std::size_t> perm(s.metrics.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      shuffled.metrics[i] = s.metrics[perm[i]];
      shuffled.samples[i] = s.samples[perm[i]];
    }
    permuted += ranks(scott_knott_esd(shuffled)) != base;
  }
  c.require(affine == 0, std::to_string(affine) + " rankings changed under an affine map");
  c.require(permuted == 0, std::to_string(permuted) + " rankings changed under reordering");
  return c.outcome("constants, identical groups, negligible merge, affine and order invariance over 20 replicates");
}

Outcome mitigation_postconditions(const std::string& config_path) {
  std::vector<Dataset> data;
  if (std::ifstream f(config_path); f) {
    const auto cfg = synthetic_config_from_json(json::parse(f));
    for (std::uint64_t seed = 1; seed <= 10; ++seed) data.push_back(synthesize(cfg, seed).data);
  }
  for (std::uint64_t seed = 1; seed <= 5; ++seed) data.push_back(synthesize(fixtures::redundant_cluster(800), seed).data);
  data.push_back(synthesize(combination_config(), 1).data);
  data.push_back(synthesize(fixtures::independent(4), 1).data);

  Checks c;
  double worst_rho = 0.0, worst_vif = 0.0;
  MitigationOptions opt;
  for (const auto& d : data) {
    const auto once = mitigate(d, opt);
    const auto& m = once.data;
    for (std::size_t a = 0; a < m.n_metrics(); ++a)
      for (std::size_t b = a + 1; b < m.n_metrics(); ++b)
        worst_rho = std::max(worst_rho, std::abs(spearman(m.metrics()[a].values, m.metrics()[b].values).rho));
    for (double v : variance_inflation(m)) worst_vif = std::max(worst_vif, v);
    const auto twice = mitigate(m, opt);
    c.require(twice.data == m && twice.report.removed_by_varclus.empty() && twice.report.vif_trace.empty(),
              d.name() + " not idempotent");
  }
  c.require(worst_rho <= opt.rho_threshold, "surviving |rho| " + fmt(worst_rho));
  c.require(worst_vif <= opt.vif_threshold, "surviving VIF " + fmt(worst_vif));
  return c.outcome(std::to_string(data.size()) + " datasets; max surviving |rho| " + fmt(worst_rho, 3) + ", max VIF " +
                   fmt(worst_vif, 3) + "; idempotent");
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

Outcome real_data() {
  const char* csv = std::getenv("CORRIMPACT_REAL_CSV");
  const char* label = std::getenv("CORRIMPACT_REAL_LABEL");
  const char* auc_lr = std::getenv("CORRIMPACT_REAL_AUC_LR");
  const char* auc_rf = std::getenv("CORRIMPACT_REAL_AUC_RF");
  if (!csv || !label || !auc_lr || !auc_rf)
    return {Outcome::skip, "set CORRIMPACT_REAL_CSV, CORRIMPACT_REAL_LABEL, CORRIMPACT_REAL_AUC_LR and CORRIMPACT_REAL_AUC_RF"};

  std::set<std::string> positive = default_positive_labels();
  if (const char* p = std::getenv("CORRIMPACT_REAL_POSITIVE")) {
    const auto v = split(p);
    positive = {v.begin(), v.end()};
  }
  const auto d = load_csv(csv, label, positive);
  Checks c;
  BootstrapOptions bo;
  bo.n_boot = 100;
  const double lr = bootstrap_evaluate(d, ModelSpec::all_of(d), Learner::logit, bo).summary("auc").mean;
  const double rf = bootstrap_evaluate(d, ModelSpec::all_of(d), Learner::forest, bo).summary("auc").mean;
  const double want_lr = std::stod(auc_lr), want_rf = std::stod(auc_rf);
  c.require(std::abs(lr - want_lr) <= 0.05, "LR AUC " + fmt(lr) + " vs " + fmt(want_lr));
  c.require(std::abs(rf - want_rf) <= 0.05, "RF AUC " + fmt(rf) + " vs " + fmt(want_rf));

  const char* swap = std::getenv("CORRIMPACT_REAL_SWAP");
  const auto metrics = split(swap ? swap : "TLOC,MLOC_sum,FOUT_sum,VG_sum,NBD_sum");
  ExperimentOptions opt;
  opt.techniques = {Technique::type1, Technique::gini};
  const auto r = order_swap_analysis(d, metrics, metrics.front(), opt);
  const double t1_first = r.target_first.tables.at(Technique::type1).row(r.target).share;
  const double t1_last = r.target_last.tables.at(Technique::type1).row(r.target).share;
  const double g_first = r.target_first.tables.at(Technique::gini).row(r.target).share;
  const double g_last = r.target_last.tables.at(Technique::gini).row(r.target).share;
  c.require(t1_first > 0.9, "type1 first " + fmt(t1_first));
  c.require(t1_last < 0.05, "type1 last " + fmt(t1_last));
  c.require(std::abs(g_first - g_last) <= 0.15, "gini first " + fmt(g_first) + " last " + fmt(g_last));
  return c.outcome(d.name() + ": AUC LR " + fmt(lr) + " RF " + fmt(rf) + "; " + r.target + " type1 share " + fmt(t1_first) +
                   " -> " + fmt(t1_last) + ", gini " + fmt(g_first) + " -> " + fmt(g_last));
}

struct Criterion {
  int number;
  std::string name;
  double time_limit_s;  // 0 = none
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <synthetic-config.json> [criterion...]\n";
    return 1;
  }
  const std::string config = argv[1];
  const std::vector<Criterion> criteria{
      {1, "oracle equivalence", 30, oracle_equivalence},
      {2, "type1 telescoping", 0, type1_telescoping},
      {3, "order sensitivity", 120, order_sensitivity},
      {4, "dilution direction", 300, dilution_direction},
      {5, "bootstrap OOB fraction", 0, oob_fraction},
      {6, "mitigation cost", 900, [&] { return mitigation_cost(config); }},
      {7, "Scott-Knott ESD", 0, scott_knott_suite},
      {8, "mitigation postconditions", 0, [&] { return mitigation_postconditions(config); }},
      {9, "real data", 0, real_data},
  };
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));

  bool all_ok = true;
  for (const auto& cr : criteria) {
    if (!only.empty() && !only.contains(cr.number)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {Outcome::fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.status == Outcome::pass && cr.time_limit_s > 0 && secs > cr.time_limit_s) {
      o.status = Outcome::fail;
      o.detail += "; over the " + fmt(cr.time_limit_s) + " s limit";
    }
    const char* tag = o.status == Outcome::pass ? "PASS" : o.status == Outcome::fail ? "FAIL" : "SKIP";
    std::cout << tag << ' ' << cr.number << ' ' << cr.name << ": " << o.detail << " (" << std::fixed
              << std::setprecision(1) << secs << " s)" << std::defaultfloat << std::endl;
    all_ok = all_ok && o.status != Outcome::fail;
  }
  return all_ok ? 0 : 1;
}
