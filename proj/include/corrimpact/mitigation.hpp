#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "corrimpact/dataset.hpp"
#include "corrimpact/error.hpp"
#include "corrimpact/rank_stats.hpp"

namespace corrimpact {

// Node ids: 0..n_leaves-1 are metrics, n_leaves + t is the node created by merge t.
struct ClusterMerge {
  std::size_t left = 0;
  std::size_t right = 0;
  double height = 0.0;       // complete-linkage distance, 1 - min |rho| across the two groups
  double min_abs_rho = 0.0;  // weakest pairwise |rho| inside the merged group
};

struct ClusterTree {
  std::vector<std::string> leaves;
  std::vector<ClusterMerge> merges;
  double cut_threshold = 0.7;
};

struct VarClusResult {
  ClusterTree tree;
  // Groups at the cut; members in column order, groups ordered by their first member.
  std::vector<std::vector<std::string>> clusters;
};

struct Representatives {
  std::vector<std::string> chosen;   // one per multi-member cluster
  std::vector<std::string> removed;  // every other member of those clusters
};

struct VifRemoval {
  std::string metric;
  double vif = 0.0;  // +inf for perfect collinearity
};

struct VifResult {
  Dataset data;
  std::vector<VifRemoval> trace;
};

struct MitigationOptions {
  double rho_threshold = 0.7;
  double vif_threshold = 5.0;
  std::vector<std::string> priority;  // earlier = simpler metric, preferred as representative
};

struct VarClusRound {
  std::vector<std::vector<std::string>> clusters;
  Representatives representatives;
};

struct MitigationReport {
  std::vector<std::vector<std::string>> clusters;  // clusters of the first (full-data) round
  std::vector<std::string> representatives;
  std::vector<std::string> removed_by_varclus;
  std::vector<VarClusRound> rounds;
  std::vector<VifRemoval> vif_trace;
  std::vector<std::string> surviving;
  bool too_few_survivors = false;
};

struct MitigationResult {
  Dataset data;
  MitigationReport report;
};

/// Complete-linkage agglomeration on 1 - |rho|, cut so every group's weakest
/// pair still has |rho| > threshold. Ties in linkage distance are broken by
/// the lexicographically smallest member names, so the result is deterministic.
inline VarClusResult varclus(const CorrelationMatrix& corr, double threshold = 0.7) {
  const std::size_t p = corr.size();
  if (p < 2) throw usage_error("varclus needs at least 2 metrics");
  if (!(threshold > 0.0 && threshold < 1.0)) throw usage_error("varclus threshold must be in (0, 1)");

  struct Active {
    std::size_t node;
    std::vector<std::size_t> members;
    std::string key;  // smallest member name
  };
  std::vector<Active> active;
  for (std::size_t i = 0; i < p; ++i) active.push_back({i, {i}, corr.metric_names[i]});
  // similarity between active groups: min |rho| across members
  std::vector<std::vector<double>> sim(p, std::vector<double>(p, 1.0));
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) sim[i][j] = std::abs(corr.at(i, j));

  VarClusResult out;
  out.tree.leaves = corr.metric_names;
  out.tree.cut_threshold = threshold;
  std::size_t next_node = p;
  while (active.size() > 1) {
    std::size_t ba = 0, bb = 1;
    double best = -1.0;
    for (std::size_t a = 0; a < active.size(); ++a) {
      for (std::size_t b = a + 1; b < active.size(); ++b) {
        const double s = sim[a][b];
        auto key = [&](std::size_t x, std::size_t y) {
          return std::minmax(active[x].key, active[y].key);
        };
        if (s > best || (s == best && key(a, b) < key(ba, bb))) {
          best = s;
          ba = a;
          bb = b;
        }
      }
    }
    out.tree.merges.push_back({active[ba].node, active[bb].node, 1.0 - best, best});
    Active merged{next_node++, active[ba].members, std::min(active[ba].key, active[bb].key)};
    merged.members.insert(merged.members.end(), active[bb].members.begin(), active[bb].members.end());
    std::sort(merged.members.begin(), merged.members.end());

    std::vector<double> row;
    for (std::size_t k = 0; k < active.size(); ++k) {
      if (k == ba || k == bb) continue;
      row.push_back(std::min(sim[ba][k], sim[bb][k]));
    }
    std::vector<Active> next_active;
    std::vector<std::size_t> kept;
    for (std::size_t k = 0; k < active.size(); ++k) {
      if (k == ba || k == bb) continue;
      kept.push_back(k);
      next_active.push_back(std::move(active[k]));
    }
    std::vector<std::vector<double>> next_sim(kept.size() + 1, std::vector<double>(kept.size() + 1, 1.0));
    for (std::size_t x = 0; x < kept.size(); ++x) {
      for (std::size_t y = 0; y < kept.size(); ++y) next_sim[x][y] = sim[kept[x]][kept[y]];
      next_sim[x][kept.size()] = next_sim[kept.size()][x] = row[x];
    }
    next_active.push_back(std::move(merged));
    active = std::move(next_active);
    sim = std::move(next_sim);
  }

  // Replay merges up to the cut. Complete linkage is monotone, so this is a prefix.
  std::vector<std::vector<std::size_t>> groups(p + out.tree.merges.size());
  std::vector<bool> alive(groups.size(), false);
  for (std::size_t i = 0; i < p; ++i) {
    groups[i] = {i};
    alive[i] = true;
  }
  for (std::size_t t = 0; t < out.tree.merges.size(); ++t) {
    const auto& m = out.tree.merges[t];
    if (!(m.min_abs_rho > threshold)) break;
    auto& g = groups[p + t];
    g = groups[m.left];
    g.insert(g.end(), groups[m.right].begin(), groups[m.right].end());
    std::sort(g.begin(), g.end());
    alive[m.left] = alive[m.right] = false;
    alive[p + t] = true;
  }
  std::vector<std::vector<std::size_t>> cut;
  for (std::size_t g = 0; g < groups.size(); ++g)
    if (alive[g]) cut.push_back(groups[g]);
  std::sort(cut.begin(), cut.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  for (const auto& g : cut) {
    std::vector<std::string> names;
    for (auto i : g) names.push_back(corr.metric_names[i]);
    out.clusters.push_back(std::move(names));
  }
  return out;
}

/// Keeps the member of each multi-member cluster that appears first in
/// `priority`; members absent from `priority` rank after it, in column order.
inline Representatives select_representatives(const std::vector<std::vector<std::string>>& clusters,
                                              std::span<const std::string> column_order,
                                              std::span<const std::string> priority = {}) {
  std::unordered_map<std::string, std::size_t> column_pos;
  for (std::size_t i = 0; i < column_order.size(); ++i) column_pos[column_order[i]] = i;
  std::vector<std::string> unknown;
  std::unordered_map<std::string, std::size_t> prio_pos;
  for (std::size_t i = 0; i < priority.size(); ++i) {
    if (!column_pos.contains(priority[i])) unknown.push_back(priority[i]);
    prio_pos.emplace(priority[i], i);
  }
  if (!unknown.empty()) {
    std::string msg = "priority metrics not in dataset:";
    for (const auto& u : unknown) msg += " " + u;
    throw data_error(msg);
  }

  auto rank = [&](const std::string& m) {
    auto it = prio_pos.find(m);
    const std::size_t pr = it == prio_pos.end() ? priority.size() : it->second;
    auto ct = column_pos.find(m);
    return std::pair{pr, ct == column_pos.end() ? column_order.size() : ct->second};
  };

  Representatives out;
  for (const auto& cluster : clusters) {
    if (cluster.size() < 2) continue;
    auto best = std::min_element(cluster.begin(), cluster.end(),
                                 [&](const std::string& a, const std::string& b) { return rank(a) < rank(b); });
    out.chosen.push_back(*best);
    for (const auto& m : cluster)
      if (m != *best) out.removed.push_back(m);
  }
  return out;
}

/// VIF of every metric: 1 / (1 - R^2) of that metric regressed on all others.
/// Perfect collinearity gives +infinity.
inline std::vector<double> variance_inflation(const Dataset& d) {
  const std::size_t p = d.n_metrics();
  std::vector<double> out(p, 1.0);
  if (p < 2) return out;
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<std::vector<double>> others;
    others.reserve(p - 1);
    for (std::size_t k = 0; k < p; ++k)
      if (k != j) others.push_back(d.metrics()[k].values);
    const auto r = ols_r_squared(d.metrics()[j].values, others);
    out[j] = r.perfect ? std::numeric_limits<double>::infinity() : 1.0 / (1.0 - r.r2);
  }
  return out;
}

/// Repeatedly drops the single metric with the largest VIF until every VIF is
/// at most `threshold`. Among (near-)equal maxima the later column goes first.
inline VifResult vif_filter(const Dataset& d, double threshold = 5.0) {
  if (d.n_metrics() < 2) throw usage_error("vif_filter needs at least 2 metrics");
  VifResult res{d, {}};
  while (res.data.n_metrics() >= 2) {
    const auto vifs = variance_inflation(res.data);
    std::size_t worst = 0;
    for (std::size_t j = 1; j < vifs.size(); ++j) {
      const double a = vifs[j], b = vifs[worst];
      const bool tie = std::isinf(a) || std::isinf(b) ? a == b
                                                      : std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b));
      if (a > b || tie) worst = j;
    }
    if (!(vifs[worst] > threshold)) break;
    auto names = res.data.metric_names();
    res.trace.push_back({names[worst], vifs[worst]});
    names.erase(names.begin() + static_cast<std::ptrdiff_t>(worst));
    res.data = res.data.select(names);
  }
  return res;
}

/// VarClus then VIF. VarClus rounds repeat on the survivors until no pair has
/// |rho| above the threshold (representatives of neighbouring complete-linkage
/// groups can still be strongly correlated after a single round).
inline MitigationResult mitigate(const Dataset& d, const MitigationOptions& opt = {}) {
  MitigationReport report;
  const auto original = d.metric_names();
  if (d.n_metrics() < 2) {
    report.surviving = original;
    report.too_few_survivors = true;
    return {d, report};
  }
  // Validate priority up front, even if nothing ends up clustered.
  select_representatives({}, original, opt.priority);

  const auto full_corr = spearman_matrix(d);
  std::vector<std::string> survivors = original;
  for (bool first = true;; first = false) {
    if (survivors.size() < 2) break;
    CorrelationMatrix sub;
    sub.metric_names = survivors;
    const auto k = static_cast<Eigen::Index>(survivors.size());
    sub.rho.resize(k, k);
    std::vector<std::size_t> idx;
    for (const auto& s : survivors) idx.push_back(full_corr.index_of(s));
    for (Eigen::Index a = 0; a < k; ++a)
      for (Eigen::Index b = 0; b < k; ++b) sub.rho(a, b) = full_corr.at(idx[a], idx[b]);
    sub.constant.resize(survivors.size());

    auto vc = varclus(sub, opt.rho_threshold);
    if (first) report.clusters = vc.clusters;
    auto reps = select_representatives(vc.clusters, original, opt.priority);
    if (reps.removed.empty()) break;
    report.representatives.insert(report.representatives.end(), reps.chosen.begin(), reps.chosen.end());
    report.removed_by_varclus.insert(report.removed_by_varclus.end(), reps.removed.begin(), reps.removed.end());
    std::erase_if(survivors, [&](const std::string& m) {
      return std::find(reps.removed.begin(), reps.removed.end(), m) != reps.removed.end();
    });
    report.rounds.push_back({std::move(vc.clusters), std::move(reps)});
  }
  // A representative of one round can lose in a later round.
  std::erase_if(report.representatives, [&](const std::string& m) {
    return std::find(survivors.begin(), survivors.end(), m) == survivors.end();
  });

  Dataset current = d.select(survivors);
  if (current.n_metrics() >= 2) {
    auto vr = vif_filter(current, opt.vif_threshold);
    report.vif_trace = std::move(vr.trace);
    current = std::move(vr.data);
  }
  report.surviving = current.metric_names();
  report.too_few_survivors = current.n_metrics() < 2;
  return {std::move(current), std::move(report)};
}

}  // namespace corrimpact
