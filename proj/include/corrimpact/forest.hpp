#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "corrimpact/dataset.hpp"
#include "corrimpact/detail/parallel.hpp"
#include "corrimpact/detail/rng.hpp"
#include "corrimpact/error.hpp"
#include "corrimpact/glm.hpp"
#include "corrimpact/importance.hpp"

namespace corrimpact {

struct ForestConfig {
  std::size_t n_trees = 100;
  std::size_t mtry = 0;  // 0 = floor(sqrt(p))
  std::size_t min_node_size = 1;
  std::uint64_t seed = 42;
  unsigned threads = 0;  // 0 = default_threads()
};

struct TreeNode {
  int metric = -1;  // canonical metric index, -1 for a leaf
  double split_value = 0.0;
  int left = -1;
  int right = -1;
  std::size_t n = 0;            // in-bag rows reaching the node (with multiplicity)
  std::size_t n_defective = 0;
  double gini = 0.0;
  double weighted_decrease = 0.0;  // (G_parent - nL/nP G_left - nR/nP G_right) * nP / n_inbag
  std::uint8_t prediction = 0;

  bool is_leaf() const noexcept { return metric < 0; }
};

// One internal node viewed as a split, for inspection and reports.
struct SplitRecord {
  std::size_t node = 0;
  int metric = -1;
  double split_value = 0.0;
  std::size_t n_parent = 0, n_left = 0, n_right = 0;
  double gini_parent = 0.0, gini_left = 0.0, gini_right = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;          // nodes[0] is the root
  std::vector<std::size_t> oob;         // training rows never drawn for this tree
  std::size_t n_inbag = 0;
  std::vector<double> gini_by_metric;   // summed weighted decreases, canonical order
  std::vector<bool> uses_metric;

  template <typename ValueOf>
  std::uint8_t predict(ValueOf&& value_of) const {
    int k = 0;
    while (!nodes[static_cast<std::size_t>(k)].is_leaf()) {
      const auto& nd = nodes[static_cast<std::size_t>(k)];
      k = value_of(static_cast<std::size_t>(nd.metric)) <= nd.split_value ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(k)].prediction;
  }

  std::vector<SplitRecord> splits() const {
    std::vector<SplitRecord> out;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& nd = nodes[i];
      if (nd.is_leaf()) continue;
      const auto& l = nodes[static_cast<std::size_t>(nd.left)];
      const auto& r = nodes[static_cast<std::size_t>(nd.right)];
      out.push_back({i, nd.metric, nd.split_value, nd.n, l.n, r.n, nd.gini, l.gini, r.gini});
    }
    return out;
  }
};

/// Classification forest. Metrics are held in lexicographic order internally;
/// candidate sampling and tie-breaking use that order, so every output is
/// identical for any permutation of the caller's specification.
struct ForestModel {
  ModelSpec spec;                         // caller's order, used for reporting
  std::vector<std::string> metric_names;  // canonical (sorted)
  ForestConfig config;
  std::size_t mtry = 1;
  std::size_t n_rows = 0;
  std::vector<Tree> trees;
};

namespace detail {

inline double gini_index(std::size_t n, std::size_t defective) {
  if (n == 0) return 0.0;
  const double p = static_cast<double>(defective) / static_cast<double>(n);
  return 2.0 * p * (1.0 - p);
}

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<const std::vector<double>*>& cols, std::span<const std::uint8_t> y, std::size_t mtry,
              std::size_t min_node_size, Rng& rng)
      : cols_(cols), y_(y), mtry_(mtry), min_node_size_(min_node_size), rng_(rng) {}

  Tree build(std::vector<std::size_t> inbag) {
    Tree t;
    t.n_inbag = inbag.size();
    t.gini_by_metric.assign(cols_.size(), 0.0);
    t.uses_metric.assign(cols_.size(), false);
    samples_ = std::move(inbag);
    struct Pending {
      std::size_t node, begin, end;
    };
    std::vector<Pending> stack{{0, 0, samples_.size()}};
    t.nodes.emplace_back();
    std::vector<std::size_t> candidates(cols_.size());
    while (!stack.empty()) {
      const auto [id, begin, end] = stack.back();
      stack.pop_back();
      const std::size_t n = end - begin;
      std::size_t ones = 0;
      for (std::size_t i = begin; i < end; ++i) ones += y_[samples_[i]];
      auto& nd = t.nodes[id];
      nd.n = n;
      nd.n_defective = ones;
      nd.gini = gini_index(n, ones);
      if (2 * ones == n) {
        nd.prediction = rng_.bernoulli(0.5) ? 1 : 0;
      } else {
        nd.prediction = 2 * ones > n ? 1 : 0;
      }
      if (ones == 0 || ones == n || n <= min_node_size_) continue;

      // mtry distinct candidates, evaluated in canonical order.
      std::iota(candidates.begin(), candidates.end(), 0);
      for (std::size_t k = 0; k < mtry_; ++k) {
        const auto j = k + static_cast<std::size_t>(rng_.below(candidates.size() - k));
        std::swap(candidates[k], candidates[j]);
      }
      std::vector<std::size_t> chosen(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(mtry_));
      std::sort(chosen.begin(), chosen.end());

      Best best = find_split(chosen, begin, end, ones);
      const double decrease = nd.gini - best.weighted;
      if (best.metric < 0 || !(decrease > 1e-12)) continue;

      const auto& col = *cols_[static_cast<std::size_t>(best.metric)];
      const auto mid = std::stable_partition(samples_.begin() + static_cast<std::ptrdiff_t>(begin),
                                             samples_.begin() + static_cast<std::ptrdiff_t>(end),
                                             [&](std::size_t r) { return col[r] <= best.value; });
      const auto split_at = static_cast<std::size_t>(mid - samples_.begin());

      const double weighted = decrease * static_cast<double>(n) / static_cast<double>(t.n_inbag);
      const int left = static_cast<int>(t.nodes.size());
      t.nodes.emplace_back();
      t.nodes.emplace_back();
      auto& parent = t.nodes[id];  // re-fetch after growth
      parent.metric = best.metric;
      parent.split_value = best.value;
      parent.left = left;
      parent.right = left + 1;
      parent.weighted_decrease = weighted;
      t.gini_by_metric[static_cast<std::size_t>(best.metric)] += weighted;
      t.uses_metric[static_cast<std::size_t>(best.metric)] = true;
      stack.push_back({static_cast<std::size_t>(left + 1), split_at, end});
      stack.push_back({static_cast<std::size_t>(left), begin, split_at});
    }
    return t;
  }

 private:
  struct Best {
    int metric = -1;
    double value = 0.0;
    double weighted = 0.0;  // size-weighted child impurity
  };

  Best find_split(const std::vector<std::size_t>& chosen, std::size_t begin, std::size_t end, std::size_t ones) {
    Best best;
    const std::size_t n = end - begin;
    const double dn = static_cast<double>(n);
    for (auto v : chosen) {
      const auto& col = *cols_[v];
      buf_.clear();
      for (std::size_t i = begin; i < end; ++i) buf_.emplace_back(col[samples_[i]], y_[samples_[i]]);
      std::sort(buf_.begin(), buf_.end());
      std::size_t left_n = 0, left_ones = 0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        ++left_n;
        left_ones += buf_[i].second;
        if (buf_[i].first == buf_[i + 1].first) continue;
        const std::size_t right_n = n - left_n, right_ones = ones - left_ones;
        const double w = (static_cast<double>(left_n) * gini_index(left_n, left_ones) +
                          static_cast<double>(right_n) * gini_index(right_n, right_ones)) /
                         dn;
        if (best.metric < 0 || w < best.weighted) {
          double mid = 0.5 * (buf_[i].first + buf_[i + 1].first);
          if (!(mid < buf_[i + 1].first)) mid = buf_[i].first;
          best = {static_cast<int>(v), mid, w};
        }
      }
    }
    return best;
  }

  const std::vector<const std::vector<double>*>& cols_;
  std::span<const std::uint8_t> y_;
  std::size_t mtry_;
  std::size_t min_node_size_;
  Rng& rng_;
  std::vector<std::size_t> samples_;
  std::vector<std::pair<double, std::uint8_t>> buf_;
};

inline std::vector<const std::vector<double>*> canonical_columns(const Dataset& d, const std::vector<std::string>& names) {
  std::vector<const std::vector<double>*> cols;
  cols.reserve(names.size());
  for (const auto& n : names) cols.push_back(&d.metric(n).values);
  return cols;
}

inline double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace detail

/// Grows cfg.n_trees CART trees, each on a bootstrap draw of n_rows rows
/// seeded by (cfg.seed, tree index). Nodes split on the best size-weighted
/// Gini decrease among mtry sampled metrics until pure or <= min_node_size.
inline ForestModel fit_forest(const Dataset& d, const ModelSpec& spec, const ForestConfig& cfg = {}) {
  spec.validate(d);
  const std::size_t p = spec.metrics.size();
  if (cfg.n_trees < 1) throw usage_error("forest needs at least one tree");
  if (cfg.min_node_size < 1) throw usage_error("min_node_size must be at least 1");
  const std::size_t mtry = cfg.mtry == 0 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(p))))
                                         : cfg.mtry;
  if (mtry > p) throw usage_error("mtry exceeds the number of metrics");

  ForestModel f;
  f.spec = spec;
  f.metric_names = spec.metrics;
  std::sort(f.metric_names.begin(), f.metric_names.end());
  f.config = cfg;
  f.mtry = mtry;
  f.n_rows = d.n_rows();
  f.trees.resize(cfg.n_trees);

  const auto cols = detail::canonical_columns(d, f.metric_names);
  const auto y = d.label();
  const std::size_t n = d.n_rows();
  detail::parallel_for(cfg.n_trees, cfg.threads, [&](std::size_t t) {
    detail::Rng rng(detail::mix_seed(cfg.seed, {t}));
    std::vector<std::size_t> inbag(n);
    std::vector<bool> drawn(n, false);
    for (auto& r : inbag) {
      r = static_cast<std::size_t>(rng.below(n));
      drawn[r] = true;
    }
    detail::TreeBuilder builder(cols, y, mtry, cfg.min_node_size, rng);
    Tree tree = builder.build(std::move(inbag));
    for (std::size_t i = 0; i < n; ++i)
      if (!drawn[i]) tree.oob.push_back(i);
    f.trees[t] = std::move(tree);
  });
  return f;
}

/// Fraction of trees voting defective, per row.
inline std::vector<double> predict_prob_forest(const ForestModel& f, const Dataset& rows) {
  const auto cols = detail::canonical_columns(rows, f.metric_names);
  std::vector<double> out(rows.n_rows(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t votes = 0;
    for (const auto& t : f.trees) votes += t.predict([&](std::size_t m) { return (*cols[m])[i]; });
    out[i] = static_cast<double>(votes) / static_cast<double>(f.trees.size());
  }
  return out;
}

namespace detail {

// Rows of the table in the caller's spec order from per-tree canonical scores.
inline ImportanceTable importance_from_trees(const ForestModel& f, Technique technique,
                                             const std::vector<std::vector<double>>& per_tree, bool scaled,
                                             bool sd_zero_keeps_raw) {
  ImportanceTable table;
  table.technique = technique;
  const double trees = static_cast<double>(f.trees.size());
  for (const auto& name : f.spec.metrics) {
    const auto m = static_cast<std::size_t>(std::lower_bound(f.metric_names.begin(), f.metric_names.end(), name) -
                                            f.metric_names.begin());
    std::vector<double> v(f.trees.size());
    for (std::size_t t = 0; t < v.size(); ++t) v[t] = per_tree[t][m];
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / trees;
    const double sd = sample_sd(v);
    ImportanceRow row;
    row.metric = name;
    row.sd = sd;
    if (!scaled) {
      row.score = mean;
    } else if (sd > 0.0) {
      row.score = mean / (sd / std::sqrt(trees));
    } else {
      row.degenerate = true;
      row.score = sd_zero_keeps_raw ? mean : 0.0;
    }
    table.rows.push_back(std::move(row));
  }
  table.compute_shares();
  return table;
}

}  // namespace detail

/// Mean decrease in Gini impurity. The scaled variant divides by the standard
/// error of the per-tree sums; the reference randomForest ignores scaling for
/// this measure, so it is reported with a note.
inline ImportanceTable gini_importance(const ForestModel& f, bool scaled) {
  std::vector<std::vector<double>> per_tree;
  per_tree.reserve(f.trees.size());
  for (const auto& t : f.trees) per_tree.push_back(t.gini_by_metric);
  auto table = detail::importance_from_trees(f, scaled ? Technique::gini_scaled : Technique::gini, per_tree, scaled, false);
  if (scaled) table.note = "raw Gini divided by the standard error of per-tree sums (not a randomForest quantity)";
  return table;
}

/// Per-tree OOB accuracy drop per metric, canonical metric order. Permutations
/// are seeded by (seed, tree, metric name) and shuffle values among OOB rows.
inline std::vector<std::vector<double>> permutation_decreases(const ForestModel& f, const Dataset& d, std::uint64_t seed,
                                                              unsigned threads = 0) {
  if (d.n_rows() != f.n_rows) throw data_error("permutation importance needs the training dataset");
  const auto cols = detail::canonical_columns(d, f.metric_names);
  const auto y = d.label();
  const std::size_t p = f.metric_names.size();
  std::vector<std::vector<double>> per_tree(f.trees.size(), std::vector<double>(p, 0.0));
  detail::parallel_for(f.trees.size(), threads == 0 ? f.config.threads : threads, [&](std::size_t t) {
    const auto& tree = f.trees[t];
    const auto& oob = tree.oob;
    if (oob.empty()) return;
    std::size_t base = 0;
    for (auto r : oob) base += tree.predict([&](std::size_t m) { return (*cols[m])[r]; }) == y[r];
    for (std::size_t m = 0; m < p; ++m) {
      if (!tree.uses_metric[m]) continue;  // predictions cannot change
      std::vector<std::size_t> perm = oob;
      detail::Rng rng(detail::mix_seed(seed, {t, detail::fnv1a64(f.metric_names[m])}));
      rng.shuffle(perm);
      std::size_t hit = 0;
      for (std::size_t k = 0; k < oob.size(); ++k) {
        const auto r = oob[k];
        hit += tree.predict([&](std::size_t mm) { return mm == m ? (*cols[m])[perm[k]] : (*cols[mm])[r]; }) == y[r];
      }
      per_tree[t][m] = (static_cast<double>(base) - static_cast<double>(hit)) / static_cast<double>(oob.size());
    }
  });
  return per_tree;
}

inline ImportanceTable permutation_importance(const ForestModel& f, const Dataset& d, bool scaled, std::uint64_t seed,
                                              unsigned threads = 0) {
  const auto per_tree = permutation_decreases(f, d, seed, threads);
  return detail::importance_from_trees(f, scaled ? Technique::perm_scaled : Technique::perm, per_tree, scaled, true);
}

/// Share of rows left out of each tree's bootstrap draw.
inline double mean_oob_fraction(const ForestModel& f) {
  double s = 0.0;
  for (const auto& t : f.trees) s += static_cast<double>(t.oob.size()) / static_cast<double>(f.n_rows);
  return s / static_cast<double>(f.trees.size());
}

}  // namespace corrimpact
