#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "corrimpact/dataset.hpp"
#include "corrimpact/detail/rng.hpp"
#include "corrimpact/error.hpp"
#include "corrimpact/rank_stats.hpp"

namespace corrimpact {

// One latent factor shared by `size` metrics. Each metric is factor + noise * N(0,1),
// so the within-cluster Pearson correlation is 1 / (1 + noise^2).
struct ClusterSpec {
  std::size_t size = 1;
  double noise = 0.1;
  double coefficient = 0.0;  // weight of the factor in the label's logit
  std::string prefix;        // defaults to "c<index>"
};

// A metric built as the sum of existing metrics plus noise; yields multi-collinearity
// without any strong pairwise correlation.
struct CombinationSpec {
  std::vector<std::string> sources;
  double noise = 0.0;
  std::string name;  // defaults to "combo<index>"
};

struct SyntheticConfig {
  std::string name = "synthetic";
  std::size_t n_rows = 1000;
  double intercept = 0.0;
  std::vector<ClusterSpec> clusters;
  std::size_t noise_metrics = 0;  // independent N(0,1) metrics unrelated to the label
  std::vector<CombinationSpec> combinations;
};

struct SyntheticDataset {
  Dataset data;
  std::vector<std::vector<std::string>> cluster_members;
  // Smallest |Spearman rho| over pairs inside each cluster (1 for singletons).
  std::vector<double> min_within_cluster_rho;
};

/// Deterministic for a given (config, seed): every column draws from its own
/// seeded stream, so adding a metric never perturbs the others.
inline SyntheticDataset synthesize(const SyntheticConfig& cfg, std::uint64_t seed) {
  if (cfg.n_rows < 10) throw usage_error("synthesize: n_rows must be at least 10");
  if (cfg.clusters.empty() && cfg.noise_metrics == 0) throw usage_error("synthesize: config defines no metrics");
  for (const auto& c : cfg.clusters) {
    if (c.size == 0) throw usage_error("synthesize: empty cluster");
    if (!(c.noise >= 0.0) || !std::isfinite(c.coefficient)) throw usage_error("synthesize: invalid cluster parameters");
  }

  const std::size_t n = cfg.n_rows;
  std::vector<MetricColumn> cols;
  std::vector<std::vector<std::string>> members;
  std::vector<double> logit(n, cfg.intercept);

  for (std::size_t c = 0; c < cfg.clusters.size(); ++c) {
    const auto& spec = cfg.clusters[c];
    detail::Rng frng(detail::mix_seed(seed, {1, c}));
    std::vector<double> factor(n);
    for (auto& f : factor) f = frng.normal();
    for (std::size_t i = 0; i < n; ++i) logit[i] += spec.coefficient * factor[i];

    const std::string prefix = spec.prefix.empty() ? "c" + std::to_string(c) : spec.prefix;
    std::vector<std::string> names;
    for (std::size_t j = 0; j < spec.size; ++j) {
      detail::Rng nrng(detail::mix_seed(seed, {2, c, j}));
      MetricColumn col{prefix + "_m" + std::to_string(j), std::vector<double>(n)};
      for (std::size_t i = 0; i < n; ++i) col.values[i] = factor[i] + spec.noise * nrng.normal();
      names.push_back(col.name);
      cols.push_back(std::move(col));
    }
    members.push_back(std::move(names));
  }

  for (std::size_t j = 0; j < cfg.noise_metrics; ++j) {
    detail::Rng rng(detail::mix_seed(seed, {3, j}));
    MetricColumn col{"noise" + std::to_string(j), std::vector<double>(n)};
    for (auto& v : col.values) v = rng.normal();
    cols.push_back(std::move(col));
  }

  for (std::size_t k = 0; k < cfg.combinations.size(); ++k) {
    const auto& combo = cfg.combinations[k];
    if (combo.sources.empty()) throw usage_error("synthesize: combination without sources");
    detail::Rng rng(detail::mix_seed(seed, {4, k}));
    MetricColumn col{combo.name.empty() ? "combo" + std::to_string(k) : combo.name, std::vector<double>(n, 0.0)};
    for (const auto& src : combo.sources) {
      auto it = std::find_if(cols.begin(), cols.end(), [&](const MetricColumn& m) { return m.name == src; });
      if (it == cols.end()) throw usage_error("synthesize: unknown combination source '" + src + "'");
      for (std::size_t i = 0; i < n; ++i) col.values[i] += it->values[i];
    }
    for (auto& v : col.values) v += combo.noise * rng.normal();
    cols.push_back(std::move(col));
  }

  detail::Rng lrng(detail::mix_seed(seed, {5}));
  std::vector<std::uint8_t> label(n);
  for (std::size_t i = 0; i < n; ++i) label[i] = lrng.bernoulli(1.0 / (1.0 + std::exp(-logit[i]))) ? 1 : 0;

  SyntheticDataset out{Dataset(cfg.name, std::move(cols), std::move(label)), std::move(members), {}};
  for (const auto& group : out.cluster_members) {
    double lo = 1.0;
    for (std::size_t a = 0; a < group.size(); ++a)
      for (std::size_t b = a + 1; b < group.size(); ++b)
        lo = std::min(lo, std::abs(spearman(out.data.metric(group[a]).values, out.data.metric(group[b]).values).rho));
    out.min_within_cluster_rho.push_back(lo);
  }
  return out;
}

}  // namespace corrimpact
