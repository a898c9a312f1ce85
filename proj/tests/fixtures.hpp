#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corrimpact/dataset.hpp"
#include "corrimpact/synthetic.hpp"

namespace fixtures {

using corrimpact::Dataset;
using corrimpact::MetricColumn;

inline Dataset make(std::vector<std::pair<std::string, std::vector<double>>> cols, std::vector<std::uint8_t> label,
                    std::string name = "fixture") {
  std::vector<MetricColumn> m;
  for (auto& [n, v] : cols) m.push_back({n, std::move(v)});
  return Dataset(std::move(name), std::move(m), std::move(label));
}

// One tight 5-metric cluster carrying strong signal.
inline corrimpact::SyntheticConfig tight_cluster(std::size_t n_rows = 1000, double noise = 0.1) {
  corrimpact::SyntheticConfig c;
  c.name = "tight_cluster";
  c.n_rows = n_rows;
  c.intercept = -0.5;
  c.clusters = {{5, noise, 2.0, "size"}};
  return c;
}

// A redundant cluster plus independent signal and noise metrics.
inline corrimpact::SyntheticConfig redundant_cluster(std::size_t n_rows = 1000) {
  corrimpact::SyntheticConfig c;
  c.name = "redundant_cluster";
  c.n_rows = n_rows;
  c.intercept = -1.0;
  c.clusters = {{5, 0.15, 1.5, "size"}, {1, 0.0, 0.8, "churn"}, {1, 0.0, 0.5, "age"}};
  c.noise_metrics = 2;
  return c;
}

// Metrics that do not correlate with each other at all.
inline corrimpact::SyntheticConfig independent(std::size_t n_metrics = 4, std::size_t n_rows = 1000) {
  corrimpact::SyntheticConfig c;
  c.name = "independent";
  c.n_rows = n_rows;
  for (std::size_t i = 0; i < n_metrics; ++i)
    c.clusters.push_back({1, 0.0, 0.8, "x" + std::to_string(i)});
  return c;
}

}  // namespace fixtures
