#pragma once

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "corrimpact/error.hpp"

namespace corrimpact {

/// Bootstrap distributions of importance scores, one sample vector per metric.
struct ScoreSamples {
  std::vector<std::string> metrics;
  std::vector<std::vector<double>> samples;

  void validate() const {
    if (metrics.empty()) throw usage_error("Scott-Knott needs at least one metric");
    if (metrics.size() != samples.size()) throw usage_error("Scott-Knott: metric/sample count mismatch");
    const std::size_t r = samples.front().size();
    if (r < 2) throw usage_error("Scott-Knott needs at least 2 samples per metric");
    for (const auto& s : samples) {
      if (s.size() != r) throw usage_error("Scott-Knott: sample vectors differ in length");
      for (double x : s)
        if (!std::isfinite(x)) throw usage_error("Scott-Knott: non-finite score");
    }
  }
};

struct RankedMetric {
  std::string metric;
  double mean = 0.0;
  double sd = 0.0;
  std::size_t rank = 0;
};

struct ScottKnottRanking {
  std::vector<std::vector<std::string>> groups;  // best group first
  std::vector<RankedMetric> metrics;             // descending mean

  std::size_t rank_of(const std::string& metric) const {
    for (const auto& m : metrics)
      if (m.metric == metric) return m.rank;
    throw data_error("metric '" + metric + "' not in ranking");
  }
  std::size_t n_ranks() const noexcept { return groups.size(); }
};

struct ScottKnottOptions {
  double alpha = 0.05;
  double negligible_d = 0.2;  // Cohen's d below this merges adjacent groups
};

namespace detail {

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Cohen's d with pooled standard deviation. Zero spread: 0 for equal means, +inf otherwise.
inline double cohens_d(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = mean_of(a), mb = mean_of(b);
  double ssa = 0.0, ssb = 0.0;
  for (double x : a) ssa += (x - ma) * (x - ma);
  for (double x : b) ssb += (x - mb) * (x - mb);
  const double df = static_cast<double>(a.size() + b.size()) - 2.0;
  const double pooled = df > 0 ? std::sqrt((ssa + ssb) / df) : 0.0;
  const double diff = std::abs(ma - mb);
  if (pooled > 0.0) return diff / pooled;
  return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

class ScottKnott {
 public:
  ScottKnott(const std::vector<double>& sorted_means, double mse_of_mean, double error_df, double alpha)
      : means_(sorted_means), s2_(mse_of_mean), v_(error_df), alpha_(alpha) {}

  // Half-open index ranges [begin, end) of the accepted partition.
  std::vector<std::pair<std::size_t, std::size_t>> run() {
    out_.clear();
    split(0, means_.size());
    std::sort(out_.begin(), out_.end());
    return out_;
  }

 private:
  void split(std::size_t a, std::size_t b) {
    const std::size_t k = b - a;
    if (k < 2) {
      out_.emplace_back(a, b);
      return;
    }
    double grand = 0.0;
    for (std::size_t i = a; i < b; ++i) grand += means_[i];
    grand /= static_cast<double>(k);

    double best_b0 = 0.0;
    std::size_t cut = 0;
    double left_sum = 0.0;
    for (std::size_t c = a + 1; c < b; ++c) {
      left_sum += means_[c - 1];
      if (means_[c - 1] == means_[c]) continue;  // never separate equal means
      const double n1 = static_cast<double>(c - a), n2 = static_cast<double>(b - c);
      const double m1 = left_sum / n1;
      const double m2 = (grand * static_cast<double>(k) - left_sum) / n2;
      const double b0 = n1 * (m1 - grand) * (m1 - grand) + n2 * (m2 - grand) * (m2 - grand);
      if (b0 > best_b0) {
        best_b0 = b0;
        cut = c;
      }
    }
    if (cut == 0) {
      out_.emplace_back(a, b);
      return;
    }
    double ss = 0.0;
    for (std::size_t i = a; i < b; ++i) ss += (means_[i] - grand) * (means_[i] - grand);
    const double sigma2 = (ss + v_ * s2_) / (static_cast<double>(k) + v_);
    const double lambda = sigma2 > 0.0 ? std::numbers::pi / (2.0 * (std::numbers::pi - 2.0)) * best_b0 / sigma2
                                       : std::numeric_limits<double>::infinity();
    const double df = static_cast<double>(k) / (std::numbers::pi - 2.0);
    const double critical = boost::math::quantile(boost::math::complement(boost::math::chi_squared(df), alpha_));
    if (lambda > critical) {
      split(a, cut);
      split(cut, b);
    } else {
      out_.emplace_back(a, b);
    }
  }

  const std::vector<double>& means_;
  double s2_;
  double v_;
  double alpha_;
  std::vector<std::pair<std::size_t, std::size_t>> out_;
};

}  // namespace detail

/// Scott-Knott ESD ranking: classic Scott-Knott partitioning of the metric
/// means (lambda test at `alpha`), followed by merging adjacent groups whose
/// pooled-sd Cohen's d is below `negligible_d`. Rank 1 is the best group.
inline ScottKnottRanking scott_knott_esd(const ScoreSamples& s, const ScottKnottOptions& opt = {}) {
  s.validate();
  const std::size_t k = s.metrics.size();
  const std::size_t r = s.samples.front().size();

  std::vector<double> means(k), sds(k);
  double sse = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    means[i] = detail::mean_of(s.samples[i]);
    double ss = 0.0;
    for (double x : s.samples[i]) ss += (x - means[i]) * (x - means[i]);
    sse += ss;
    sds[i] = std::sqrt(ss / static_cast<double>(r - 1));
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (means[a] != means[b]) return means[a] > means[b];
    return s.metrics[a] < s.metrics[b];
  });

  std::vector<double> sorted_means(k);
  for (std::size_t i = 0; i < k; ++i) sorted_means[i] = means[order[i]];
  const double error_df = static_cast<double>(k * r - k);
  const double mse = error_df > 0 ? sse / error_df : 0.0;
  auto ranges = detail::ScottKnott(sorted_means, mse / static_cast<double>(r), error_df, opt.alpha).run();

  // Effect-size pass: merge the closest adjacent pair while it is negligible.
  auto pooled = [&](const std::pair<std::size_t, std::size_t>& g) {
    std::vector<double> v;
    for (std::size_t i = g.first; i < g.second; ++i)
      v.insert(v.end(), s.samples[order[i]].begin(), s.samples[order[i]].end());
    return v;
  };
  while (ranges.size() > 1) {
    double smallest = std::numeric_limits<double>::infinity();
    std::size_t at = 0;
    for (std::size_t g = 0; g + 1 < ranges.size(); ++g) {
      const double d = detail::cohens_d(pooled(ranges[g]), pooled(ranges[g + 1]));
      if (d < smallest) {
        smallest = d;
        at = g;
      }
    }
    if (!(smallest < opt.negligible_d)) break;
    ranges[at].second = ranges[at + 1].second;
    ranges.erase(ranges.begin() + static_cast<std::ptrdiff_t>(at + 1));
  }

  ScottKnottRanking out;
  for (std::size_t g = 0; g < ranges.size(); ++g) {
    std::vector<std::string> group;
    for (std::size_t i = ranges[g].first; i < ranges[g].second; ++i) {
      const auto m = order[i];
      group.push_back(s.metrics[m]);
      out.metrics.push_back({s.metrics[m], means[m], sds[m], g + 1});
    }
    out.groups.push_back(std::move(group));
  }
  return out;
}

/// Every metric whose rank is within the first k distinct ranks.
inline std::set<std::string> top_k(const ScottKnottRanking& r, std::size_t k) {
  if (k < 1) throw usage_error("top_k needs k >= 1");
  std::set<std::string> out;
  for (const auto& m : r.metrics)
    if (m.rank <= k) out.insert(m.metric);
  return out;
}

}  // namespace corrimpact
