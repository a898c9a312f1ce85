#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "corrimpact/error.hpp"
#include "corrimpact/skesd.hpp"

using namespace corrimpact;

namespace {

std::vector<double> normal_sample(std::mt19937_64& rng, double mean, double sd, std::size_t n) {
  std::normal_distribution<double> dist(mean, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

std::map<std::string, std::size_t> ranks_of(const ScottKnottRanking& r) {
  std::map<std::string, std::size_t> out;
  for (const auto& m : r.metrics) out[m.metric] = m.rank;
  return out;
}

ScoreSamples mixed_samples(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ScoreSamples s;
  const std::vector<std::pair<std::string, double>> means{{"a", 5}, {"b", 4.9}, {"c", 3}, {"d", 1}, {"e", 1.02}, {"f", 0}};
  for (const auto& [name, mu] : means) {
    s.metrics.push_back(name);
    s.samples.push_back(normal_sample(rng, mu, 0.5, 100));
  }
  return s;
}

}  // namespace

TEST(ScottKnott, SeparatedConstantsRankInMeanOrder) {
  ScoreSamples s{{"B", "A"}, {std::vector<double>(10, 0.0), std::vector<double>(10, 10.0)}};
  const auto r = scott_knott_esd(s);
  EXPECT_EQ(r.rank_of("A"), 1u);
  EXPECT_EQ(r.rank_of("B"), 2u);
  EXPECT_EQ(r.groups, (std::vector<std::vector<std::string>>{{"A"}, {"B"}}));
}

TEST(ScottKnott, IdenticalSamplesShareRankOne) {
  std::mt19937_64 rng(1);
  const auto v = normal_sample(rng, 3, 1, 50);
  const auto r = scott_knott_esd({{"x", "y", "z"}, {v, v, v}});
  EXPECT_EQ(r.n_ranks(), 1u);
  for (const auto& m : r.metrics) EXPECT_EQ(m.rank, 1u);
}

TEST(ScottKnott, NegligibleEffectMerges) {
  // d = 0.001 / 0.1 = 0.01; the split test alone fires at this sample size
  std::mt19937_64 rng(2);
  auto a = normal_sample(rng, 0.0, 0.1, 200000);
  auto b = a;
  for (auto& x : a) x += 10.0;
  for (auto& x : b) x += 10.001;
  ScottKnottOptions opt;
  EXPECT_EQ(scott_knott_esd({{"a", "b"}, {a, b}}, opt).n_ranks(), 1u);
  opt.negligible_d = 0.0;
  EXPECT_EQ(scott_knott_esd({{"a", "b"}, {a, b}}, opt).n_ranks(), 2u);
  EXPECT_NEAR(detail::cohens_d(a, b), 0.01, 1e-3);
}

TEST(ScottKnott, CohensDZeroSpread) {
  EXPECT_EQ(detail::cohens_d({1, 1}, {1, 1}), 0.0);
  EXPECT_TRUE(std::isinf(detail::cohens_d({1, 1}, {2, 2})));
}

TEST(ScottKnott, RanksAreContiguousAndOrdered) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = scott_knott_esd(mixed_samples(seed));
    std::size_t prev_rank = 1;
    double prev_mean = std::numeric_limits<double>::infinity();
    for (const auto& m : r.metrics) {
      EXPECT_TRUE(m.rank == prev_rank || m.rank == prev_rank + 1);
      EXPECT_LE(m.mean, prev_mean);
      prev_rank = m.rank;
      prev_mean = m.mean;
    }
    EXPECT_EQ(r.metrics.front().rank, 1u);
    EXPECT_EQ(r.metrics.back().rank, r.n_ranks());
  }
}

TEST(ScottKnott, AffineAndOrderInvariant) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto s = mixed_samples(seed);
    const auto base = ranks_of(scott_knott_esd(s));
    auto scaled = s;
    for (auto& v : scaled.samples)
      for (auto& x : v) x = 3.5 * x - 7.0;
    EXPECT_EQ(ranks_of(scott_knott_esd(scaled)), base);
    auto shuffled = s;
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> perm(s.metrics.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      shuffled.metrics[i] = s.metrics[perm[i]];
      shuffled.samples[i] = s.samples[perm[i]];
    }
    EXPECT_EQ(ranks_of(scott_knott_esd(shuffled)), base);
  }
}

TEST(ScottKnott, DuplicateMetricSharesRank) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto s = mixed_samples(seed);
    s.metrics.push_back("c_copy");
    s.samples.push_back(s.samples[2]);
    const auto r = scott_knott_esd(s);
    EXPECT_EQ(r.rank_of("c_copy"), r.rank_of("c"));
  }
}

TEST(ScottKnott, Errors) {
  EXPECT_THROW(scott_knott_esd({}), usage_error);
  EXPECT_THROW(scott_knott_esd({{"a"}, {{1.0}}}), usage_error);
  EXPECT_THROW(scott_knott_esd({{"a", "b"}, {{1.0, 2.0}, {1.0}}}), usage_error);
  EXPECT_THROW(scott_knott_esd({{"a"}, {{1.0, std::nan("")}}}), usage_error);
  const auto r = scott_knott_esd({{"a"}, {{1.0, 2.0}}});
  EXPECT_THROW(r.rank_of("b"), data_error);
}

TEST(TopK, Examples) {
  ScottKnottRanking r;
  r.metrics = {{"a", 3, 0, 1}, {"b", 2, 0, 1}, {"c", 1, 0, 2}};
  EXPECT_EQ(top_k(r, 1), (std::set<std::string>{"a", "b"}));
  EXPECT_EQ(top_k(r, 2), (std::set<std::string>{"a", "b", "c"}));
  EXPECT_EQ(top_k(r, 9), (std::set<std::string>{"a", "b", "c"}));
  r.metrics = {{"a", 3, 0, 1}, {"b", 2, 0, 2}, {"c", 1, 0, 3}};
  EXPECT_EQ(top_k(r, 3), (std::set<std::string>{"a", "b", "c"}));
  EXPECT_THROW(top_k(r, 0), usage_error);
}
