#include <gtest/gtest.h>

#include <sstream>

#include "corrimpact/dataset.hpp"
#include "corrimpact/error.hpp"
#include "corrimpact/rank_stats.hpp"
#include "corrimpact/synthetic.hpp"
#include "fixtures.hpp"

using namespace corrimpact;

namespace {

Dataset parse(const std::string& text, const std::string& label = "bug") {
  std::istringstream in(text);
  return read_csv(in, "t", label);
}

std::string error_of(const std::string& text, const std::string& label = "bug") {
  try {
    parse(text, label);
  } catch (const data_error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(ReadCsv, ParsesColumnsInFileOrder) {
  const auto d = parse("a,b,bug\n1,2,0\n3,4,1\n5,6,0\n");
  EXPECT_EQ(d.n_rows(), 3u);
  EXPECT_EQ(d.metric_names(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(d.metric("b").values, (std::vector<double>{2, 4, 6}));
  EXPECT_EQ(std::vector<std::uint8_t>(d.label().begin(), d.label().end()), (std::vector<std::uint8_t>{0, 1, 0}));
}

TEST(ReadCsv, LabelColumnMayBeAnywhere) {
  const auto d = parse("TLOC,bug,MLOC_sum\n1,0,2\n3,1,4\n");
  EXPECT_EQ(d.metric_names(), (std::vector<std::string>{"TLOC", "MLOC_sum"}));
}

TEST(ReadCsv, PositiveLabelSet) {
  const auto d = parse("a,bug\n1,buggy\n2,clean\n3,TRUE\n4,no\n");
  EXPECT_EQ(std::vector<std::uint8_t>(d.label().begin(), d.label().end()), (std::vector<std::uint8_t>{1, 0, 1, 0}));
  std::istringstream in("a,y\n1,D\n2,C\n");
  const auto custom = read_csv(in, "t", "y", {"D"});
  EXPECT_EQ(custom.label()[0], 1);
  EXPECT_EQ(custom.label()[1], 0);
}

TEST(ReadCsv, Errors) {
  EXPECT_NE(error_of("a,bug\n1,0\n2,0\n").find("single-class label"), std::string::npos);
  EXPECT_NE(error_of("a,b\n1,0\n2,1\n").find("missing label column"), std::string::npos);
  const auto bad = error_of("a,b,bug\n1,2,0\n3,x,1\n");
  EXPECT_NE(bad.find("row 2"), std::string::npos) << bad;
  EXPECT_NE(bad.find("'b'"), std::string::npos) << bad;
  EXPECT_NE(error_of("a,a,bug\n1,2,0\n3,4,1\n").find("duplicate"), std::string::npos);
  EXPECT_NE(error_of("a,bug\n,0\n2,1\n").find("missing value"), std::string::npos);
  EXPECT_NE(error_of("a,bug\n1,0\n2\n").find("expected 2 cells"), std::string::npos);
  EXPECT_NE(error_of("").find("header"), std::string::npos);
  EXPECT_NE(error_of("a,bug\nnan,0\n1,1\n").find("non-numeric"), std::string::npos);
}

TEST(ReadCsv, WriteRoundTripIsExact) {
  const auto s = synthesize(fixtures::redundant_cluster(200), 5);
  std::ostringstream out;
  write_csv(out, s.data);
  std::istringstream in(out.str());
  const auto back = read_csv(in, s.data.name(), "bug");
  EXPECT_TRUE(back == s.data);
}

TEST(Dataset, ValidatesInvariants) {
  EXPECT_THROW(fixtures::make({{"a", {1, 2}}}, {0, 1, 0}), data_error);
  EXPECT_THROW(fixtures::make({{"", {1, 2}}}, {0, 1}), data_error);
  EXPECT_THROW(fixtures::make({{"a", {1, std::nan("")}}}, {0, 1}), data_error);
  EXPECT_THROW(fixtures::make({{"a", {1, 2}}}, {1, 1}), data_error);
  EXPECT_THROW(fixtures::make({{"a", {1, 2}}}, {0, 2}), data_error);
}

TEST(Dataset, SelectAndRowsPreserveOrder) {
  const auto d = fixtures::make({{"a", {1, 2, 3}}, {"b", {4, 5, 6}}, {"c", {7, 8, 9}}}, {0, 1, 1});
  const std::vector<std::string> pick{"c", "a"};
  EXPECT_EQ(d.select(pick).metric_names(), pick);
  const std::vector<std::size_t> rows{2, 0, 2};
  const auto r = d.rows(rows);
  EXPECT_EQ(r.metric("b").values, (std::vector<double>{6, 4, 6}));
  EXPECT_THROW(d.metric("zzz"), data_error);
}

TEST(Summarize, Arithmetic) {
  std::vector<double> v(100);
  std::vector<std::uint8_t> y(100, 0);
  for (int i = 0; i < 20; ++i) y[i] = 1;
  std::vector<std::pair<std::string, std::vector<double>>> cols;
  for (int j = 0; j < 10; ++j) cols.push_back({"m" + std::to_string(j), v});
  const auto s = summarize(fixtures::make(cols, y));
  EXPECT_EQ(s.n_modules, 100u);
  EXPECT_EQ(s.n_metrics, 10u);
  EXPECT_EQ(s.n_defective, 20u);
  EXPECT_DOUBLE_EQ(s.epv, 2.0);
  EXPECT_DOUBLE_EQ(s.defect_ratio, 0.2);
}

TEST(Summarize, RowOrderInsensitive) {
  const auto d = synthesize(fixtures::redundant_cluster(300), 2).data;
  std::vector<std::size_t> rev(d.n_rows());
  for (std::size_t i = 0; i < rev.size(); ++i) rev[i] = rev.size() - 1 - i;
  const auto a = summarize(d), b = summarize(d.rows(rev));
  EXPECT_EQ(a.n_defective, b.n_defective);
  EXPECT_EQ(a.epv, b.epv);
}

TEST(Synthesize, TightClusterCorrelation) {
  const auto s = synthesize(fixtures::tight_cluster(1000, 0.1), 11);
  ASSERT_EQ(s.min_within_cluster_rho.size(), 1u);
  EXPECT_GE(s.min_within_cluster_rho[0], 0.9);
  const auto c = spearman_matrix(s.data);
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = 0; j < c.size(); ++j) EXPECT_GE(std::abs(c.at(i, j)), 0.9);
}

TEST(Synthesize, IndependentClustersAreUncorrelated) {
  const auto s = synthesize(fixtures::independent(2), 3);
  EXPECT_LT(std::abs(spearman(s.data.metrics()[0].values, s.data.metrics()[1].values).rho), 0.2);
}

TEST(Synthesize, Deterministic) {
  const auto a = synthesize(fixtures::redundant_cluster(300), 9);
  const auto b = synthesize(fixtures::redundant_cluster(300), 9);
  EXPECT_TRUE(a.data == b.data);
  const auto c = synthesize(fixtures::redundant_cluster(300), 10);
  EXPECT_FALSE(std::equal(a.data.label().begin(), a.data.label().end(), c.data.label().begin()));
}

TEST(Synthesize, ColumnsDrawIndependentStreams) {
  auto small = fixtures::redundant_cluster(300);
  auto big = small;
  big.noise_metrics += 3;
  const auto a = synthesize(small, 4), b = synthesize(big, 4);
  EXPECT_EQ(a.data.metric("size_m2").values, b.data.metric("size_m2").values);
  EXPECT_EQ(a.data.metric("noise1").values, b.data.metric("noise1").values);
}

TEST(Synthesize, RejectsDegenerateConfigs) {
  SyntheticConfig c;
  c.n_rows = 5;
  c.clusters = {{2, 0.1, 1.0, "m"}};
  EXPECT_THROW(synthesize(c, 1), usage_error);
  c.n_rows = 100;
  c.clusters = {{0, 0.1, 1.0, "m"}};
  EXPECT_THROW(synthesize(c, 1), usage_error);
  c.clusters.clear();
  EXPECT_THROW(synthesize(c, 1), usage_error);
}

TEST(Synthesize, CombinationColumn) {
  SyntheticConfig c;
  c.n_rows = 500;
  c.clusters = {{1, 0, 1.0, "a"}, {1, 0, 1.0, "b"}};
  c.combinations = {{{"a_m0", "b_m0"}, 0.0, "ab"}};
  const auto s = synthesize(c, 1);
  const auto& a = s.data.metric("a_m0").values;
  const auto& b = s.data.metric("b_m0").values;
  const auto& ab = s.data.metric("ab").values;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_DOUBLE_EQ(ab[i], a[i] + b[i]);
}
