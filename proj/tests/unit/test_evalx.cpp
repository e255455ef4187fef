#include "limesup/error.hpp"
#include "limesup/evalx.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

namespace limesup {
namespace {

using testing::normal_vector;

// Concordant pairs plus half the ties, over all positive/negative pairs.
double auc_pairs(const Eigen::VectorXd& s, const Eigen::VectorXi& y) {
  double hits = 0.0;
  double pairs = 0.0;
  for (Index i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (Index j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      hits += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return hits / pairs;
}

Eigen::VectorXi random_labels(Rng& rng, Index n) {
  Eigen::VectorXi y(n);
  for (Index i = 0; i < n; ++i) y[i] = static_cast<int>(rng.below(2));
  y[0] = 0;
  y[1] = 1;
  return y;
}

TEST(Auc, MatchesPairCounting) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.below(49));
    Eigen::VectorXd s(n);
    // Coarse scores so ties are common.
    for (Index i = 0; i < n; ++i) s[i] = static_cast<double>(rng.below(8));
    const Eigen::VectorXi y = random_labels(rng, n);
    EXPECT_NEAR(auc_mann_whitney(s, y), auc_pairs(s, y), 1e-12);
  }
}

TEST(Auc, PerfectRankingAndMonotoneInvariance) {
  Eigen::VectorXd s(4);
  s << 0.1, 0.2, 0.8, 0.9;
  Eigen::VectorXi y(4);
  y << 0, 0, 1, 1;
  EXPECT_DOUBLE_EQ(auc_mann_whitney(s, y), 1.0);
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd z = normal_vector(rng, 40);
    const Eigen::VectorXi lab = random_labels(rng, 40);
    const Eigen::VectorXd t = (z.array() * 3.0).exp() + 2.0;
    EXPECT_DOUBLE_EQ(auc_mann_whitney(z, lab), auc_mann_whitney(t, lab));
  }
}

TEST(Auc, SingleClassThrows) {
  EXPECT_THROW(auc_mann_whitney(Eigen::Vector2d(1, 2), Eigen::Vector2i(1, 1)), DataError);
}

TEST(GlobalMetrics, IdenticalPredictions) {
  Rng rng(3);
  const Eigen::VectorXd y = normal_vector(rng, 30);
  const MetricsReport r = global_metrics(y, y, std::nullopt, "self");
  EXPECT_EQ(r.mse, 0.0);
  EXPECT_EQ(r.r2, 1.0);
  EXPECT_FALSE(r.auc.has_value());
  EXPECT_EQ(r.n, 30);
  EXPECT_THROW(global_metrics(y, y.head(3)), DataError);
}

TEST(GlobalMetrics, HandValues) {
  const Eigen::Vector4d y(1, 2, 3, 4);
  const Eigen::Vector4d p(1, 2, 3, 6);
  const Eigen::Vector4i lab(0, 0, 1, 1);
  const MetricsReport r = global_metrics(y, p, Eigen::VectorXi(lab));
  EXPECT_DOUBLE_EQ(r.mse, 1.0);
  EXPECT_DOUBLE_EQ(r.r2, 1.0 - 4.0 / 5.0);
  EXPECT_DOUBLE_EQ(*r.auc, 1.0);
}

TEST(PartitionComparison, SinglePartitionEqualsGlobal) {
  Rng rng(4);
  const Eigen::VectorXd y = normal_vector(rng, 50);
  const Eigen::VectorXd a = y + 0.3 * normal_vector(rng, 50);
  const PartitionReport report = partition_comparison(std::vector<int>(50, 7), y, {{"a", a}}, "src");
  ASSERT_EQ(report.rows.size(), 1u);
  const auto& cell = report.rows[0].methods.at("a");
  const MetricsReport g = global_metrics(y, a);
  EXPECT_NEAR(cell.mse, g.mse, 1e-14);
  EXPECT_NEAR(*cell.r2, g.r2, 1e-14);
  EXPECT_EQ(report.rows[0].partition, 7);
}

TEST(PartitionComparison, SizeOnePartitionsHaveNoR2) {
  const Eigen::Vector3d y(1, 2, 3);
  const PartitionReport report = partition_comparison({0, 1, 2}, y, {{"m", Eigen::VectorXd(Eigen::Vector3d(1, 1, 1))}});
  for (const auto& row : report.rows) EXPECT_FALSE(row.methods.at("m").r2.has_value());
  EXPECT_DOUBLE_EQ(report.rows[2].methods.at("m").mse, 4.0);
}

TEST(PartitionComparison, WeightedMseRecombinesToGlobal) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 20 + static_cast<Index>(rng.below(500));
    const Eigen::VectorXd y = normal_vector(rng, n) * 4.0;
    const Eigen::VectorXd a = y + normal_vector(rng, n);
    const Eigen::VectorXd b = 0.5 * y;
    std::vector<int> ids(static_cast<std::size_t>(n));
    for (auto& id : ids) id = static_cast<int>(rng.below(9)) * 3;  // sparse ids, missing ones absent
    const PartitionReport report = partition_comparison(ids, y, {{"a", a}, {"b", b}}, "x");
    Index total = 0;
    double weighted_a = 0.0;
    double weighted_b = 0.0;
    for (const auto& row : report.rows) {
      total += row.n;
      weighted_a += static_cast<double>(row.n) * row.methods.at("a").mse;
      weighted_b += static_cast<double>(row.n) * row.methods.at("b").mse;
    }
    EXPECT_EQ(total, n);
    EXPECT_NEAR(weighted_a / static_cast<double>(n), global_metrics(y, a).mse, 1e-10);
    EXPECT_NEAR(weighted_b / static_cast<double>(n), global_metrics(y, b).mse, 1e-10);
  }
}

}  // namespace
}  // namespace limesup
