#include "limesup/dtree.hpp"
#include "limesup/error.hpp"
#include "limesup/serialize.hpp"
#include "limesup/simgen.hpp"
#include "limesup/suptree.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace limesup {
namespace {

struct Fixture {
  DatasetSplit split;
  Fixture() {
    SimConfig config;
    config.n = 3000;
    config.seed = 9;
    split = split_dataset(simulate_benchmark(config), {}, 9);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

TEST(TreeJson, ResponseRoundTrip) {
  const auto& f = fixture();
  GrowthConfig config;
  config.n_quantiles = 19;
  const Tree tree = fit_response_tree(f.split.train, f.split.valid, config);
  const std::string text = tree_to_json(tree);
  const Tree back = tree_from_json(text);
  EXPECT_EQ(tree_to_json(back), text);
  EXPECT_EQ(predict_tree(back, f.split.test.features), predict_tree(tree, f.split.test.features));
  EXPECT_EQ(assign_partition(back, f.split.test.features), assign_partition(tree, f.split.test.features));
  EXPECT_EQ(back.leaf_count(), tree.leaf_count());
  EXPECT_EQ(back.dataset_hash, tree.dataset_hash);
}

TEST(TreeJson, DerivativeRoundTrip) {
  const auto& f = fixture();
  GrowthConfig config;
  config.n_quantiles = 19;
  const Tree tree = fit_derivative_tree(f.split.train, f.split.valid, config);
  const std::string text = tree_to_json(tree);
  const Tree back = tree_from_json(text);
  EXPECT_EQ(tree_to_json(back), text);
  EXPECT_EQ(predict_tree(back, f.split.test.features), predict_tree(tree, f.split.test.features));
  EXPECT_EQ(derivative_means_csv(back), derivative_means_csv(tree));
}

TEST(TreeJson, RejectsMalformedInput) {
  EXPECT_THROW(tree_from_json("{not json"), DataError);
  EXPECT_THROW(tree_from_json(R"({"format":"something-else"})"), DataError);
  EXPECT_THROW(tree_from_json(R"({"format":"limesup-tree","version":1})"), DataError);
}

TEST(KlimeJson, RoundTripAllVariants) {
  const auto& f = fixture();
  for (auto variant : {KlimeVariant::Euclidean, KlimeVariant::Mahalanobis, KlimeVariant::Pca}) {
    KlimeOptions options;
    options.kmeans.n_init = 2;
    const KMeansModel model = klime_fit(f.split.train, f.split.valid, 4, variant, options);
    const std::string text = kmeans_to_json(model);
    const KMeansModel back = kmeans_from_json(text);
    EXPECT_EQ(kmeans_to_json(back), text);
    EXPECT_EQ(predict_klime(back, f.split.test.features), predict_klime(model, f.split.test.features));
    EXPECT_EQ(assign_clusters(back, f.split.test.features), assign_clusters(model, f.split.test.features));
  }
  EXPECT_THROW(kmeans_from_json("[]"), DataError);
  EXPECT_THROW(kmeans_from_json(R"({"format":"limesup-tree"})"), DataError);
}

TEST(Csv, Headers) {
  const auto& f = fixture();
  GrowthConfig config;
  config.n_quantiles = 19;
  config.max_depth = 1;
  const Tree r = fit_response_tree(f.split.train, f.split.valid, config);
  EXPECT_EQ(first_line(tree_coefficients_csv(r)), "node_id,n,depth,intercept,x1,x2,x3,x4,x5,x6,lambda,r2");
  const Tree d = fit_derivative_tree(f.split.train, f.split.valid, config);
  const std::string means = first_line(derivative_means_csv(d));
  EXPECT_EQ(means.rfind("node_id,n,depth,scaled_x1", 0), 0u) << means;
  EXPECT_NE(means.find("raw_x1"), std::string::npos);
  EXPECT_NE(means.find("sd_x6"), std::string::npos);

  MetricsReport m;
  m.method = "a";
  m.n = 3;
  m.mse = 0.5;
  m.r2 = 0.25;
  EXPECT_EQ(metrics_csv({m}), "method,n,mse,r2,auc\na,3,0.5,0.25,\n");
}

TEST(Csv, LeafRowsMatchLeafCount) {
  const auto& f = fixture();
  GrowthConfig config;
  config.n_quantiles = 19;
  const Tree r = fit_response_tree(f.split.train, f.split.valid, config);
  std::istringstream in(tree_coefficients_csv(r));
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines - 1, r.leaf_count());
}

}  // namespace
}  // namespace limesup
