#pragma once

#include "limesup/data.hpp"
#include "limesup/linmod.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace limesup {

/// E: Euclidean, M: Mahalanobis (whitened), P: leading principal components.
enum class KlimeVariant { Euclidean, Mahalanobis, Pca };

std::string to_string(KlimeVariant variant);
KlimeVariant parse_variant(const std::string& text);

/// Linear map applied to standardized features before clustering:
/// transformed = standardized * matrix. The matrix is K x K for E and M
/// and K x q for P (its transpose is the q x K loading matrix).
struct FeatureTransform {
  KlimeVariant variant = KlimeVariant::Euclidean;
  Eigen::MatrixXd matrix;
  /// Eigenvalues of the sample covariance, descending (M and P only).
  Eigen::VectorXd eigenvalues;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& standardized) const;
};

inline constexpr double kPcaVarianceTarget = 0.95;

FeatureTransform build_transform(const Eigen::MatrixXd& standardized, KlimeVariant variant);

struct KMeansOptions {
  int n_init = 10;
  int max_iterations = 300;
  int threads = 1;
};

struct KMeansResult {
  Eigen::MatrixXd centroids;  ///< k x d
  std::vector<int> assignments;
  double wcss = 0.0;
  int iterations = 0;
  int restart = 0;
  /// WCSS after each assignment step of the winning run.
  std::vector<double> wcss_trace;
};

/// k-means++ seeding, Lloyd iterations, best of n_init restarts by
/// (WCSS, restart index).
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, const KMeansOptions& options = {});

/// Lloyd iterations from given centroids, with empty clusters reseeded at
/// the point farthest from its centroid.
KMeansResult lloyd(const Eigen::MatrixXd& points, Eigen::MatrixXd centroids, int max_iterations);

/// Nearest centroid; ties go to the lowest index.
std::vector<int> nearest_centroid(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids);

struct KlimeOptions {
  std::uint64_t seed = 20180601;
  KMeansOptions kmeans;
  int lasso_grid_size = 50;
};

struct KMeansModel {
  KlimeVariant variant = KlimeVariant::Euclidean;
  StandardizationParams standardization;
  FeatureTransform transform;
  Eigen::MatrixXd centroids;
  /// Fitted on original-scale model_vars columns, one per cluster.
  std::vector<LinearModel> models;
  /// Empty for models read back from JSON.
  std::vector<int> train_assignments;
  /// Training rows per cluster.
  std::vector<Eigen::Index> cluster_sizes;
  std::vector<std::string> feature_names;
  std::vector<int> model_vars;
  double wcss = 0.0;
  std::uint64_t seed = 0;
  int n_init = 0;

  int k() const { return static_cast<int>(centroids.rows()); }
};

/// Standardize, transform, cluster, then per-cluster LASSO with lambda
/// selected on that cluster's validation rows. Clusters with fewer than
/// p + 2 training rows get intercept-only models.
KMeansModel klime_fit(const Dataset& train, const Dataset& valid, int k, KlimeVariant variant,
                      const KlimeOptions& options = {});

std::vector<int> assign_clusters(const KMeansModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X);

Eigen::VectorXd predict_klime(const KMeansModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X);

}  // namespace limesup
