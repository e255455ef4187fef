#include "limesup/klime.hpp"

#include "growth.hpp"
#include "limesup/error.hpp"
#include "limesup/random.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace limesup {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kEigenFloor = 1e-10;

// Internally points and centroids are stored one per column (d x n, d x k)
// so distance loops run over contiguous memory.
double squared_distance(const MatrixXd& pt, Index i, const MatrixXd& ct, Index c) {
  const double* x = pt.col(i).data();
  const double* m = ct.col(c).data();
  double dist = 0.0;
  for (Index j = 0; j < pt.rows(); ++j) {
    const double diff = x[j] - m[j];
    dist += diff * diff;
  }
  return dist;
}

MatrixXd kmeans_plus_plus(const MatrixXd& pt, int k, Rng& rng) {
  const Index n = pt.cols();
  MatrixXd ct(pt.rows(), k);
  ct.col(0) = pt.col(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
  VectorXd nearest(n);
  for (Index i = 0; i < n; ++i) nearest[i] = squared_distance(pt, i, ct, 0);
  for (int c = 1; c < k; ++c) {
    const double total = nearest.sum();
    Index pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        acc += nearest[i];
        if (acc > target && nearest[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    ct.col(c) = pt.col(pick);
    for (Index i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], squared_distance(pt, i, ct, c));
  }
  return ct;
}

std::vector<int> nearest_columns(const MatrixXd& pt, const MatrixXd& ct) {
  std::vector<int> out(static_cast<std::size_t>(pt.cols()));
  for (Index i = 0; i < pt.cols(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < ct.cols(); ++c) {
      const double dist = squared_distance(pt, i, ct, c);
      if (dist < best_d) {
        best_d = dist;
        best = static_cast<int>(c);
      }
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

double assignment_cost(const MatrixXd& pt, const MatrixXd& ct, const std::vector<int>& assignments) {
  double wcss = 0.0;
  for (Index i = 0; i < pt.cols(); ++i) {
    wcss += squared_distance(pt, i, ct, assignments[static_cast<std::size_t>(i)]);
  }
  return wcss;
}

// Moves points into empty clusters; returns true when anything changed.
bool repair_empty(const MatrixXd& pt, MatrixXd& ct, std::vector<int>& assignments) {
  const auto k = static_cast<int>(ct.cols());
  std::vector<Index> counts(static_cast<std::size_t>(k), 0);
  for (int a : assignments) ++counts[static_cast<std::size_t>(a)];
  bool changed = false;
  for (int c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) continue;
    Index far = -1;
    double far_distance = -1.0;
    for (Index i = 0; i < pt.cols(); ++i) {
      const int a = assignments[static_cast<std::size_t>(i)];
      if (counts[static_cast<std::size_t>(a)] < 2) continue;
      const double d = squared_distance(pt, i, ct, a);
      if (d > far_distance) {
        far_distance = d;
        far = i;
      }
    }
    if (far < 0) throw NumericError("k-means: cannot repair an empty cluster");
    --counts[static_cast<std::size_t>(assignments[static_cast<std::size_t>(far)])];
    ++counts[static_cast<std::size_t>(c)];
    assignments[static_cast<std::size_t>(far)] = c;
    ct.col(c) = pt.col(far);
    changed = true;
  }
  return changed;
}

void update_centroids(const MatrixXd& pt, MatrixXd& ct, const std::vector<int>& assignments) {
  const Index k = ct.cols();
  MatrixXd sums = MatrixXd::Zero(pt.rows(), k);
  std::vector<Index> counts(static_cast<std::size_t>(k), 0);
  for (Index i = 0; i < pt.cols(); ++i) {
    const int a = assignments[static_cast<std::size_t>(i)];
    sums.col(a) += pt.col(i);
    ++counts[static_cast<std::size_t>(a)];
  }
  for (Index c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) {
      ct.col(c) = sums.col(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
  }
}

KMeansResult lloyd_columns(const MatrixXd& pt, MatrixXd ct, int max_iterations) {
  KMeansResult out;
  std::vector<int> previous;
  int iteration = 0;
  for (; iteration < max_iterations; ++iteration) {
    std::vector<int> assignments = nearest_columns(pt, ct);
    out.wcss_trace.push_back(assignment_cost(pt, ct, assignments));
    if (assignments == previous) break;
    repair_empty(pt, ct, assignments);
    update_centroids(pt, ct, assignments);
    previous = std::move(assignments);
  }
  out.assignments = nearest_columns(pt, ct);
  if (repair_empty(pt, ct, out.assignments)) update_centroids(pt, ct, out.assignments);
  out.wcss = assignment_cost(pt, ct, out.assignments);
  out.centroids = ct.transpose();
  out.iterations = iteration;
  return out;
}

MatrixXd standardized_features(const KMeansModel& model, const Eigen::Ref<const MatrixXd>& X) {
  if (X.cols() != static_cast<Index>(model.feature_names.size())) {
    throw DataError(fmt::format("cluster model expects {} feature columns, got {}", model.feature_names.size(), X.cols()));
  }
  return model.transform.apply(model.standardization.apply(X));
}

}  // namespace

std::string to_string(KlimeVariant variant) {
  switch (variant) {
    case KlimeVariant::Euclidean:
      return "E";
    case KlimeVariant::Mahalanobis:
      return "M";
    case KlimeVariant::Pca:
      return "P";
  }
  return "E";
}

KlimeVariant parse_variant(const std::string& text) {
  if (text == "E" || text == "e") return KlimeVariant::Euclidean;
  if (text == "M" || text == "m") return KlimeVariant::Mahalanobis;
  if (text == "P" || text == "p") return KlimeVariant::Pca;
  throw DataError(fmt::format("unknown KLIME variant '{}' (expected E, M or P)", text));
}

MatrixXd FeatureTransform::apply(const MatrixXd& standardized) const {
  if (standardized.cols() != matrix.rows()) throw DataError("transform: column count mismatch");
  return standardized * matrix;
}

FeatureTransform build_transform(const MatrixXd& standardized, KlimeVariant variant) {
  const Index n = standardized.rows();
  const Index k = standardized.cols();
  FeatureTransform out;
  out.variant = variant;
  if (variant == KlimeVariant::Euclidean) {
    out.matrix = MatrixXd::Identity(k, k);
    return out;
  }
  if (n < 2) throw DataError("build_transform: need at least 2 rows");
  const MatrixXd centered = standardized.rowwise() - standardized.colwise().mean();
  const MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("build_transform: eigendecomposition failed");
  // Eigen returns ascending order.
  const VectorXd values = eig.eigenvalues().reverse();
  const MatrixXd vectors = eig.eigenvectors().rowwise().reverse();
  const double top = std::max(std::abs(values[0]), kEigenFloor);
  if (values[k - 1] < -1e-8 * top) {
    throw NumericError("build_transform: covariance is not positive semidefinite");
  }
  out.eigenvalues = values;
  if (variant == KlimeVariant::Mahalanobis) {
    const VectorXd inv_sqrt = values.cwiseMax(kEigenFloor).cwiseSqrt().cwiseInverse();
    out.matrix = vectors * inv_sqrt.asDiagonal() * vectors.transpose();
    return out;
  }
  const VectorXd clipped = values.cwiseMax(0.0);
  const double total = clipped.sum();
  if (!(total > 0.0)) throw NumericError("build_transform: zero total variance");
  Index q = 0;
  double explained = 0.0;
  while (q < k) {
    explained += clipped[q];
    ++q;
    if (explained / total >= kPcaVarianceTarget) break;
  }
  out.matrix = vectors.leftCols(q);
  return out;
}

std::vector<int> nearest_centroid(const MatrixXd& points, const MatrixXd& centroids) {
  if (points.cols() != centroids.cols()) throw DataError("nearest_centroid: dimension mismatch");
  return nearest_columns(points.transpose(), centroids.transpose());
}

KMeansResult lloyd(const MatrixXd& points, MatrixXd centroids, int max_iterations) {
  if (points.cols() != centroids.cols()) throw DataError("lloyd: dimension mismatch");
  return lloyd_columns(points.transpose(), centroids.transpose(), max_iterations);
}

KMeansResult kmeans(const MatrixXd& points, int k, std::uint64_t seed, const KMeansOptions& options) {
  if (k < 1) throw DataError("kmeans: k must be at least 1");
  if (k > points.rows()) throw DataError(fmt::format("kmeans: k = {} exceeds {} points", k, points.rows()));
  if (options.n_init < 1 || options.max_iterations < 1) throw DataError("kmeans: invalid options");
  const MatrixXd pt = points.transpose();
  std::vector<KMeansResult> runs(static_cast<std::size_t>(options.n_init));
  detail::parallel_for(runs.size(), options.threads, [&](std::size_t r) {
    Rng rng(derive_seed(seed, r));
    runs[r] = lloyd_columns(pt, kmeans_plus_plus(pt, k, rng), options.max_iterations);
    runs[r].restart = static_cast<int>(r);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].wcss < runs[best].wcss) best = r;
  }
  return std::move(runs[best]);
}

KMeansModel klime_fit(const Dataset& train, const Dataset& valid, int k, KlimeVariant variant,
                      const KlimeOptions& options) {
  train.validate();
  if (valid.cols() != train.cols()) throw DataError("klime_fit: validation schema does not match training");
  KMeansModel model;
  model.variant = variant;
  model.feature_names = train.feature_names;
  model.model_vars = train.model_vars;
  model.seed = options.seed;
  model.n_init = options.kmeans.n_init;
  model.standardization = fit_standardization(train.features);
  model.transform = build_transform(model.standardization.apply(train.features), variant);

  const MatrixXd points = model.transform.apply(model.standardization.apply(train.features));
  KMeansResult clusters = kmeans(points, k, options.seed, options.kmeans);
  model.centroids = std::move(clusters.centroids);
  model.train_assignments = std::move(clusters.assignments);
  model.wcss = clusters.wcss;

  const std::vector<int> valid_assignments = assign_clusters(model, valid.features);
  const auto p = static_cast<Index>(train.model_vars.size());
  std::vector<RowSet> train_rows(static_cast<std::size_t>(k));
  std::vector<RowSet> valid_rows(static_cast<std::size_t>(k));
  for (Index i = 0; i < train.rows(); ++i) {
    train_rows[static_cast<std::size_t>(model.train_assignments[static_cast<std::size_t>(i)])].push_back(i);
  }
  for (const RowSet& rows : train_rows) model.cluster_sizes.push_back(static_cast<Index>(rows.size()));
  for (Index i = 0; i < valid.rows(); ++i) {
    valid_rows[static_cast<std::size_t>(valid_assignments[static_cast<std::size_t>(i)])].push_back(i);
  }
  model.models.resize(static_cast<std::size_t>(k));
  detail::parallel_for(model.models.size(), options.kmeans.threads, [&](std::size_t c) {
    const RowSet& tr = train_rows[c];
    const RowSet& va = valid_rows[c];
    VectorXd y(static_cast<Index>(tr.size()));
    for (std::size_t i = 0; i < tr.size(); ++i) y[static_cast<Index>(i)] = train.response[tr[i]];
    VectorXd yv(static_cast<Index>(va.size()));
    for (std::size_t i = 0; i < va.size(); ++i) yv[static_cast<Index>(i)] = valid.response[va[i]];
    model.models[c] =
        fit_lasso_selected(train.model_matrix(tr), y, valid.model_matrix(va), yv, options.lasso_grid_size, p + 2);
  });
  return model;
}

std::vector<int> assign_clusters(const KMeansModel& model, const Eigen::Ref<const MatrixXd>& X) {
  return nearest_centroid(standardized_features(model, X), model.centroids);
}

VectorXd predict_klime(const KMeansModel& model, const Eigen::Ref<const MatrixXd>& X) {
  const auto clusters = assign_clusters(model, X);
  VectorXd out(X.rows());
  for (Index i = 0; i < X.rows(); ++i) {
    const LinearModel& m = model.models[static_cast<std::size_t>(clusters[static_cast<std::size_t>(i)])];
    double value = m.intercept;
    for (std::size_t j = 0; j < model.model_vars.size(); ++j) {
      value += m.coefficients[static_cast<Index>(j)] * X(i, model.model_vars[j]);
    }
    out[i] = value;
  }
  return out;
}

}  // namespace limesup
