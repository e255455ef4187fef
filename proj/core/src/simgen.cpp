#include "limesup/simgen.hpp"

#include "limesup/error.hpp"
#include "limesup/random.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numeric>

namespace limesup {

using Eigen::Index;
using Eigen::MatrixXd;

namespace {

enum Stream : std::uint64_t { kFeatures = 11, kResponseNoise = 12, kDerivativeNoise = 13, kLabels = 14 };

void check_width(Index cols) {
  if (cols != kSimFeatures) throw DataError(fmt::format("the benchmark needs 6 feature columns, got {}", cols));
}

}  // namespace

void SimConfig::validate() const {
  if (n < 10) throw DataError(fmt::format("simulation needs n >= 10, got {}", n));
  if (!(derivative_noise_sd >= 0.0) || !(response_noise_sd >= 0.0)) {
    throw DataError("noise standard deviations must be non-negative");
  }
}

double benchmark_logit(const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  check_width(x.size());
  return -1.0 + 0.5 * x[0] + 1.5 * std::max(x[1] - 1.0, 0.0) - 0.5 * x[2] * x[2] + 0.5 * x[3] * (x[4] + x[5]);
}

Eigen::VectorXd benchmark_logits(const Eigen::Ref<const MatrixXd>& X) {
  check_width(X.cols());
  Eigen::VectorXd out(X.rows());
  for (Index i = 0; i < X.rows(); ++i) out[i] = benchmark_logit(X.row(i));
  return out;
}

MatrixXd analytic_derivatives(const Eigen::Ref<const MatrixXd>& X) {
  check_width(X.cols());
  MatrixXd d(X.rows(), kSimFeatures);
  for (Index i = 0; i < X.rows(); ++i) {
    d(i, 0) = 0.5;
    d(i, 1) = X(i, 1) > 1.0 ? 1.5 : 0.0;
    d(i, 2) = -X(i, 2);
    d(i, 3) = 0.5 * (X(i, 4) + X(i, 5));
    d(i, 4) = 0.5 * X(i, 3);
    d(i, 5) = 0.5 * X(i, 3);
  }
  return d;
}

Dataset simulate_benchmark(const SimConfig& config) {
  config.validate();
  const Index n = config.n;
  Dataset ds;
  ds.feature_names = {"x1", "x2", "x3", "x4", "x5", "x6"};
  ds.features.resize(n, kSimFeatures);
  Rng feature_rng(derive_seed(config.seed, kFeatures));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < kSimFeatures; ++j) ds.features(i, j) = feature_rng.normal();
  }

  const Eigen::VectorXd logits = benchmark_logits(ds.features);
  ds.response = logits;
  if (config.response_noise_sd > 0.0) {
    Rng noise(derive_seed(config.seed, kResponseNoise));
    for (Index i = 0; i < n; ++i) ds.response[i] += config.response_noise_sd * noise.normal();
  }

  MatrixXd derivatives = analytic_derivatives(ds.features);
  if (config.derivative_noise_sd > 0.0) {
    Rng noise(derive_seed(config.seed, kDerivativeNoise));
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < kSimFeatures; ++j) derivatives(i, j) += config.derivative_noise_sd * noise.normal();
    }
  }
  ds.derivatives = std::move(derivatives);

  Eigen::VectorXi labels(n);
  Rng label_rng(derive_seed(config.seed, kLabels));
  for (Index i = 0; i < n; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits[i]));
    labels[i] = label_rng.uniform() < p ? 1 : 0;
  }
  ds.labels = std::move(labels);

  ds.model_vars.resize(kSimFeatures);
  std::iota(ds.model_vars.begin(), ds.model_vars.end(), 0);
  ds.partition_vars = ds.model_vars;
  ds.validate();
  return ds;
}

}  // namespace limesup
