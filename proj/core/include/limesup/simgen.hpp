#pragma once

#include "limesup/data.hpp"

#include <Eigen/Core>

#include <cstdint>

namespace limesup {

/// Logistic benchmark with six independent standard normal features:
///   logit = -1 + 0.5 x1 + 1.5 (x2 - 1)_+ - 0.5 x3^2 + 0.5 x4 (x5 + x6)
struct SimConfig {
  Eigen::Index n = 50000;
  std::uint64_t seed = 1;
  /// Gaussian noise added to the analytic derivatives.
  double derivative_noise_sd = 0.0;
  /// Gaussian noise added to the logit to mimic black-box fitting error.
  double response_noise_sd = 0.0;
  SplitFractions fractions;

  void validate() const;
};

inline constexpr Eigen::Index kSimFeatures = 6;

double benchmark_logit(const Eigen::Ref<const Eigen::RowVectorXd>& x);

Eigen::VectorXd benchmark_logits(const Eigen::Ref<const Eigen::MatrixXd>& X);

/// Gradient of the logit. At the x2 = 1 kink the x2 derivative is 0.
Eigen::MatrixXd analytic_derivatives(const Eigen::Ref<const Eigen::MatrixXd>& X);

/// Features, responses (logits), analytic derivatives and Bernoulli labels.
/// Each quantity draws from its own seeded stream.
Dataset simulate_benchmark(const SimConfig& config);

}  // namespace limesup
