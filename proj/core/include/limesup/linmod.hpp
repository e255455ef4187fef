#pragma once

#include <Eigen/Core>

#include <vector>

namespace limesup {

/// Affine model y ~ intercept + X * coefficients, with fit statistics on the
/// sample it was fitted to.
struct LinearModel {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;
  double sse = 0.0;
  double r2 = 0.0;
  Eigen::Index n = 0;
  double lambda = 0.0;
  /// False only when coordinate descent hit its sweep cap.
  bool converged = true;
  /// True when the node was too small for a full fit.
  bool intercept_only = false;

  Eigen::Index nonzero_count() const;
};

/// Per-column means of a response matrix (piecewise-constant node model).
struct ConstantModel {
  Eigen::VectorXd means;
  Eigen::VectorXd sse_per_column;
  Eigen::Index n = 0;

  double total_sse() const { return sse_per_column.sum(); }
};

/// 1 - sse/sst, with sst = 0 mapped to 1 when sse < 1e-12 and 0 otherwise.
double r_squared(double sse, double sst);

/// Sum of squared deviations from the mean.
double total_sum_of_squares(const Eigen::Ref<const Eigen::VectorXd>& y);

/// Least squares with intercept. Requires n >= p + 1; on a rank-deficient
/// design the normal equations get a diagonal jitter of 1e-8 * trace / p.
LinearModel fit_ols(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y);

/// Mean of y with zero slopes; what small nodes fall back to.
LinearModel fit_intercept_only(const Eigen::Ref<const Eigen::VectorXd>& y, Eigen::Index p);

/// fit_ols when n >= p + 1, otherwise fit_intercept_only.
LinearModel fit_ols_or_intercept(const Eigen::Ref<const Eigen::MatrixXd>& X,
                                 const Eigen::Ref<const Eigen::VectorXd>& y);

struct LassoOptions {
  double tolerance = 1e-7;
  int max_sweeps = 10000;
  /// When set, receives the objective after every full sweep.
  std::vector<double>* objective_trace = nullptr;
};

/// Minimizes (1/2n) * SSE + lambda * sum |b_j| over standardized columns
/// (sample sd), with an unpenalized intercept; coefficients are returned on
/// the original scale. Constant columns get coefficient 0.
LinearModel fit_lasso(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                      double lambda, const LassoOptions& options = {});

/// Smallest penalty with an all-zero solution: max_j |z_j' (y - ybar)| / n.
double lasso_lambda_max(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y);

/// `grid_size` log-spaced values from lambda_max down to 1e-4 * lambda_max.
std::vector<double> lambda_grid(double lambda_max, int grid_size);

/// Penalized objective of a model on (X, y) in the standardized scale used by
/// fit_lasso.
double lasso_objective(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                       const LinearModel& model);

/// Grid value minimizing validation SSE; ties go to the larger lambda.
double select_lambda(const Eigen::Ref<const Eigen::MatrixXd>& train_X,
                     const Eigen::Ref<const Eigen::VectorXd>& train_y,
                     const Eigen::Ref<const Eigen::MatrixXd>& valid_X,
                     const Eigen::Ref<const Eigen::VectorXd>& valid_y, int grid_size);

/// Grid value minimizing n * log(SSE / n) + k * log(n) on the training rows,
/// k = nonzero coefficients + 1. Used when no validation rows exist.
double select_lambda_bic(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                         int grid_size);

/// LASSO with lambda from select_lambda (or BIC when the validation sample
/// is empty); falls back to intercept-only below `min_rows` training rows.
LinearModel fit_lasso_selected(const Eigen::Ref<const Eigen::MatrixXd>& train_X,
                               const Eigen::Ref<const Eigen::VectorXd>& train_y,
                               const Eigen::Ref<const Eigen::MatrixXd>& valid_X,
                               const Eigen::Ref<const Eigen::VectorXd>& valid_y, int grid_size,
                               Eigen::Index min_rows);

ConstantModel fit_constant(const Eigen::Ref<const Eigen::MatrixXd>& D);

Eigen::VectorXd predict(const LinearModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X);
Eigen::MatrixXd predict(const ConstantModel& model, const Eigen::Ref<const Eigen::MatrixXd>& X);

}  // namespace limesup
