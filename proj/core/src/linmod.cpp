#include "limesup/linmod.hpp"

#include "limesup/error.hpp"

#include <Eigen/Cholesky>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace limesup {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

void finish_stats(LinearModel& model, const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y) {
  const VectorXd residual = y - predict(model, X);
  model.sse = residual.squaredNorm();
  model.r2 = r_squared(model.sse, total_sum_of_squares(y));
  model.n = y.size();
}

// Column-standardized, response-centered copy of (X, y) shared by every
// coordinate-descent solve on the same sample.
class LassoProblem {
 public:
  LassoProblem(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y)
      : n_(X.rows()), p_(X.cols()) {
    if (n_ < 2) throw DataError("fit_lasso needs at least 2 rows");
    if (y.size() != n_) throw DataError("fit_lasso: X and y row counts differ");
    y_mean_ = y.mean();
    yc_ = y.array() - y_mean_;
    mean_ = X.colwise().mean().transpose();
    scale_.resize(p_);
    z_ = X.rowwise() - mean_.transpose();
    active_.assign(static_cast<std::size_t>(p_), false);
    col_ss_ = VectorXd::Zero(p_);
    for (Index j = 0; j < p_; ++j) {
      const double ss = z_.col(j).squaredNorm();
      const double sd = std::sqrt(ss / static_cast<double>(n_ - 1));
      scale_[j] = sd;
      if (sd > 0.0 && std::isfinite(sd)) {
        z_.col(j) /= sd;
        col_ss_[j] = z_.col(j).squaredNorm() / static_cast<double>(n_);
        active_[static_cast<std::size_t>(j)] = col_ss_[j] > 0.0;
      } else {
        z_.col(j).setZero();
      }
    }
  }

  double lambda_max() const {
    double out = 0.0;
    for (Index j = 0; j < p_; ++j) {
      if (!active_[static_cast<std::size_t>(j)]) continue;
      out = std::max(out, std::abs(z_.col(j).dot(yc_)) / static_cast<double>(n_));
    }
    return out;
  }

  double objective(const VectorXd& beta, double lambda) const {
    const VectorXd r = yc_ - z_ * beta;
    return r.squaredNorm() / (2.0 * static_cast<double>(n_)) + lambda * beta.lpNorm<1>();
  }

  // Coordinate descent from `beta` (standardized scale), in place.
  bool solve(VectorXd& beta, double lambda, const LassoOptions& options) const {
    VectorXd r = yc_ - z_ * beta;
    const auto n = static_cast<double>(n_);
    for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
      double max_change = 0.0;
      for (Index j = 0; j < p_; ++j) {
        if (!active_[static_cast<std::size_t>(j)]) continue;
        const double old = beta[j];
        // Same rounding as lambda_max() at beta = 0, so lambda_max gives an empty support.
        const double rho = z_.col(j).dot(r) / n + col_ss_[j] * old;
        const double updated = soft_threshold(rho, lambda) / col_ss_[j];
        if (updated != old) {
          r.noalias() -= (updated - old) * z_.col(j);
          beta[j] = updated;
          max_change = std::max(max_change, std::abs(updated - old));
        }
      }
      if (options.objective_trace != nullptr) options.objective_trace->push_back(objective(beta, lambda));
      if (max_change < options.tolerance) return true;
    }
    return false;
  }

  LinearModel to_model(const VectorXd& beta, double lambda, bool converged) const {
    LinearModel model;
    model.coefficients = VectorXd::Zero(p_);
    for (Index j = 0; j < p_; ++j) {
      if (active_[static_cast<std::size_t>(j)]) model.coefficients[j] = beta[j] / scale_[j];
    }
    model.intercept = y_mean_ - mean_.dot(model.coefficients);
    model.lambda = lambda;
    model.converged = converged;
    return model;
  }

  VectorXd standardized(const LinearModel& model) const {
    VectorXd beta = VectorXd::Zero(p_);
    for (Index j = 0; j < p_; ++j) {
      if (active_[static_cast<std::size_t>(j)]) beta[j] = model.coefficients[j] * scale_[j];
    }
    return beta;
  }

  Index cols() const { return p_; }

 private:
  Index n_;
  Index p_;
  double y_mean_ = 0.0;
  VectorXd yc_;
  VectorXd mean_;
  VectorXd scale_;
  VectorXd col_ss_;
  MatrixXd z_;
  std::vector<bool> active_;
};

template <typename Score>
double select_on_grid(const LassoProblem& problem, int grid_size, Score&& score) {
  if (grid_size < 1) throw DataError("lasso grid size must be at least 1");
  const double lmax = problem.lambda_max();
  if (lmax == 0.0) return 0.0;
  const auto grid = lambda_grid(lmax, grid_size);
  VectorXd beta = VectorXd::Zero(problem.cols());
  double best_lambda = grid.front();
  double best_score = std::numeric_limits<double>::infinity();
  // Grid runs from the largest lambda down, so strict improvement keeps the
  // larger lambda on ties.
  for (double lambda : grid) {
    const bool converged = problem.solve(beta, lambda, {});
    const double s = score(problem.to_model(beta, lambda, converged));
    if (s < best_score) {
      best_score = s;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

}  // namespace

Index LinearModel::nonzero_count() const {
  return (coefficients.array() != 0.0).count();
}

double r_squared(double sse, double sst) {
  if (sst == 0.0) return sse < 1e-12 ? 1.0 : 0.0;
  return 1.0 - sse / sst;
}

double total_sum_of_squares(const Eigen::Ref<const VectorXd>& y) {
  if (y.size() == 0) return 0.0;
  return (y.array() - y.mean()).square().sum();
}

LinearModel fit_ols(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y) {
  const Index n = X.rows();
  const Index p = X.cols();
  if (y.size() != n) throw DataError("fit_ols: X and y row counts differ");
  if (n < p + 1) throw DataError(fmt::format("fit_ols: {} rows cannot fit {} coefficients and an intercept", n, p));

  LinearModel model;
  const double y_mean = y.mean();
  if (p == 0) {
    model.intercept = y_mean;
    model.coefficients = VectorXd::Zero(0);
    finish_stats(model, X, y);
    return model;
  }

  const VectorXd x_mean = X.colwise().mean().transpose();
  const MatrixXd xc = X.rowwise() - x_mean.transpose();
  const VectorXd yc = y.array() - y_mean;
  MatrixXd gram = MatrixXd::Zero(p, p);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(xc.transpose());
  gram = gram.selfadjointView<Eigen::Lower>();
  const VectorXd rhs = xc.transpose() * yc;

  Eigen::LDLT<MatrixXd> ldlt(gram);
  const VectorXd d = ldlt.vectorD();
  const double d_max = d.cwiseAbs().maxCoeff();
  const bool deficient = ldlt.info() != Eigen::Success || d_max == 0.0 || d.minCoeff() <= 1e-12 * d_max;
  if (deficient) {
    double jitter = 1e-8 * gram.trace() / static_cast<double>(p);
    if (!(jitter > 0.0)) jitter = 1e-8;
    gram.diagonal().array() += jitter;
    ldlt.compute(gram);
    if (ldlt.info() != Eigen::Success) throw NumericError("fit_ols: normal equations could not be solved");
  }
  model.coefficients = ldlt.solve(rhs);
  if (!model.coefficients.allFinite()) throw NumericError("fit_ols: non-finite coefficients");
  model.intercept = y_mean - x_mean.dot(model.coefficients);
  finish_stats(model, X, y);
  return model;
}

LinearModel fit_intercept_only(const Eigen::Ref<const VectorXd>& y, Index p) {
  if (y.size() == 0) throw DataError("fit_intercept_only: empty sample");
  LinearModel model;
  model.intercept = y.mean();
  model.coefficients = VectorXd::Zero(p);
  model.sse = total_sum_of_squares(y);
  model.r2 = r_squared(model.sse, model.sse);
  model.n = y.size();
  model.intercept_only = true;
  return model;
}

LinearModel fit_ols_or_intercept(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y) {
  if (X.rows() < X.cols() + 1) return fit_intercept_only(y, X.cols());
  return fit_ols(X, y);
}

LinearModel fit_lasso(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y, double lambda,
                      const LassoOptions& options) {
  if (!(lambda >= 0.0)) throw DataError("fit_lasso: lambda must be non-negative");
  const LassoProblem problem(X, y);
  VectorXd beta = VectorXd::Zero(problem.cols());
  const bool converged = problem.solve(beta, lambda, options);
  LinearModel model = problem.to_model(beta, lambda, converged);
  finish_stats(model, X, y);
  return model;
}

double lasso_lambda_max(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y) {
  return LassoProblem(X, y).lambda_max();
}

std::vector<double> lambda_grid(double lambda_max, int grid_size) {
  if (grid_size < 1) throw DataError("lasso grid size must be at least 1");
  std::vector<double> grid(static_cast<std::size_t>(grid_size));
  grid[0] = lambda_max;
  for (int g = 1; g < grid_size; ++g) {
    const double t = static_cast<double>(g) / static_cast<double>(grid_size - 1);
    grid[static_cast<std::size_t>(g)] = lambda_max * std::pow(10.0, -4.0 * t);
  }
  return grid;
}

double lasso_objective(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y,
                       const LinearModel& model) {
  const LassoProblem problem(X, y);
  return problem.objective(problem.standardized(model), model.lambda);
}

double select_lambda(const Eigen::Ref<const MatrixXd>& train_X, const Eigen::Ref<const VectorXd>& train_y,
                     const Eigen::Ref<const MatrixXd>& valid_X, const Eigen::Ref<const VectorXd>& valid_y,
                     int grid_size) {
  if (train_X.rows() == 0 || valid_X.rows() == 0) throw DataError("select_lambda: empty sample");
  if (valid_X.cols() != train_X.cols() || valid_y.size() != valid_X.rows()) {
    throw DataError("select_lambda: validation shape mismatch");
  }
  const LassoProblem problem(train_X, train_y);
  return select_on_grid(problem, grid_size, [&](const LinearModel& model) {
    return (valid_y - predict(model, valid_X)).squaredNorm();
  });
}

double select_lambda_bic(const Eigen::Ref<const MatrixXd>& X, const Eigen::Ref<const VectorXd>& y, int grid_size) {
  const LassoProblem problem(X, y);
  const auto n = static_cast<double>(X.rows());
  return select_on_grid(problem, grid_size, [&](const LinearModel& model) {
    const double sse = std::max((y - predict(model, X)).squaredNorm(), std::numeric_limits<double>::min());
    const auto k = static_cast<double>(model.nonzero_count() + 1);
    return n * std::log(sse / n) + k * std::log(n);
  });
}

LinearModel fit_lasso_selected(const Eigen::Ref<const MatrixXd>& train_X,
                               const Eigen::Ref<const VectorXd>& train_y,
                               const Eigen::Ref<const MatrixXd>& valid_X,
                               const Eigen::Ref<const VectorXd>& valid_y, int grid_size, Index min_rows) {
  if (train_X.rows() < std::max<Index>(min_rows, 2)) return fit_intercept_only(train_y, train_X.cols());
  const double lambda = valid_X.rows() > 0 ? select_lambda(train_X, train_y, valid_X, valid_y, grid_size)
                                           : select_lambda_bic(train_X, train_y, grid_size);
  return fit_lasso(train_X, train_y, lambda);
}

ConstantModel fit_constant(const Eigen::Ref<const MatrixXd>& D) {
  if (D.rows() < 1) throw DataError("fit_constant: empty sample");
  ConstantModel model;
  model.n = D.rows();
  model.means = D.colwise().mean().transpose();
  model.sse_per_column = (D.rowwise() - model.means.transpose()).colwise().squaredNorm().transpose();
  return model;
}

VectorXd predict(const LinearModel& model, const Eigen::Ref<const MatrixXd>& X) {
  if (X.cols() != model.coefficients.size()) {
    throw DataError(fmt::format("predict: expected {} columns, got {}", model.coefficients.size(), X.cols()));
  }
  return (X * model.coefficients).array() + model.intercept;
}

// Only the row count of X matters for a constant model.
MatrixXd predict(const ConstantModel& model, const Eigen::Ref<const MatrixXd>& X) {
  return model.means.transpose().replicate(X.rows(), 1);
}

}  // namespace limesup
