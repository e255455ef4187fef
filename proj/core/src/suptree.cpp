#include "limesup/suptree.hpp"

#include "growth.hpp"
#include "limesup/error.hpp"

#include <Eigen/Cholesky>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace limesup {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kTrimLow = 0.1;
constexpr double kTrimHigh = 0.9;
constexpr double kScoreRidge = 1e-10;
// A node whose linear fit leaves less than this fraction of its total sum of
// squares is treated as exact; split scores below it are rounding noise.
constexpr double kExactFraction = 1e-10;

// Local positions 0..n-1 of `rows` ordered by (value, global row index).
std::vector<Index> local_order(const MatrixXd& features, int variable, const RowSet& rows) {
  std::vector<Index> order(rows.size());
  std::iota(order.begin(), order.end(), Index{0});
  const auto col = features.col(variable);
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double va = col[rows[static_cast<std::size_t>(a)]];
    const double vb = col[rows[static_cast<std::size_t>(b)]];
    return va < vb || (va == vb && rows[static_cast<std::size_t>(a)] < rows[static_cast<std::size_t>(b)]);
  });
  return order;
}

VectorXd gather_response(const Dataset& ds, const RowSet& rows) {
  VectorXd y(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) y[static_cast<Index>(i)] = ds.response[rows[i]];
  return y;
}

// Whitened score rows L^{-1} psi_i for the node model.
MatrixXd whitened_scores(const RowSet& rows, const Dataset& ds, const LinearModel& model) {
  const MatrixXd X = ds.model_matrix(rows);
  const VectorXd residual = gather_response(ds, rows) - predict(model, X);
  const Index n = X.rows();
  const Index d = X.cols() + 1;
  MatrixXd psi(n, d);
  psi.col(0) = residual;
  psi.rightCols(d - 1) = X.array().colwise() * residual.array();
  MatrixXd J = (psi.transpose() * psi) / static_cast<double>(n);
  J.diagonal().array() += kScoreRidge;
  Eigen::LLT<MatrixXd> llt(J);
  if (llt.info() != Eigen::Success) throw NumericError("fluctuation filter: score covariance is not positive definite");
  return llt.matrixL().solve(psi.transpose()).transpose();
}

double suplm_from_scores(const MatrixXd& phi, const std::vector<Index>& order) {
  const Index n = phi.rows();
  const auto lo = std::max<Index>(1, static_cast<Index>(std::ceil(kTrimLow * static_cast<double>(n))));
  const auto hi = std::min<Index>(n - 1, static_cast<Index>(std::floor(kTrimHigh * static_cast<double>(n))));
  VectorXd cum = VectorXd::Zero(phi.cols());
  double best = 0.0;
  const auto nd = static_cast<double>(n);
  for (Index t = 1; t <= hi; ++t) {
    cum += phi.row(order[static_cast<std::size_t>(t - 1)]).transpose();
    if (t < lo) continue;
    const double frac = static_cast<double>(t) / nd;
    best = std::max(best, cum.squaredNorm() / nd / (frac * (1.0 - frac)));
  }
  return best;
}

bool has_two_values(const MatrixXd& features, int variable, const RowSet& rows) {
  if (rows.empty()) return false;
  const double first = features(rows.front(), variable);
  return std::any_of(rows.begin(), rows.end(), [&](Index r) { return features(r, variable) != first; });
}

// SSE of an OLS fit with intercept from raw moment matrix M of augmented rows
// (1, x, y).
double sse_from_moments(const MatrixXd& M) {
  const double n = M(0, 0);
  const Index q = M.rows() - 1;  // p + 1 (x columns and y)
  const Index p = q - 1;
  const VectorXd s = M.row(0).tail(q).transpose();
  MatrixXd C = M.bottomRightCorner(q, q) - s * s.transpose() / n;
  const double cyy = std::max(C(p, p), 0.0);
  if (n < static_cast<double>(p + 1) || p == 0) return cyy;
  MatrixXd Cxx = C.topLeftCorner(p, p);
  const VectorXd cxy = C.col(p).head(p);
  Eigen::LDLT<MatrixXd> ldlt(Cxx);
  const VectorXd diag = ldlt.vectorD();
  const double dmax = diag.cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || dmax == 0.0 || diag.minCoeff() <= 1e-12 * dmax) {
    double jitter = 1e-8 * Cxx.trace() / static_cast<double>(p);
    if (!(jitter > 0.0)) jitter = 1e-8;
    Cxx.diagonal().array() += jitter;
    ldlt.compute(Cxx);
  }
  const VectorXd beta = ldlt.solve(cxy);
  return std::max(cyy - cxy.dot(beta), 0.0);
}

double exact_child_sse(const Dataset& ds, const RowSet& rows) {
  return fit_ols_or_intercept(ds.model_matrix(rows), gather_response(ds, rows)).sse;
}

std::optional<detail::ScoredSplit> scan_variable(const RowSet& rows, const Dataset& ds, int variable,
                                                 int n_quantiles, Index min_child) {
  const auto order = local_order(ds.features, variable, rows);
  const auto n = static_cast<Index>(rows.size());
  std::vector<double> values(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    values[i] = ds.features(rows[static_cast<std::size_t>(order[i])], variable);
  }
  auto candidates = detail::quantile_candidates(values, n_quantiles);
  std::erase_if(candidates, [&](const auto& c) { return c.second < min_child || n - c.second < min_child; });
  if (candidates.empty()) return std::nullopt;

  const MatrixXd X = ds.model_matrix(rows);
  const VectorXd y = gather_response(ds, rows);
  const Index p = X.cols();
  const VectorXd x_center = X.colwise().mean().transpose();
  const double y_center = y.mean();
  MatrixXd A(n, p + 2);
  A.col(0).setOnes();
  A.middleCols(1, p) = X.rowwise() - x_center.transpose();
  A.col(p + 1) = y.array() - y_center;

  MatrixXd total = MatrixXd::Zero(p + 2, p + 2);
  total.selfadjointView<Eigen::Lower>().rankUpdate(A.transpose());
  total = total.selfadjointView<Eigen::Lower>();

  MatrixXd left = MatrixXd::Zero(p + 2, p + 2);
  Index added = 0;
  std::optional<detail::ScoredSplit> best;
  for (const auto& [threshold, count] : candidates) {
    for (; added < count; ++added) {
      const auto a = A.row(order[static_cast<std::size_t>(added)]);
      left.noalias() += a.transpose() * a;
    }
    const double score = sse_from_moments(left) + sse_from_moments(total - left);
    if (!best || score < best->child_sse) best = detail::ScoredSplit{SplitSpec{variable, threshold}, score};
  }
  return best;
}

std::optional<detail::ScoredSplit> search_response(const RowSet& rows, const Dataset& ds,
                                                   std::span<const int> variables, const GrowthConfig& config) {
  const Index min_child = config.resolved_min_node_size(static_cast<Index>(ds.model_vars.size()));
  std::vector<std::optional<detail::ScoredSplit>> per_variable(variables.size());
  detail::parallel_for(variables.size(), config.threads, [&](std::size_t i) {
    per_variable[i] = scan_variable(rows, ds, variables[i], config.n_quantiles, min_child);
  });
  auto best = detail::reduce_candidates(per_variable);
  if (!best) return best;
  RowSet left;
  RowSet right;
  for (Index r : rows) (best->split.goes_left(ds.features(r, best->split.variable)) ? left : right).push_back(r);
  best->child_sse = exact_child_sse(ds, left) + exact_child_sse(ds, right);
  return best;
}

class ResponseCriterion final : public detail::GrowthCriterion {
 public:
  ResponseCriterion(const Dataset& ds, const GrowthConfig& config) : ds_(ds), config_(config) {}

  void fit_node(Node& node) const override {
    const MatrixXd X = ds_.model_matrix(node.rows);
    const VectorXd y = gather_response(ds_, node.rows);
    node.model = fit_ols_or_intercept(X, y);
    node.sse = node.model->sse;
    node.fit_r2 = node.model->r2;
  }

  bool is_exact(const Node& node) const override {
    return node.sse <= kExactFraction * total_sum_of_squares(gather_response(ds_, node.rows));
  }

  std::vector<int> rank_variables(const Node& node, int m) const override {
    const auto ranked = fluctuation_filter(node.rows, ds_, *node.model, m, ds_.partition_vars, config_.threads);
    std::vector<int> out;
    for (const auto& v : ranked) out.push_back(v.variable);
    return out;
  }

  std::optional<detail::ScoredSplit> best_split(const Node& node, std::span<const int> variables) const override {
    return search_response(node.rows, ds_, variables, config_);
  }

 private:
  const Dataset& ds_;
  const GrowthConfig& config_;
};

double response_validation_sse(const Node& evaluated, const Node&, const Dataset& valid, const RowSet& rows) {
  if (rows.empty()) return 0.0;
  if (!evaluated.model) throw DataError(fmt::format("node {} has no response model", evaluated.id));
  const MatrixXd X = valid.model_matrix(rows);
  return (gather_response(valid, rows) - predict(*evaluated.model, X)).squaredNorm();
}

}  // namespace

namespace detail {
double derivative_validation_sse(const Node& evaluated, const Node& reference, const Dataset& valid,
                                 const RowSet& rows);
}

double suplm_statistic(const RowSet& node_rows, const Dataset& ds, const LinearModel& model, int variable) {
  if (node_rows.size() < 2) throw DataError("suplm_statistic: node needs at least 2 rows");
  const MatrixXd phi = whitened_scores(node_rows, ds, model);
  return suplm_from_scores(phi, local_order(ds.features, variable, node_rows));
}

std::vector<VariableScore> fluctuation_filter(const RowSet& node_rows, const Dataset& ds, const LinearModel& model,
                                              int m, std::span<const int> candidates, int threads) {
  if (node_rows.size() < 2) throw DataError("fluctuation_filter: node needs at least 2 rows");
  if (model.coefficients.size() != static_cast<Index>(ds.model_vars.size())) {
    throw DataError("fluctuation_filter: model does not match model_vars");
  }
  std::vector<int> vars(candidates.begin(), candidates.end());
  if (vars.empty()) vars = ds.partition_vars;
  std::erase_if(vars, [&](int v) { return !has_two_values(ds.features, v, node_rows); });
  if (vars.empty()) return {};

  const MatrixXd phi = whitened_scores(node_rows, ds, model);
  std::vector<VariableScore> scores(vars.size());
  detail::parallel_for(vars.size(), threads, [&](std::size_t i) {
    scores[i] = {vars[i], suplm_from_scores(phi, local_order(ds.features, vars[i], node_rows))};
  });
  std::sort(scores.begin(), scores.end(), [](const VariableScore& a, const VariableScore& b) {
    return a.statistic > b.statistic || (a.statistic == b.statistic && a.variable < b.variable);
  });
  if (m < static_cast<int>(scores.size())) scores.resize(static_cast<std::size_t>(std::max(m, 0)));
  return scores;
}

std::optional<SplitResult> exhaustive_split_search(const RowSet& node_rows, const Dataset& ds,
                                                   std::span<const int> variables, const GrowthConfig& config) {
  if (variables.empty()) throw DataError("exhaustive_split_search: no candidate variables");
  const LinearModel parent = fit_ols_or_intercept(ds.model_matrix(node_rows), gather_response(ds, node_rows));
  if (parent.sse <= kExactFraction * total_sum_of_squares(gather_response(ds, node_rows))) return std::nullopt;
  const auto best = search_response(node_rows, ds, variables, config);
  if (!best) return std::nullopt;
  const double improvement = parent.sse - best->child_sse;
  if (!(improvement > 0.0) || improvement < config.min_relative_improvement * parent.sse) return std::nullopt;
  return SplitResult{best->split, improvement};
}

Tree grow_tree(const Dataset& train, const GrowthConfig& config) {
  config.validate();
  train.validate();
  const Index min_node = config.resolved_min_node_size(static_cast<Index>(train.model_vars.size()));
  if (train.rows() < 2 * min_node) {
    throw DataError(fmt::format("dataset too small: {} rows, need at least {}", train.rows(), 2 * min_node));
  }
  const ResponseCriterion criterion(train, config);
  return detail::grow_with(train, config, criterion, TreeKind::Response, min_node);
}

Tree prune_tree(const Tree& tree, const Dataset& valid, const GrowthConfig& config) {
  if (tree.kind == TreeKind::Response) {
    return detail::prune_with(tree, valid, config.prune_threshold, response_validation_sse);
  }
  if (!valid.has_derivatives()) throw DataError("prune_tree: derivative tree needs validation derivatives");
  return detail::prune_with(tree, valid, config.prune_threshold, detail::derivative_validation_sse);
}

Tree refit_terminals_lasso(const Tree& tree, const Dataset& train, const Dataset& valid, const GrowthConfig& config) {
  return detail::refit_leaves(tree, train, valid, config.lasso_grid_size);
}

Tree fit_response_tree(const Dataset& train, const Dataset& valid, const GrowthConfig& config) {
  const Tree grown = grow_tree(train, config);
  const Tree pruned = prune_tree(grown, valid, config);
  return refit_terminals_lasso(pruned, train, valid, config);
}

}  // namespace limesup
