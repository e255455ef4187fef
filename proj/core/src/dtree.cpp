#include "limesup/dtree.hpp"

#include "growth.hpp"
#include "limesup/error.hpp"
#include "limesup/linmod.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace limesup {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kScoreRidge = 1e-10;
constexpr double kExactFraction = 1e-12;

void require_derivatives(const Dataset& ds) {
  if (!ds.has_derivatives()) throw DataError("derivatives required");
}

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

MatrixXd centered(const MatrixXd& values) { return values.rowwise() - values.colwise().mean(); }

std::optional<detail::ScoredSplit> scan_variable(const RowSet& rows, const Dataset& ds, const MatrixXd& deviations,
                                                 int variable, int n_quantiles, Index min_child) {
  const auto order = local_order(ds.features, variable, rows);
  const auto n = static_cast<Index>(rows.size());
  std::vector<double> values(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    values[i] = ds.features(rows[static_cast<std::size_t>(order[i])], variable);
  }
  auto candidates = detail::quantile_candidates(values, n_quantiles);
  std::erase_if(candidates, [&](const auto& c) { return c.second < min_child || n - c.second < min_child; });
  if (candidates.empty()) return std::nullopt;

  const VectorXd total_sum = deviations.colwise().sum().transpose();
  const VectorXd total_sq = deviations.colwise().squaredNorm().transpose();
  VectorXd sum = VectorXd::Zero(deviations.cols());
  VectorXd sq = VectorXd::Zero(deviations.cols());
  Index added = 0;
  std::optional<detail::ScoredSplit> best;
  for (const auto& [threshold, count] : candidates) {
    for (; added < count; ++added) {
      const auto row = deviations.row(order[static_cast<std::size_t>(added)]).transpose();
      sum += row;
      sq += row.cwiseProduct(row);
    }
    const auto nl = static_cast<double>(count);
    const auto nr = static_cast<double>(n - count);
    const VectorXd right_sum = total_sum - sum;
    const double left_sse = (sq.array() - sum.array().square() / nl).max(0.0).sum();
    const double right_sse = ((total_sq - sq).array() - right_sum.array().square() / nr).max(0.0).sum();
    const double score = left_sse + right_sse;
    if (!best || score < best->child_sse) best = detail::ScoredSplit{SplitSpec{variable, threshold}, score};
  }
  return best;
}

std::optional<detail::ScoredSplit> search_derivatives(const RowSet& rows, const Dataset& ds,
                                                      const ScaledDerivatives& scaled,
                                                      std::span<const int> variables, const GrowthConfig& config) {
  const Index min_child = config.resolved_min_node_size(static_cast<Index>(ds.model_vars.size()));
  const MatrixXd deviations = centered(scaled.values);
  std::vector<std::optional<detail::ScoredSplit>> per_variable(variables.size());
  detail::parallel_for(variables.size(), config.threads, [&](std::size_t i) {
    per_variable[i] = scan_variable(rows, ds, deviations, variables[i], config.n_quantiles, min_child);
  });
  auto best = detail::reduce_candidates(per_variable);
  if (!best) return best;
  std::vector<Index> left;
  std::vector<Index> right;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    (best->split.goes_left(ds.features(rows[i], best->split.variable)) ? left : right).push_back(static_cast<Index>(i));
  }
  best->child_sse = fit_constant(scaled.values(left, Eigen::all)).total_sse() +
                    fit_constant(scaled.values(right, Eigen::all)).total_sse();
  return best;
}

DerivativeSummary summarize(const RowSet& rows, const Dataset& ds, const ScaledDerivatives& scaled) {
  const ConstantModel model = fit_constant(scaled.values);
  DerivativeSummary out;
  out.sd = scaled.sd;
  out.scaled_means = model.means;
  out.scaled_sse = model.sse_per_column;
  out.raw_means = VectorXd::Zero(ds.cols());
  for (Index r : rows) out.raw_means += ds.derivatives->row(r).transpose();
  out.raw_means /= static_cast<double>(rows.size());
  return out;
}

class DerivativeCriterion final : public detail::GrowthCriterion {
 public:
  DerivativeCriterion(const Dataset& ds, const GrowthConfig& config) : ds_(ds), config_(config) {}

  void fit_node(Node& node) const override {
    const ScaledDerivatives scaled = scale_derivatives(node.rows, ds_);
    node.derivative = summarize(node.rows, ds_, scaled);
    node.sse = node.derivative->scaled_sse.sum();
    node.fit_r2 = std::numeric_limits<double>::quiet_NaN();
  }

  bool is_exact(const Node& node) const override {
    const double second_moment = node.sse + node.derivative->scaled_means.squaredNorm() * static_cast<double>(node.n);
    return node.sse <= kExactFraction * second_moment;
  }

  std::vector<int> rank_variables(const Node& node, int m) const override {
    const ScaledDerivatives scaled = scale_derivatives(node.rows, ds_);
    const auto ranked =
        derivative_fluctuation_filter(node.rows, ds_, scaled, m, ds_.partition_vars, config_.threads);
    std::vector<int> out;
    for (const auto& v : ranked) out.push_back(v.variable);
    return out;
  }

  std::optional<detail::ScoredSplit> best_split(const Node& node, std::span<const int> variables) const override {
    return search_derivatives(node.rows, ds_, scale_derivatives(node.rows, ds_), variables, config_);
  }

 private:
  const Dataset& ds_;
  const GrowthConfig& config_;
};

}  // namespace

namespace detail {

double derivative_validation_sse(const Node& evaluated, const Node& reference, const Dataset& valid,
                                 const RowSet& rows) {
  if (rows.empty()) return 0.0;
  if (!evaluated.derivative || !reference.derivative) {
    throw DataError(fmt::format("node {} has no derivative summary", evaluated.id));
  }
  const VectorXd& mean = evaluated.derivative->raw_means;
  const VectorXd& sd = reference.derivative->sd;
  double sse = 0.0;
  for (Index r : rows) {
    sse += ((valid.derivatives->row(r).transpose() - mean).cwiseProduct(sd)).squaredNorm();
  }
  return sse;
}

}  // namespace detail

ScaledDerivatives scale_derivatives(const RowSet& node_rows, const Dataset& ds) {
  require_derivatives(ds);
  if (node_rows.size() < 2) throw DataError("scale_derivatives: node needs at least 2 rows");
  const Index k = ds.cols();
  ScaledDerivatives out;
  out.sd.resize(k);
  out.values.resize(static_cast<Index>(node_rows.size()), k);
  for (Index j = 0; j < k; ++j) {
    VectorXd column(static_cast<Index>(node_rows.size()));
    for (std::size_t i = 0; i < node_rows.size(); ++i) column[static_cast<Index>(i)] = ds.features(node_rows[i], j);
    const double sd = sample_sd(column);
    out.sd[j] = sd > 0.0 ? sd : 1.0;
    for (std::size_t i = 0; i < node_rows.size(); ++i) {
      out.values(static_cast<Index>(i), j) = (*ds.derivatives)(node_rows[i], j) * out.sd[j];
    }
  }
  return out;
}

std::vector<VariableScore> derivative_fluctuation_filter(const RowSet& node_rows, const Dataset& ds,
                                                         const ScaledDerivatives& scaled, int m,
                                                         std::span<const int> candidates, int threads) {
  if (scaled.values.rows() != static_cast<Index>(node_rows.size())) {
    throw DataError("derivative_fluctuation_filter: scaled matrix does not match node rows");
  }
  std::vector<int> vars(candidates.begin(), candidates.end());
  if (vars.empty()) vars = ds.partition_vars;
  std::erase_if(vars, [&](int v) {
    const double first = ds.features(node_rows.front(), v);
    return std::all_of(node_rows.begin(), node_rows.end(), [&](Index r) { return ds.features(r, v) == first; });
  });
  if (vars.empty()) return {};

  const Index n = scaled.values.rows();
  const MatrixXd deviations = centered(scaled.values);
  const VectorXd var = deviations.colwise().squaredNorm().transpose() / static_cast<double>(n);
  const MatrixXd phi = deviations.array().rowwise() / (var.array() + kScoreRidge).sqrt().transpose();

  const auto nd = static_cast<double>(n);
  const auto lo = std::max<Index>(1, static_cast<Index>(std::ceil(0.1 * nd)));
  const auto hi = std::min<Index>(n - 1, static_cast<Index>(std::floor(0.9 * nd)));
  std::vector<VariableScore> scores(vars.size());
  detail::parallel_for(vars.size(), threads, [&](std::size_t i) {
    const auto order = local_order(ds.features, vars[i], node_rows);
    VectorXd cum = VectorXd::Zero(phi.cols());
    double best = 0.0;
    for (Index t = 1; t <= hi; ++t) {
      cum += phi.row(order[static_cast<std::size_t>(t - 1)]).transpose();
      if (t < lo) continue;
      const double frac = static_cast<double>(t) / nd;
      best = std::max(best, cum.squaredNorm() / nd / (frac * (1.0 - frac)));
    }
    scores[i] = {vars[i], best};
  });
  std::sort(scores.begin(), scores.end(), [](const VariableScore& a, const VariableScore& b) {
    return a.statistic > b.statistic || (a.statistic == b.statistic && a.variable < b.variable);
  });
  if (m < static_cast<int>(scores.size())) scores.resize(static_cast<std::size_t>(std::max(m, 0)));
  return scores;
}

std::optional<SplitResult> derivative_split_search(const RowSet& node_rows, const Dataset& ds,
                                                   const ScaledDerivatives& scaled, std::span<const int> variables,
                                                   const GrowthConfig& config) {
  if (variables.empty()) throw DataError("derivative_split_search: no candidate variables");
  const auto best = search_derivatives(node_rows, ds, scaled, variables, config);
  if (!best) return std::nullopt;
  return SplitResult{best->split, fit_constant(scaled.values).total_sse() - best->child_sse};
}

Tree grow_dtree(const Dataset& train, const GrowthConfig& config) {
  config.validate();
  train.validate();
  require_derivatives(train);
  const Index min_node = config.resolved_min_node_size(static_cast<Index>(train.model_vars.size()));
  if (train.rows() < 2 * min_node) {
    throw DataError(fmt::format("dataset too small: {} rows, need at least {}", train.rows(), 2 * min_node));
  }
  const DerivativeCriterion criterion(train, config);
  return detail::grow_with(train, config, criterion, TreeKind::Derivative, min_node);
}

std::vector<TerminalCoefficients> terminal_coefficients(const Tree& tree) {
  std::vector<TerminalCoefficients> out;
  for (const Node& node : tree.nodes) {
    if (!node.is_leaf()) continue;
    if (!node.derivative) throw DataError(fmt::format("leaf {} has no derivative summary", node.id));
    out.push_back({node.id, node.n, node.derivative->scaled_means, node.derivative->raw_means, node.derivative->sd});
  }
  return out;
}

Tree dtree_response_models(const Tree& tree, const Dataset& train, const Dataset& valid, const GrowthConfig& config) {
  return detail::refit_leaves(tree, train, valid, config.lasso_grid_size);
}

Tree fit_derivative_tree(const Dataset& train, const Dataset& valid, const GrowthConfig& config) {
  const Tree grown = grow_dtree(train, config);
  const Tree pruned = prune_tree(grown, valid, config);
  return dtree_response_models(pruned, train, valid, config);
}

}  // namespace limesup
