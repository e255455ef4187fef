#pragma once

#include "limesup/data.hpp"
#include "limesup/suptree.hpp"
#include "limesup/tree.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <vector>

namespace limesup {

/// Derivatives of a node's rows multiplied column-wise by the node-local
/// feature sds. A zero-variance feature gets sd 1.
struct ScaledDerivatives {
  Eigen::MatrixXd values;
  Eigen::VectorXd sd;
};

ScaledDerivatives scale_derivatives(const RowSet& node_rows, const Dataset& ds);

/// supLM ranking for derivative trees: scores are the per-column deviations
/// from the node means, with columns treated as independent.
std::vector<VariableScore> derivative_fluctuation_filter(const RowSet& node_rows, const Dataset& ds,
                                                         const ScaledDerivatives& scaled, int m,
                                                         std::span<const int> candidates = {}, int threads = 1);

/// Best piecewise-constant split of the scaled derivative matrix; the score
/// is the child SSE summed over all columns. Same candidate and tie rules as
/// the response tree, without the improvement threshold.
std::optional<SplitResult> derivative_split_search(const RowSet& node_rows, const Dataset& ds,
                                                   const ScaledDerivatives& scaled, std::span<const int> variables,
                                                   const GrowthConfig& config);

/// Piecewise-constant tree on node-locally scaled partial derivatives.
Tree grow_dtree(const Dataset& train, const GrowthConfig& config);

struct TerminalCoefficients {
  int node_id = 0;
  Eigen::Index n = 0;
  Eigen::VectorXd scaled_means;
  Eigen::VectorXd raw_means;
  Eigen::VectorXd sd;
};

/// Derivative means of each leaf, in node id order.
std::vector<TerminalCoefficients> terminal_coefficients(const Tree& tree);

/// Fits LASSO response models in every leaf (same machinery as
/// refit_terminals_lasso) so derivative trees can be scored on responses.
Tree dtree_response_models(const Tree& tree, const Dataset& train, const Dataset& valid, const GrowthConfig& config);

/// grow -> prune -> response models.
Tree fit_derivative_tree(const Dataset& train, const Dataset& valid, const GrowthConfig& config);

}  // namespace limesup
