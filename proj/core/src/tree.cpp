#include "limesup/tree.hpp"

#include "limesup/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <deque>

namespace limesup {

Eigen::Index GrowthConfig::resolved_min_node_size(Eigen::Index p) const {
  return min_node_size > 0 ? min_node_size : std::max<Eigen::Index>(30, 5 * (p + 1));
}

void GrowthConfig::validate() const {
  if (max_depth < 0) throw DataError("max_depth must be non-negative");
  if (min_node_size < 0) throw DataError("min_node_size must be non-negative");
  if (n_quantiles < 1) throw DataError("n_quantiles must be positive");
  if (m_filter < 1) throw DataError("m_filter must be positive");
  if (!(min_relative_improvement >= 0.0)) throw DataError("min_relative_improvement must be non-negative");
  if (!(prune_threshold >= 0.0)) throw DataError("prune_threshold must be non-negative");
  if (lasso_grid_size < 1) throw DataError("lasso_grid_size must be positive");
  if (threads < 1) throw DataError("threads must be positive");
}

std::vector<int> Tree::leaf_ids() const {
  std::vector<int> out;
  for (const auto& node : nodes) {
    if (node.is_leaf()) out.push_back(node.id);
  }
  return out;
}

int Tree::leaf_count() const { return static_cast<int>(leaf_ids().size()); }

int Tree::depth() const {
  int d = 0;
  for (const auto& node : nodes) d = std::max(d, node.depth);
  return d;
}

namespace {

void check_columns(const Tree& tree, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (X.cols() != static_cast<Eigen::Index>(tree.feature_names.size())) {
    throw DataError(fmt::format("tree expects {} feature columns, got {}", tree.feature_names.size(), X.cols()));
  }
}

int route_one(const Tree& tree, const Eigen::Ref<const Eigen::MatrixXd>& X, Eigen::Index row) {
  int id = 0;
  while (!tree.nodes[static_cast<std::size_t>(id)].is_leaf()) {
    const Node& node = tree.nodes[static_cast<std::size_t>(id)];
    id = node.split->goes_left(X(row, node.split->variable)) ? node.children->first : node.children->second;
  }
  return id;
}

}  // namespace

std::vector<int> assign_partition(const Tree& tree, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  check_columns(tree, X);
  std::vector<int> out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) out[static_cast<std::size_t>(i)] = route_one(tree, X, i);
  return out;
}

Eigen::VectorXd predict_tree(const Tree& tree, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  check_columns(tree, X);
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Node& leaf = tree.nodes[static_cast<std::size_t>(route_one(tree, X, i))];
    if (!leaf.model) throw DataError(fmt::format("leaf {} has no response model", leaf.id));
    const LinearModel& m = *leaf.model;
    double value = m.intercept;
    for (std::size_t j = 0; j < tree.model_vars.size(); ++j) {
      value += m.coefficients[static_cast<Eigen::Index>(j)] * X(i, tree.model_vars[j]);
    }
    out[i] = value;
  }
  return out;
}

std::vector<RowSet> route_rows(const Tree& tree, const Eigen::Ref<const Eigen::MatrixXd>& X) {
  check_columns(tree, X);
  std::vector<RowSet> out(tree.nodes.size());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    int id = 0;
    for (;;) {
      out[static_cast<std::size_t>(id)].push_back(i);
      const Node& node = tree.nodes[static_cast<std::size_t>(id)];
      if (node.is_leaf()) break;
      id = node.split->goes_left(X(i, node.split->variable)) ? node.children->first : node.children->second;
    }
  }
  return out;
}

Tree compact_tree(const Tree& tree) {
  Tree out = tree;
  out.nodes.clear();
  if (tree.nodes.empty()) return out;
  std::deque<std::pair<int, int>> queue{{0, -1}};  // (old id, new parent id)
  while (!queue.empty()) {
    const auto [old_id, parent] = queue.front();
    queue.pop_front();
    Node node = tree.nodes[static_cast<std::size_t>(old_id)];
    node.id = static_cast<int>(out.nodes.size());
    node.parent = parent;
    if (parent >= 0) {
      auto& p = out.nodes[static_cast<std::size_t>(parent)];
      if (!p.children) {
        p.children = std::pair{node.id, -1};
      } else {
        p.children->second = node.id;
      }
    }
    if (!node.is_leaf()) {
      queue.emplace_back(node.children->first, node.id);
      queue.emplace_back(node.children->second, node.id);
      node.children.reset();
    }
    out.nodes.push_back(std::move(node));
  }
  return out;
}

}  // namespace limesup
