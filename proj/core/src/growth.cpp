#include "growth.hpp"

#include "limesup/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <thread>

namespace limesup::detail {

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            if (!failed.exchange(true)) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

RowSet sorted_by(const Eigen::MatrixXd& features, int variable, const RowSet& rows) {
  RowSet order = rows;
  const auto col = features.col(variable);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const double va = col[a];
    const double vb = col[b];
    return va < vb || (va == vb && a < b);
  });
  return order;
}

std::vector<std::pair<double, Eigen::Index>> quantile_candidates(std::span<const double> sorted, int n_quantiles) {
  std::vector<std::pair<double, Eigen::Index>> out;
  const auto n = static_cast<Eigen::Index>(sorted.size());
  if (n < 2) return out;
  for (int q = 1; q <= n_quantiles; ++q) {
    // Smallest position whose empirical CDF reaches q / (n_quantiles + 1).
    const auto num = static_cast<long long>(q) * n;
    const long long den = n_quantiles + 1;
    const auto pos = static_cast<Eigen::Index>((num + den - 1) / den) - 1;
    const auto at = std::clamp<Eigen::Index>(pos, 0, n - 1);
    const double value = sorted[static_cast<std::size_t>(at)];
    const auto upper = std::upper_bound(sorted.begin(), sorted.end(), value);
    if (upper == sorted.end()) continue;
    const double threshold = value + (*upper - value) / 2.0;
    if (!(threshold > value && threshold < *upper)) continue;
    const auto left = static_cast<Eigen::Index>(upper - sorted.begin());
    if (out.empty() || out.back().first != threshold) out.emplace_back(threshold, left);
  }
  return out;
}

std::optional<ScoredSplit> reduce_candidates(const std::vector<std::optional<ScoredSplit>>& per_variable) {
  std::optional<ScoredSplit> best;
  for (const auto& c : per_variable) {
    if (!c) continue;
    if (!best || c->child_sse < best->child_sse ||
        (c->child_sse == best->child_sse &&
         (c->split.variable < best->split.variable ||
          (c->split.variable == best->split.variable && c->split.threshold < best->split.threshold)))) {
      best = c;
    }
  }
  return best;
}

Tree grow_with(const Dataset& train, const GrowthConfig& config, const GrowthCriterion& criterion, TreeKind kind,
               Eigen::Index min_node_size) {
  Tree tree;
  tree.kind = kind;
  tree.config = config;
  tree.feature_names = train.feature_names;
  tree.model_vars = train.model_vars;
  tree.partition_vars = train.partition_vars;
  tree.dataset_hash = dataset_hash(train);

  Node root;
  root.rows.resize(static_cast<std::size_t>(train.rows()));
  for (Eigen::Index i = 0; i < train.rows(); ++i) root.rows[static_cast<std::size_t>(i)] = i;
  root.n = train.rows();
  tree.nodes.push_back(std::move(root));

  const int m = std::min<int>(config.m_filter, static_cast<int>(train.partition_vars.size()));
  std::deque<int> queue{0};
  while (!queue.empty()) {
    const int id = queue.front();
    queue.pop_front();
    Node& node = tree.nodes[static_cast<std::size_t>(id)];
    criterion.fit_node(node);

    if (node.depth >= config.max_depth || node.n < 2 * min_node_size || criterion.is_exact(node)) continue;
    const auto variables = criterion.rank_variables(node, m);
    if (variables.empty()) continue;
    const auto best = criterion.best_split(node, variables);
    if (!best) continue;
    const double improvement = node.sse - best->child_sse;
    if (!(improvement > 0.0) || improvement < config.min_relative_improvement * node.sse) continue;

    Node left;
    Node right;
    const auto col = train.features.col(best->split.variable);
    for (Eigen::Index r : node.rows) {
      (best->split.goes_left(col[r]) ? left.rows : right.rows).push_back(r);
    }
    left.n = static_cast<Eigen::Index>(left.rows.size());
    right.n = static_cast<Eigen::Index>(right.rows.size());
    left.depth = right.depth = node.depth + 1;
    left.parent = right.parent = id;
    left.id = static_cast<int>(tree.nodes.size());
    right.id = left.id + 1;
    node.split = best->split;
    node.children = std::pair{left.id, right.id};
    node.sse_improvement = improvement;
    queue.push_back(left.id);
    queue.push_back(right.id);
    // `node` is invalidated by the pushes below.
    tree.nodes.push_back(std::move(left));
    tree.nodes.push_back(std::move(right));
  }
  return tree;
}

Tree prune_with(const Tree& tree, const Dataset& valid, double prune_threshold, const ValidationSse& sse) {
  if (valid.rows() == 0) throw DataError("prune_tree: empty validation set");
  if (valid.cols() != static_cast<Eigen::Index>(tree.feature_names.size())) {
    throw DataError("prune_tree: validation schema does not match the tree");
  }
  Tree out = tree;
  const auto routed = route_rows(tree, valid.features);
  const Node& root = out.nodes.front();
  const double root_sse = sse(root, root, valid, routed.front());
  const double limit = prune_threshold * root_sse;

  bool changed = true;
  while (changed) {
    changed = false;
    for (auto it = out.nodes.rbegin(); it != out.nodes.rend(); ++it) {
      Node& node = *it;
      if (node.is_leaf()) continue;
      const Node& left = out.nodes[static_cast<std::size_t>(node.children->first)];
      const Node& right = out.nodes[static_cast<std::size_t>(node.children->second)];
      if (!left.is_leaf() || !right.is_leaf()) continue;
      const double collapsed = sse(node, node, valid, routed[static_cast<std::size_t>(node.id)]);
      const double split = sse(left, node, valid, routed[static_cast<std::size_t>(left.id)]) +
                           sse(right, node, valid, routed[static_cast<std::size_t>(right.id)]);
      if (collapsed - split < limit) {
        node.children.reset();
        node.split.reset();
        node.sse_improvement = 0.0;
        changed = true;
      }
    }
  }
  return compact_tree(out);
}

Tree refit_leaves(const Tree& tree, const Dataset& train, const Dataset& valid, int grid_size) {
  if (valid.cols() != static_cast<Eigen::Index>(tree.feature_names.size()) ||
      train.cols() != static_cast<Eigen::Index>(tree.feature_names.size())) {
    throw DataError("leaf refit: dataset schema does not match the tree");
  }
  Tree out = tree;
  const auto routed = route_rows(tree, valid.features);
  for (Node& node : out.nodes) {
    if (!node.is_leaf()) continue;
    if (node.rows.empty()) throw DataError(fmt::format("leaf {} has no training rows", node.id));
    const auto& valid_rows = routed[static_cast<std::size_t>(node.id)];
    const Eigen::MatrixXd X = train.model_matrix(node.rows);
    Eigen::VectorXd y(static_cast<Eigen::Index>(node.rows.size()));
    for (std::size_t i = 0; i < node.rows.size(); ++i) y[static_cast<Eigen::Index>(i)] = train.response[node.rows[i]];
    const Eigen::MatrixXd Xv = valid.model_matrix(valid_rows);
    Eigen::VectorXd yv(static_cast<Eigen::Index>(valid_rows.size()));
    for (std::size_t i = 0; i < valid_rows.size(); ++i) yv[static_cast<Eigen::Index>(i)] = valid.response[valid_rows[i]];
    node.model = fit_lasso_selected(X, y, Xv, yv, grid_size, X.cols() + 1);
  }
  return out;
}

}  // namespace limesup::detail
