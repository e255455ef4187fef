#include "limesup/evalx.hpp"

#include "limesup/error.hpp"
#include "limesup/linmod.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

namespace limesup {

using Eigen::Index;

double auc_mann_whitney(const Eigen::Ref<const Eigen::VectorXd>& scores, const Eigen::Ref<const Eigen::VectorXi>& labels) {
  const Index n = scores.size();
  if (labels.size() != n) throw DataError("auc: scores and labels differ in length");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  Index positives = 0;
  for (Index i = 0; i < n;) {
    Index j = i;
    while (j + 1 < n && scores[order[static_cast<std::size_t>(j + 1)]] == scores[order[static_cast<std::size_t>(i)]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Index t = i; t <= j; ++t) {
      if (labels[order[static_cast<std::size_t>(t)]] == 1) {
        positive_rank_sum += midrank;
        ++positives;
      }
    }
    i = j + 1;
  }
  const Index negatives = n - positives;
  if (positives == 0 || negatives == 0) throw DataError("auc: labels contain a single class");
  const auto np = static_cast<double>(positives);
  const auto nn = static_cast<double>(negatives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

MetricsReport global_metrics(const Eigen::Ref<const Eigen::VectorXd>& y_ref, const Eigen::Ref<const Eigen::VectorXd>& y_pred,
                             const std::optional<Eigen::VectorXi>& labels, std::string method) {
  if (y_ref.size() != y_pred.size()) throw DataError("metrics: reference and prediction lengths differ");
  if (y_ref.size() == 0) throw DataError("metrics: empty sample");
  MetricsReport report;
  report.method = std::move(method);
  report.n = y_ref.size();
  const double sse = (y_ref - y_pred).squaredNorm();
  report.mse = sse / static_cast<double>(report.n);
  report.r2 = r_squared(sse, total_sum_of_squares(y_ref));
  if (labels) {
    if (labels->size() != y_ref.size()) throw DataError("metrics: labels length differs");
    report.auc = auc_mann_whitney(y_pred, *labels);
  }
  return report;
}

PartitionReport partition_comparison(const std::vector<int>& partition_ids, const Eigen::Ref<const Eigen::VectorXd>& y_ref,
                                     const std::vector<MethodPredictions>& predictions, std::string source) {
  const auto n = static_cast<Index>(partition_ids.size());
  if (y_ref.size() != n) throw DataError("partition_comparison: partition ids and reference differ in length");
  for (const auto& p : predictions) {
    if (p.values.size() != n) throw DataError(fmt::format("partition_comparison: '{}' has wrong length", p.method));
  }
  std::map<int, std::vector<Index>> members;
  for (Index i = 0; i < n; ++i) members[partition_ids[static_cast<std::size_t>(i)]].push_back(i);

  PartitionReport report;
  report.source = std::move(source);
  for (const auto& p : predictions) report.methods.push_back(p.method);
  for (const auto& [id, rows] : members) {
    PartitionRow row;
    row.partition = id;
    row.n = static_cast<Index>(rows.size());
    Eigen::VectorXd ref(row.n);
    for (Index i = 0; i < row.n; ++i) ref[i] = y_ref[rows[static_cast<std::size_t>(i)]];
    const double sst = total_sum_of_squares(ref);
    for (const auto& p : predictions) {
      double sse = 0.0;
      for (Index i = 0; i < row.n; ++i) {
        const double e = ref[i] - p.values[rows[static_cast<std::size_t>(i)]];
        sse += e * e;
      }
      PartitionCell cell;
      cell.n = row.n;
      cell.mse = sse / static_cast<double>(row.n);
      if (sst > 0.0) cell.r2 = 1.0 - sse / sst;
      row.methods.emplace(p.method, cell);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace limesup
