#pragma once

#include <Eigen/Core>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace limesup {

/// Surrogate-versus-reference fit summary. MSE and R^2 compare predictions to
/// the black-box responses; AUC compares predictions to the binary labels.
struct MetricsReport {
  std::string method;
  double mse = 0.0;
  double r2 = 0.0;
  std::optional<double> auc;
  Eigen::Index n = 0;
};

MetricsReport global_metrics(const Eigen::Ref<const Eigen::VectorXd>& y_ref,
                             const Eigen::Ref<const Eigen::VectorXd>& y_pred,
                             const std::optional<Eigen::VectorXi>& labels = std::nullopt,
                             std::string method = {});

/// Mann-Whitney AUC with midranks for tied scores.
double auc_mann_whitney(const Eigen::Ref<const Eigen::VectorXd>& scores, const Eigen::Ref<const Eigen::VectorXi>& labels);

struct PartitionCell {
  double mse = 0.0;
  /// Absent when the partition's SST is zero (e.g. a single row).
  std::optional<double> r2;
  Eigen::Index n = 0;
};

struct PartitionRow {
  int partition = 0;
  Eigen::Index n = 0;
  std::map<std::string, PartitionCell> methods;
};

struct PartitionReport {
  std::string source;
  std::vector<std::string> methods;
  /// Ascending partition id; ids with no rows are absent.
  std::vector<PartitionRow> rows;
};

struct MethodPredictions {
  std::string method;
  Eigen::VectorXd values;
};

PartitionReport partition_comparison(const std::vector<int>& partition_ids, const Eigen::Ref<const Eigen::VectorXd>& y_ref,
                                     const std::vector<MethodPredictions>& predictions, std::string source = {});

}  // namespace limesup
