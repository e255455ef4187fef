#pragma once

#include "limesup/evalx.hpp"
#include "limesup/klime.hpp"
#include "limesup/tree.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace limesup {

// JSON and CSV exports. Every writer is deterministic: identical inputs give
// identical bytes, and doubles use their shortest round-trip form.

/// "limesup-r" for response trees, "limesup-d" for derivative trees.
std::string tree_method_name(const Tree& tree);
/// "klime-e", "klime-m" or "klime-p".
std::string klime_method_name(KlimeVariant variant);

std::string tree_to_json(const Tree& tree);
Tree tree_from_json(std::string_view text);

std::string kmeans_to_json(const KMeansModel& model);
KMeansModel kmeans_from_json(std::string_view text);

/// One row per leaf: node_id, n, depth, intercept, one column per model var,
/// lambda, r2.
std::string tree_coefficients_csv(const Tree& tree);

/// One row per leaf of a derivative tree: scaled means, raw means and the
/// node-local sds.
std::string derivative_means_csv(const Tree& tree);

/// One row per cluster: cluster, n, intercept, coefficients, lambda, r2.
std::string klime_coefficients_csv(const KMeansModel& model);

std::string metrics_csv(const std::vector<MetricsReport>& reports);
std::string metrics_json(const std::vector<MetricsReport>& reports);

/// Methods as columns, MSE / R^2 / AUC as rows.
std::string metrics_table(const std::vector<MetricsReport>& reports);

/// Long format: partition, n, method, mse, r2.
std::string partition_csv(const PartitionReport& report);
std::string partition_json(const PartitionReport& report);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace limesup
