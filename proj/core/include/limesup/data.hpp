#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace limesup {

using Index = Eigen::Index;
using RowSet = std::vector<Index>;

/// Features, fitted responses of the black-box model, and optional partial
/// derivatives and binary labels, all aligned by row.
///
/// `model_vars` are the columns entering node-level regressions, and
/// `partition_vars` the columns trees may split on. Both default to every
/// feature column.
struct Dataset {
  Eigen::MatrixXd features;
  std::vector<std::string> feature_names;
  Eigen::VectorXd response;
  std::optional<Eigen::MatrixXd> derivatives;
  std::optional<Eigen::VectorXi> labels;
  std::vector<int> model_vars;
  std::vector<int> partition_vars;

  Index rows() const { return features.rows(); }
  Index cols() const { return features.cols(); }

  bool has_derivatives() const { return derivatives.has_value(); }
  bool has_labels() const { return labels.has_value(); }

  /// Row subset with every optional field carried over.
  Dataset subset(const RowSet& rows) const;

  /// Throws DataError when any documented invariant is broken.
  void validate() const;

  /// Features restricted to `model_vars`.
  Eigen::MatrixXd model_matrix() const;
  Eigen::MatrixXd model_matrix(const RowSet& rows) const;

  /// Index of a named feature column; throws when absent.
  int feature_index(const std::string& name) const;
};

/// Column-role mapping for CSV ingestion.
struct CsvSchema {
  std::string response_column = "yhat";
  /// Used when present in the header; never required.
  std::string label_column = "label";
  /// Empty means every column that is not the response, label, role or a
  /// `d_` derivative column.
  std::vector<std::string> feature_columns;
  std::vector<std::string> model_vars;
  std::vector<std::string> partition_vars;
  char delimiter = ',';
};

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

/// Writes features, then `d_<name>` derivative columns, then `yhat` and
/// `label` when present. Numbers use the shortest round-trip representation.
void save_csv(const Dataset& ds, const std::filesystem::path& path, char delimiter = ',');

struct SplitFractions {
  double train = 0.5;
  double valid = 0.2;
  double test = 0.3;
};

struct DatasetSplit {
  Dataset train;
  Dataset valid;
  Dataset test;
  RowSet train_rows;
  RowSet valid_rows;
  RowSet test_rows;
};

/// Seeded random partition into train/valid/test. Sizes are floor(N * f)
/// and leftover rows go to train first, then valid, then test.
DatasetSplit split_dataset(const Dataset& ds, const SplitFractions& fractions, std::uint64_t seed);

/// Per-feature mean and sample standard deviation.
struct StandardizationParams {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& features) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& standardized) const;
};

StandardizationParams fit_standardization(const Eigen::MatrixXd& features);

/// Returns the dataset with standardized features and the parameters used.
std::pair<Dataset, StandardizationParams> standardize(const Dataset& ds);

/// Sample standard deviation (n - 1 divisor) of a column.
double sample_sd(const Eigen::Ref<const Eigen::VectorXd>& values);

/// Stable 64-bit FNV-1a digest of features and responses; recorded as fit
/// provenance.
std::uint64_t dataset_hash(const Dataset& ds);

}  // namespace limesup
