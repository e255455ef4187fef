#include "limesup/data.hpp"

#include "limesup/error.hpp"
#include "limesup/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string_view>
#include <unordered_map>

namespace limesup {

namespace {

constexpr std::string_view kDerivativePrefix = "d_";
constexpr std::string_view kRoleColumn = "role";
constexpr std::uint64_t kSplitStream = 1;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line, char delimiter) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(delimiter, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

std::vector<int> resolve_vars(const std::vector<std::string>& names,
                              const std::vector<std::string>& features, const char* what) {
  std::vector<int> out;
  if (names.empty()) {
    out.resize(features.size());
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  for (const auto& name : names) {
    const auto it = std::find(features.begin(), features.end(), name);
    if (it == features.end()) {
      throw DataError(fmt::format("{} references unknown feature '{}'", what, name));
    }
    out.push_back(static_cast<int>(it - features.begin()));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

Dataset Dataset::subset(const RowSet& rows) const {
  Dataset out;
  const auto n = static_cast<Index>(rows.size());
  out.features.resize(n, cols());
  out.response.resize(n);
  for (Index i = 0; i < n; ++i) {
    out.features.row(i) = features.row(rows[i]);
    out.response[i] = response[rows[i]];
  }
  if (derivatives) {
    Eigen::MatrixXd d(n, derivatives->cols());
    for (Index i = 0; i < n; ++i) d.row(i) = derivatives->row(rows[i]);
    out.derivatives = std::move(d);
  }
  if (labels) {
    Eigen::VectorXi l(n);
    for (Index i = 0; i < n; ++i) l[i] = (*labels)[rows[i]];
    out.labels = std::move(l);
  }
  out.feature_names = feature_names;
  out.model_vars = model_vars;
  out.partition_vars = partition_vars;
  return out;
}

void Dataset::validate() const {
  const Index n = rows();
  const Index k = cols();
  if (static_cast<Index>(feature_names.size()) != k) {
    throw DataError(fmt::format("{} feature names for {} feature columns", feature_names.size(), k));
  }
  if (response.size() != n) {
    throw DataError(fmt::format("response has {} rows, features have {}", response.size(), n));
  }
  if (!features.allFinite() || !response.allFinite()) {
    throw DataError("non-finite value in features or response");
  }
  if (derivatives) {
    if (derivatives->rows() != n || derivatives->cols() != k) {
      throw DataError(fmt::format("derivatives must be {}x{}, got {}x{}", n, k, derivatives->rows(),
                                  derivatives->cols()));
    }
    if (!derivatives->allFinite()) throw DataError("non-finite value in derivatives");
  }
  if (labels) {
    if (labels->size() != n) throw DataError("labels length does not match features");
    for (Index i = 0; i < n; ++i) {
      if ((*labels)[i] != 0 && (*labels)[i] != 1) {
        throw DataError(fmt::format("label at row {} is not 0 or 1", i + 1));
      }
    }
  }
  for (const auto* vars : {&model_vars, &partition_vars}) {
    if (vars->empty()) throw DataError("model_vars and partition_vars must be nonempty");
    for (int v : *vars) {
      if (v < 0 || v >= k) throw DataError(fmt::format("variable index {} out of range", v));
    }
  }
}

Eigen::MatrixXd Dataset::model_matrix() const {
  Eigen::MatrixXd out(rows(), static_cast<Index>(model_vars.size()));
  for (std::size_t j = 0; j < model_vars.size(); ++j) {
    out.col(static_cast<Index>(j)) = features.col(model_vars[j]);
  }
  return out;
}

Eigen::MatrixXd Dataset::model_matrix(const RowSet& rows) const {
  Eigen::MatrixXd out(static_cast<Index>(rows.size()), static_cast<Index>(model_vars.size()));
  for (std::size_t j = 0; j < model_vars.size(); ++j) {
    const auto col = features.col(model_vars[j]);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out(static_cast<Index>(i), static_cast<Index>(j)) = col[rows[i]];
    }
  }
  return out;
}

int Dataset::feature_index(const std::string& name) const {
  const auto it = std::find(feature_names.begin(), feature_names.end(), name);
  if (it == feature_names.end()) throw DataError(fmt::format("unknown feature '{}'", name));
  return static_cast<int>(it - feature_names.begin());
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open file '{}'", path.string()));

  std::string line;
  if (!std::getline(in, line)) throw DataError(fmt::format("'{}' is empty", path.string()));
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  std::vector<std::string> header;
  for (auto field : split_fields(line, schema.delimiter)) header.emplace_back(field);

  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c].empty()) throw DataError(fmt::format("empty column name at position {}", c + 1));
    if (!position.emplace(header[c], c).second) {
      throw DataError(fmt::format("duplicate column '{}'", header[c]));
    }
  }
  const auto require = [&](const std::string& name) {
    const auto it = position.find(name);
    if (it == position.end()) throw DataError(fmt::format("missing column '{}'", name));
    return it->second;
  };

  const std::size_t response_col = require(schema.response_column);
  std::optional<std::size_t> label_col;
  if (!schema.label_column.empty()) {
    if (auto it = position.find(schema.label_column); it != position.end()) label_col = it->second;
  }

  std::vector<std::string> feature_names = schema.feature_columns;
  if (feature_names.empty()) {
    for (const auto& name : header) {
      if (name == schema.response_column || name == schema.label_column || name == kRoleColumn ||
          name.starts_with(kDerivativePrefix)) {
        continue;
      }
      feature_names.push_back(name);
    }
  }
  if (feature_names.empty()) throw DataError("no feature columns");
  std::vector<std::size_t> feature_cols;
  for (const auto& name : feature_names) feature_cols.push_back(require(name));

  std::vector<std::size_t> derivative_cols;
  std::vector<std::string> missing_derivatives;
  for (const auto& name : feature_names) {
    if (auto it = position.find(std::string(kDerivativePrefix) + name); it != position.end()) {
      derivative_cols.push_back(it->second);
    } else {
      missing_derivatives.push_back(name);
    }
  }
  if (!derivative_cols.empty() && !missing_derivatives.empty()) {
    throw DataError(fmt::format("partial derivative coverage: no d_ column for '{}'",
                                missing_derivatives.front()));
  }
  for (const auto& name : header) {
    if (name.starts_with(kDerivativePrefix) &&
        std::find(feature_names.begin(), feature_names.end(), name.substr(2)) == feature_names.end()) {
      throw DataError(fmt::format("partial derivative coverage: '{}' has no matching feature", name));
    }
  }

  std::vector<double> cells;
  std::size_t n = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, schema.delimiter);
    if (fields.size() != header.size()) {
      throw DataError(fmt::format("line {}: expected {} fields, got {}", line_no, header.size(),
                                  fields.size()));
    }
    ++n;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (header[c] == kRoleColumn) {
        cells.push_back(0.0);
        continue;
      }
      double value = 0.0;
      const auto field = fields[c];
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
      if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
        throw DataError(fmt::format("non-numeric value '{}' at row {}, column {}", field, n, header[c]));
      }
      if (!std::isfinite(value)) {
        throw DataError(fmt::format("non-finite value at row {}, column {}", n, header[c]));
      }
      cells.push_back(value);
    }
  }
  if (n == 0) throw DataError(fmt::format("'{}' has no data rows", path.string()));

  const std::size_t width = header.size();
  const auto cell = [&](std::size_t r, std::size_t c) { return cells[r * width + c]; };
  const auto rows = static_cast<Index>(n);

  Dataset ds;
  ds.feature_names = feature_names;
  ds.features.resize(rows, static_cast<Index>(feature_cols.size()));
  ds.response.resize(rows);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      ds.features(static_cast<Index>(r), static_cast<Index>(j)) = cell(r, feature_cols[j]);
    }
    ds.response[static_cast<Index>(r)] = cell(r, response_col);
  }
  if (!derivative_cols.empty()) {
    Eigen::MatrixXd d(rows, static_cast<Index>(derivative_cols.size()));
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < derivative_cols.size(); ++j) {
        d(static_cast<Index>(r), static_cast<Index>(j)) = cell(r, derivative_cols[j]);
      }
    }
    ds.derivatives = std::move(d);
  }
  if (label_col) {
    Eigen::VectorXi labels(rows);
    for (std::size_t r = 0; r < n; ++r) {
      const double v = cell(r, *label_col);
      if (v != 0.0 && v != 1.0) {
        throw DataError(fmt::format("label '{}' at row {} is not 0 or 1", v, r + 1));
      }
      labels[static_cast<Index>(r)] = static_cast<int>(v);
    }
    ds.labels = std::move(labels);
  }
  ds.model_vars = resolve_vars(schema.model_vars, feature_names, "model_vars");
  ds.partition_vars = resolve_vars(schema.partition_vars, feature_names, "partition_vars");

  if (rows >= 2) {
    for (Index j = 0; j < ds.cols(); ++j) {
      if (ds.features.col(j).maxCoeff() == ds.features.col(j).minCoeff()) {
        throw DataError(fmt::format("feature column '{}' is constant", feature_names[j]));
      }
    }
  }
  ds.validate();
  return ds;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path, char delimiter) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));

  std::string buffer;
  auto sep = [&](bool first) {
    if (!first) buffer.push_back(delimiter);
  };
  bool first = true;
  for (const auto& name : ds.feature_names) {
    sep(first);
    first = false;
    buffer += name;
  }
  if (ds.derivatives) {
    for (const auto& name : ds.feature_names) {
      sep(false);
      buffer += "d_" + name;
    }
  }
  sep(false);
  buffer += "yhat";
  if (ds.labels) {
    sep(false);
    buffer += "label";
  }
  buffer.push_back('\n');

  for (Index i = 0; i < ds.rows(); ++i) {
    for (Index j = 0; j < ds.cols(); ++j) {
      if (j > 0) buffer.push_back(delimiter);
      fmt::format_to(std::back_inserter(buffer), "{}", ds.features(i, j));
    }
    if (ds.derivatives) {
      for (Index j = 0; j < ds.cols(); ++j) {
        buffer.push_back(delimiter);
        fmt::format_to(std::back_inserter(buffer), "{}", (*ds.derivatives)(i, j));
      }
    }
    buffer.push_back(delimiter);
    fmt::format_to(std::back_inserter(buffer), "{}", ds.response[i]);
    if (ds.labels) {
      buffer.push_back(delimiter);
      fmt::format_to(std::back_inserter(buffer), "{}", (*ds.labels)[i]);
    }
    buffer.push_back('\n');
    if (buffer.size() > (1U << 20)) {
      out << buffer;
      buffer.clear();
    }
  }
  out << buffer;
  if (!out) throw DataError(fmt::format("failed writing '{}'", path.string()));
}

DatasetSplit split_dataset(const Dataset& ds, const SplitFractions& fractions, std::uint64_t seed) {
  const Index n = ds.rows();
  if (n < 3) throw DataError("split_dataset needs at least 3 rows");
  const std::array<double, 3> f{fractions.train, fractions.valid, fractions.test};
  for (double v : f) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DataError("degenerate fraction");
  }
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) throw DataError("split fractions must sum to 1");

  std::array<Index, 3> sizes{};
  Index assigned = 0;
  for (int s = 0; s < 3; ++s) {
    // Guard against representation error such as 0.3 * 10 = 2.9999999999999996.
    sizes[s] = static_cast<Index>(std::floor(static_cast<double>(n) * f[s] + 1e-9));
    assigned += sizes[s];
  }
  for (int s = 0; assigned < n; s = (s + 1) % 3, ++assigned) ++sizes[s];
  for (Index size : sizes) {
    if (size == 0) throw DataError("degenerate fraction");
  }

  RowSet order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(derive_seed(seed, kSplitStream));
  rng.shuffle(std::span<Index>(order));

  DatasetSplit out;
  auto begin = order.begin();
  out.train_rows.assign(begin, begin + sizes[0]);
  out.valid_rows.assign(begin + sizes[0], begin + sizes[0] + sizes[1]);
  out.test_rows.assign(begin + sizes[0] + sizes[1], order.end());
  for (auto* rows : {&out.train_rows, &out.valid_rows, &out.test_rows}) std::sort(rows->begin(), rows->end());
  out.train = ds.subset(out.train_rows);
  out.valid = ds.subset(out.valid_rows);
  out.test = ds.subset(out.test_rows);
  return out;
}

double sample_sd(const Eigen::Ref<const Eigen::VectorXd>& values) {
  const Index n = values.size();
  if (n < 2) return 0.0;
  const double mean = values.mean();
  return std::sqrt((values.array() - mean).square().sum() / static_cast<double>(n - 1));
}

StandardizationParams fit_standardization(const Eigen::MatrixXd& features) {
  StandardizationParams params;
  params.mean = features.colwise().mean().transpose();
  params.sd.resize(features.cols());
  for (Index j = 0; j < features.cols(); ++j) {
    params.sd[j] = sample_sd(features.col(j));
    if (!(params.sd[j] > 0.0)) throw DataError(fmt::format("zero-variance column {}", j));
  }
  return params;
}

Eigen::MatrixXd StandardizationParams::apply(const Eigen::MatrixXd& features) const {
  if (features.cols() != mean.size()) throw DataError("standardization: column count mismatch");
  return ((features.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array()).matrix();
}

Eigen::MatrixXd StandardizationParams::invert(const Eigen::MatrixXd& standardized) const {
  if (standardized.cols() != mean.size()) throw DataError("standardization: column count mismatch");
  return ((standardized.array().rowwise() * sd.transpose().array()).matrix().rowwise() + mean.transpose());
}

std::pair<Dataset, StandardizationParams> standardize(const Dataset& ds) {
  auto params = fit_standardization(ds.features);
  Dataset out = ds;
  out.features = params.apply(ds.features);
  return {std::move(out), std::move(params)};
}

std::uint64_t dataset_hash(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const double* data, Index count) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < static_cast<std::size_t>(count) * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  feed(ds.features.data(), ds.features.size());
  feed(ds.response.data(), ds.response.size());
  return h;
}

}  // namespace limesup
