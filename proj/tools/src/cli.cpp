#include "cli.hpp"

#include "limesup/data.hpp"
#include "limesup/dtree.hpp"
#include "limesup/error.hpp"
#include "limesup/evalx.hpp"
#include "limesup/klime.hpp"
#include "limesup/serialize.hpp"
#include "limesup/simgen.hpp"
#include "limesup/suptree.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <filesystem>
#include <ostream>
#include <set>
#include <variant>

namespace limesup::cli {

namespace fs = std::filesystem;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr std::uint64_t kDefaultSeed = 1;

struct GlobalOptions {
  std::uint64_t seed = kDefaultSeed;
  int threads = 1;
};

struct DataOptions {
  std::string input;
  std::string response = "yhat";
  std::string label = "label";
  std::vector<std::string> features;
  std::vector<std::string> model_vars;
  std::vector<std::string> partition_vars;
  std::string delimiter = ",";
};

struct SplitOptions {
  std::optional<std::uint64_t> split_seed;
  std::vector<double> fractions{0.5, 0.2, 0.3};
};

struct TreeOptions {
  GrowthConfig growth;
  std::string valid;
  std::string out_dir = ".";
  std::string name;
};

struct KlimeCliOptions {
  int k = 0;
  std::string variant = "E";
  int n_init = 10;
  int max_iterations = 300;
  int lasso_grid = 50;
  std::string valid;
  std::string out_dir = ".";
  std::string name;
};

struct SimOptions {
  SimConfig config;
  std::string out;
  std::string delimiter = ",";
};

struct EvalOptions {
  std::vector<std::string> models;
  std::string subset = "test";
  std::string partition_source;
  std::string out_dir = ".";
  std::string prefix = "metrics";
  bool table1 = false;
};

struct ExportOptions {
  std::vector<std::string> models;
  std::string subset = "test";
  std::string out;
};

char delimiter_char(const std::string& text) {
  if (text == "\\t" || text == "tab") return '\t';
  if (text.size() != 1) throw DataError(fmt::format("delimiter must be a single character, got '{}'", text));
  return text.front();
}

Dataset load(const DataOptions& opts, const std::string& path) {
  CsvSchema schema;
  schema.response_column = opts.response;
  schema.label_column = opts.label;
  schema.feature_columns = opts.features;
  schema.model_vars = opts.model_vars;
  schema.partition_vars = opts.partition_vars;
  schema.delimiter = delimiter_char(opts.delimiter);
  try {
    return load_csv(path, schema);
  } catch (const DataError& e) {
    throw DataError(fmt::format("{}: {}", path, e.what()));
  }
}

SplitFractions fractions_of(const SplitOptions& opts) {
  if (opts.fractions.size() != 3) throw DataError("--fractions needs three values: train,valid,test");
  return {opts.fractions[0], opts.fractions[1], opts.fractions[2]};
}

std::uint64_t split_seed(const SplitOptions& split, const GlobalOptions& global) {
  return split.split_seed.value_or(global.seed);
}

/// Training and validation samples: the input split internally, or the input
/// as training data when a separate validation file is given.
std::pair<Dataset, Dataset> fit_samples(const DataOptions& data, const SplitOptions& split,
                                        const GlobalOptions& global, const std::string& valid_path) {
  Dataset full = load(data, data.input);
  if (!valid_path.empty()) {
    Dataset valid = load(data, valid_path);
    if (valid.feature_names != full.feature_names) throw DataError("validation file has different feature columns");
    return {std::move(full), std::move(valid)};
  }
  DatasetSplit parts = split_dataset(full, fractions_of(split), split_seed(split, global));
  return {std::move(parts.train), std::move(parts.valid)};
}

Dataset select_subset(const Dataset& full, const std::string& subset, const SplitOptions& split,
                      const GlobalOptions& global, RowSet& rows) {
  if (subset == "all") {
    rows.resize(static_cast<std::size_t>(full.rows()));
    for (Index i = 0; i < full.rows(); ++i) rows[static_cast<std::size_t>(i)] = i;
    return full;
  }
  DatasetSplit parts = split_dataset(full, fractions_of(split), split_seed(split, global));
  if (subset == "train") {
    rows = parts.train_rows;
    return parts.train;
  }
  if (subset == "valid") {
    rows = parts.valid_rows;
    return parts.valid;
  }
  rows = parts.test_rows;
  return parts.test;
}

fs::path prepare_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw DataError(fmt::format("cannot create output directory '{}': {}", dir, ec.message()));
  return p;
}

double train_r2(const Dataset& train, const VectorXd& pred) { return global_metrics(train.response, pred).r2; }

int cmd_simulate(const SimOptions& opts, const GlobalOptions& global, std::ostream& out) {
  SimConfig config = opts.config;
  config.seed = global.seed;
  config.validate();
  const Dataset ds = simulate_benchmark(config);
  save_csv(ds, opts.out, delimiter_char(opts.delimiter));
  out << fmt::format("wrote {} rows x {} columns to {}\n", ds.rows(), 2 * ds.cols() + 2, opts.out);
  return kOk;
}

int cmd_fit_tree(TreeKind kind, const TreeOptions& opts, const DataOptions& data, const SplitOptions& split,
                 const GlobalOptions& global, std::ostream& out) {
  auto [train, valid] = fit_samples(data, split, global, opts.valid);
  GrowthConfig config = opts.growth;
  config.threads = global.threads;
  config.validate();
  if (kind == TreeKind::Derivative && !train.has_derivatives()) throw DataError("derivatives required");
  Tree tree = kind == TreeKind::Response ? fit_response_tree(train, valid, config)
                                         : fit_derivative_tree(train, valid, config);
  tree.seed = global.seed;

  const std::string method = tree_method_name(tree);
  const std::string name = opts.name.empty() ? method : opts.name;
  const fs::path dir = prepare_dir(opts.out_dir);
  write_text_file(dir / (name + ".json"), tree_to_json(tree));
  write_text_file(dir / (name + "_coefficients.csv"), tree_coefficients_csv(tree));
  if (kind == TreeKind::Derivative) write_text_file(dir / (name + "_derivative_means.csv"), derivative_means_csv(tree));

  const double r2 = train_r2(train, predict_tree(tree, train.features));
  out << fmt::format("{}: {} leaves, depth {}, train R^2 {:.4f} (n_train {}, n_valid {})\n", method,
                     tree.leaf_count(), tree.depth(), r2, train.rows(), valid.rows());
  for (const Node& node : tree.nodes) {
    if (!node.split) continue;
    out << fmt::format("  node {} (depth {}, n {}): {} <= {:.4f}\n", node.id, node.depth, node.n,
                       tree.feature_names[static_cast<std::size_t>(node.split->variable)], node.split->threshold);
  }
  return kOk;
}

int cmd_klime(const KlimeCliOptions& opts, const DataOptions& data, const SplitOptions& split,
              const GlobalOptions& global, std::ostream& out) {
  auto [train, valid] = fit_samples(data, split, global, opts.valid);
  KlimeOptions options;
  options.seed = global.seed;
  options.kmeans.n_init = opts.n_init;
  options.kmeans.max_iterations = opts.max_iterations;
  options.kmeans.threads = global.threads;
  options.lasso_grid_size = opts.lasso_grid;
  const KlimeVariant variant = parse_variant(opts.variant);
  const KMeansModel model = klime_fit(train, valid, opts.k, variant, options);

  const std::string method = klime_method_name(variant);
  const std::string name = opts.name.empty() ? method : opts.name;
  const fs::path dir = prepare_dir(opts.out_dir);
  write_text_file(dir / (name + ".json"), kmeans_to_json(model));
  write_text_file(dir / (name + "_coefficients.csv"), klime_coefficients_csv(model));

  const double r2 = train_r2(train, predict_klime(model, train.features));
  out << fmt::format("{}: {} clusters, {} transformed dims, WCSS {:.4f}, train R^2 {:.4f}\n", method, model.k(),
                     model.transform.matrix.cols(), model.wcss, r2);
  return kOk;
}

/// A fitted surrogate read back from its JSON export.
struct LoadedModel {
  std::string method;
  std::variant<Tree, KMeansModel> model;

  const std::vector<std::string>& feature_names() const {
    return std::visit([](const auto& m) -> const std::vector<std::string>& { return m.feature_names; }, model);
  }
};

LoadedModel load_model(const std::string& path) {
  const std::string text = read_text_file(path);
  std::string format;
  try {
    format = nlohmann::json::parse(text).value("format", "");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("{}: invalid JSON: {}", path, e.what()));
  }
  try {
    if (format == "limesup-tree") {
      Tree tree = tree_from_json(text);
      std::string method = tree_method_name(tree);
      return {std::move(method), std::move(tree)};
    }
    if (format == "limesup-klime") {
      KMeansModel model = kmeans_from_json(text);
      std::string method = klime_method_name(model.variant);
      return {std::move(method), std::move(model)};
    }
  } catch (const DataError& e) {
    throw DataError(fmt::format("{}: {}", path, e.what()));
  }
  throw DataError(fmt::format("{}: not a limesup model file", path));
}

std::vector<LoadedModel> load_models(const std::vector<std::string>& paths) {
  std::vector<LoadedModel> models;
  std::set<std::string> seen;
  for (const auto& path : paths) {
    models.push_back(load_model(path));
    if (!seen.insert(models.back().method).second) {
      throw DataError(fmt::format("two models share the method name '{}'", models.back().method));
    }
  }
  return models;
}

/// The model's feature columns picked out of the data by name.
MatrixXd model_features(const LoadedModel& model, const Dataset& ds) {
  const auto& names = model.feature_names();
  MatrixXd X(ds.rows(), static_cast<Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto it = std::find(ds.feature_names.begin(), ds.feature_names.end(), names[j]);
    if (it == ds.feature_names.end()) {
      throw DataError(fmt::format("artifact/schema mismatch: {} needs feature '{}'", model.method, names[j]));
    }
    X.col(static_cast<Index>(j)) = ds.features.col(it - ds.feature_names.begin());
  }
  return X;
}

VectorXd model_predict(const LoadedModel& model, const MatrixXd& X) {
  if (const auto* tree = std::get_if<Tree>(&model.model)) {
    for (int id : tree->leaf_ids()) {
      if (!tree->nodes[static_cast<std::size_t>(id)].model) {
        throw DataError(fmt::format("{} has a leaf without a response model", model.method));
      }
    }
    return predict_tree(*tree, X);
  }
  return predict_klime(std::get<KMeansModel>(model.model), X);
}

std::vector<int> model_partitions(const LoadedModel& model, const MatrixXd& X) {
  if (const auto* tree = std::get_if<Tree>(&model.model)) return assign_partition(*tree, X);
  return assign_clusters(std::get<KMeansModel>(model.model), X);
}

int cmd_evaluate(const EvalOptions& opts, const DataOptions& data, const SplitOptions& split,
                 const GlobalOptions& global, std::ostream& out) {
  const std::vector<LoadedModel> models = load_models(opts.models);
  const Dataset full = load(data, data.input);
  RowSet rows;
  const Dataset ds = select_subset(full, opts.subset, split, global, rows);

  std::vector<MetricsReport> reports;
  std::vector<MethodPredictions> predictions;
  std::vector<int> partitions;
  for (const auto& model : models) {
    const MatrixXd X = model_features(model, ds);
    VectorXd pred = model_predict(model, X);
    reports.push_back(global_metrics(ds.response, pred, ds.labels, model.method));
    if (model.method == opts.partition_source) partitions = model_partitions(model, X);
    predictions.push_back({model.method, std::move(pred)});
  }
  if (!opts.partition_source.empty() && partitions.empty()) {
    throw DataError(fmt::format("--partition-source '{}' matches none of the models", opts.partition_source));
  }

  const fs::path dir = prepare_dir(opts.out_dir);
  write_text_file(dir / (opts.prefix + ".csv"), metrics_csv(reports));
  write_text_file(dir / (opts.prefix + ".json"), metrics_json(reports));
  if (!partitions.empty()) {
    const PartitionReport report = partition_comparison(partitions, ds.response, predictions, opts.partition_source);
    write_text_file(dir / (opts.prefix + "_partitions.csv"), partition_csv(report));
    write_text_file(dir / (opts.prefix + "_partitions.json"), partition_json(report));
  }

  if (opts.table1) {
    out << metrics_table(reports);
  } else {
    for (const auto& r : reports) {
      out << fmt::format("{}: MSE {:.4f}, R^2 {:.4f}", r.method, r.mse, r.r2);
      if (r.auc) out << fmt::format(", AUC {:.4f}", *r.auc);
      out << fmt::format(" (n {})\n", r.n);
    }
  }
  return kOk;
}

int cmd_export(const ExportOptions& opts, const DataOptions& data, const SplitOptions& split,
               const GlobalOptions& global, std::ostream& out) {
  const std::vector<LoadedModel> models = load_models(opts.models);
  const Dataset full = load(data, data.input);
  RowSet rows;
  const Dataset ds = select_subset(full, opts.subset, split, global, rows);

  std::vector<VectorXd> preds;
  std::vector<std::vector<int>> parts;
  for (const auto& model : models) {
    const MatrixXd X = model_features(model, ds);
    preds.push_back(model_predict(model, X));
    parts.push_back(model_partitions(model, X));
  }

  std::string text = "row,yhat";
  if (ds.has_labels()) text += ",label";
  for (const auto& model : models) text += fmt::format(",{0},{0}_partition", model.method);
  text += "\n";
  for (Index i = 0; i < ds.rows(); ++i) {
    text += fmt::format("{},{}", rows[static_cast<std::size_t>(i)], ds.response[i]);
    if (ds.has_labels()) text += fmt::format(",{}", (*ds.labels)[i]);
    for (std::size_t m = 0; m < models.size(); ++m) {
      text += fmt::format(",{},{}", preds[m][i], parts[m][static_cast<std::size_t>(i)]);
    }
    text += "\n";
  }
  write_text_file(opts.out, text);
  out << fmt::format("wrote {} rows for {} models to {}\n", ds.rows(), models.size(), opts.out);
  return kOk;
}

void add_data_options(CLI::App& cmd, DataOptions& data) {
  cmd.add_option("input", data.input, "Input CSV")->required()->check(CLI::ExistingFile);
  cmd.add_option("--response", data.response, "Response column")->capture_default_str();
  cmd.add_option("--label", data.label, "Binary label column, used when present")->capture_default_str();
  cmd.add_option("--features", data.features, "Feature columns (default: all others)")->delimiter(',');
  cmd.add_option("--model-vars", data.model_vars, "Columns entering node regressions")->delimiter(',');
  cmd.add_option("--partition-vars", data.partition_vars, "Columns trees may split on")->delimiter(',');
  cmd.add_option("--delimiter", data.delimiter, "CSV delimiter")->capture_default_str();
}

void add_split_options(CLI::App& cmd, SplitOptions& split) {
  cmd.add_option("--split-seed", split.split_seed, "Seed of the train/valid/test split (default: --seed)");
  cmd.add_option("--fractions", split.fractions, "train,valid,test fractions")->delimiter(',')->expected(3);
}

void add_growth_options(CLI::App& cmd, TreeOptions& opts) {
  auto& g = opts.growth;
  cmd.add_option("--max-depth", g.max_depth, "Maximum tree depth")->capture_default_str();
  cmd.add_option("--min-node-size", g.min_node_size, "Minimum rows per child (0: max(30, 5(p+1)))")
      ->capture_default_str();
  cmd.add_option("--n-quantiles", g.n_quantiles, "Split candidates per variable")->capture_default_str();
  cmd.add_option("--m-filter", g.m_filter, "Variables kept by the fluctuation filter")->capture_default_str();
  cmd.add_option("--min-rel-improvement", g.min_relative_improvement, "Minimum relative SSE gain to split")
      ->capture_default_str();
  cmd.add_option("--prune-threshold", g.prune_threshold, "Pruning threshold, relative to root validation SSE")
      ->capture_default_str();
  cmd.add_option("--lasso-grid", g.lasso_grid_size, "LASSO lambda grid size")->capture_default_str();
  cmd.add_option("--valid", opts.valid, "Separate validation CSV; the input is then used whole for training")
      ->check(CLI::ExistingFile);
  cmd.add_option("--out-dir", opts.out_dir, "Output directory")->capture_default_str();
  cmd.add_option("--name", opts.name, "Output file stem (default: method name)");
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Locally interpretable surrogate models: model-based trees and k-means baselines"};
  app.set_config("--config", "", "Key-value config file; command-line flags win");
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions global;
  app.add_option("--seed", global.seed, "Seed for every randomized step")->capture_default_str();
  app.add_option("--threads", global.threads, "Worker cap")->capture_default_str()->check(CLI::Range(1, 1024));

  SimOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Generate the logistic benchmark data");
  simulate->add_option("--n", sim.config.n, "Rows")->capture_default_str();
  simulate->add_option("--derivative-noise-sd", sim.config.derivative_noise_sd, "Noise on derivatives")
      ->capture_default_str();
  simulate->add_option("--response-noise-sd", sim.config.response_noise_sd, "Noise on the logit")
      ->capture_default_str();
  simulate->add_option("--out", sim.out, "Output CSV")->required();
  simulate->add_option("--delimiter", sim.delimiter, "CSV delimiter")->capture_default_str();

  DataOptions data;
  SplitOptions split;

  TreeOptions tree_r;
  auto* fit_r = app.add_subcommand("fit-r", "Fit a response tree with linear leaf models");
  add_data_options(*fit_r, data);
  add_split_options(*fit_r, split);
  add_growth_options(*fit_r, tree_r);

  TreeOptions tree_d;
  auto* fit_d = app.add_subcommand("fit-d", "Fit a piecewise-constant tree on scaled derivatives");
  add_data_options(*fit_d, data);
  add_split_options(*fit_d, split);
  add_growth_options(*fit_d, tree_d);

  KlimeCliOptions kl;
  auto* klime = app.add_subcommand("klime", "Fit a k-means surrogate with per-cluster LASSO");
  add_data_options(*klime, data);
  add_split_options(*klime, split);
  klime->add_option("--k", kl.k, "Number of clusters")->required()->check(CLI::PositiveNumber);
  klime->add_option("--variant", kl.variant, "E, M or P")->capture_default_str();
  klime->add_option("--n-init", kl.n_init, "k-means restarts")->capture_default_str();
  klime->add_option("--max-iter", kl.max_iterations, "Lloyd iterations per restart")->capture_default_str();
  klime->add_option("--lasso-grid", kl.lasso_grid, "LASSO lambda grid size")->capture_default_str();
  klime->add_option("--valid", kl.valid, "Separate validation CSV")->check(CLI::ExistingFile);
  klime->add_option("--out-dir", kl.out_dir, "Output directory")->capture_default_str();
  klime->add_option("--name", kl.name, "Output file stem (default: method name)");

  EvalOptions ev;
  auto* evaluate = app.add_subcommand("evaluate", "Global and per-partition metrics of fitted models");
  add_data_options(*evaluate, data);
  add_split_options(*evaluate, split);
  evaluate->add_option("--model", ev.models, "Model JSON (repeatable)")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--subset", ev.subset, "Rows to score")
      ->capture_default_str()
      ->check(CLI::IsMember({"train", "valid", "test", "all"}));
  evaluate->add_option("--partition-source", ev.partition_source, "Method whose partitions decompose the metrics");
  evaluate->add_option("--out-dir", ev.out_dir, "Output directory")->capture_default_str();
  evaluate->add_option("--prefix", ev.prefix, "Output file stem")->capture_default_str();
  evaluate->add_flag("--table1", ev.table1, "Print the methods x {MSE, R^2, AUC} grid");

  ExportOptions ex;
  auto* exp = app.add_subcommand("export", "Per-row predictions and partition ids");
  add_data_options(*exp, data);
  add_split_options(*exp, split);
  exp->add_option("--model", ex.models, "Model JSON (repeatable)")->required()->check(CLI::ExistingFile);
  exp->add_option("--subset", ex.subset, "Rows to export")
      ->capture_default_str()
      ->check(CLI::IsMember({"train", "valid", "test", "all"}));
  exp->add_option("--out", ex.out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(sim, global, out);
    if (fit_r->parsed()) return cmd_fit_tree(TreeKind::Response, tree_r, data, split, global, out);
    if (fit_d->parsed()) return cmd_fit_tree(TreeKind::Derivative, tree_d, data, split, global, out);
    if (klime->parsed()) return cmd_klime(kl, data, split, global, out);
    if (evaluate->parsed()) return cmd_evaluate(ev, data, split, global, out);
    if (exp->parsed()) return cmd_export(ex, data, split, global, out);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace limesup::cli
