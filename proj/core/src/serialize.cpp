#include "limesup/serialize.hpp"

#include "limesup/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace limesup {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Json = nlohmann::ordered_json;

namespace {

constexpr const char* kTreeFormat = "limesup-tree";
constexpr const char* kKlimeFormat = "limesup-klime";
constexpr int kFormatVersion = 1;

std::string num(double v) {
  if (std::isnan(v)) return "";
  return fmt::format("{}", v);
}

Json opt_number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double read_number(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

Json named(const VectorXd& values, const std::vector<std::string>& names, const std::vector<int>& columns) {
  Json out = Json::object();
  for (std::size_t j = 0; j < columns.size(); ++j) {
    out[names[static_cast<std::size_t>(columns[j])]] = values[static_cast<Index>(j)];
  }
  return out;
}

VectorXd read_named(const Json& j, const std::vector<std::string>& names, const std::vector<int>& columns) {
  VectorXd out(static_cast<Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const auto& name = names[static_cast<std::size_t>(columns[c])];
    if (!j.contains(name)) throw DataError(fmt::format("model JSON lacks coefficient '{}'", name));
    out[static_cast<Index>(c)] = j.at(name).get<double>();
  }
  return out;
}

std::vector<int> all_columns(std::size_t k) {
  std::vector<int> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = static_cast<int>(i);
  return out;
}

Json names_of(const std::vector<int>& columns, const std::vector<std::string>& names) {
  Json out = Json::array();
  for (int c : columns) out.push_back(names[static_cast<std::size_t>(c)]);
  return out;
}

std::vector<int> columns_of(const Json& j, const std::vector<std::string>& names) {
  std::vector<int> out;
  for (const auto& item : j) {
    const auto name = item.get<std::string>();
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw DataError(fmt::format("model JSON references unknown feature '{}'", name));
    out.push_back(static_cast<int>(it - names.begin()));
  }
  return out;
}

Json model_json(const LinearModel& m, const std::vector<std::string>& names, const std::vector<int>& model_vars) {
  Json out;
  out["intercept"] = m.intercept;
  out["coefficients"] = named(m.coefficients, names, model_vars);
  out["lambda"] = m.lambda;
  out["r2"] = m.r2;
  out["sse"] = m.sse;
  out["n"] = m.n;
  out["intercept_only"] = m.intercept_only;
  out["converged"] = m.converged;
  return out;
}

LinearModel model_from_json(const Json& j, const std::vector<std::string>& names, const std::vector<int>& model_vars) {
  LinearModel m;
  m.intercept = j.at("intercept").get<double>();
  m.coefficients = read_named(j.at("coefficients"), names, model_vars);
  m.lambda = j.value("lambda", 0.0);
  m.r2 = read_number(j.value("r2", Json(nullptr)));
  m.sse = read_number(j.value("sse", Json(nullptr)));
  m.n = j.value("n", Index{0});
  m.intercept_only = j.value("intercept_only", false);
  m.converged = j.value("converged", true);
  return m;
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::uint64_t parse_hex64(const std::string& s) { return std::stoull(s, nullptr, 16); }

Json parse_json(std::string_view text, const char* what) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw DataError(fmt::format("invalid {} JSON: {}", what, e.what()));
  }
}

Json matrix_json(const MatrixXd& m) {
  Json out = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

MatrixXd matrix_from_json(const Json& j) {
  const auto rows = static_cast<Index>(j.size());
  const Index cols = rows == 0 ? 0 : static_cast<Index>(j.front().size());
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (static_cast<Index>(row.size()) != cols) throw DataError("ragged matrix in model JSON");
    for (Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

Json vector_json(const VectorXd& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

VectorXd vector_from_json(const Json& j) {
  VectorXd v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

}  // namespace

std::string tree_method_name(const Tree& tree) {
  return tree.kind == TreeKind::Response ? "limesup-r" : "limesup-d";
}

std::string klime_method_name(KlimeVariant variant) {
  switch (variant) {
    case KlimeVariant::Euclidean:
      return "klime-e";
    case KlimeVariant::Mahalanobis:
      return "klime-m";
    case KlimeVariant::Pca:
      return "klime-p";
  }
  return "klime-e";
}

std::string tree_to_json(const Tree& tree) {
  const auto& names = tree.feature_names;
  const auto every = all_columns(names.size());
  Json j;
  j["format"] = kTreeFormat;
  j["version"] = kFormatVersion;
  j["method"] = tree_method_name(tree);
  j["kind"] = tree.kind == TreeKind::Response ? "response" : "derivative";
  j["feature_names"] = names;
  j["model_vars"] = names_of(tree.model_vars, names);
  j["partition_vars"] = names_of(tree.partition_vars, names);
  const auto& c = tree.config;
  j["config"] = {{"max_depth", c.max_depth},
                 {"min_node_size", c.resolved_min_node_size(static_cast<Index>(tree.model_vars.size()))},
                 {"n_quantiles", c.n_quantiles},
                 {"m_filter", c.m_filter},
                 {"min_relative_improvement", c.min_relative_improvement},
                 {"prune_threshold", c.prune_threshold},
                 {"lasso_grid_size", c.lasso_grid_size}};
  j["provenance"] = {{"dataset_hash", hex64(tree.dataset_hash)}, {"seed", tree.seed}};
  j["leaf_count"] = tree.leaf_count();

  Json nodes = Json::array();
  for (const Node& node : tree.nodes) {
    Json jn;
    jn["id"] = node.id;
    jn["parent"] = node.parent;
    jn["depth"] = node.depth;
    jn["n"] = node.n;
    jn["leaf"] = node.is_leaf();
    jn["sse"] = node.sse;
    jn["pre_split_r2"] = opt_number(node.fit_r2);
    jn["sse_improvement"] = node.sse_improvement;
    if (node.split) {
      jn["split"] = {{"variable", names[static_cast<std::size_t>(node.split->variable)]},
                     {"threshold", node.split->threshold}};
      jn["children"] = {node.children->first, node.children->second};
    } else {
      jn["split"] = nullptr;
      jn["children"] = nullptr;
    }
    jn["model"] = node.model ? model_json(*node.model, names, tree.model_vars) : Json(nullptr);
    if (node.derivative) {
      const auto& d = *node.derivative;
      jn["derivative"] = {{"scaled_means", named(d.scaled_means, names, every)},
                          {"raw_means", named(d.raw_means, names, every)},
                          {"sd", named(d.sd, names, every)},
                          {"scaled_sse", named(d.scaled_sse, names, every)}};
    } else {
      jn["derivative"] = nullptr;
    }
    nodes.push_back(std::move(jn));
  }
  j["nodes"] = std::move(nodes);
  return j.dump(2) + "\n";
}

Tree tree_from_json(std::string_view text) {
  const Json j = parse_json(text, "tree");
  try {
    if (j.value("format", "") != kTreeFormat) throw DataError("not a tree model file");
    Tree tree;
    tree.kind = j.at("kind").get<std::string>() == "response" ? TreeKind::Response : TreeKind::Derivative;
    tree.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    const auto& names = tree.feature_names;
    const auto every = all_columns(names.size());
    tree.model_vars = columns_of(j.at("model_vars"), names);
    tree.partition_vars = columns_of(j.at("partition_vars"), names);
    const auto& c = j.at("config");
    tree.config.max_depth = c.at("max_depth").get<int>();
    tree.config.min_node_size = c.at("min_node_size").get<Index>();
    tree.config.n_quantiles = c.at("n_quantiles").get<int>();
    tree.config.m_filter = c.at("m_filter").get<int>();
    tree.config.min_relative_improvement = c.at("min_relative_improvement").get<double>();
    tree.config.prune_threshold = c.at("prune_threshold").get<double>();
    tree.config.lasso_grid_size = c.at("lasso_grid_size").get<int>();
    tree.dataset_hash = parse_hex64(j.at("provenance").at("dataset_hash").get<std::string>());
    tree.seed = j.at("provenance").at("seed").get<std::uint64_t>();
    for (const auto& jn : j.at("nodes")) {
      Node node;
      node.id = jn.at("id").get<int>();
      if (node.id != static_cast<int>(tree.nodes.size())) throw DataError("tree JSON node ids are not contiguous");
      node.parent = jn.at("parent").get<int>();
      node.depth = jn.at("depth").get<int>();
      node.n = jn.at("n").get<Index>();
      node.sse = jn.at("sse").get<double>();
      node.fit_r2 = read_number(jn.at("pre_split_r2"));
      node.sse_improvement = jn.at("sse_improvement").get<double>();
      if (!jn.at("split").is_null()) {
        const auto& s = jn.at("split");
        const auto var = std::find(names.begin(), names.end(), s.at("variable").get<std::string>());
        if (var == names.end()) throw DataError("tree JSON split references an unknown feature");
        node.split = SplitSpec{static_cast<int>(var - names.begin()), s.at("threshold").get<double>()};
        node.children = std::pair{jn.at("children")[0].get<int>(), jn.at("children")[1].get<int>()};
      }
      if (!jn.at("model").is_null()) node.model = model_from_json(jn.at("model"), names, tree.model_vars);
      if (!jn.at("derivative").is_null()) {
        const auto& d = jn.at("derivative");
        node.derivative = DerivativeSummary{read_named(d.at("sd"), names, every),
                                            read_named(d.at("raw_means"), names, every),
                                            read_named(d.at("scaled_means"), names, every),
                                            read_named(d.at("scaled_sse"), names, every)};
      }
      tree.nodes.push_back(std::move(node));
    }
    if (tree.nodes.empty()) throw DataError("tree JSON has no nodes");
    for (const Node& node : tree.nodes) {
      if (node.children) {
        const auto count = static_cast<int>(tree.nodes.size());
        if (node.children->first <= node.id || node.children->second <= node.id ||
            node.children->first >= count || node.children->second >= count) {
          throw DataError("tree JSON has invalid child links");
        }
      }
    }
    return tree;
  } catch (const Json::exception& e) {
    throw DataError(fmt::format("malformed tree JSON: {}", e.what()));
  }
}

std::string kmeans_to_json(const KMeansModel& model) {
  const auto& names = model.feature_names;
  Json j;
  j["format"] = kKlimeFormat;
  j["version"] = kFormatVersion;
  j["method"] = klime_method_name(model.variant);
  j["variant"] = to_string(model.variant);
  j["feature_names"] = names;
  j["model_vars"] = names_of(model.model_vars, names);
  j["k"] = model.k();
  j["seed"] = model.seed;
  j["n_init"] = model.n_init;
  j["wcss"] = model.wcss;
  j["standardization"] = {{"mean", vector_json(model.standardization.mean)},
                          {"sd", vector_json(model.standardization.sd)}};
  Json transform;
  transform["kind"] = model.variant == KlimeVariant::Euclidean     ? "identity"
                      : model.variant == KlimeVariant::Mahalanobis ? "whitening"
                                                                   : "pca";
  // Stored as the q x K loading layout: transformed = standardized * matrix^T.
  transform["matrix"] = matrix_json(model.transform.matrix.transpose());
  transform["eigenvalues"] = vector_json(model.transform.eigenvalues);
  j["transform"] = std::move(transform);
  Json clusters = Json::array();
  for (int c = 0; c < model.k(); ++c) {
    Json jc;
    jc["id"] = c;
    jc["n_train"] = model.cluster_sizes.at(static_cast<std::size_t>(c));
    jc["centroid"] = vector_json(model.centroids.row(c).transpose());
    jc["model"] = model_json(model.models[static_cast<std::size_t>(c)], names, model.model_vars);
    clusters.push_back(std::move(jc));
  }
  j["clusters"] = std::move(clusters);
  return j.dump(2) + "\n";
}

KMeansModel kmeans_from_json(std::string_view text) {
  const Json j = parse_json(text, "cluster model");
  try {
    if (j.value("format", "") != kKlimeFormat) throw DataError("not a cluster model file");
    KMeansModel model;
    model.variant = parse_variant(j.at("variant").get<std::string>());
    model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    model.model_vars = columns_of(j.at("model_vars"), model.feature_names);
    model.seed = j.at("seed").get<std::uint64_t>();
    model.n_init = j.at("n_init").get<int>();
    model.wcss = j.at("wcss").get<double>();
    model.standardization.mean = vector_from_json(j.at("standardization").at("mean"));
    model.standardization.sd = vector_from_json(j.at("standardization").at("sd"));
    model.transform.variant = model.variant;
    model.transform.matrix = matrix_from_json(j.at("transform").at("matrix")).transpose();
    model.transform.eigenvalues = vector_from_json(j.at("transform").at("eigenvalues"));
    const auto& clusters = j.at("clusters");
    const auto k = static_cast<Index>(clusters.size());
    if (k == 0) throw DataError("cluster model has no clusters");
    model.centroids.resize(k, model.transform.matrix.cols());
    for (Index c = 0; c < k; ++c) {
      const auto& jc = clusters[static_cast<std::size_t>(c)];
      const VectorXd centroid = vector_from_json(jc.at("centroid"));
      if (centroid.size() != model.centroids.cols()) throw DataError("centroid dimension mismatch");
      model.centroids.row(c) = centroid.transpose();
      model.cluster_sizes.push_back(jc.at("n_train").get<Index>());
      model.models.push_back(model_from_json(jc.at("model"), model.feature_names, model.model_vars));
    }
    const auto kf = static_cast<Index>(model.feature_names.size());
    if (model.standardization.mean.size() != kf || model.standardization.sd.size() != kf ||
        model.transform.matrix.rows() != kf) {
      throw DataError("cluster model dimensions are inconsistent");
    }
    return model;
  } catch (const Json::exception& e) {
    throw DataError(fmt::format("malformed cluster model JSON: {}", e.what()));
  }
}

std::string tree_coefficients_csv(const Tree& tree) {
  std::string out = "node_id,n,depth,intercept";
  for (int v : tree.model_vars) out += "," + tree.feature_names[static_cast<std::size_t>(v)];
  out += ",lambda,r2\n";
  for (const Node& node : tree.nodes) {
    if (!node.is_leaf() || !node.model) continue;
    const auto& m = *node.model;
    out += fmt::format("{},{},{},{}", node.id, node.n, node.depth, num(m.intercept));
    for (Index j = 0; j < m.coefficients.size(); ++j) out += "," + num(m.coefficients[j]);
    out += fmt::format(",{},{}\n", num(m.lambda), num(m.r2));
  }
  return out;
}

std::string derivative_means_csv(const Tree& tree) {
  std::string out = "node_id,n,depth";
  for (const char* prefix : {"scaled_", "raw_", "sd_"}) {
    for (const auto& name : tree.feature_names) out += fmt::format(",{}{}", prefix, name);
  }
  out += "\n";
  for (const Node& node : tree.nodes) {
    if (!node.is_leaf() || !node.derivative) continue;
    out += fmt::format("{},{},{}", node.id, node.n, node.depth);
    for (const VectorXd* v : {&node.derivative->scaled_means, &node.derivative->raw_means, &node.derivative->sd}) {
      for (Index j = 0; j < v->size(); ++j) out += "," + num((*v)[j]);
    }
    out += "\n";
  }
  return out;
}

std::string klime_coefficients_csv(const KMeansModel& model) {
  std::string out = "cluster,n,intercept";
  for (int v : model.model_vars) out += "," + model.feature_names[static_cast<std::size_t>(v)];
  out += ",lambda,r2\n";
  for (int c = 0; c < model.k(); ++c) {
    const auto& m = model.models[static_cast<std::size_t>(c)];
    out += fmt::format("{},{},{}", c, m.n, num(m.intercept));
    for (Index j = 0; j < m.coefficients.size(); ++j) out += "," + num(m.coefficients[j]);
    out += fmt::format(",{},{}\n", num(m.lambda), num(m.r2));
  }
  return out;
}

std::string metrics_csv(const std::vector<MetricsReport>& reports) {
  std::string out = "method,n,mse,r2,auc\n";
  for (const auto& r : reports) {
    out += fmt::format("{},{},{},{},{}\n", r.method, r.n, num(r.mse), num(r.r2), r.auc ? num(*r.auc) : "");
  }
  return out;
}

std::string metrics_json(const std::vector<MetricsReport>& reports) {
  Json out = Json::array();
  for (const auto& r : reports) {
    out.push_back({{"method", r.method}, {"n", r.n}, {"mse", r.mse}, {"r2", r.r2},
                   {"auc", r.auc ? Json(*r.auc) : Json(nullptr)}});
  }
  return out.dump(2) + "\n";
}

std::string metrics_table(const std::vector<MetricsReport>& reports) {
  std::string out = fmt::format("{:<6}", "");
  for (const auto& r : reports) out += fmt::format("{:>12}", r.method);
  out += "\n";
  const auto row = [&](const char* label, auto get) {
    out += fmt::format("{:<6}", label);
    for (const auto& r : reports) out += get(r);
    out += "\n";
  };
  row("MSE", [](const MetricsReport& r) { return fmt::format("{:>12.3f}", r.mse); });
  row("R^2", [](const MetricsReport& r) { return fmt::format("{:>12.3f}", r.r2); });
  row("AUC", [](const MetricsReport& r) {
    return r.auc ? fmt::format("{:>12.3f}", *r.auc) : fmt::format("{:>12}", "-");
  });
  return out;
}

std::string partition_csv(const PartitionReport& report) {
  std::string out = "source,partition,n,method,mse,r2\n";
  for (const auto& row : report.rows) {
    for (const auto& method : report.methods) {
      const auto& cell = row.methods.at(method);
      out += fmt::format("{},{},{},{},{},{}\n", report.source, row.partition, row.n, method, num(cell.mse),
                         cell.r2 ? num(*cell.r2) : "");
    }
  }
  return out;
}

std::string partition_json(const PartitionReport& report) {
  Json j;
  j["source"] = report.source;
  j["methods"] = report.methods;
  Json rows = Json::array();
  for (const auto& row : report.rows) {
    Json jr;
    jr["partition"] = row.partition;
    jr["n"] = row.n;
    Json cells = Json::object();
    for (const auto& method : report.methods) {
      const auto& cell = row.methods.at(method);
      cells[method] = {{"mse", cell.mse}, {"r2", cell.r2 ? Json(*cell.r2) : Json(nullptr)}};
    }
    jr["methods"] = std::move(cells);
    rows.push_back(std::move(jr));
  }
  j["rows"] = std::move(rows);
  return j.dump(2) + "\n";
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open file '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError(fmt::format("failed writing '{}'", path.string()));
}

}  // namespace limesup
