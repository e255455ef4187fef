// Acceptance checks. Prints one PASS/FAIL line per criterion; exits non-zero
// when any selected criterion fails.

#include "limesup/dtree.hpp"
#include "limesup/evalx.hpp"
#include "limesup/klime.hpp"
#include "limesup/linmod.hpp"
#include "limesup/serialize.hpp"
#include "limesup/simgen.hpp"
#include "limesup/suptree.hpp"
#include "split_oracle.hpp"
#include "test_support.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace limesup;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  std::string cli;
  fs::path work = fs::temp_directory_path() / "limesup_acceptance";
};

constexpr Index kSimRows = 50000;
constexpr int kClusters = 8;

// Methods fitted on one simulated dataset, mirroring the CLI defaults.
struct Pipeline {
  DatasetSplit split;
  Tree r;
  Tree d;
  std::map<KlimeVariant, KMeansModel> klime;
};

Pipeline run_pipeline(std::uint64_t seed, bool with_klime) {
  SimConfig sim;
  sim.n = kSimRows;
  sim.seed = seed;
  Pipeline p;
  p.split = split_dataset(simulate_benchmark(sim), {}, seed);
  const GrowthConfig config;
  p.r = fit_response_tree(p.split.train, p.split.valid, config);
  p.d = fit_derivative_tree(p.split.train, p.split.valid, config);
  if (with_klime) {
    KlimeOptions options;
    options.seed = seed;
    for (auto v : {KlimeVariant::Euclidean, KlimeVariant::Mahalanobis, KlimeVariant::Pca}) {
      p.klime.emplace(v, klime_fit(p.split.train, p.split.valid, kClusters, v, options));
    }
  }
  return p;
}

const Pipeline& main_pipeline() {
  static const Pipeline p = run_pipeline(1, true);
  return p;
}

std::string describe_splits(const Tree& tree) {
  std::string s;
  for (const Node& n : tree.nodes) {
    if (!n.split) continue;
    s += fmt::format(" [d{} {}<={:.3f}]", n.depth, tree.feature_names[static_cast<std::size_t>(n.split->variable)],
                     n.split->threshold);
  }
  return s;
}

// x1 = 0, x2 = 1, x3 = 2, x4 = 3.
Outcome criterion_1(const Context&) {
  bool all = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    SimConfig sim;
    sim.n = kSimRows;
    sim.seed = seed;
    const DatasetSplit split = split_dataset(simulate_benchmark(sim), {}, seed);
    const Tree tree = fit_response_tree(split.train, split.valid, {});
    const auto& nodes = tree.nodes;
    auto split_on = [&](int id, int var, double lo, double hi) {
      const Node& n = nodes[static_cast<std::size_t>(id)];
      return n.split && n.split->variable == var && n.split->threshold >= lo && n.split->threshold <= hi;
    };
    bool ok = split_on(0, 2, -0.3, 0.3);
    std::vector<int> depth1;
    if (ok) depth1 = {nodes[0].children->first, nodes[0].children->second};
    for (int id : depth1) ok = ok && split_on(id, 3, -1e300, 1e300);
    std::vector<int> depth2;
    if (ok) {
      for (int id : depth1) {
        depth2.push_back(nodes[static_cast<std::size_t>(id)].children->first);
        depth2.push_back(nodes[static_cast<std::size_t>(id)].children->second);
      }
    }
    for (int id : depth2) ok = ok && split_on(id, 1, 0.6, 1.4);
    for (const Node& n : nodes) ok = ok && !(n.split && n.split->variable == 0);
    all = all && ok;
    detail += fmt::format("seed {}: {} ({});", seed, ok ? "ok" : "mismatch", describe_splits(tree));
  }
  return {all, detail};
}

double test_r2(const Pipeline& p, const Eigen::VectorXd& pred) { return global_metrics(p.split.test.response, pred).r2; }

Outcome criterion_2(const Context&) {
  const Pipeline& p = main_pipeline();
  const auto& X = p.split.test.features;
  const double r = test_r2(p, predict_tree(p.r, X));
  const double d = test_r2(p, predict_tree(p.d, X));
  bool ok = r >= 0.75 && std::abs(d - r) <= 0.05;
  std::string detail = fmt::format("R2 limesup-r {:.4f}, limesup-d {:.4f}", r, d);
  for (const auto& [variant, model] : p.klime) {
    const double k = test_r2(p, predict_klime(model, X));
    ok = ok && r - k >= 0.05;
    detail += fmt::format(", {} {:.4f}", klime_method_name(variant), k);
  }
  return {ok, detail};
}

Outcome criterion_3(const Context&) {
  const Pipeline& p = main_pipeline();
  const auto& X = p.split.test.features;
  const KMeansModel& e = p.klime.at(KlimeVariant::Euclidean);
  const PartitionReport report =
      partition_comparison(assign_clusters(e, X), p.split.test.response,
                           {{"limesup-r", predict_tree(p.r, X)}, {"klime-e", predict_klime(e, X)}}, "klime-e");
  int wins = 0;
  std::string detail;
  for (const auto& row : report.rows) {
    const double a = row.methods.at("limesup-r").mse;
    const double b = row.methods.at("klime-e").mse;
    wins += a <= b ? 1 : 0;
    detail += fmt::format(" p{}:{:.3f}/{:.3f}", row.partition, a, b);
  }
  return {wins >= 7 && report.rows.size() == static_cast<std::size_t>(kClusters),
          fmt::format("{} of {} partitions;{}", wins, report.rows.size(), detail)};
}

Dataset oracle_instance(Rng& rng) {
  const Index n = 100 + static_cast<Index>(rng.below(101));
  const Index p = 1 + static_cast<Index>(rng.below(3));
  Eigen::MatrixXd X = testing::normal_matrix(rng, n, p);
  // Coarse columns now and then so ties reach the candidate rule.
  if (rng.below(2) == 0) X.col(0) = (X.col(0).array() * 2.0).round();
  Eigen::VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    y[i] = X(i, 0) + (X(i, p - 1) > 0.3 ? 2.0 * X(i, 0) - 1.0 : 0.0) + 0.3 * rng.normal();
  }
  return testing::make_dataset(std::move(X), std::move(y));
}

Outcome criterion_4(const Context&) {
  Rng rng(4);
  int mismatches = 0;
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Dataset ds = oracle_instance(rng);
    GrowthConfig config;
    config.n_quantiles = 10;
    config.m_filter = static_cast<int>(ds.cols());
    const Index min_node = config.resolved_min_node_size(ds.cols());
    const Tree tree = grow_tree(ds, config);
    for (const Node& node : tree.nodes) {
      if (node.depth >= config.max_depth || node.n < 2 * min_node) continue;
      const auto want = oracle::brute_force_split(ds, node.rows, ds.partition_vars, config.n_quantiles, min_node,
                                                  [&](const RowSet& r) { return oracle::response_cost(ds, r); });
      const double parent = oracle::response_cost(ds, node.rows);
      const bool should_split =
          want && parent - want->child_sse > 0.0 && parent - want->child_sse >= config.min_relative_improvement * parent;
      ++checked;
      if (node.is_leaf() != !should_split) {
        ++mismatches;
        continue;
      }
      if (should_split &&
          (node.split->variable != want->variable || oracle::tree_left_count(ds, node) != want->left_count)) {
        ++mismatches;
      }
    }
  }
  return {mismatches == 0, fmt::format("{} mismatches over {} nodes", mismatches, checked)};
}

// Which side of x2 = 1 a leaf sits on: an x2 split on its path decides;
// otherwise the majority of its training rows.
bool high_x2_side(const Tree& tree, const Node& leaf, const Dataset& train) {
  for (const Node* n = &leaf; n->parent >= 0;) {
    const Node& parent = tree.nodes[static_cast<std::size_t>(n->parent)];
    if (parent.split->variable == 1) return parent.children->second == n->id;
    n = &parent;
  }
  Index high = 0;
  for (Index r : leaf.rows) high += train.features(r, 1) > 1.0 ? 1 : 0;
  return 2 * high > static_cast<Index>(leaf.rows.size());
}

Outcome criterion_5(const Context&) {
  const Pipeline& p = main_pipeline();
  bool ok = true;
  std::string detail;
  for (int id : p.r.leaf_ids()) {
    const Node& leaf = p.r.nodes[static_cast<std::size_t>(id)];
    const double b1 = leaf.model->coefficients[0];
    const double b2 = leaf.model->coefficients[1];
    const bool high = high_x2_side(p.r, leaf, p.split.train);
    const bool leaf_ok = std::abs(b1 - 0.5) <= 0.15 && std::abs(b2 - (high ? 1.5 : 0.0)) <= 0.4;
    ok = ok && leaf_ok;
    detail += fmt::format(" leaf{}({}):b1={:.3f},b2={:.3f}", id, high ? "x2>1" : "x2<=1", b1, b2);
  }
  return {ok, detail};
}

Outcome criterion_6(const Context&) {
  const Pipeline& p = main_pipeline();
  bool ok = true;
  std::string detail;
  for (const auto& t : terminal_coefficients(p.d)) {
    ok = ok && std::abs(t.raw_means[0] - 0.5) <= 0.1;
    detail += fmt::format(" leaf{}:{:.4f}", t.node_id, t.raw_means[0]);
  }
  return {ok, detail};
}

double auc_pairs(const Eigen::VectorXd& s, const Eigen::VectorXi& y) {
  double hits = 0.0;
  double pairs = 0.0;
  for (Index i = 0; i < s.size(); ++i) {
    for (Index j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1.0;
      hits += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return hits / pairs;
}

Outcome criterion_7(const Context&) {
  Rng rng(7);
  double ortho = 0.0;
  double ols_gap = 0.0;
  int nonempty = 0;
  double auc_gap = 0.0;
  double decomposition_gap = 0.0;
  double fd_gap = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 20 + static_cast<Index>(rng.below(200));
    const Index p = 1 + static_cast<Index>(rng.below(6));
    const Eigen::MatrixXd X = testing::normal_matrix(rng, n, p);
    const Eigen::VectorXd y = X * testing::normal_vector(rng, p) + testing::normal_vector(rng, n);

    const LinearModel ols = fit_ols(X, y);
    const Eigen::VectorXd resid = y - predict(ols, X);
    ortho = std::max({ortho, std::abs(resid.sum()), (X.transpose() * resid).cwiseAbs().maxCoeff()});

    const LinearModel l0 = fit_lasso(X, y, 0.0);
    ols_gap = std::max({ols_gap, std::abs(l0.intercept - ols.intercept),
                        (l0.coefficients - ols.coefficients).cwiseAbs().maxCoeff()});
    const double lmax = lasso_lambda_max(X, y);
    nonempty += fit_lasso(X, y, lmax).nonzero_count() + fit_lasso(X, y, lmax * (1.0 + rng.uniform())).nonzero_count();

    const Index m = 2 + static_cast<Index>(rng.below(49));
    Eigen::VectorXd s(m);
    Eigen::VectorXi lab(m);
    for (Index i = 0; i < m; ++i) {
      s[i] = static_cast<double>(rng.below(10));
      lab[i] = static_cast<int>(rng.below(2));
    }
    lab[0] = 0;
    lab[1] = 1;
    auc_gap = std::max(auc_gap, std::abs(auc_mann_whitney(s, lab) - auc_pairs(s, lab)));

    const Eigen::VectorXd pred = y + testing::normal_vector(rng, n);
    std::vector<int> ids(static_cast<std::size_t>(n));
    for (auto& id : ids) id = static_cast<int>(rng.below(8));
    const PartitionReport report = partition_comparison(ids, y, {{"m", pred}});
    double weighted = 0.0;
    for (const auto& row : report.rows) weighted += static_cast<double>(row.n) * row.methods.at("m").mse;
    decomposition_gap =
        std::max(decomposition_gap, std::abs(weighted / static_cast<double>(n) - global_metrics(y, pred).mse));

    Eigen::RowVectorXd x = testing::normal_matrix(rng, 1, 6);
    const double h = 1e-5;
    if (std::abs(x[1] - 1.0) < 10 * h) x[1] += 0.1;
    const Eigen::MatrixXd D = analytic_derivatives(x);
    for (Index j = 0; j < 6; ++j) {
      Eigen::RowVectorXd up = x;
      Eigen::RowVectorXd down = x;
      up[j] += h;
      down[j] -= h;
      fd_gap = std::max(fd_gap, std::abs(D(0, j) - (benchmark_logit(up) - benchmark_logit(down)) / (2 * h)));
    }
  }
  const bool ok = ortho < 1e-6 && ols_gap < 1e-6 && nonempty == 0 && auc_gap < 1e-12 && decomposition_gap < 1e-10 &&
                  fd_gap < 1e-6;
  return {ok, fmt::format("orthogonality {:.2e}, lasso0-ols {:.2e}, nonzero at lambda_max {}, auc {:.2e}, "
                          "decomposition {:.2e}, finite differences {:.2e}",
                          ortho, ols_gap, nonempty, auc_gap, decomposition_gap, fd_gap)};
}

int shell(const std::string& command) { return std::system((command + " > /dev/null").c_str()); }

// simulate -> fit-r, fit-d, klime x3 -> evaluate, export. Returns false on a
// non-zero exit.
bool cli_pipeline(const Context& ctx, const fs::path& dir, int threads, std::string& error) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string base = fmt::format("\"{}\" --seed 1 --threads {}", ctx.cli, threads);
  const std::string data = (dir / "sim.csv").string();
  const std::string out = fmt::format("--out-dir \"{}\"", dir.string());
  std::vector<std::string> commands = {
      fmt::format("{} simulate --n {} --out \"{}\"", base, kSimRows, data),
      fmt::format("{} fit-r \"{}\" {}", base, data, out),
      fmt::format("{} fit-d \"{}\" {}", base, data, out),
  };
  for (const char* v : {"E", "M", "P"}) {
    commands.push_back(fmt::format("{} klime \"{}\" --k {} --variant {} {}", base, data, kClusters, v, out));
  }
  std::string models;
  for (const char* m : {"limesup-r", "limesup-d", "klime-e", "klime-m", "klime-p"}) {
    models += fmt::format(" --model \"{}\"", (dir / (std::string(m) + ".json")).string());
  }
  commands.push_back(fmt::format("{} evaluate \"{}\"{} --partition-source klime-e {}", base, data, models, out));
  commands.push_back(
      fmt::format("{} export \"{}\"{} --out \"{}\"", base, data, models, (dir / "predictions.csv").string()));
  for (const auto& c : commands) {
    if (shell(c) != 0) {
      error = c;
      return false;
    }
  }
  return true;
}

std::map<std::string, std::string> directory_bytes(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) files[entry.path().filename().string()] = read_text_file(entry.path());
  return files;
}

Outcome criterion_8(const Context& ctx) {
  if (ctx.cli.empty()) return {false, "no --cli executable given"};
  std::vector<std::pair<std::string, int>> runs = {{"t1_a", 1}, {"t1_b", 1}, {"t8", 8}};
  std::vector<std::map<std::string, std::string>> outputs;
  for (const auto& [name, threads] : runs) {
    std::string error;
    if (!cli_pipeline(ctx, ctx.work / "determinism" / name, threads, error)) return {false, "command failed: " + error};
    outputs.push_back(directory_bytes(ctx.work / "determinism" / name));
  }
  std::vector<std::string> differing;
  for (std::size_t i = 1; i < outputs.size(); ++i) {
    for (const auto& [file, bytes] : outputs[0]) {
      const auto it = outputs[i].find(file);
      if (it == outputs[i].end() || it->second != bytes) differing.push_back(runs[i].first + "/" + file);
    }
    if (outputs[i].size() != outputs[0].size()) differing.push_back(runs[i].first + ": file set differs");
  }
  std::string detail = fmt::format("{} files per run, 3 runs (threads 1, 1, 8)", outputs[0].size());
  for (const auto& d : differing) detail += " differs:" + d;
  return {differing.empty(), detail};
}

Outcome criterion_9(const Context& ctx) {
  const auto start = std::chrono::steady_clock::now();
  std::string how;
  if (!ctx.cli.empty()) {
    std::string error;
    if (!cli_pipeline(ctx, ctx.work / "runtime", 1, error)) return {false, "command failed: " + error};
    how = "command-line pipeline";
  } else {
    run_pipeline(1, true);
    how = "in-process pipeline";
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {seconds < 300.0, fmt::format("{} took {:.1f} s (limit 300 s)", how, seconds)};
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (i + 1 >= argc) {
      std::cerr << "missing value for " << arg << "\n";
      return 2;
    }
    if (arg == "--criterion") {
      selected.push_back(std::stoi(argv[++i]));
    } else if (arg == "--cli") {
      ctx.cli = argv[++i];
    } else if (arg == "--work") {
      ctx.work = argv[++i];
    } else {
      std::cerr << "unknown argument " << arg << "\n";
      return 2;
    }
  }
  const std::vector<std::pair<std::string, std::function<Outcome(const Context&)>>> criteria = {
      {"simulation tree structure", criterion_1},  {"method ordering and R2 bands", criterion_2},
      {"per-partition dominance", criterion_3},    {"split-search oracle equivalence", criterion_4},
      {"coefficient recovery", criterion_5},       {"derivative means", criterion_6},
      {"numerical unit checks", criterion_7},      {"determinism", criterion_8},
      {"end-to-end runtime", criterion_9},
  };
  if (selected.empty()) {
    for (int c = 1; c <= static_cast<int>(criteria.size()); ++c) selected.push_back(c);
  }
  bool all = true;
  for (int c : selected) {
    if (c < 1 || c > static_cast<int>(criteria.size())) {
      std::cerr << "no criterion " << c << "\n";
      return 2;
    }
    const auto& [name, fn] = criteria[static_cast<std::size_t>(c - 1)];
    Outcome outcome;
    try {
      outcome = fn(ctx);
    } catch (const std::exception& e) {
      outcome = {false, fmt::format("exception: {}", e.what())};
    }
    all = all && outcome.pass;
    std::cout << fmt::format("{} criterion {} ({}): {}\n", outcome.pass ? "PASS" : "FAIL", c, name, outcome.detail)
              << std::flush;
  }
  return all ? 0 : 1;
}
