// Command-line front end: dataset generation, the four solvers, parameter
// sweeps, and the self-check suites. Exit codes: 0 success, 2 usage or
// input error, 3 iteration-budget stop, 4 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <algorithm>
#include <string>
#include <vector>

#include "lrgw/lrgw.hpp"

using json = nlohmann::ordered_json;
using namespace lrgw;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitBudget = 3;
constexpr int kExitNumerical = 4;

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%FT%TZ", std::gmtime(&tt));
  return buffer;
}

struct ManifestWriter {
  std::string command_line;
  json config = json::object();
  std::uint64_t seed = 0;
  bool deterministic = false;
  std::string started_at;

  void write(const std::string& path) const {
    json doc;
    doc["command_line"] = command_line;
    doc["config"] = config;
    doc["seed"] = seed;
    doc["library_version"] = version_string;
    doc["started_at"] = deterministic ? "" : started_at;
    doc["finished_at"] = deterministic ? "" : iso_timestamp();
    doc["deterministic"] = deterministic;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw input_error("cannot open '" + path + "' for writing");
    out << doc.dump(2) << '\n';
  }
};

std::string join_args(int argc, char** argv) {
  std::string joined;
  for (int i = 0; i < argc; ++i) {
    if (i) joined += ' ';
    joined += argv[i];
  }
  return joined;
}

// Flat `key = value` configuration: each key names a long option of the
// invoked subcommand. Explicit flags win; config entries fill in the rest.
std::vector<std::string> apply_config_file(std::vector<std::string> args) {
  std::string config_path;
  for (std::size_t i = 0; i + 1 < args.size(); ++i) {
    if (args[i] == "--config") {
      config_path = args[i + 1];
      args.erase(args.begin() + i, args.begin() + i + 2);
      break;
    }
  }
  if (config_path.empty()) return args;

  std::ifstream in(config_path);
  if (!in) throw input_error("cannot open config file '" + config_path + "'");
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw input_error(config_path + ": expected 'key = value' on line " +
                        std::to_string(line_number));
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw input_error(config_path + ": empty key on line " +
                        std::to_string(line_number));
    const std::string flag = "--" + key;
    if (std::find(args.begin(), args.end(), flag) == args.end()) {
      args.push_back(flag);
      if (!value.empty()) args.push_back(value);
    }
  }
  return args;
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenOptions {
  std::string kind = "unit_square";
  Index n = 100;
  Index d = 2;
  int clusters = 1;
  double beta = 0.0;
  std::uint64_t seed = 0;
  std::string out;
  bool deterministic = false;
};

int run_gen(const GenOptions& opt, const std::string& command_line) {
  DatasetSpec spec;
  spec.kind = dataset_kind_from_string(opt.kind);
  spec.n = opt.n;
  spec.d = opt.d;
  spec.clusters = opt.clusters;
  spec.separation = opt.beta;
  spec.seed = opt.seed;

  ManifestWriter manifest;
  manifest.command_line = command_line;
  manifest.seed = opt.seed;
  manifest.deterministic = opt.deterministic;
  manifest.started_at = iso_timestamp();
  manifest.config = {{"kind", opt.kind}, {"n", opt.n},
                     {"d", opt.d},       {"clusters", opt.clusters},
                     {"beta", opt.beta}, {"out", opt.out}};

  const PointCloud cloud = generate(spec);
  save_point_cloud(opt.out, cloud);
  manifest.write(opt.out + ".manifest.json");
  std::printf("wrote %s (%lld points, %lld dims)\n", opt.out.c_str(),
              static_cast<long long>(cloud.size()),
              static_cast<long long>(cloud.dim()));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

struct SolveOptions {
  std::string method;
  std::string source, target;
  std::string cost = "sqeuclidean";
  double q = 2.0;
  int knn_k = 5;
  Index approx_rank = 10;
  Index approx_samples = 0;  // 0 -> 10 * rank
  double epsilon = 1e-2;
  bool link_epsilon_gamma = false;
  Index rank = 10;
  double alpha = 1e-10;
  double gamma = 100.0;
  double gw_epsilon = 0.0;
  int outer_iter = 50;
  double inner_delta = 1e-6;
  int inner_max_iter = 10000;
  double dykstra_delta = 1e-3;
  int dykstra_max_iter = 5000;
  double stop_tol = 1e-6;
  std::string init = "lower-bound";
  std::uint64_t seed = 0;
  std::string out_prefix;
  bool deterministic = false;
};

struct BuiltCost {
  std::optional<DenseCost> dense;
  std::optional<FactoredCost> factored;
};

BuiltCost build_cost(const SolveOptions& opt, const PointCloud& cloud,
                     bool need_factored, std::uint64_t stream) {
  BuiltCost out;
  if (opt.cost == "sqeuclidean") {
    if (need_factored)
      out.factored = squared_euclidean_factors(cloud);
    else
      out.dense = dense_cost(cloud, 2.0);
  } else if (opt.cost == "euclidean" || opt.cost == "power") {
    const double exponent = opt.cost == "euclidean" ? 1.0 : opt.q;
    if (need_factored)
      throw input_error(
          "cost '" + opt.cost +
          "' has no exact thin factorization; the linear and quadratic "
          "factored methods need --cost sqeuclidean or --cost lr-approx");
    out.dense = dense_cost(cloud, exponent);
  } else if (opt.cost == "knn-sp") {
    if (need_factored)
      throw input_error(
          "shortest-path costs are dense; the linear and quadratic factored "
          "methods need --cost sqeuclidean or --cost lr-approx");
    out.dense = knn_shortest_path_cost(cloud, opt.knn_k);
  } else if (opt.cost == "lr-approx") {
    FactoredCost approx =
        lr_distance_approx(cloud, cloud, opt.approx_rank, opt.approx_samples,
                           opt.seed ^ stream, opt.q);
    if (need_factored)
      out.factored = std::move(approx);
    else
      out.dense = DenseCost{approx.left * approx.right.transpose()};
  } else {
    throw input_error("unknown cost '" + opt.cost + "'");
  }
  return out;
}

int run_solve(const SolveOptions& opt, const std::string& command_line) {
  const bool factored_method =
      opt.method == "quad-ent" || opt.method == "lin-lr";
  const PointCloud source = load_point_cloud(opt.source);
  const PointCloud target = load_point_cloud(opt.target);
  const Vector a = uniform_weights(source.size());
  const Vector b = uniform_weights(target.size());

  const BuiltCost a_cost = build_cost(opt, source, factored_method, 0xA);
  const BuiltCost b_cost = build_cost(opt, target, factored_method, 0xB);

  ManifestWriter manifest;
  manifest.command_line = command_line;
  manifest.seed = opt.seed;
  manifest.deterministic = opt.deterministic;
  manifest.started_at = iso_timestamp();
  const double epsilon =
      opt.link_epsilon_gamma ? 1.0 / opt.gamma : opt.epsilon;
  manifest.config = {{"method", opt.method},
                     {"source", opt.source},
                     {"target", opt.target},
                     {"cost", opt.cost},
                     {"q", opt.q},
                     {"knn_k", opt.knn_k},
                     {"approx_rank", opt.approx_rank},
                     {"approx_samples", opt.approx_samples},
                     {"epsilon", epsilon},
                     {"rank", opt.rank},
                     {"alpha", opt.alpha},
                     {"gamma", opt.gamma},
                     {"gw_epsilon", opt.gw_epsilon},
                     {"outer_iter", opt.outer_iter},
                     {"inner_delta", opt.inner_delta},
                     {"inner_max_iter", opt.inner_max_iter},
                     {"dykstra_delta", opt.dykstra_delta},
                     {"dykstra_max_iter", opt.dykstra_max_iter},
                     {"stop_tol", opt.stop_tol},
                     {"init", opt.init},
                     {"out_prefix", opt.out_prefix}};

  SolveReport report;
  if (opt.method == "ent" || opt.method == "quad-ent") {
    EntropicConfig cfg;
    cfg.epsilon = epsilon;
    cfg.outer_iter = opt.outer_iter;
    cfg.inner_delta = opt.inner_delta;
    cfg.inner_max_iter = opt.inner_max_iter;
    cfg.stop_tol = opt.stop_tol;
    cfg.init = opt.init == "product" ? InitScheme::product
                                     : InitScheme::lower_bound;
    Coupling plan;
    if (opt.method == "ent") {
      auto result = solve_entropic_gw(*a_cost.dense, *b_cost.dense, a, b, cfg);
      plan = std::move(result.first);
      report = std::move(result.second);
    } else {
      auto result =
          solve_quad_entropic_gw(*a_cost.factored, *b_cost.factored, a, b, cfg);
      plan = std::move(result.first);
      report = std::move(result.second);
    }
    save_coupling(opt.out_prefix + ".coupling.csv", plan);
  } else if (opt.method == "lr" || opt.method == "lin-lr") {
    GwLrConfig cfg;
    cfg.rank = opt.rank;
    cfg.alpha = opt.alpha;
    cfg.gamma = opt.gamma;
    cfg.epsilon = opt.gw_epsilon;
    cfg.outer_iter = opt.outer_iter;
    cfg.dykstra_delta = opt.dykstra_delta;
    cfg.dykstra_max_iter = opt.dykstra_max_iter;
    cfg.stop_tol = opt.stop_tol;
    cfg.seed = opt.seed;
    LowRankCoupling triple;
    if (opt.method == "lr") {
      auto result = solve_gw_lr(*a_cost.dense, *b_cost.dense, a, b, cfg);
      triple = std::move(result.first);
      report = std::move(result.second);
    } else {
      auto result =
          solve_gw_lr_linear(*a_cost.factored, *b_cost.factored, a, b, cfg);
      triple = std::move(result.first);
      report = std::move(result.second);
    }
    save_low_rank(opt.out_prefix, triple);
  } else {
    throw input_error("unknown method '" + opt.method + "'");
  }

  save_report(opt.out_prefix + ".report.csv", report, opt.deterministic);
  manifest.write(opt.out_prefix + ".manifest.json");

  std::printf("%s: %zu outer iterations, final loss %.6g, stop: %s\n",
              opt.method.c_str(), report.iterations(),
              report.losses.empty() ? 0.0 : report.losses.back(),
              to_string(report.stop_reason));
  return report.stop_reason == StopReason::iteration_budget ? kExitBudget
                                                            : kExitOk;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchOptions {
  std::string sweep;  // gamma | rank | epsilon
  std::vector<double> values;
  std::string method = "lin-lr";
  int reps = 1;
  std::string kind = "blobs";
  Index n = 500;
  Index d = 2;
  Index d2 = 0;  // 0 -> same as d
  int clusters = 5;
  double beta = 10.0;
  std::string cost = "sqeuclidean";
  Index rank = 10;
  double alpha = 1e-10;
  double gamma = 100.0;
  double epsilon = 1e-2;
  bool link_epsilon_gamma = false;
  int outer_iter = 50;
  double inner_delta = 1e-6;
  int inner_max_iter = 10000;
  double dykstra_delta = 1e-3;
  int dykstra_max_iter = 5000;
  double stop_tol = 1e-6;
  std::uint64_t seed = 0;
  std::string out;
  bool deterministic = false;
};

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
  CounterRng rng(base ^ (salt * 0x9E3779B97F4A7C15ull));
  return rng.next_u64();
}

int run_bench(const BenchOptions& opt, const std::string& command_line) {
  if (opt.sweep != "gamma" && opt.sweep != "rank" && opt.sweep != "epsilon")
    throw input_error("unknown sweep '" + opt.sweep + "'");
  if (opt.values.empty()) throw input_error("bench: --values is empty");

  std::ofstream out(opt.out, std::ios::binary);
  if (!out) throw input_error("cannot open '" + opt.out + "' for writing");
  out << "method,param,value,rep,final_loss,total_ms,outer_iters,status\n";

  for (double value : opt.values) {
    for (int rep = 0; rep < opt.reps; ++rep) {
      DatasetSpec src_spec;
      src_spec.kind = dataset_kind_from_string(opt.kind);
      src_spec.n = opt.n;
      src_spec.d = opt.d;
      src_spec.clusters = opt.clusters;
      src_spec.separation = opt.beta;
      src_spec.seed = mix_seed(opt.seed, 2 * rep);
      DatasetSpec tgt_spec = src_spec;
      tgt_spec.d = opt.d2 > 0 ? opt.d2 : opt.d;
      tgt_spec.seed = mix_seed(opt.seed, 2 * rep + 1);

      std::string status = "ok";
      double final_loss = std::numeric_limits<double>::quiet_NaN();
      double total_ms = 0.0;
      std::size_t outer = 0;
      const auto tick = std::chrono::steady_clock::now();
      try {
        const PointCloud source = generate(src_spec);
        const PointCloud target = generate(tgt_spec);
        const Vector a = uniform_weights(source.size());
        const Vector b = uniform_weights(target.size());

        SolveReport report;
        if (opt.method == "ent" || opt.method == "quad-ent") {
          EntropicConfig cfg;
          cfg.epsilon = opt.epsilon;
          cfg.outer_iter = opt.outer_iter;
          cfg.inner_delta = opt.inner_delta;
          cfg.inner_max_iter = opt.inner_max_iter;
          cfg.stop_tol = opt.stop_tol;
          if (opt.sweep == "gamma" || opt.link_epsilon_gamma)
            cfg.epsilon = 1.0 / value;
          if (opt.sweep == "epsilon" && !opt.link_epsilon_gamma)
            cfg.epsilon = value;
          if (opt.method == "ent") {
            report = solve_entropic_gw(dense_cost(source, 2.0),
                                       dense_cost(target, 2.0), a, b, cfg)
                         .second;
          } else {
            report = solve_quad_entropic_gw(squared_euclidean_factors(source),
                                            squared_euclidean_factors(target),
                                            a, b, cfg)
                         .second;
          }
        } else if (opt.method == "lr" || opt.method == "lin-lr") {
          GwLrConfig cfg;
          cfg.rank = opt.rank;
          cfg.alpha = opt.alpha;
          cfg.gamma = opt.gamma;
          cfg.outer_iter = opt.outer_iter;
          cfg.dykstra_delta = opt.dykstra_delta;
          cfg.dykstra_max_iter = opt.dykstra_max_iter;
          cfg.stop_tol = opt.stop_tol;
          cfg.seed = mix_seed(opt.seed, 1000 + rep);
          if (opt.sweep == "gamma") cfg.gamma = value;
          if (opt.sweep == "rank") cfg.rank = static_cast<Index>(value);
          if (opt.sweep == "epsilon") cfg.epsilon = value;
          if (opt.method == "lr") {
            report = solve_gw_lr(dense_cost(source, 2.0),
                                 dense_cost(target, 2.0), a, b, cfg)
                         .second;
          } else {
            report = solve_gw_lr_linear(squared_euclidean_factors(source),
                                        squared_euclidean_factors(target), a,
                                        b, cfg)
                         .second;
          }
        } else {
          throw input_error("unknown method '" + opt.method + "'");
        }
        final_loss = report.losses.empty() ? 0.0 : report.losses.back();
        outer = report.iterations();
        if (report.stop_reason == StopReason::iteration_budget)
          status = "budget";
      } catch (const error& failure) {
        status = std::string("error: ") + failure.what();
        for (char& c : status)
          if (c == ',' || c == '\n') c = ';';
      }
      total_ms = std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - tick)
                     .count();
      char loss_buf[32], ms_buf[32];
      std::snprintf(loss_buf, sizeof(loss_buf), "%.12g", final_loss);
      std::snprintf(ms_buf, sizeof(ms_buf), "%.3f",
                    opt.deterministic ? 0.0 : total_ms);
      out << opt.method << ',' << opt.sweep << ',' << value << ',' << rep
          << ',' << loss_buf << ',' << ms_buf << ',' << outer << ',' << status
          << '\n';
    }
  }
  out.close();

  ManifestWriter manifest;
  manifest.command_line = command_line;
  manifest.seed = opt.seed;
  manifest.deterministic = opt.deterministic;
  manifest.started_at = iso_timestamp();
  manifest.config = {{"sweep", opt.sweep},   {"method", opt.method},
                     {"values", opt.values}, {"reps", opt.reps},
                     {"kind", opt.kind},     {"n", opt.n},
                     {"d", opt.d},           {"d2", opt.d2},
                     {"clusters", opt.clusters}, {"beta", opt.beta},
                     {"out", opt.out}};
  manifest.write(opt.out + ".manifest.json");
  std::printf("wrote %s\n", opt.out.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

struct Check {
  std::string name;
  bool pass;
  double residual;
};

Vector random_simplex(Index n, CounterRng& rng) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = rng.uniform(0.1, 1.0);
  return v / v.sum();
}

Matrix random_positive(Index n, Index m, CounterRng& rng) {
  Matrix k(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) k(i, j) = rng.uniform(0.2, 3.0);
  return k;
}

PointCloud unit_cloud(Index n, Index d, CounterRng& rng) {
  Matrix points(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) points(i, j) = rng.uniform();
  return PointCloud{std::move(points)};
}

LowRankCoupling random_feasible_triple(const Vector& a, const Vector& b,
                                       Index rank, double alpha,
                                       CounterRng& rng) {
  Vector weights = random_simplex(rank, rng).cwiseMax(2.0 * alpha);
  weights /= weights.sum();
  LowRankCoupling triple;
  triple.source_factor =
      kl_project(random_positive(a.size(), rank, rng), a, weights, 1e-11,
                 20000)
          .first.plan;
  triple.target_factor =
      kl_project(random_positive(b.size(), rank, rng), b, weights, 1e-11,
                 20000)
          .first.plan;
  triple.inner_weights = weights;
  return triple;
}

std::vector<Check> suite_feasibility(std::uint64_t seed) {
  CounterRng rng(seed);
  double worst_marginal = 0.0, worst_floor = 0.0, worst_sum = 0.0;
  const double delta = 1e-3, alpha = 1e-5;
  for (int rep = 0; rep < 10; ++rep) {
    const Index n = 40, m = 30, r = 5;
    const Vector a = random_simplex(n, rng);
    const Vector b = random_simplex(m, rng);
    KernelTriple kernels{random_positive(n, r, rng),
                         random_positive(m, r, rng), random_simplex(r, rng)};
    const DykstraResult result =
        dykstra_project(kernels, a, b, alpha, delta, 20000);
    const FeasibilityResiduals res =
        feasibility_residuals(result.triple, a, b, alpha);
    worst_marginal = std::max({worst_marginal, res.source_rows,
                               res.target_rows, res.source_cols,
                               res.target_cols});
    worst_floor = std::max(worst_floor, res.weight_floor);
    worst_sum = std::max(worst_sum, res.weight_sum);
  }
  return {{"dykstra marginal residual <= 1e-3", worst_marginal <= delta,
           worst_marginal},
          {"weight floor g >= alpha exact", worst_floor == 0.0, worst_floor},
          {"weight sum near 1", worst_sum <= delta, worst_sum}};
}

std::vector<Check> suite_objective(std::uint64_t seed) {
  CounterRng rng(seed);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const Index n = 2 + static_cast<Index>(rng.uniform_index(7));
    const Index m = 2 + static_cast<Index>(rng.uniform_index(7));
    const DenseCost a_cost = dense_cost(unit_cloud(n, 2, rng), 2.0);
    const DenseCost b_cost = dense_cost(unit_cloud(m, 2, rng), 2.0);
    const Vector a = random_simplex(n, rng);
    const Vector b = random_simplex(m, rng);
    const Coupling plan =
        kl_project(random_positive(n, m, rng), a, b, 1e-12, 50000).first;
    const double oracle = gw_quadruple_sum(a_cost, b_cost, plan);
    const double fast = eval_gw_objective(a_cost, b_cost, plan);
    worst = std::max(worst,
                     std::abs(oracle - fast) / (1.0 + std::abs(oracle)));
  }
  return {{"quadruple sum vs reformulation <= 1e-9", worst <= 1e-9, worst}};
}

std::vector<Check> suite_gradient(std::uint64_t seed) {
  CounterRng rng(seed);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const Index n = 6, m = 5, r = 3;
    const DenseCost a_cost = dense_cost(unit_cloud(n, 2, rng), 2.0);
    const DenseCost b_cost = dense_cost(unit_cloud(m, 2, rng), 2.0);
    const Vector a = random_simplex(n, rng);
    const Vector b = random_simplex(m, rng);
    const LowRankCoupling point = random_feasible_triple(a, b, r, 1e-4, rng);
    const double epsilon = rep % 2 == 0 ? 0.0 : 0.1;
    const GradientTriple analytic =
        gw_lr_gradient(a_cost, b_cost, point, epsilon);
    const GradientTriple numeric = finite_difference_gradient(
        [&](const LowRankCoupling& t) {
          const Matrix plan = t.source_factor *
                              t.inner_weights.cwiseInverse().asDiagonal() *
                              t.target_factor.transpose();
          double value = -2.0 * (a_cost.values * plan * b_cost.values)
                                    .cwiseProduct(plan)
                                    .sum();
          if (epsilon > 0.0) {
            const auto ent = [](const Matrix& x) {
              return (x.array() * (x.array().log() - 1.0)).sum();
            };
            value += epsilon * (ent(t.source_factor) + ent(t.target_factor) +
                                ent(t.inner_weights));
          }
          return value;
        },
        point, 1e-5);
    const double scale = 1.0 + analytic.d_source.cwiseAbs().maxCoeff() +
                         analytic.d_target.cwiseAbs().maxCoeff() +
                         analytic.d_weights.cwiseAbs().maxCoeff();
    const double err =
        std::max({(analytic.d_source - numeric.d_source).cwiseAbs().maxCoeff(),
                  (analytic.d_target - numeric.d_target).cwiseAbs().maxCoeff(),
                  (analytic.d_weights - numeric.d_weights)
                      .cwiseAbs()
                      .maxCoeff()}) /
        scale;
    worst = std::max(worst, err);
  }
  return {{"gradient vs finite differences <= 1e-5", worst <= 1e-5, worst}};
}

std::vector<Check> suite_bound(std::uint64_t seed) {
  CounterRng rng(seed);
  double worst = -std::numeric_limits<double>::infinity();
  for (int rep = 0; rep < 100; ++rep) {
    const Index n = 2 + static_cast<Index>(rng.uniform_index(7));
    const Index m = 2 + static_cast<Index>(rng.uniform_index(7));
    const DenseCost a_cost = dense_cost(unit_cloud(n, 2, rng), 2.0);
    const DenseCost b_cost = dense_cost(unit_cloud(m, 2, rng), 2.0);
    const Vector a = random_simplex(n, rng);
    const Vector b = random_simplex(m, rng);
    const Coupling plan =
        kl_project(random_positive(n, m, rng), a, b, 1e-12, 50000).first;
    const InitCostFactors profile = build_init_cost(a_cost, a, b_cost, b);
    const double lower =
        ((profile.left * profile.right).cwiseProduct(plan.plan)).sum();
    const double energy = gw_quadruple_sum(a_cost, b_cost, plan);
    worst = std::max(worst, lower - energy);
  }
  return {{"profile bound below the energy (slack >= -1e-10)", worst <= 1e-10,
           worst}};
}

std::vector<Check> suite_alloc(std::uint64_t seed) {
  CounterRng rng(seed);
  const Index n = 2000, r = 5;
  const PointCloud source = unit_cloud(n, 2, rng);
  const PointCloud target = unit_cloud(n, 2, rng);
  const Vector a = uniform_weights(n);
  GwLrConfig cfg;
  cfg.rank = r;
  cfg.alpha = 1e-8;
  cfg.gamma = 30.0;
  cfg.outer_iter = 10;
  const std::size_t threshold = static_cast<std::size_t>(n) * n;
  AllocationScope scope(threshold);
  solve_gw_lr_linear(squared_euclidean_factors(source),
                     squared_euclidean_factors(target), a, a, cfg);
  const double events =
      static_cast<double>(scope.stats().large_buffer_events.size());
  return {{"no dense-scale buffer during the linear solve", events == 0.0,
           events}};
}

int run_validate(const std::string& suite, std::uint64_t seed) {
  std::vector<Check> checks;
  if (suite == "feasibility")
    checks = suite_feasibility(seed);
  else if (suite == "objective")
    checks = suite_objective(seed);
  else if (suite == "gradient")
    checks = suite_gradient(seed);
  else if (suite == "bound")
    checks = suite_bound(seed);
  else if (suite == "alloc")
    checks = suite_alloc(seed);
  else
    throw input_error("unknown suite '" + suite + "'");

  bool all_pass = true;
  for (const Check& check : checks) {
    std::printf("%s  %s  residual=%.6g\n", check.pass ? "PASS" : "FAIL",
                check.name.c_str(), check.residual);
    all_pass = all_pass && check.pass;
  }
  return all_pass ? kExitOk : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gromov-Wasserstein solvers with low-rank couplings and costs"};
  app.require_subcommand(1);

  GenOptions gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "generate a point cloud");
  gen_cmd->add_option("--kind", gen.kind,
                      "mixture|blobs|curve2d|curve3d|unit_square|isometric_pair");
  gen_cmd->add_option("--n", gen.n, "number of points")->required();
  gen_cmd->add_option("--d", gen.d, "ambient dimension");
  gen_cmd->add_option("--k", gen.clusters, "cluster count");
  gen_cmd->add_option("--beta", gen.beta, "minimum centroid separation");
  gen_cmd->add_option("--seed", gen.seed, "random seed");
  gen_cmd->add_option("--out", gen.out, "output CSV path")->required();
  gen_cmd->add_flag("--deterministic", gen.deterministic,
                    "zero wall-clock fields for byte-stable outputs");

  SolveOptions solve;
  CLI::App* solve_cmd = app.add_subcommand("solve", "align two point clouds");
  solve_cmd->add_option("--method", solve.method, "ent|quad-ent|lr|lin-lr")
      ->required();
  solve_cmd->add_option("--source", solve.source, "source point cloud CSV")
      ->required();
  solve_cmd->add_option("--target", solve.target, "target point cloud CSV")
      ->required();
  solve_cmd->add_option("--cost", solve.cost,
                        "sqeuclidean|euclidean|power|knn-sp|lr-approx");
  solve_cmd->add_option("--q", solve.q, "exponent for --cost power/lr-approx");
  solve_cmd->add_option("--knn-k", solve.knn_k, "neighbors for knn-sp");
  solve_cmd->add_option("--approx-rank", solve.approx_rank,
                        "target rank for lr-approx");
  solve_cmd->add_option("--approx-samples", solve.approx_samples,
                        "sample count for lr-approx (0 = 10x rank)");
  solve_cmd->add_option("--epsilon", solve.epsilon,
                        "entropic regularization (ent/quad-ent)");
  solve_cmd->add_flag("--link-epsilon-gamma", solve.link_epsilon_gamma,
                      "set epsilon = 1/gamma");
  solve_cmd->add_option("--rank", solve.rank, "coupling rank (lr/lin-lr)");
  solve_cmd->add_option("--alpha", solve.alpha, "inner weight floor");
  solve_cmd->add_option("--gamma", solve.gamma, "mirror-descent step size");
  solve_cmd->add_option("--gw-epsilon", solve.gw_epsilon,
                        "entropic weight for lr/lin-lr (0 disables)");
  solve_cmd->add_option("--outer-iter", solve.outer_iter, "outer budget");
  solve_cmd->add_option("--inner-delta", solve.inner_delta,
                        "inner projection tolerance");
  solve_cmd->add_option("--inner-max-iter", solve.inner_max_iter,
                        "inner projection budget");
  solve_cmd->add_option("--dykstra-delta", solve.dykstra_delta,
                        "factored projection tolerance");
  solve_cmd->add_option("--dykstra-max-iter", solve.dykstra_max_iter,
                        "factored projection budget");
  solve_cmd->add_option("--stop-tol", solve.stop_tol,
                        "relative loss-change stop");
  solve_cmd->add_option("--init", solve.init, "lower-bound|product");
  solve_cmd->add_option("--seed", solve.seed, "random seed");
  solve_cmd->add_option("--out-prefix", solve.out_prefix, "output prefix")
      ->required();
  solve_cmd->add_flag("--deterministic", solve.deterministic,
                      "zero wall-clock fields for byte-stable outputs");

  BenchOptions bench;
  CLI::App* bench_cmd = app.add_subcommand("bench", "parameter sweeps");
  bench_cmd->add_option("--sweep", bench.sweep, "gamma|rank|epsilon")
      ->required();
  bench_cmd->add_option("--values", bench.values, "sweep grid")
      ->required()
      ->delimiter(',');
  bench_cmd->add_option("--method", bench.method, "ent|quad-ent|lr|lin-lr");
  bench_cmd->add_option("--reps", bench.reps, "repetitions per cell");
  bench_cmd->add_option("--kind", bench.kind, "dataset kind");
  bench_cmd->add_option("--n", bench.n, "points per cloud");
  bench_cmd->add_option("--d", bench.d, "source dimension");
  bench_cmd->add_option("--d2", bench.d2, "target dimension (0 = same)");
  bench_cmd->add_option("--k", bench.clusters, "cluster count");
  bench_cmd->add_option("--beta", bench.beta, "centroid separation");
  bench_cmd->add_option("--rank", bench.rank, "coupling rank");
  bench_cmd->add_option("--alpha", bench.alpha, "inner weight floor");
  bench_cmd->add_option("--gamma", bench.gamma, "step size");
  bench_cmd->add_option("--epsilon", bench.epsilon, "entropic weight");
  bench_cmd->add_flag("--link-epsilon-gamma", bench.link_epsilon_gamma,
                      "sweep value is gamma; epsilon = 1/gamma");
  bench_cmd->add_option("--outer-iter", bench.outer_iter, "outer budget");
  bench_cmd->add_option("--dykstra-delta", bench.dykstra_delta,
                        "factored projection tolerance");
  bench_cmd->add_option("--stop-tol", bench.stop_tol, "loss-change stop");
  bench_cmd->add_option("--seed", bench.seed, "base seed");
  bench_cmd->add_option("--out", bench.out, "output CSV")->required();
  bench_cmd->add_flag("--deterministic", bench.deterministic,
                      "zero wall-clock fields for byte-stable outputs");

  std::string suite;
  std::uint64_t validate_seed = 7;
  CLI::App* validate_cmd =
      app.add_subcommand("validate", "run a self-check suite");
  validate_cmd
      ->add_option("--suite", suite,
                   "feasibility|objective|gradient|bound|alloc")
      ->required();
  validate_cmd->add_option("--seed", validate_seed, "random seed");

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = apply_config_file(std::move(args));
  } catch (const input_error& failure) {
    std::fprintf(stderr, "error: %s\n", failure.what());
    return kExitUsage;
  }
  try {
    // CLI11 consumes arguments in reverse order.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const std::string command_line = join_args(argc, argv);
  try {
    if (*gen_cmd) return run_gen(gen, command_line);
    if (*solve_cmd) return run_solve(solve, command_line);
    if (*bench_cmd) return run_bench(bench, command_line);
    if (*validate_cmd) return run_validate(suite, validate_seed);
  } catch (const input_error& failure) {
    std::fprintf(stderr, "error: %s\n", failure.what());
    return kExitUsage;
  } catch (const convergence_error& failure) {
    std::fprintf(stderr, "error: %s\n", failure.what());
    return kExitBudget;
  } catch (const numerical_error& failure) {
    std::fprintf(stderr, "error: %s\n", failure.what());
    return kExitNumerical;
  } catch (const error& failure) {
    std::fprintf(stderr, "error: %s\n", failure.what());
    return kExitNumerical;
  }
  return kExitUsage;
}
