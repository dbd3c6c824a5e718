// Command-line entry point: training, evaluation, robustness sweeps, the
// inference timing benchmark and the oracle selftest.
//
// Exit codes: 0 success, 1 usage, 2 config error, 3 selftest failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "pbp/checkpoint.hpp"
#include "pbp/config.hpp"
#include "pbp/experiments.hpp"
#include "pbp/oracles.hpp"

namespace fs = std::filesystem;
using namespace pbp;

namespace {

struct CliOptions {
  std::string config_path;
  uint64_t seed = 1;
  bool seed_given = false;
  std::string model = "pbp_rnn";
  std::string output_dir = ".";
  std::string checkpoint;
  int workers = 1;
  int episodes_override = 0;
};

RunConfig load_config(const CliOptions& opt) {
  RunConfig cfg;
  if (!opt.config_path.empty()) {
    std::ifstream in(opt.config_path);
    if (!in) throw ConfigError("cannot open config file: " + opt.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = parse_config(ss.str());
  }
  if (opt.seed_given || opt.config_path.empty()) cfg.seed = opt.seed;
  if (opt.model == "pbp_rnn") cfg.model_kind = ModelKind::kPbpRnn;
  else if (opt.model == "mde") cfg.model_kind = ModelKind::kMde;
  else throw ConfigError("unknown model '" + opt.model + "'");
  if (opt.episodes_override > 0) cfg.eval_episodes = opt.episodes_override;
  return cfg;
}

void save_bundle(const exp::TrainedBundle& bundle, const std::string& path) {
  if (bundle.kind == ModelKind::kPbpRnn)
    io::save_checkpoint(bundle.net, path);
  else
    io::save_checkpoint(bundle.ensemble, path);
  io::save_pool(bundle.pool, path + ".pool");
}

exp::TrainedBundle load_bundle(const RunConfig& cfg, const std::string& path) {
  exp::TrainedBundle bundle;
  bundle.kind = cfg.model_kind;
  if (cfg.model_kind == ModelKind::kPbpRnn)
    bundle.net = io::load_rnn_checkpoint(path);
  else
    bundle.ensemble = io::load_mde_checkpoint(path);
  bundle.pool = io::load_pool(path + ".pool");
  return bundle;
}

std::vector<exp::Scenario> table_scenarios(const RunConfig&) {
  return {exp::Scenario::train(), exp::Scenario::novel(),
          exp::Scenario::novel_noise(0.005), exp::Scenario::novel_dropped(5)};
}

// Runs `n` repetition jobs over up to `workers` threads, results collected
// into preassigned slots so the output order is independent of scheduling.
template <class Job>
void run_repetitions(int n, int workers, Job&& job) {
  if (workers <= 1) {
    for (int r = 0; r < n; ++r) job(r);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (int w = 0; w < std::min(workers, n); ++w)
    pool.emplace_back([&] {
      for (int r = next.fetch_add(1); r < n; r = next.fetch_add(1)) job(r);
    });
  for (auto& t : pool) t.join();
}

uint64_t repetition_seed(uint64_t master, int rep) {
  return SeedSplitter(master).derive("repetition", uint64_t(rep));
}

int cmd_train(const CliOptions& opt) {
  RunConfig cfg = load_config(opt);
  auto bundle = exp::run_training(cfg);
  fs::create_directories(opt.output_dir);
  const std::string ckpt = opt.checkpoint.empty()
                               ? (fs::path(opt.output_dir) / "model.ckpt").string()
                               : opt.checkpoint;
  save_bundle(bundle, ckpt);
  std::ofstream curve(fs::path(opt.output_dir) / "training_curve.csv",
                      std::ios::trunc);
  curve << "round,epsilon,fit,collisions\n";
  for (size_t i = 0; i < bundle.curves.round_fit.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%d\n", i,
                  bundle.curves.round_epsilon[i], bundle.curves.round_fit[i],
                  bundle.curves.round_collisions[i]);
    curve << buf;
  }
  std::cout << "trained " << opt.model << ", checkpoint: " << ckpt
            << "\npool: " << bundle.pool.positives.size() << " positive / "
            << bundle.pool.negatives.size() << " negative windows\n";
  return 0;
}

int cmd_eval(const CliOptions& opt) {
  RunConfig cfg = load_config(opt);
  fs::create_directories(opt.output_dir);
  std::vector<std::pair<int, exp::MetricsRecord>> rows(
      size_t(cfg.repetitions) * table_scenarios(cfg).size());
  run_repetitions(cfg.repetitions, opt.workers, [&](int rep) {
    RunConfig rep_cfg = cfg;
    rep_cfg.seed = repetition_seed(cfg.seed, rep);
    exp::TrainedBundle bundle = opt.checkpoint.empty()
                                    ? exp::run_training(rep_cfg)
                                    : load_bundle(cfg, opt.checkpoint);
    auto scenarios = table_scenarios(cfg);
    auto rng = SeedSplitter(rep_cfg.seed).stream("eval");
    for (size_t s = 0; s < scenarios.size(); ++s)
      rows[size_t(rep) * scenarios.size() + s] = {
          rep, exp::run_scenario(bundle, scenarios[s], cfg, rng)};
  });
  const std::string path = (fs::path(opt.output_dir) / "metrics.csv").string();
  exp::write_metrics_csv(path, cfg.seed, rows);
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_sweep(const CliOptions& opt, bool noise) {
  RunConfig cfg = load_config(opt);
  fs::create_directories(opt.output_dir);
  const size_t levels =
      noise ? cfg.noise_levels.size() : cfg.drop_levels.size();
  std::vector<std::vector<exp::CurvePoint>> per_rep(size_t(cfg.repetitions));
  run_repetitions(cfg.repetitions, opt.workers, [&](int rep) {
    RunConfig rep_cfg = cfg;
    rep_cfg.seed = repetition_seed(cfg.seed, rep);
    exp::TrainedBundle bundle = opt.checkpoint.empty()
                                    ? exp::run_training(rep_cfg)
                                    : load_bundle(cfg, opt.checkpoint);
    auto rng = SeedSplitter(rep_cfg.seed).stream("sweep");
    per_rep[size_t(rep)] = noise ? exp::sweep_noise(bundle, cfg, rng)
                                 : exp::sweep_drop(bundle, cfg, rng);
  });
  // Average the repetitions per level.
  std::vector<exp::CurvePoint> avg(levels);
  for (size_t l = 0; l < levels; ++l) {
    avg[l].level = per_rep[0][l].level;
    for (const auto& rep : per_rep) {
      avg[l].collision_proportion += rep[l].collision_proportion;
      avg[l].variance_mean += rep[l].variance_mean;
      avg[l].ci95_low += rep[l].ci95_low;
      avg[l].ci95_high += rep[l].ci95_high;
    }
    const double n = double(cfg.repetitions);
    avg[l].collision_proportion /= n;
    avg[l].variance_mean /= n;
    avg[l].ci95_low /= n;
    avg[l].ci95_high /= n;
  }
  const std::string path =
      (fs::path(opt.output_dir) / (noise ? "sweep_noise.csv" : "sweep_drop.csv"))
          .string();
  exp::write_curve_csv(path, avg);
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_bench(const CliOptions& opt) {
  RunConfig cfg = load_config(opt);
  SeedSplitter seeds(cfg.seed);
  auto init_rng = seeds.stream("bench-init");
  auto net = RecurrentBayesNetd::random_init(sim::kObservationDim,
                                             cfg.hidden_dim, init_rng);
  auto ensemble = Ensemble::random_init(cfg.ensemble_size, sim::kObservationDim,
                                        cfg.hidden_dim, seeds);
  ensemble.dropout_rate = cfg.dropout_rate;
  ensemble.passes_per_member = cfg.passes_per_member;
  auto rng = seeds.stream("bench");
  const int queries = opt.episodes_override > 0 ? opt.episodes_override : 1000;
  auto report =
      exp::timing_benchmark(net, ensemble, queries, cfg.window_length, rng);
  fs::create_directories(opt.output_dir);
  std::ofstream out(fs::path(opt.output_dir) / "timing.csv", std::ios::trunc);
  out << "model,mean_us,std_us,queries\n";
  char buf[128];
  std::snprintf(buf, sizeof(buf), "pbp_rnn,%.10g,%.10g,%d\n",
                report.pbp_mean_us, report.pbp_std_us, report.queries);
  out << buf;
  std::snprintf(buf, sizeof(buf), "mde,%.10g,%.10g,%d\n", report.mde_mean_us,
                report.mde_std_us, report.queries);
  out << buf;
  std::printf("pbp_rnn: %.1f +- %.1f us/query\nmde (serial): %.1f +- %.1f "
              "us/query\nratio: %.2fx\n",
              report.pbp_mean_us, report.pbp_std_us, report.mde_mean_us,
              report.mde_std_us, report.ratio);
  return 0;
}

int cmd_selftest(const CliOptions& opt) {
  int failures = 0;
  auto report = [&](const char* name, bool ok) {
    std::printf("%-28s %s\n", name, ok ? "ok" : "FAIL");
    if (!ok) ++failures;
  };

  {  // Conjugate update closed form.
    auto [gm, gv] = oracle::gaussian_logz_gradients(0.0, 1.0, 1.0, 1.0);
    auto [m, v] = pbp_update_weight(0.0, 1.0, gm, gv);
    report("conjugate-update",
           std::abs(m - 0.5) < 1e-10 && std::abs(v - 0.5) < 1e-10);
  }
  {  // Finite-difference gradients on small random nets.
    bool ok = true;
    for (int trial = 0; trial < 5 && ok; ++trial) {
      auto rng = SeedSplitter(opt.seed).stream("selftest-fd", uint64_t(trial));
      auto net = oracle::random_net(2, 3, rng);
      auto seq = oracle::random_sequence(4, 2, rng);
      ok = oracle::max_gradient_discrepancy(net, seq, 1.0) < 1e-5;
    }
    report("finite-difference-gradients", ok);
  }
  {  // Monte-Carlo propagation for one layer.
    auto rng = SeedSplitter(opt.seed).stream("selftest-mc");
    auto layer = GaussianMatrixd::random_init(3, 4, rng);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd im(3), iv(3);
    for (int i = 0; i < 3; ++i) {
      im[i] = normal(rng);
      iv[i] = std::abs(normal(rng));
    }
    GaussianMomentsd input(im, iv);
    auto prop = propagate_linear_gaussian(layer, input);
    auto mc = oracle::mc_single_layer(layer, input, 100000, rng);
    bool ok = true;
    for (int i = 0; i < 3; ++i)
      ok = ok && std::abs(prop.means[i] - mc.mean[i]) < 3.0 * mc.mean_se[i] &&
           std::abs(prop.variances[i] - mc.var[i]) < 3.0 * mc.var_se[i];
    report("monte-carlo-propagation", ok);
  }
  {  // Quadrature hyper-posterior moment match.
    const double alpha = 6.0, beta = 6.0, y = 0.3, m = 0.0, v = 0.2;
    PartitionTripled part{
        oracle::log_partition_quadrature(alpha, beta, y, m, v),
        oracle::log_partition_quadrature(alpha + 1.0, beta, y, m, v),
        oracle::log_partition_quadrature(alpha + 2.0, beta, y, m, v)};
    auto next = update_noise_posterior(GammaPosteriord{alpha, beta}, part);
    auto tilted = oracle::tilted_gamma_moments(alpha, beta, y, m, v);
    auto [as, bs] = oracle::gamma_moment_match(tilted.mean, tilted.second);
    report("quadrature-hyper-posterior",
           std::abs(next.alpha / next.beta - as / bs) / (as / bs) < 1e-3);
  }
  return failures == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PBP-RNN collision-avoidance benchmark"};
  app.require_subcommand(1);
  // Accept the shared flags on either side of the subcommand name.
  app.fallthrough();

  CliOptions opt;
  app.add_option("--config", opt.config_path, "flat key = value config file");
  auto* seed_opt = app.add_option("--seed", opt.seed, "master seed");
  app.add_option("--model", opt.model, "pbp_rnn | mde");
  app.add_option("--out", opt.output_dir, "output directory");
  app.add_option("--checkpoint", opt.checkpoint, "checkpoint path");
  app.add_option("--workers", opt.workers, "worker threads for repetitions");
  app.add_option("--episodes-override", opt.episodes_override,
                 "override eval episode / query count");

  auto* train = app.add_subcommand("train", "run the training protocol");
  auto* eval = app.add_subcommand("eval", "evaluate the scenario battery");
  auto* sweep_noise = app.add_subcommand("sweep-noise", "noise robustness sweep");
  auto* sweep_drop =
      app.add_subcommand("sweep-drop", "dropped-observation robustness sweep");
  auto* bench = app.add_subcommand("bench-timing", "inference timing comparison");
  auto* selftest = app.add_subcommand("selftest", "run the oracle suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  opt.seed_given = seed_opt->count() > 0;

  try {
    if (train->parsed()) return cmd_train(opt);
    if (eval->parsed()) return cmd_eval(opt);
    if (sweep_noise->parsed()) return cmd_sweep(opt, true);
    if (sweep_drop->parsed()) return cmd_sweep(opt, false);
    if (bench->parsed()) return cmd_bench(opt);
    if (selftest->parsed()) return cmd_selftest(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
