#ifndef PBP_EXPERIMENTS_HPP
#define PBP_EXPERIMENTS_HPP

// Orchestration: the observe-act-train protocol, the evaluation scenarios
// (train / novel / novel+noise / novel+dropped), robustness sweeps, the
// inference timing comparison and CSV output.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pbp/checkpoint.hpp"
#include "pbp/common.hpp"
#include "pbp/config.hpp"
#include "pbp/env.hpp"
#include "pbp/experience.hpp"
#include "pbp/lstm.hpp"
#include "pbp/mpc.hpp"
#include "pbp/rnn.hpp"

namespace pbp::exp {

// Variance floor for likelihood evaluation of models without a noise model
// (the MDE sample variance can be exactly zero).
inline constexpr double kLoglikVarianceFloor = 1e-9;

// Input draws used to marginalize stochastic query perturbations when the
// underlying model is a single deterministic moment pass.
inline constexpr int kPerturbationDraws = 10;

enum class ScenarioKind { kTrain, kNovel, kNovelNoise, kNovelDropped };

struct Scenario {
  ScenarioKind kind = ScenarioKind::kTrain;
  double noise_level = 0.0;  // lambda_xi for kNovelNoise
  int n_dropped = 0;         // for kNovelDropped

  static Scenario train() { return {ScenarioKind::kTrain, 0.0, 0}; }
  static Scenario novel() { return {ScenarioKind::kNovel, 0.0, 0}; }
  static Scenario novel_noise(double lambda_xi) {
    return {ScenarioKind::kNovelNoise, lambda_xi, 0};
  }
  static Scenario novel_dropped(int n) {
    return {ScenarioKind::kNovelDropped, 0.0, n};
  }

  sim::ResetMode reset_mode() const {
    return kind == ScenarioKind::kTrain ? sim::ResetMode::kTrain
                                        : sim::ResetMode::kNovel;
  }

  std::string name() const {
    switch (kind) {
      case ScenarioKind::kTrain: return "train";
      case ScenarioKind::kNovel: return "novel";
      case ScenarioKind::kNovelNoise: return "novel_noise";
      case ScenarioKind::kNovelDropped: return "novel_dropped";
    }
    return "?";
  }

  double param() const {
    return kind == ScenarioKind::kNovelNoise ? noise_level
                                             : double(n_dropped);
  }
};

struct MetricsRecord {
  std::string scenario;
  double param = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
  double collision_rate = 0.0;
  std::vector<double> min_separations;
  double loglik_mean = 0.0;
  double loglik_var = 0.0;
  double pred_var_mean = 0.0;
  double pred_var_var = 0.0;
  int episodes = 0;
  int queries = 0;
};

struct TrainingCurves {
  std::vector<double> round_fit;       // mean logZ (PBP) or mean loss (MDE)
  std::vector<double> round_epsilon;
  std::vector<int> round_collisions;
  long clamp_events = 0;
  long rejected_noise_updates = 0;
  long skipped_sequences = 0;
};

// A trained model together with the pool whose statistics normalize its
// inputs.
struct TrainedBundle {
  ModelKind kind = ModelKind::kPbpRnn;
  RecurrentBayesNetd net;
  Ensemble ensemble;
  xp::ExperiencePool pool;
  TrainingCurves curves;
};

// --------------------------------------------------------------------------
// Predictors

// Applies the scenario perturbation to the raw window, z-scores it with the
// pool statistics and queries the model.
class BundlePredictor : public ctrl::CollisionPredictor {
 public:
  BundlePredictor(const TrainedBundle& bundle, const Scenario& scenario,
                  std::mt19937_64& rng)
      : bundle_(bundle), scenario_(scenario), rng_(rng) {}

  PredictiveDistributiond predict(const ObservationSequenced& raw) override {
    const bool noised = scenario_.kind == ScenarioKind::kNovelNoise &&
                        scenario_.noise_level > 0.0;
    const bool dropped = scenario_.kind == ScenarioKind::kNovelDropped &&
                         scenario_.n_dropped > 0;
    if (!stepped_) begin_step();
    auto corrupt = [&](std::mt19937_64& r) {
      ObservationSequenced q = raw;
      if (noised) q.steps = sim::apply_noise(q.steps, scenario_.noise_level, r);
      if (dropped) q = sim::drop_observations(q, scenario_.n_dropped, r);
      return xp::normalize(bundle_.pool, q);
    };
    // The corruption is a property of the decision, not of the query: one
    // sensor realization per step, shared by every candidate window of that
    // step (the realization seed is frozen in begin_step).
    auto realized_input = [&]() {
      std::mt19937_64 r(step_seed_);
      return corrupt(r);
    };
    if (bundle_.kind == ModelKind::kMde) {
      // The MDE scores the window it perceives; the mask set is refreshed
      // once per decision and shared by that decision's candidates, so the
      // candidate argmin compares inputs rather than sampling noise.
      const ObservationSequenced q = realized_input();
      return mc_predict_masked(
          bundle_.ensemble,
          [&](std::mt19937_64&) -> const ObservationSequenced& { return q; },
          masks_, rng_);
    }
    if (!noised && !dropped) return pbp::predict(bundle_.net, realized_input());
    // The point prediction comes from the one corrupted window the agent
    // actually perceives; the deterministic moment pass cannot marginalize
    // the corruption process, so its contribution enters as extra variance —
    // the spread of the prediction over independent corruption draws of the
    // same window (law of total variance).
    const auto realized = pbp::predict(bundle_.net, realized_input());
    double mean_sum = realized.mean, mean_sq_sum = realized.mean * realized.mean;
    for (int k = 1; k < kPerturbationDraws; ++k) {
      const auto p = pbp::predict(bundle_.net, corrupt(rng_));
      mean_sum += p.mean;
      mean_sq_sum += p.mean * p.mean;
    }
    const double n = double(kPerturbationDraws);
    const double mix_mean = mean_sum / n;
    const double spread =
        std::max(0.0, mean_sq_sum / n - mix_mean * mix_mean);
    PredictiveDistributiond out = realized;
    out.variance += spread;
    out.total_variance += spread;
    return out;
  }

  void begin_step() override {
    step_seed_ = rng_();
    stepped_ = true;
    if (bundle_.kind == ModelKind::kMde)
      masks_ = draw_mask_set(bundle_.ensemble, rng_);
  }

 private:
  const TrainedBundle& bundle_;
  Scenario scenario_;
  std::mt19937_64& rng_;
  std::vector<Eigen::VectorXd> masks_;
  uint64_t step_seed_ = 0;
  bool stepped_ = false;
};

// --------------------------------------------------------------------------
// Episode execution

struct QueryRecord {
  double p_coll = 0.0;
  double v_total = 0.0;
  double v_epistemic = 0.0;
};

struct EpisodeRun {
  sim::EpisodeResult result;
  std::vector<QueryRecord> executed;  // one per step: the chosen primitive
  std::vector<QueryRecord> queries;   // every model query (all candidates)
};

struct CostTraceRow {
  int episode = 0;
  int step = 0;
  int index = 0;
  double p_coll = 0.0, v_coll = 0.0, d_goal = 0.0, cost = 0.0;
  bool chosen = false;
};

// Builds the raw query window at the current decision point: the most recent
// executed observations plus a candidate row for the current state, front
// zero-padded to the window length. The candidate heading is filled in by
// evaluate_costs.
inline ObservationSequenced current_window(const sim::World& w,
                                           Eigen::Index window_length) {
  sim::Observation candidate;
  candidate.a1_pos = w.agent.position;
  candidate.a1_vel = w.agent.velocity;
  candidate.a2_pos = w.obstacle.position;
  candidate.a2_vel = w.obstacle.velocity;
  candidate.primitive_heading = 0.0;
  const Eigen::Index past =
      std::min<Eigen::Index>(Eigen::Index(w.observations.size()),
                             window_length - 1);
  Eigen::MatrixXd rows(past + 1, sim::kObservationDim);
  for (Eigen::Index i = 0; i < past; ++i)
    rows.row(i) = w.observations[w.observations.size() - size_t(past) + size_t(i)]
                      .features()
                      .transpose();
  rows.row(past) = candidate.features().transpose();
  return zero_pad<double>(rows, window_length);
}

// One MPC-controlled episode. With epsilon = 1 the cost model still runs
// (exploration is handled by select_action).
inline EpisodeRun run_mpc_episode(sim::World& world,
                                  ctrl::CollisionPredictor& model,
                                  const ctrl::MotionPrimitiveSet& primitives,
                                  const ctrl::CostWeights& weights,
                                  double epsilon, Eigen::Index window_length,
                                  std::mt19937_64& action_rng,
                                  std::vector<CostTraceRow>* cost_trace = nullptr,
                                  int episode_index = 0) {
  EpisodeRun run;
  ctrl::EpsilonSchedule sched;
  sched.epsilon = epsilon;
  while (!world.terminal) {
    const auto window = current_window(world, window_length);
    const auto costs =
        ctrl::evaluate_costs(model, window, primitives, weights, epsilon,
                             world.agent.position, world.agent.goal);
    const size_t idx = ctrl::select_action(costs, sched, action_rng);
    if (cost_trace) {
      for (size_t i = 0; i < costs.size(); ++i)
        cost_trace->push_back({episode_index, world.steps_taken, int(i),
                               costs[i].p_coll, costs[i].v_coll,
                               costs[i].d_goal, costs[i].cost, i == idx});
    }
    sim::step(world, primitives.primitives[idx]);
    run.executed.push_back({costs[idx].p_coll, costs[idx].v_coll,
                            costs[idx].v_epistemic});
    for (const auto& c : costs)
      run.queries.push_back({c.p_coll, c.v_coll, c.v_epistemic});
  }
  run.result = sim::finish_episode(world);
  return run;
}

// Seeding episode: uniformly random primitive each step, no model queries.
inline sim::EpisodeResult run_random_episode(
    sim::World& world, const ctrl::MotionPrimitiveSet& primitives,
    std::mt19937_64& action_rng) {
  std::uniform_int_distribution<size_t> pick(0,
                                             primitives.primitives.size() - 1);
  while (!world.terminal)
    sim::step(world, primitives.primitives[pick(action_rng)]);
  return sim::finish_episode(world);
}

// --------------------------------------------------------------------------
// Training protocol

inline std::vector<std::pair<ObservationSequenced, double>> batch_examples(
    const xp::TrainingBatch& batch) {
  return batch.examples;
}

// Phase 1: random-policy seeding of the pool. Phase 2: initial training on a
// balanced batch. Phase 3: epsilon-greedy control with periodic retraining
// until the epsilon schedule is terminal.
inline TrainedBundle run_training(const RunConfig& cfg) {
  cfg.validate();
  SeedSplitter seeds(cfg.seed);
  TrainedBundle bundle;
  bundle.kind = cfg.model_kind;
  bundle.pool.window_length = cfg.window_length;

  auto env_rng = seeds.stream("env");
  auto action_rng = seeds.stream("action");
  auto sample_rng = seeds.stream("sampling");
  auto query_rng = seeds.stream("query");
  auto train_rng = seeds.stream("training");

  if (cfg.model_kind == ModelKind::kPbpRnn) {
    auto init_rng = seeds.stream("model-init");
    bundle.net = RecurrentBayesNetd::random_init(sim::kObservationDim,
                                                 cfg.hidden_dim, init_rng);
  } else {
    bundle.ensemble = Ensemble::random_init(
        cfg.ensemble_size, sim::kObservationDim, cfg.hidden_dim, seeds,
        cfg.learning_rate);
    bundle.ensemble.dropout_rate = cfg.dropout_rate;
    bundle.ensemble.passes_per_member = cfg.passes_per_member;
  }

  const auto primitives = ctrl::build_primitives();

  // Phase 1: seed the pool with random behaviour.
  for (int e = 0; e < cfg.seed_episodes; ++e) {
    auto world = sim::reset(cfg.world, sim::ResetMode::kTrain, env_rng);
    xp::append_episode(bundle.pool,
                       run_random_episode(world, primitives, action_rng));
  }

  auto retrain = [&](int epochs, uint64_t round) {
    auto batch = xp::sample_balanced(bundle.pool, cfg.batch_size, sample_rng);
    if (cfg.model_kind == ModelKind::kPbpRnn) {
      auto stats = train_epochs(bundle.net, batch.examples, epochs, train_rng);
      bundle.curves.clamp_events += stats.counters.clamp_events;
      bundle.curves.rejected_noise_updates +=
          stats.counters.rejected_noise_updates;
      bundle.curves.skipped_sequences += stats.counters.skipped_sequences;
      return stats.epoch_mean_logz.empty() ? 0.0
                                           : stats.epoch_mean_logz.back();
    }
    auto stats = train_mde(bundle.ensemble, batch.examples, epochs, seeds,
                           round);
    return stats.epoch_mean_loss.empty() ? 0.0 : stats.epoch_mean_loss.back();
  };

  // Phase 2: initial training.
  double fit = retrain(cfg.initial_epochs(), 0);
  bundle.curves.round_fit.push_back(fit);
  bundle.curves.round_epsilon.push_back(1.0);
  bundle.curves.round_collisions.push_back(0);

  // Phase 3: epsilon-greedy control with periodic retraining.
  ctrl::EpsilonSchedule sched;
  uint64_t round = 1;
  while (!sched.terminal) {
    int collisions = 0;
    for (int k = 0; k < cfg.retrain_interval && !sched.terminal; ++k) {
      auto world = sim::reset(cfg.world, sim::ResetMode::kTrain, env_rng);
      BundlePredictor model(bundle, Scenario::train(), query_rng);
      auto run = run_mpc_episode(world, model, primitives, cfg.weights,
                                 sched.epsilon, cfg.window_length, action_rng);
      if (run.result.collided) ++collisions;
      xp::append_episode(bundle.pool, run.result);
      sched = ctrl::decay_epsilon(sched);
    }
    fit = retrain(cfg.subsequent_epochs(), round++);
    bundle.curves.round_fit.push_back(fit);
    bundle.curves.round_epsilon.push_back(sched.epsilon);
    bundle.curves.round_collisions.push_back(collisions);
  }
  return bundle;
}

// --------------------------------------------------------------------------
// Evaluation

namespace detail {

// Order-independent mean/variance: values are sorted before summation so a
// permutation of episode order cannot change a single bit of the result.
inline std::pair<double, double> sorted_mean_var(std::vector<double> values) {
  if (values.empty()) return {0.0, 0.0};
  std::sort(values.begin(), values.end());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= double(values.size());
  double var = 0.0;
  if (values.size() > 1) {
    for (double v : values) var += (v - mean) * (v - mean);
    var /= double(values.size() - 1);
  }
  return {mean, var};
}

}  // namespace detail

// Greedy evaluation of one scenario. A false positive is a clean episode in
// which some executed step's predictive mean exceeded 0.5; a false negative
// is a collision episode in which none did.
inline MetricsRecord run_scenario(const TrainedBundle& bundle,
                                  const Scenario& scenario,
                                  const RunConfig& cfg, std::mt19937_64& rng,
                                  int episodes_override = 0) {
  const int episodes =
      episodes_override > 0 ? episodes_override : cfg.eval_episodes;
  if (episodes < 1) throw ContractError("run_scenario: needs >= 1 episode");
  const auto primitives = ctrl::build_primitives();
  MetricsRecord rec;
  rec.scenario = scenario.name();
  rec.param = scenario.param();
  rec.episodes = episodes;

  int collisions = 0, false_pos = 0, false_neg = 0, clean = 0;
  std::vector<double> logliks, pred_vars;
  for (int e = 0; e < episodes; ++e) {
    auto world = sim::reset(cfg.world, scenario.reset_mode(), rng);
    BundlePredictor model(bundle, scenario, rng);
    auto run = run_mpc_episode(world, model, primitives, cfg.weights,
                               /*epsilon=*/0.0, cfg.window_length, rng);
    const bool collided = run.result.collided;
    const double label = collided ? 1.0 : 0.0;
    bool predicted = false;
    for (const auto& q : run.executed)
      if (q.p_coll > 0.5) predicted = true;
    // Predictive variance aggregates over every model query made, not just
    // the chosen primitive: the variance-penalized argmin would otherwise
    // bias the recorded variances low. The likelihood instead scores the
    // executed queries — the episode label is the outcome of the executed
    // trajectory, so only those predictions are ever realized; counterfactual
    // candidates have no observed outcome to score against.
    for (const auto& q : run.queries) pred_vars.push_back(q.v_epistemic);
    for (const auto& q : run.executed)
      logliks.push_back(gaussian_log_density(
          label, q.p_coll, std::max(q.v_total, kLoglikVarianceFloor)));
    if (collided) {
      ++collisions;
      if (!predicted) ++false_neg;
    } else {
      ++clean;
      if (predicted) ++false_pos;
      rec.min_separations.push_back(run.result.min_separation);
    }
  }
  rec.queries = int(logliks.size());
  rec.collision_rate = double(collisions) / double(episodes);
  rec.fpr = clean > 0 ? double(false_pos) / double(clean) : 0.0;
  rec.fnr = collisions > 0 ? double(false_neg) / double(collisions) : 0.0;
  std::tie(rec.loglik_mean, rec.loglik_var) = detail::sorted_mean_var(logliks);
  std::tie(rec.pred_var_mean, rec.pred_var_var) =
      detail::sorted_mean_var(pred_vars);
  std::sort(rec.min_separations.begin(), rec.min_separations.end());
  return rec;
}

struct CurvePoint {
  double level = 0.0;
  double collision_proportion = 0.0;
  double variance_mean = 0.0;
  double ci95_low = 0.0;
  double ci95_high = 0.0;
};

inline CurvePoint curve_point_from_record(const MetricsRecord& rec,
                                          double level) {
  CurvePoint p;
  p.level = level;
  p.collision_proportion = rec.collision_rate;
  p.variance_mean = rec.pred_var_mean;
  const double n = double(rec.episodes);
  const double half =
      1.96 * std::sqrt(std::max(0.0, p.collision_proportion *
                                         (1.0 - p.collision_proportion) / n));
  p.ci95_low = std::max(0.0, p.collision_proportion - half);
  p.ci95_high = std::min(1.0, p.collision_proportion + half);
  return p;
}

inline std::vector<CurvePoint> sweep_noise(const TrainedBundle& bundle,
                                           const RunConfig& cfg,
                                           std::mt19937_64& rng) {
  std::vector<CurvePoint> out;
  for (double level : cfg.noise_levels) {
    auto rec = run_scenario(bundle, Scenario::novel_noise(level), cfg, rng,
                            cfg.sweep_episodes);
    out.push_back(curve_point_from_record(rec, level));
  }
  return out;
}

inline std::vector<CurvePoint> sweep_drop(const TrainedBundle& bundle,
                                          const RunConfig& cfg,
                                          std::mt19937_64& rng) {
  std::vector<CurvePoint> out;
  for (int level : cfg.drop_levels) {
    auto rec = run_scenario(bundle, Scenario::novel_dropped(level), cfg, rng,
                            cfg.sweep_episodes);
    out.push_back(curve_point_from_record(rec, double(level)));
  }
  return out;
}

// --------------------------------------------------------------------------
// Timing

struct TimingReport {
  double pbp_mean_us = 0.0, pbp_std_us = 0.0;
  double mde_mean_us = 0.0, mde_std_us = 0.0;
  double ratio = 0.0;  // mde / pbp
  int queries = 0;
};

// Wall-clock per-query comparison: one PBP forward pass against the MDE's
// full serial MC-dropout evaluation on identical inputs.
inline TimingReport timing_benchmark(const RecurrentBayesNetd& net,
                                     const Ensemble& ensemble, int n_queries,
                                     Eigen::Index window_length,
                                     std::mt19937_64& rng) {
  if (n_queries < 10) throw ContractError("timing_benchmark: n_queries < 10");
  using clock = std::chrono::steady_clock;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<ObservationSequenced> inputs(static_cast<size_t>(n_queries));
  for (auto& seq : inputs) {
    seq.steps.resize(window_length, sim::kObservationDim);
    for (Eigen::Index i = 0; i < seq.steps.rows(); ++i)
      for (Eigen::Index j = 0; j < seq.steps.cols(); ++j)
        seq.steps(i, j) = normal(rng);
  }
  double sink = 0.0;
  std::vector<double> pbp_us, mde_us;
  pbp_us.reserve(inputs.size());
  mde_us.reserve(inputs.size());
  for (const auto& seq : inputs) {
    auto t0 = clock::now();
    sink += pbp::predict(net, seq).mean;
    auto t1 = clock::now();
    sink += mc_predict(ensemble, seq, rng).mean;
    auto t2 = clock::now();
    pbp_us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
    mde_us.push_back(std::chrono::duration<double, std::micro>(t2 - t1).count());
  }
  (void)sink;
  auto [pm, pv] = detail::sorted_mean_var(pbp_us);
  auto [mm, mv] = detail::sorted_mean_var(mde_us);
  TimingReport rep;
  rep.pbp_mean_us = pm;
  rep.pbp_std_us = std::sqrt(pv);
  rep.mde_mean_us = mm;
  rep.mde_std_us = std::sqrt(mv);
  rep.ratio = pm > 0.0 ? mm / pm : 0.0;
  rep.queries = n_queries;
  return rep;
}

// --------------------------------------------------------------------------
// CSV output

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace detail

inline constexpr const char* kMetricsHeader =
    "run_seed,repetition,scenario,param,fpr,fnr,collision_rate,loglik_mean,"
    "loglik_var,pred_var_mean,pred_var_var,min_sep_mean";

inline std::string metrics_row(uint64_t run_seed, int repetition,
                               const MetricsRecord& rec) {
  auto [ms_mean, ms_var] = detail::sorted_mean_var(rec.min_separations);
  (void)ms_var;
  std::string row = std::to_string(run_seed) + "," +
                    std::to_string(repetition) + "," + rec.scenario + "," +
                    detail::fmt(rec.param);
  for (double v : {rec.fpr, rec.fnr, rec.collision_rate, rec.loglik_mean,
                   rec.loglik_var, rec.pred_var_mean, rec.pred_var_var, ms_mean})
    row += "," + detail::fmt(v);
  return row;
}

inline void write_metrics_csv(const std::string& path, uint64_t run_seed,
                              const std::vector<std::pair<int, MetricsRecord>>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << kMetricsHeader << "\n";
  for (const auto& [rep, rec] : rows)
    out << metrics_row(run_seed, rep, rec) << "\n";
}

inline constexpr const char* kCurveHeader =
    "level,collision_proportion,variance_mean,ci95_low,ci95_high";

inline void write_curve_csv(const std::string& path,
                            const std::vector<CurvePoint>& points) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << kCurveHeader << "\n";
  for (const auto& p : points)
    out << detail::fmt(p.level) << "," << detail::fmt(p.collision_proportion)
        << "," << detail::fmt(p.variance_mean) << "," << detail::fmt(p.ci95_low)
        << "," << detail::fmt(p.ci95_high) << "\n";
}

inline constexpr const char* kTraceHeader =
    "step,a1_px,a1_py,a1_vx,a1_vy,a2_px,a2_py,a2_vx,a2_vy,heading,separation,"
    "agent_goal_dist,obstacle_goal_dist,collision,agent_goal,obstacle_goal,"
    "timeout";

// Per-step episode trace, 17 fixed columns.
inline void write_episode_trace(const std::string& path, const sim::World& w) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << kTraceHeader << "\n";
  for (size_t t = 0; t < w.observations.size(); ++t) {
    const auto& o = w.observations[t];
    const auto& ev = w.events[t];
    const double sep = (o.a1_pos - o.a2_pos).norm();
    out << t + 1;
    for (double v :
         {o.a1_pos.x(), o.a1_pos.y(), o.a1_vel.x(), o.a1_vel.y(),
          o.a2_pos.x(), o.a2_pos.y(), o.a2_vel.x(), o.a2_vel.y(),
          o.primitive_heading, sep, (o.a1_pos - w.agent.goal).norm(),
          (o.a2_pos - w.obstacle.goal).norm()})
      out << "," << detail::fmt(v);
    out << "," << int(ev.collision) << "," << int(ev.agent_goal) << ","
        << int(ev.obstacle_goal) << "," << int(ev.timeout) << "\n";
  }
}

inline constexpr const char* kCostTraceHeader =
    "episode,step,index,p_coll,v_coll,d_goal,cost,chosen";

inline void write_cost_trace(const std::string& path,
                             const std::vector<CostTraceRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << kCostTraceHeader << "\n";
  for (const auto& r : rows)
    out << r.episode << "," << r.step << "," << r.index << ","
        << detail::fmt(r.p_coll) << "," << detail::fmt(r.v_coll) << ","
        << detail::fmt(r.d_goal) << "," << detail::fmt(r.cost) << ","
        << int(r.chosen) << "\n";
}

}  // namespace pbp::exp

#endif  // PBP_EXPERIMENTS_HPP
