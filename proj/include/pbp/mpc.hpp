#ifndef PBP_MPC_HPP
#define PBP_MPC_HPP

// Motion-primitive set, uncertainty-penalized cost evaluation and
// epsilon-greedy action selection with the annealing schedules.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "pbp/common.hpp"
#include "pbp/env.hpp"
#include "pbp/rnn.hpp"

namespace pbp::ctrl {

using sim::MotionPrimitive;
using sim::Vec2;

struct MotionPrimitiveSet {
  std::vector<MotionPrimitive> primitives;
};

// 11 primitives of length 0.05 spanning heading offsets [-pi/5, pi/5],
// spaced pi/25, with the middle element exactly 0.
inline MotionPrimitiveSet build_primitives() {
  MotionPrimitiveSet set;
  set.primitives.reserve(11);
  for (int k = 0; k < 11; ++k)
    set.primitives.push_back({double(k - 5) * (M_PI / 25.0), 0.05});
  return set;
}

struct CostWeights {
  double lambda_c = 25.0;
  double lambda_v_base = 200.0;
  double lambda_d = 3.0;
};

struct EpsilonSchedule {
  double epsilon = 1.0;
  double floor = 0.1;
  bool terminal = false;
};

// epsilon <- epsilon * 49/50; once it falls to the floor it snaps to 0 and
// the schedule is terminal (absorbing).
inline EpsilonSchedule decay_epsilon(EpsilonSchedule schedule) {
  if (schedule.terminal) {
    schedule.epsilon = 0.0;
    return schedule;
  }
  schedule.epsilon *= 49.0 / 50.0;
  if (schedule.epsilon <= schedule.floor) {
    schedule.epsilon = 0.0;
    schedule.terminal = true;
  }
  return schedule;
}

// Model interface the controller scores primitives against.
class CollisionPredictor {
 public:
  virtual ~CollisionPredictor() = default;
  virtual PredictiveDistributiond predict(const ObservationSequenced& seq) = 0;
  // Called once before a decision's batch of candidate queries; predictors
  // with internal sampling can pair their draws across the candidates so the
  // argmin compares candidates, not sampling noise.
  virtual void begin_step() {}
};

struct PrimitiveCost {
  double cost = 0.0;
  double p_coll = 0.0;
  double v_coll = 0.0;  // total predictive variance
  double d_goal = 0.0;
  double v_epistemic = 0.0;  // model part of v_coll, kept for metrics
};

// Scores every primitive: the candidate window is the history with the final
// row replaced by the predicted post-step observation of the candidate — the
// agent displaced along the primitive, the obstacle extrapolated at its
// current velocity and the heading feature set to the candidate offset — so
// query rows carry the same (state, executed-heading) semantics as the
// recorded observations the model trains on. d_goal is measured from the
// primitive's displaced endpoint.
inline std::vector<PrimitiveCost> evaluate_costs(
    CollisionPredictor& model, const ObservationSequenced& history,
    const MotionPrimitiveSet& primitives, const CostWeights& weights,
    double epsilon, const Vec2& agent_position, const Vec2& agent_goal) {
  if (history.length() < 1 || history.feature_dim() != sim::kObservationDim)
    throw ContractError("evaluate_costs: malformed history");
  model.begin_step();
  const Vec2 to_goal = agent_goal - agent_position;
  const double bearing = std::atan2(to_goal.y(), to_goal.x());
  const Eigen::Index last = history.length() - 1;
  const Vec2 obstacle_pos(history.steps(last, 4), history.steps(last, 5));
  const Vec2 obstacle_vel(history.steps(last, 6), history.steps(last, 7));
  const Vec2 obstacle_next = obstacle_pos + obstacle_vel;
  std::vector<PrimitiveCost> out;
  out.reserve(primitives.primitives.size());
  for (const auto& prim : primitives.primitives) {
    const double heading = bearing + prim.heading_offset;
    const Vec2 disp =
        prim.length * Vec2(std::cos(heading), std::sin(heading));
    const Vec2 endpoint = agent_position + disp;
    ObservationSequenced candidate = history;
    candidate.steps.row(last) << endpoint.x(), endpoint.y(), disp.x(),
        disp.y(), obstacle_next.x(), obstacle_next.y(), obstacle_vel.x(),
        obstacle_vel.y(), prim.heading_offset;
    const auto pred = model.predict(candidate);
    PrimitiveCost pc;
    pc.p_coll = pred.mean;
    pc.v_coll = pred.total_variance;
    pc.v_epistemic = pred.variance;
    pc.d_goal = (endpoint - agent_goal).norm();
    pc.cost = (1.0 - epsilon) * weights.lambda_v_base * pc.v_coll +
              weights.lambda_c * pc.p_coll + weights.lambda_d * pc.d_goal;
    out.push_back(pc);
  }
  return out;
}

// Epsilon-greedy over the cost list; greedy ties break toward the smaller
// index.
inline size_t select_action(const std::vector<PrimitiveCost>& costs,
                            const EpsilonSchedule& schedule,
                            std::mt19937_64& rng) {
  if (costs.empty()) throw ContractError("select_action: no costs");
  for (const auto& c : costs)
    if (!std::isfinite(c.cost)) throw NumericError("select_action: non-finite cost");
  if (schedule.epsilon > 0.0) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < schedule.epsilon) {
      std::uniform_int_distribution<size_t> pick(0, costs.size() - 1);
      return pick(rng);
    }
  }
  size_t best = 0;
  for (size_t i = 1; i < costs.size(); ++i)
    if (costs[i].cost < costs[best].cost) best = i;
  return best;
}

}  // namespace pbp::ctrl

#endif  // PBP_MPC_HPP
