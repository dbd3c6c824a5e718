#ifndef PBP_ENV_HPP
#define PBP_ENV_HPP

// Deterministic 2D two-agent world: a controlled agent and a dynamic
// obstacle with collaborative or straight-line policies, collision and goal
// detection, and the input perturbations used by the robustness scenarios.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "pbp/common.hpp"
#include "pbp/rnn.hpp"

namespace pbp::sim {

using Vec2 = Eigen::Vector2d;

inline constexpr int kObservationDim = 9;

struct AgentState {
  Vec2 position{0, 0};
  Vec2 velocity{0, 0};
  Vec2 goal{0, 0};
  double radius = 0.025;
};

enum class ObstaclePolicy { kCollaborative, kStraightLine };

struct WorldConfig {
  Vec2 agent_start{0.0, -0.25};
  Vec2 obstacle_start{0.0, 0.25};
  double obstacle_start_y_min = -0.25;  // novel mode only
  double obstacle_start_y_max = 0.25;
  int max_steps = 50;
  double obstacle_speed = 0.05;
  // Body radii sized so head-on random-policy episodes collide often but not
  // always: the reciprocal-avoidance rule can clear the 0.05 contact distance
  // in the ~2 steps it acts before closest approach.
  double agent_radius = 0.025;
  double obstacle_radius = 0.025;
  double goal_tolerance = 0.05;
  // Reciprocal-avoidance rule parameters for the collaborative policy. The
  // dodge is deliberately sluggish (short influence range, shallow maximum
  // deflection): a cautious controller clears it comfortably, but a
  // controller that cuts close on overconfident predictions is not bailed
  // out by the obstacle.
  double influence_radius = 0.12;
  double max_deflection = M_PI / 8.0;
};

enum class ResetMode { kTrain, kNovel };

// One observation row: agent pos/vel, obstacle pos/vel, executed primitive
// heading offset (relative to the agent-to-goal bearing).
struct Observation {
  Vec2 a1_pos, a1_vel, a2_pos, a2_vel;
  double primitive_heading = 0.0;

  Eigen::Matrix<double, kObservationDim, 1> features() const {
    Eigen::Matrix<double, kObservationDim, 1> f;
    f << a1_pos.x(), a1_pos.y(), a1_vel.x(), a1_vel.y(), a2_pos.x(),
        a2_pos.y(), a2_vel.x(), a2_vel.y(), primitive_heading;
    return f;
  }
};

struct StepEvents {
  bool collision = false;
  bool agent_goal = false;
  bool obstacle_goal = false;
  bool timeout = false;

  bool terminal() const { return collision || agent_goal || timeout; }
};

struct EpisodeResult {
  std::vector<Observation> observations;  // one per executed step
  bool collided = false;
  bool reached_goal = false;
  double min_separation = 0.0;
  int steps_taken = 0;
};

struct World {
  WorldConfig config;
  ResetMode mode = ResetMode::kTrain;
  ObstaclePolicy policy = ObstaclePolicy::kCollaborative;
  AgentState agent;
  AgentState obstacle;
  int steps_taken = 0;
  bool terminal = false;
  double min_separation = 0.0;
  std::vector<Observation> observations;
  std::vector<StepEvents> events;
};

// Train mode: fixed head-on starts, collaborative obstacle. Novel mode: the
// obstacle's start y is drawn uniformly and the policy switches to a
// straight line. Goals sit on the opposite side's start line.
inline World reset(const WorldConfig& config, ResetMode mode,
                   std::mt19937_64& rng) {
  if (config.max_steps < 1) throw ContractError("reset: max_steps < 1");
  World w;
  w.config = config;
  w.mode = mode;
  w.agent.position = config.agent_start;
  w.agent.velocity = Vec2::Zero();
  w.agent.goal = Vec2(config.agent_start.x(), config.obstacle_start.y());
  w.agent.radius = config.agent_radius;
  w.obstacle.radius = config.obstacle_radius;
  if (mode == ResetMode::kTrain) {
    w.obstacle.position = config.obstacle_start;
    w.policy = ObstaclePolicy::kCollaborative;
  } else {
    std::uniform_real_distribution<double> ydist(config.obstacle_start_y_min,
                                                 config.obstacle_start_y_max);
    w.obstacle.position = Vec2(config.obstacle_start.x(), ydist(rng));
    w.policy = ObstaclePolicy::kStraightLine;
  }
  w.obstacle.velocity = Vec2::Zero();
  w.obstacle.goal = Vec2(config.obstacle_start.x(), config.agent_start.y());
  w.min_separation = (w.agent.position - w.obstacle.position).norm();
  return w;
}

inline Vec2 rotate(const Vec2& v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return Vec2(c * v.x() - s * v.y(), s * v.x() + c * v.y());
}

// Simplified reciprocal-avoidance rule: head for the goal, and when the
// agent is within the influence radius and within +-90 degrees of the
// heading, rotate the heading away from the agent by up to max_deflection,
// proportional to 1 - separation/influence_radius.
inline Vec2 collaborative_policy_step(const World& w) {
  const Vec2 to_goal = w.obstacle.goal - w.obstacle.position;
  const double dist_goal = to_goal.norm();
  if (dist_goal < 1e-12) return Vec2::Zero();
  Vec2 dir = to_goal / dist_goal;
  const Vec2 to_agent = w.agent.position - w.obstacle.position;
  const double sep = to_agent.norm();
  if (sep < w.config.influence_radius && sep > 1e-12 &&
      dir.dot(to_agent) >= 0.0) {
    const double frac = 1.0 - sep / w.config.influence_radius;
    const double cross = dir.x() * to_agent.y() - dir.y() * to_agent.x();
    // Rotate away from the agent's side; ties (dead ahead) go left.
    const double sign = (cross > 0.0) ? -1.0 : 1.0;
    dir = rotate(dir, sign * frac * w.config.max_deflection);
  }
  const double speed = std::min(w.config.obstacle_speed, dist_goal);
  return speed * dir;
}

inline Vec2 straight_line_policy_step(const World& w) {
  const Vec2 to_goal = w.obstacle.goal - w.obstacle.position;
  const double dist = to_goal.norm();
  if (dist < 1e-12) return Vec2::Zero();
  return std::min(w.config.obstacle_speed, dist) * (to_goal / dist);
}

struct MotionPrimitive {
  double heading_offset = 0.0;  // radians, relative to agent-to-goal bearing
  double length = 0.05;
};

// Advances both parties simultaneously by one step. The executed heading is
// the primitive's offset from the current agent-to-goal bearing.
inline StepEvents step(World& w, const MotionPrimitive& primitive) {
  if (w.terminal) throw ContractError("step: world is terminal");
  const Vec2 to_goal = w.agent.goal - w.agent.position;
  const double bearing = std::atan2(to_goal.y(), to_goal.x());
  const double heading = bearing + primitive.heading_offset;
  const Vec2 agent_disp =
      primitive.length * Vec2(std::cos(heading), std::sin(heading));
  const Vec2 obstacle_vel = (w.policy == ObstaclePolicy::kCollaborative)
                                ? collaborative_policy_step(w)
                                : straight_line_policy_step(w);
  w.agent.position += agent_disp;
  w.agent.velocity = agent_disp;
  w.obstacle.position += obstacle_vel;
  w.obstacle.velocity = obstacle_vel;
  ++w.steps_taken;

  const double sep = (w.agent.position - w.obstacle.position).norm();
  w.min_separation = std::min(w.min_separation, sep);

  StepEvents ev;
  ev.collision = sep < (w.agent.radius + w.obstacle.radius);
  const bool at_goal =
      (w.agent.position - w.agent.goal).norm() < w.config.goal_tolerance;
  // Collision wins a same-step tie.
  ev.agent_goal = at_goal && !ev.collision;
  ev.obstacle_goal =
      (w.obstacle.position - w.obstacle.goal).norm() < w.config.goal_tolerance;
  if (!ev.collision && !ev.agent_goal && w.steps_taken >= w.config.max_steps)
    ev.timeout = true;
  w.terminal = ev.terminal();

  Observation obs;
  obs.a1_pos = w.agent.position;
  obs.a1_vel = w.agent.velocity;
  obs.a2_pos = w.obstacle.position;
  obs.a2_vel = w.obstacle.velocity;
  obs.primitive_heading = primitive.heading_offset;
  w.observations.push_back(obs);
  w.events.push_back(ev);
  return ev;
}

inline EpisodeResult finish_episode(const World& w) {
  EpisodeResult r;
  r.observations = w.observations;
  r.steps_taken = w.steps_taken;
  r.min_separation = w.min_separation;
  if (!w.events.empty()) {
    r.collided = w.events.back().collision;
    r.reached_goal = w.events.back().agent_goal;
  }
  return r;
}

// o + xi * lambda_xi with xi i.i.d. standard normal per element.
template <class Derived>
Eigen::MatrixXd apply_noise(const Eigen::MatrixBase<Derived>& obs_matrix,
                            double lambda_xi, std::mt19937_64& rng) {
  if (lambda_xi < 0.0) throw ContractError("apply_noise: lambda_xi < 0");
  Eigen::MatrixXd out = obs_matrix;
  if (lambda_xi == 0.0) return out;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      out(i, j) += lambda_xi * normal(rng);
  return out;
}

// Zeroes exactly n_dropped distinct step rows, chosen uniformly.
inline ObservationSequenced drop_observations(const ObservationSequenced& seq,
                                              int n_dropped,
                                              std::mt19937_64& rng) {
  if (n_dropped < 0 || n_dropped > seq.length())
    throw ContractError("drop_observations: n_dropped out of range");
  ObservationSequenced out = seq;
  std::vector<Eigen::Index> idx(size_t(seq.length()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  for (int k = 0; k < n_dropped; ++k) out.steps.row(idx[size_t(k)]).setZero();
  return out;
}

}  // namespace pbp::sim

#endif  // PBP_ENV_HPP
