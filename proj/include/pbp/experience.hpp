#ifndef PBP_EXPERIENCE_HPP
#define PBP_EXPERIENCE_HPP

// Experience pool: per-step window extraction with zero padding,
// class-indexed storage, balanced sampling with replacement and feature
// z-scoring.

#include <random>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "pbp/common.hpp"
#include "pbp/env.hpp"
#include "pbp/rnn.hpp"

namespace pbp::xp {

inline constexpr double kSigmaFloor = 1e-6;

// Windows of a collision episode count as positive only when they end within
// this many steps of the collision. Earlier windows of the episode are
// genuinely ambiguous (the outcome is not yet determined there), and because
// collision episodes are shorter than clean ones, broadcasting the episode
// label onto them skews the positive class toward early windows and makes
// balanced training over-predict collisions everywhere. With a horizon of 0
// the label is fully determined by the window itself (the final row shows the
// sub-threshold separation), so the classification target is learnable to
// high confidence.
inline constexpr Eigen::Index kCollisionLabelHorizon = 0;

// Running per-feature mean and standard deviation (Welford).
struct FeatureStats {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(sim::kObservationDim);
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(sim::kObservationDim);
  long count = 0;

  void update(const Eigen::VectorXd& x) {
    ++count;
    Eigen::VectorXd delta = x - mean;
    mean += delta / double(count);
    m2 += delta.cwiseProduct(x - mean);
  }

  Eigen::VectorXd stddev() const {
    if (count < 2) return Eigen::VectorXd::Ones(mean.size());
    return (m2 / double(count - 1)).cwiseSqrt().cwiseMax(kSigmaFloor);
  }
};

struct ExperiencePool {
  std::vector<ObservationSequenced> positives;  // label 1
  std::vector<ObservationSequenced> negatives;  // label 0
  FeatureStats feature_stats;
  Eigen::Index window_length = 8;

  size_t size() const { return positives.size() + negatives.size(); }
};

// z-scores a raw window with the pool's statistics (pad rows included, so
// zeroed rows map to the same values padding maps to at query time).
inline ObservationSequenced normalize(const ExperiencePool& pool,
                                      const ObservationSequenced& seq) {
  const Eigen::VectorXd mu = pool.feature_stats.mean;
  const Eigen::VectorXd sigma = pool.feature_stats.stddev();
  ObservationSequenced out = seq;
  out.steps = (seq.steps.rowwise() - mu.transpose()).array().rowwise() /
              sigma.transpose().array();
  return out;
}

// Adds one labeled window per executed step: the window ending at step t,
// zero-padded at the front while the episode is shorter than the window.
// In a collision episode, only the windows ending within kCollisionLabelHorizon
// steps of the collision are positive; earlier windows are negative.
inline void append_episode(ExperiencePool& pool, const sim::EpisodeResult& episode) {
  const Eigen::Index T = pool.window_length;
  const Eigen::Index n = Eigen::Index(episode.observations.size());
  if (n == 0) return;
  Eigen::MatrixXd all(n, sim::kObservationDim);
  for (Eigen::Index t = 0; t < n; ++t)
    all.row(t) = episode.observations[size_t(t)].features().transpose();
  for (Eigen::Index t = 0; t < n; ++t)
    pool.feature_stats.update(all.row(t).transpose());
  for (Eigen::Index t = 0; t < n; ++t) {
    const bool positive =
        episode.collided && t >= n - 1 - kCollisionLabelHorizon;
    auto& dest = positive ? pool.positives : pool.negatives;
    const Eigen::Index first = std::max(Eigen::Index{0}, t - T + 1);
    dest.push_back(zero_pad<double>(all.middleRows(first, t - first + 1), T));
  }
}

struct TrainingBatch {
  std::vector<std::pair<ObservationSequenced, double>> examples;  // z-scored
  bool single_class_fallback = false;
};

// floor(n/2) draws per class, uniformly with replacement, shuffled, z-scored
// with the pool statistics at sampling time. An empty class falls back to
// the other with a warning flag.
inline TrainingBatch sample_balanced(const ExperiencePool& pool, int n,
                                     std::mt19937_64& rng) {
  if (n < 2) throw ContractError("sample_balanced: n < 2");
  if (pool.positives.empty() && pool.negatives.empty())
    throw ContractError("sample_balanced: pool is empty");
  TrainingBatch batch;
  const int half = n / 2;
  auto draw = [&](const std::vector<ObservationSequenced>& cls, double label,
                  int count) {
    std::uniform_int_distribution<size_t> pick(0, cls.size() - 1);
    for (int i = 0; i < count; ++i)
      batch.examples.emplace_back(normalize(pool, cls[pick(rng)]), label);
  };
  if (pool.positives.empty()) {
    batch.single_class_fallback = true;
    draw(pool.negatives, 0.0, n);
  } else if (pool.negatives.empty()) {
    batch.single_class_fallback = true;
    draw(pool.positives, 1.0, n);
  } else {
    draw(pool.negatives, 0.0, half);
    draw(pool.positives, 1.0, half);
  }
  std::shuffle(batch.examples.begin(), batch.examples.end(), rng);
  return batch;
}

}  // namespace pbp::xp

#endif  // PBP_EXPERIENCE_HPP
