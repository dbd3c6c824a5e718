#ifndef PBP_GAUSSIAN_HPP
#define PBP_GAUSSIAN_HPP

// Gaussian-weight layer primitives: moment propagation, marginal likelihood,
// moment-matched weight updates and Gamma hyper-posterior updates. Shared by
// the feedforward path and the recurrent network.

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>

#include <Eigen/Core>

#include "pbp/common.hpp"

namespace pbp {

template <class Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// A weight matrix whose entries are independent 1D Gaussians.
// The last column is the bias column.
template <class Scalar>
struct GaussianMatrix {
  MatX<Scalar> means;
  MatX<Scalar> variances;

  GaussianMatrix() = default;
  GaussianMatrix(MatX<Scalar> m, MatX<Scalar> v)
      : means(std::move(m)), variances(std::move(v)) {
    if (means.rows() != variances.rows() || means.cols() != variances.cols())
      throw ContractError("GaussianMatrix: mean/variance shape mismatch");
    if ((variances.array() < Scalar(0)).any())
      throw ContractError("GaussianMatrix: negative variance entry");
    if (!means.allFinite() || !variances.allFinite())
      throw ContractError("GaussianMatrix: non-finite entry");
  }

  Eigen::Index rows() const { return means.rows(); }
  Eigen::Index cols() const { return means.cols(); }

  // Symmetric unit-scale starting beliefs: means ~ N(0, 1/cols),
  // variances = 1/cols (cols counts the bias column, i.e. fan-in + 1).
  static GaussianMatrix random_init(Eigen::Index rows, Eigen::Index cols,
                                    std::mt19937_64& rng) {
    const Scalar scale = Scalar(1) / Scalar(cols);
    std::normal_distribution<double> normal(0.0, std::sqrt(double(scale)));
    MatX<Scalar> m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = Scalar(normal(rng));
    MatX<Scalar> v = MatX<Scalar>::Constant(rows, cols, scale);
    return GaussianMatrix(std::move(m), std::move(v));
  }

  static GaussianMatrix zeros(Eigen::Index rows, Eigen::Index cols) {
    return GaussianMatrix(MatX<Scalar>::Zero(rows, cols),
                          MatX<Scalar>::Zero(rows, cols));
  }
};

// Gamma hyper-prior on the weight prior precision.
template <class Scalar>
struct PriorSpec {
  Scalar alpha_lambda{6};
  Scalar beta_lambda{6};

  Scalar mean_precision() const { return alpha_lambda / beta_lambda; }

  void validate() const {
    if (!(alpha_lambda > Scalar(0)) || !(beta_lambda > Scalar(0)))
      throw ContractError("PriorSpec: alpha_lambda and beta_lambda must be > 0");
  }
};

// Gamma posterior over the observation noise precision.
template <class Scalar>
struct GammaPosterior {
  Scalar alpha{6};
  Scalar beta{6};

  // E[1/precision]; requires alpha > 1.
  Scalar mean_inverse_precision() const { return beta / (alpha - Scalar(1)); }

  bool valid() const {
    return std::isfinite(double(alpha)) && std::isfinite(double(beta)) &&
           alpha > Scalar(1) && beta > Scalar(0);
  }

  void validate() const {
    if (!valid()) throw ContractError("GammaPosterior: requires alpha > 1, beta > 0");
  }
};

// Per-unit Gaussian activation moments.
template <class Scalar>
struct GaussianMoments {
  VecX<Scalar> means;
  VecX<Scalar> variances;

  GaussianMoments() = default;
  GaussianMoments(VecX<Scalar> m, VecX<Scalar> v)
      : means(std::move(m)), variances(std::move(v)) {
    if (means.size() != variances.size())
      throw ContractError("GaussianMoments: length mismatch");
    if ((variances.array() < Scalar(0)).any())
      throw ContractError("GaussianMoments: negative variance");
  }

  Eigen::Index size() const { return means.size(); }

  static GaussianMoments zeros(Eigen::Index n) {
    return GaussianMoments(VecX<Scalar>::Zero(n), VecX<Scalar>::Zero(n));
  }

  static GaussianMoments deterministic(const VecX<Scalar>& values) {
    return GaussianMoments(values, VecX<Scalar>::Zero(values.size()));
  }
};

// Marginal likelihood evaluated at alpha, alpha+1 and alpha+2.
template <class Scalar>
struct PartitionTriple {
  Scalar logZ{0};
  Scalar logZ1{0};
  Scalar logZ2{0};

  bool finite() const {
    return std::isfinite(double(logZ)) && std::isfinite(double(logZ1)) &&
           std::isfinite(double(logZ2));
  }
};

// Counters surfaced in training stats. Clamps and rejections are silent
// failure modes otherwise, so they are counted rather than hidden.
struct UpdateCounters {
  long clamp_events = 0;
  long rejected_noise_updates = 0;
  long skipped_sequences = 0;
};

inline constexpr double kVarianceFloor = 1e-10;

// ---------------------------------------------------------------------------
// Moment propagation

// Core rule on bias-extended inputs: the caller has already appended the
// bias unit. kappa = 1/sqrt(cols).
template <class Scalar>
GaussianMoments<Scalar> propagate_extended(const GaussianMatrix<Scalar>& layer,
                                           const VecX<Scalar>& a_mean,
                                           const VecX<Scalar>& a_var) {
  if (a_mean.size() != layer.cols() || a_var.size() != layer.cols())
    throw ContractError("propagate_extended: input length != layer cols");
  const Scalar kappa = Scalar(1) / std::sqrt(Scalar(layer.cols()));
  const Scalar kappa2 = kappa * kappa;
  VecX<Scalar> out_m = kappa * (layer.means * a_mean);
  VecX<Scalar> out_v =
      kappa2 * ((layer.means.array().square().matrix() * a_var) +
                layer.variances *
                    (a_mean.array().square() + a_var.array()).matrix());
  out_v = out_v.cwiseMax(Scalar(0));
  return GaussianMoments<Scalar>(std::move(out_m), std::move(out_v));
}

// Linear-Gaussian layer forward: appends a deterministic bias unit
// (mean 1, variance 0) and propagates exact first and second moments under
// the factorized-Gaussian assumption.
template <class Scalar>
GaussianMoments<Scalar> propagate_linear_gaussian(
    const GaussianMatrix<Scalar>& layer, const GaussianMoments<Scalar>& input) {
  if (input.size() != layer.cols() - 1)
    throw ContractError("propagate_linear_gaussian: input length != cols - 1");
  if (!input.means.allFinite() || !input.variances.allFinite())
    throw NumericError("propagate_linear_gaussian: non-finite input");
  VecX<Scalar> a_m(layer.cols());
  VecX<Scalar> a_v(layer.cols());
  a_m << input.means, Scalar(1);
  a_v << input.variances, Scalar(0);
  return propagate_extended(layer, a_m, a_v);
}

// Exact moments of max(0, z) for z ~ N(mean, var), per unit.
template <class Scalar>
GaussianMoments<Scalar> propagate_relu_moments(
    const GaussianMoments<Scalar>& input) {
  const Eigen::Index n = input.size();
  VecX<Scalar> out_m(n), out_v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = double(input.means[i]);
    const double v = double(input.variances[i]);
    if (v <= 0.0) {
      out_m[i] = Scalar(std::max(0.0, m));
      out_v[i] = Scalar(0);
      continue;
    }
    const double s = std::sqrt(v);
    const double z = m / s;
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    const double mean = m * cdf + s * pdf;
    const double second = (m * m + v) * cdf + m * s * pdf;
    out_m[i] = Scalar(mean);
    out_v[i] = Scalar(std::max(0.0, second - mean * mean));
  }
  return GaussianMoments<Scalar>(std::move(out_m), std::move(out_v));
}

// ---------------------------------------------------------------------------
// Marginal likelihood

template <class Scalar>
Scalar gaussian_log_density(Scalar y, Scalar mean, Scalar total_variance) {
  if (!(total_variance > Scalar(0)))
    throw NumericError("gaussian_log_density: total variance <= 0");
  const Scalar r = y - mean;
  return Scalar(-0.5) * std::log(Scalar(2) * Scalar(M_PI) * total_variance) -
         r * r / (Scalar(2) * total_variance);
}

// log Z for a scalar prediction under the Gamma noise posterior, with the
// noise folded in through its mean inverse precision.
template <class Scalar>
Scalar log_marginal(Scalar y, const GaussianMoments<Scalar>& prediction,
                    const GammaPosterior<Scalar>& noise) {
  if (prediction.size() != 1)
    throw ContractError("log_marginal: prediction must be scalar");
  noise.validate();
  return gaussian_log_density(y, prediction.means[0],
                              prediction.variances[0] +
                                  noise.mean_inverse_precision());
}

// ---------------------------------------------------------------------------
// Weight updates

// Moment-matched Gaussian belief update from the gradient of log Z.
// A raw negative variance is clamped to the floor and counted.
template <class Scalar>
std::pair<Scalar, Scalar> pbp_update_weight(Scalar m, Scalar v,
                                            Scalar dlogZ_dm, Scalar dlogZ_dv,
                                            UpdateCounters* counters = nullptr,
                                            Scalar v_min = Scalar(kVarianceFloor)) {
  const Scalar m_new = m + v * dlogZ_dm;
  Scalar v_new = v - v * v * (dlogZ_dm * dlogZ_dm - Scalar(2) * dlogZ_dv);
  if (v_new < Scalar(0)) {
    v_new = v_min;
    if (counters) ++counters->clamp_events;
  }
  return {m_new, v_new};
}

// Elementwise update of a whole layer from gradient matrices with respect to
// its mean and variance entries.
template <class Scalar>
void apply_pbp_update(GaussianMatrix<Scalar>& layer,
                      const MatX<Scalar>& grad_means,
                      const MatX<Scalar>& grad_variances,
                      UpdateCounters* counters = nullptr,
                      Scalar v_min = Scalar(kVarianceFloor)) {
  if (grad_means.rows() != layer.rows() || grad_means.cols() != layer.cols() ||
      grad_variances.rows() != layer.rows() ||
      grad_variances.cols() != layer.cols())
    throw ContractError("apply_pbp_update: gradient shape mismatch");
  for (Eigen::Index i = 0; i < layer.rows(); ++i)
    for (Eigen::Index j = 0; j < layer.cols(); ++j) {
      auto [m, v] =
          pbp_update_weight(layer.means(i, j), layer.variances(i, j),
                            grad_means(i, j), grad_variances(i, j), counters,
                            v_min);
      layer.means(i, j) = m;
      layer.variances(i, j) = v;
    }
}

// ---------------------------------------------------------------------------
// Hyper-posterior update for the noise precision

// Gamma moment-matching of the tilted noise posterior via the partition
// values at alpha, alpha+1 and alpha+2. An update that would violate the
// posterior invariants is rejected (posterior kept, rejection counted).
template <class Scalar>
GammaPosterior<Scalar> update_noise_posterior(
    const GammaPosterior<Scalar>& noise, const PartitionTriple<Scalar>& partition,
    UpdateCounters* counters = nullptr) {
  noise.validate();
  if (!partition.finite()) {
    if (counters) ++counters->rejected_noise_updates;
    return noise;
  }
  const Scalar r1 = std::exp(partition.logZ2 - partition.logZ1);
  const Scalar r0 = std::exp(partition.logZ1 - partition.logZ);
  const Scalar alpha = noise.alpha;
  const Scalar beta = noise.beta;
  const Scalar denom_a =
      (r1 / r0) * (alpha + Scalar(1)) / alpha - Scalar(1);
  const Scalar denom_b =
      r1 * (alpha + Scalar(1)) / beta - r0 * alpha / beta;
  GammaPosterior<Scalar> next{Scalar(1) / denom_a, Scalar(1) / denom_b};
  if (!next.valid()) {
    if (counters) ++counters->rejected_noise_updates;
    return noise;
  }
  return next;
}

// ---------------------------------------------------------------------------
// Prior incorporation

// Moment-matched product of each weight belief N(m, v) with the zero-mean
// prior factor of precision E[lambda_p]. Routed through the same update rule
// as the data updates, applied to the prior factor's log Z; for a Gaussian
// factor this is the exact product, so v never grows.
template <class Scalar>
GaussianMatrix<Scalar> incorporate_prior(const GaussianMatrix<Scalar>& layer,
                                         const PriorSpec<Scalar>& prior,
                                         UpdateCounters* counters = nullptr) {
  prior.validate();
  const Scalar s = Scalar(1) / prior.mean_precision();  // prior variance
  GaussianMatrix<Scalar> out = layer;
  for (Eigen::Index i = 0; i < layer.rows(); ++i)
    for (Eigen::Index j = 0; j < layer.cols(); ++j) {
      const Scalar m = layer.means(i, j);
      const Scalar v = layer.variances(i, j);
      const Scalar tot = v + s;
      const Scalar dm = -m / tot;
      const Scalar dv = Scalar(-0.5) / tot + m * m / (Scalar(2) * tot * tot);
      auto [mn, vn] = pbp_update_weight(m, v, dm, dv, counters);
      out.means(i, j) = mn;
      out.variances(i, j) = std::min(vn, v);
    }
  return out;
}

using GaussianMatrixd = GaussianMatrix<double>;
using GaussianMomentsd = GaussianMoments<double>;
using PriorSpecd = PriorSpec<double>;
using GammaPosteriord = GammaPosterior<double>;
using PartitionTripled = PartitionTriple<double>;

}  // namespace pbp

#endif  // PBP_GAUSSIAN_HPP
