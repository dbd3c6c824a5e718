#ifndef PBP_ORACLES_HPP
#define PBP_ORACLES_HPP

// Independent reference computations used by the test suites and the CLI
// selftest: closed forms, finite differences, quadrature and Monte-Carlo
// samplers. Nothing here calls the propagation or update formulas it checks.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "pbp/common.hpp"
#include "pbp/gaussian.hpp"
#include "pbp/rnn.hpp"

namespace pbp::oracle {

// ---------------------------------------------------------------------------
// Conjugate-Gaussian posterior for a single weight: prior N(m, v), Gaussian
// likelihood N(y | w, noise_var).
inline std::pair<double, double> conjugate_posterior(double m, double v,
                                                     double y,
                                                     double noise_var) {
  const double post_v = 1.0 / (1.0 / v + 1.0 / noise_var);
  const double post_m = post_v * (m / v + y / noise_var);
  return {post_m, post_v};
}

// Analytic gradients of log N(y | m, v + noise_var) with respect to m and v.
inline std::pair<double, double> gaussian_logz_gradients(double m, double v,
                                                         double y,
                                                         double noise_var) {
  const double tot = v + noise_var;
  const double r = y - m;
  return {r / tot, -0.5 / tot + r * r / (2.0 * tot * tot)};
}

// ---------------------------------------------------------------------------
// Simpson quadrature on a uniform grid (n panels, n even).
inline double simpson(const std::function<double(double)>& f, double a,
                      double b, int n = 4000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Moments of the tilted noise-precision distribution
//   p(gamma) ∝ Gamma(gamma; alpha, beta) N(y; m, v + 1/gamma)
// by quadrature in log-gamma. Returns (Z(alpha), E[gamma], E[gamma^2]).
struct TiltedGammaMoments {
  double z = 0.0;
  double mean = 0.0;
  double second = 0.0;
};

inline double log_gamma_pdf(double g, double alpha, double beta) {
  return alpha * std::log(beta) - std::lgamma(alpha) +
         (alpha - 1.0) * std::log(g) - beta * g;
}

inline TiltedGammaMoments tilted_gamma_moments(double alpha, double beta,
                                               double y, double m, double v) {
  auto integrand = [&](int power) {
    return [=](double u) {  // u = log(gamma)
      const double g = std::exp(u);
      const double tot = v + 1.0 / g;
      const double log_like = -0.5 * std::log(2.0 * M_PI * tot) -
                              (y - m) * (y - m) / (2.0 * tot);
      // +u from the Jacobian of the log substitution.
      return std::exp(log_gamma_pdf(g, alpha, beta) + log_like + u +
                      power * u);
    };
  };
  const double lo = std::log(alpha / beta) - 14.0;
  const double hi = std::log(alpha / beta) + 10.0;
  TiltedGammaMoments out;
  out.z = simpson(integrand(0), lo, hi);
  out.mean = simpson(integrand(1), lo, hi) / out.z;
  out.second = simpson(integrand(2), lo, hi) / out.z;
  return out;
}

// Exact marginal Z(alpha + k) by the same quadrature, for feeding the
// hyper-posterior update with consistent partition values.
inline double log_partition_quadrature(double alpha, double beta, double y,
                                       double m, double v) {
  return std::log(tilted_gamma_moments(alpha, beta, y, m, v).z);
}

// Gamma distribution matching the tilted first two moments.
inline std::pair<double, double> gamma_moment_match(double mean,
                                                    double second) {
  const double var = second - mean * mean;
  return {mean * mean / var, mean / var};
}

// ---------------------------------------------------------------------------
// Rectified-Gaussian moments by direct numerical integration.
inline std::pair<double, double> relu_moments_quadrature(double m, double v) {
  const double s = std::sqrt(v);
  auto pdf = [&](double z) {
    return std::exp(-(z - m) * (z - m) / (2.0 * v)) /
           std::sqrt(2.0 * M_PI * v);
  };
  const double lo = std::max(0.0, m - 10.0 * s);
  const double hi = std::max(1e-8, m + 10.0 * s);
  const double mean = simpson([&](double z) { return z * pdf(z); }, lo, hi);
  const double second =
      simpson([&](double z) { return z * z * pdf(z); }, lo, hi);
  return {mean, second - mean * mean};
}

// ---------------------------------------------------------------------------
// Monte-Carlo sampling oracle for a single linear Gaussian layer: samples
// weights and inputs directly and measures the empirical output moments.
struct McMoments {
  Eigen::VectorXd mean, var;
  Eigen::VectorXd mean_se, var_se;  // standard errors
};

inline McMoments mc_single_layer(const GaussianMatrixd& layer,
                                 const GaussianMomentsd& input, int n_samples,
                                 std::mt19937_64& rng) {
  const Eigen::Index rows = layer.rows(), cols = layer.cols();
  const double kappa = 1.0 / std::sqrt(double(cols));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd samples(n_samples, rows);
  for (int s = 0; s < n_samples; ++s) {
    Eigen::VectorXd a(cols);
    for (Eigen::Index j = 0; j < cols - 1; ++j)
      a[j] = input.means[j] + std::sqrt(input.variances[j]) * normal(rng);
    a[cols - 1] = 1.0;
    for (Eigen::Index i = 0; i < rows; ++i) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < cols; ++j)
        acc += (layer.means(i, j) +
                std::sqrt(layer.variances(i, j)) * normal(rng)) *
               a[j];
      samples(s, i) = kappa * acc;
    }
  }
  McMoments out;
  out.mean = samples.colwise().mean();
  out.var.resize(rows);
  out.mean_se.resize(rows);
  out.var_se.resize(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::VectorXd centered =
        samples.col(i).array() - out.mean[i];
    const double var = centered.squaredNorm() / double(n_samples - 1);
    const double m4 = centered.array().pow(4).mean();
    out.var[i] = var;
    out.mean_se[i] = std::sqrt(var / n_samples);
    out.var_se[i] = std::sqrt(std::max(0.0, m4 - var * var) / n_samples);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Assumed-density Monte-Carlo simulator for the recurrent forward pass.
//
// The moment recursion factorizes the hidden distribution at every step:
// weights are treated as fresh independent draws per use and the hidden
// units as independent Gaussians. This sampler implements exactly those
// semantics by sampling: at each step it draws fresh weights per particle,
// then projects the particle cloud back onto an independent Gaussian with
// the cloud's per-unit moments (moment-corrected so the projection itself
// adds no sampling noise). It never evaluates the closed-form propagation.
struct McPrediction {
  double mean = 0.0, var = 0.0;
  double mean_se = 0.0, var_se = 0.0;
};

inline McPrediction mc_forward_sequence(const RecurrentBayesNetd& net,
                                        const ObservationSequenced& seq,
                                        int n_samples, std::mt19937_64& rng) {
  const Eigen::Index H = net.hidden_dim;
  const Eigen::Index T = seq.length();
  const double kx = 1.0 / std::sqrt(double(net.input_dim + 1));
  const double kh = 1.0 / std::sqrt(double(H + 1));
  const double kr = 1.0 / std::sqrt(double(H + 1));
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::MatrixXd cloud = Eigen::MatrixXd::Zero(n_samples, H);
  auto sample_entry = [&](const GaussianMatrixd& layer, Eigen::Index i,
                          Eigen::Index j) {
    return layer.means(i, j) +
           std::sqrt(layer.variances(i, j)) * normal(rng);
  };
  for (Eigen::Index t = 0; t < T; ++t) {
    Eigen::VectorXd x(net.input_dim + 1);
    x << seq.steps.row(t).transpose(), 1.0;
    Eigen::MatrixXd next(n_samples, H);
    for (int s = 0; s < n_samples; ++s) {
      for (Eigen::Index i = 0; i < H; ++i) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < net.input_dim + 1; ++j)
          acc += sample_entry(net.recurrent_input, i, j) * x[j];
        double hacc = 0.0;
        for (Eigen::Index j = 0; j < H; ++j)
          hacc += sample_entry(net.recurrent_hidden, i, j) * cloud(s, j);
        next(s, i) = kx * acc + kh * hacc;
      }
    }
    // Factorized projection: redraw each unit independently, then correct
    // the redrawn cloud to carry exactly the measured per-unit moments.
    for (Eigen::Index i = 0; i < H; ++i) {
      const double mean = next.col(i).mean();
      const double var =
          (next.col(i).array() - mean).square().sum() / double(n_samples - 1);
      Eigen::VectorXd redraw(n_samples);
      for (int s = 0; s < n_samples; ++s) redraw[s] = normal(rng);
      const double rm = redraw.mean();
      const double rsd =
          std::sqrt((redraw.array() - rm).square().sum() / double(n_samples - 1));
      cloud.col(i) =
          (mean + std::sqrt(var) * (redraw.array() - rm) / rsd).matrix();
    }
  }
  Eigen::VectorXd y(n_samples);
  for (int s = 0; s < n_samples; ++s) {
    double acc = sample_entry(net.readout, 0, H);  // bias unit
    for (Eigen::Index j = 0; j < H; ++j)
      acc += sample_entry(net.readout, 0, j) * cloud(s, j);
    y[s] = kr * acc;
  }
  McPrediction out;
  out.mean = y.mean();
  const Eigen::ArrayXd centered = y.array() - out.mean;
  out.var = centered.square().sum() / double(n_samples - 1);
  const double m4 = centered.pow(4).mean();
  out.mean_se = std::sqrt(out.var / n_samples);
  out.var_se = std::sqrt(std::max(0.0, m4 - out.var * out.var) / n_samples);
  return out;
}

// ---------------------------------------------------------------------------
// Central finite differences of logZ_t over every mean/variance parameter.
// Returns the maximum relative discrepancy against tbptt_gradients.
inline double max_gradient_discrepancy(const RecurrentBayesNetd& net,
                                       const ObservationSequenced& seq,
                                       double label, double step = 1e-6) {
  auto logz_at = [&](const RecurrentBayesNetd& n) {
    auto grads = tbptt_gradients(n, seq, label);
    std::vector<double> out;
    out.reserve(grads.size());
    for (const auto& g : grads) out.push_back(g.partition.logZ);
    return out;
  };
  const auto analytic = tbptt_gradients(net, seq, label);
  double worst = 0.0;
  auto check_block = [&](auto member_layer, auto member_field,
                         auto grad_member) {
    RecurrentBayesNetd work = net;
    auto& mat = (work.*member_layer).*member_field;
    for (Eigen::Index i = 0; i < mat.rows(); ++i)
      for (Eigen::Index j = 0; j < mat.cols(); ++j) {
        const double saved = mat(i, j);
        mat(i, j) = saved + step;
        const auto plus = logz_at(work);
        mat(i, j) = saved - step;
        const auto minus = logz_at(work);
        mat(i, j) = saved;
        for (size_t t = 0; t < plus.size(); ++t) {
          const double fd = (plus[t] - minus[t]) / (2.0 * step);
          const double an = (analytic[t].*grad_member)(i, j);
          const double denom =
              std::max({std::abs(fd), std::abs(an), 1e-6});
          worst = std::max(worst, std::abs(fd - an) / denom);
        }
      }
  };
  using Net = RecurrentBayesNetd;
  using Grad = StepGradients<double>;
  check_block(&Net::recurrent_input, &GaussianMatrixd::means, &Grad::d_input_m);
  check_block(&Net::recurrent_input, &GaussianMatrixd::variances,
              &Grad::d_input_v);
  check_block(&Net::recurrent_hidden, &GaussianMatrixd::means,
              &Grad::d_hidden_m);
  check_block(&Net::recurrent_hidden, &GaussianMatrixd::variances,
              &Grad::d_hidden_v);
  check_block(&Net::readout, &GaussianMatrixd::means, &Grad::d_readout_m);
  check_block(&Net::readout, &GaussianMatrixd::variances, &Grad::d_readout_v);
  return worst;
}

// Random small net + sequence helpers for seeded oracle trials.
inline RecurrentBayesNetd random_net(Eigen::Index input_dim,
                                     Eigen::Index hidden_dim,
                                     std::mt19937_64& rng) {
  return RecurrentBayesNetd::random_init(input_dim, hidden_dim, rng);
}

inline ObservationSequenced random_sequence(Eigen::Index T, Eigen::Index dim,
                                            std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ObservationSequenced seq;
  seq.steps.resize(T, dim);
  for (Eigen::Index i = 0; i < T; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) seq.steps(i, j) = normal(rng);
  return seq;
}

}  // namespace pbp::oracle

#endif  // PBP_ORACLES_HPP
