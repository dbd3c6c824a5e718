#include <cmath>
#include <random>

#include "doctest.h"
#include "pbp/gaussian.hpp"
#include "pbp/oracles.hpp"

using namespace pbp;

namespace {

GaussianMatrixd layer_1x2(double m0, double m1, double v0, double v1) {
  Eigen::MatrixXd m(1, 2), v(1, 2);
  m << m0, m1;
  v << v0, v1;
  return GaussianMatrixd(m, v);
}

GaussianMomentsd scalar_moments(double m, double v) {
  Eigen::VectorXd mm(1), vv(1);
  mm << m;
  vv << v;
  return GaussianMomentsd(mm, vv);
}

}  // namespace

TEST_CASE("propagate_linear_gaussian: deterministic weights pass scaled input") {
  auto layer = layer_1x2(std::sqrt(2.0), 0.0, 0.0, 0.0);
  auto out = propagate_linear_gaussian(layer, scalar_moments(3.0, 0.0));
  CHECK(out.means[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(out.variances[0] == doctest::Approx(0.0));
}

TEST_CASE("propagate_linear_gaussian: weight variance scales squared input") {
  auto layer = layer_1x2(0.0, 0.0, 1.0, 0.0);
  auto out = propagate_linear_gaussian(layer, scalar_moments(2.0, 0.0));
  CHECK(out.means[0] == doctest::Approx(0.0));
  CHECK(out.variances[0] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("propagate_linear_gaussian: dimension mismatch throws") {
  auto layer = layer_1x2(1.0, 0.0, 0.0, 0.0);
  Eigen::VectorXd m(2), v(2);
  m << 1.0, 2.0;
  v << 0.0, 0.0;
  CHECK_THROWS_AS(propagate_linear_gaussian(layer, GaussianMomentsd(m, v)),
                  ContractError);
}

TEST_CASE("propagate_linear_gaussian: Monte-Carlo oracle on a random layer") {
  std::mt19937_64 rng(42);
  auto layer = GaussianMatrixd::random_init(4, 5, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd im(4), iv(4);
  for (int i = 0; i < 4; ++i) {
    im[i] = normal(rng);
    iv[i] = std::abs(normal(rng));
  }
  GaussianMomentsd input(im, iv);
  auto prop = propagate_linear_gaussian(layer, input);
  auto mc = oracle::mc_single_layer(layer, input, 100000, rng);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(prop.means[i] - mc.mean[i]) < 3.0 * mc.mean_se[i]);
    CHECK(std::abs(prop.variances[i] - mc.var[i]) < 3.0 * mc.var_se[i]);
  }
}

TEST_CASE("propagate_linear_gaussian: mean is linear in input means") {
  std::mt19937_64 rng(7);
  auto layer = GaussianMatrixd::random_init(3, 6, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd a(5), b(5);
    for (int i = 0; i < 5; ++i) {
      a[i] = normal(rng);
      b[i] = normal(rng);
    }
    auto fa = propagate_linear_gaussian(layer, GaussianMomentsd::deterministic(a));
    auto fb = propagate_linear_gaussian(layer, GaussianMomentsd::deterministic(b));
    auto fab =
        propagate_linear_gaussian(layer, GaussianMomentsd::deterministic(a + b));
    // One bias contribution doubles up when summing two evaluations.
    auto f0 = propagate_linear_gaussian(
        layer, GaussianMomentsd::deterministic(Eigen::VectorXd::Zero(5)));
    for (int i = 0; i < 3; ++i)
      CHECK(fab.means[i] ==
            doctest::Approx(fa.means[i] + fb.means[i] - f0.means[i])
                .epsilon(1e-10));
  }
}

TEST_CASE("propagate_relu_moments: examples") {
  auto pos = propagate_relu_moments(scalar_moments(5.0, 0.0));
  CHECK(pos.means[0] == doctest::Approx(5.0));
  CHECK(pos.variances[0] == doctest::Approx(0.0));

  auto neg = propagate_relu_moments(scalar_moments(-5.0, 0.0));
  CHECK(neg.means[0] == doctest::Approx(0.0));
  CHECK(neg.variances[0] == doctest::Approx(0.0));

  auto mid = propagate_relu_moments(scalar_moments(0.0, 1.0));
  CHECK(mid.means[0] == doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)).epsilon(1e-9));
  CHECK(mid.variances[0] ==
        doctest::Approx(0.5 - 1.0 / (2.0 * M_PI)).epsilon(1e-9));
}

TEST_CASE("propagate_relu_moments: quadrature oracle on random inputs") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double m = 2.0 * normal(rng);
    const double v = 0.1 + std::abs(normal(rng));
    auto got = propagate_relu_moments(scalar_moments(m, v));
    auto [qm, qv] = oracle::relu_moments_quadrature(m, v);
    CHECK(got.means[0] == doctest::Approx(qm).epsilon(1e-6));
    CHECK(got.variances[0] == doctest::Approx(qv).epsilon(1e-6));
  }
}

TEST_CASE("log_marginal: examples and symmetry") {
  GammaPosteriord noise{2.0, 0.5};  // E[1/gamma] = 0.5
  CHECK(log_marginal(1.0, scalar_moments(1.0, 0.5), noise) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-12));
  CHECK(log_marginal(1.0, scalar_moments(0.0, 0.5), noise) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI) - 0.5).epsilon(1e-12));
  // Symmetric in the residual.
  const double delta = 0.37;
  CHECK(log_marginal(2.0, scalar_moments(2.0 + delta, 0.5), noise) ==
        doctest::Approx(log_marginal(2.0, scalar_moments(2.0 - delta, 0.5),
                                     noise)));
}

TEST_CASE("log_marginal: exp(logZ) integrates to one over y") {
  GammaPosteriord noise{6.0, 6.0};
  auto pred = scalar_moments(0.3, 0.4);
  const double tot = 0.4 + noise.mean_inverse_precision();
  const double lo = 0.3 - 12.0 * std::sqrt(tot);
  const double hi = 0.3 + 12.0 * std::sqrt(tot);
  const int n = 20000;
  const double h = (hi - lo) / n;
  double sum = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    sum += w * std::exp(log_marginal(lo + i * h, pred, noise));
  }
  CHECK(sum * h == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("pbp_update_weight: zero gradient is a fixed point") {
  auto [m, v] = pbp_update_weight(0.3, 0.7, 0.0, 0.0);
  CHECK(m == doctest::Approx(0.3));
  CHECK(v == doctest::Approx(0.7));
}

TEST_CASE("pbp_update_weight: conjugate-Gaussian closed form") {
  auto [m, v] = pbp_update_weight(0.0, 1.0, 0.5, -0.125);
  CHECK(m == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("pbp_update_weight: point mass is unchanged") {
  auto [m, v] = pbp_update_weight(1.5, 0.0, 3.0, -2.0);
  CHECK(m == doctest::Approx(1.5));
  CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("pbp_update_weight: reproduces the conjugate posterior exactly") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.05, 3.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const double m = 2.0 * normal(rng);
    const double v = unif(rng);
    const double y = 2.0 * normal(rng);
    const double noise_var = unif(rng);
    auto [gm, gv] = oracle::gaussian_logz_gradients(m, v, y, noise_var);
    auto [mn, vn] = pbp_update_weight(m, v, gm, gv);
    auto [em, ev] = oracle::conjugate_posterior(m, v, y, noise_var);
    CHECK(mn == doctest::Approx(em).epsilon(1e-10));
    CHECK(vn == doctest::Approx(ev).epsilon(1e-10));
  }
}

TEST_CASE("pbp_update_weight: clamp floors negative variance and counts") {
  UpdateCounters counters;
  // Large mean gradient forces the raw variance negative.
  auto [m, v] = pbp_update_weight(0.0, 1.0, 10.0, 0.0, &counters);
  (void)m;
  CHECK(v == doctest::Approx(kVarianceFloor));
  CHECK(counters.clamp_events == 1);
}

TEST_CASE("update_noise_posterior: equal partition values fix alpha") {
  GammaPosteriord noise{4.0, 2.0};
  PartitionTripled flat{-1.3, -1.3, -1.3};
  auto next = update_noise_posterior(noise, flat);
  CHECK(next.alpha == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("update_noise_posterior: quadrature moment-match oracle") {
  const double alpha = 6.0, beta = 6.0;
  const double y = 0.3, m = 0.0, v = 0.2;
  PartitionTripled part{
      oracle::log_partition_quadrature(alpha, beta, y, m, v),
      oracle::log_partition_quadrature(alpha + 1.0, beta, y, m, v),
      oracle::log_partition_quadrature(alpha + 2.0, beta, y, m, v)};
  auto next = update_noise_posterior(GammaPosteriord{alpha, beta}, part);
  auto tilted = oracle::tilted_gamma_moments(alpha, beta, y, m, v);
  auto [a_star, b_star] = oracle::gamma_moment_match(tilted.mean, tilted.second);
  CHECK(next.alpha / next.beta ==
        doctest::Approx(a_star / b_star).epsilon(1e-3));
  CHECK(next.alpha / (next.beta * next.beta) ==
        doctest::Approx(a_star / (b_star * b_star)).epsilon(1e-3));
}

TEST_CASE("update_noise_posterior: invariant-violating update is rejected") {
  GammaPosteriord noise{1.5, 1.0};
  // logZ2 >> logZ1 makes the alpha denominator blow past the invariant.
  PartitionTripled bad{-10.0, -10.0, 5.0};
  UpdateCounters counters;
  auto next = update_noise_posterior(noise, bad, &counters);
  CHECK(next.alpha == doctest::Approx(noise.alpha));
  CHECK(next.beta == doctest::Approx(noise.beta));
  CHECK(counters.rejected_noise_updates == 1);
}

TEST_CASE("update_noise_posterior: never yields alpha <= 1 or beta <= 0") {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> unif(-5.0, 5.0);
  for (int trial = 0; trial < 1000; ++trial) {
    GammaPosteriord noise{1.1 + std::abs(unif(rng)), 0.1 + std::abs(unif(rng))};
    PartitionTripled part{unif(rng), unif(rng), unif(rng)};
    auto next = update_noise_posterior(noise, part);
    CHECK(next.alpha > 1.0);
    CHECK(next.beta > 0.0);
  }
}

TEST_CASE("incorporate_prior: vanishing prior leaves the layer unchanged") {
  std::mt19937_64 rng(3);
  auto layer = GaussianMatrixd::random_init(3, 4, rng);
  PriorSpecd prior{1e-12, 1.0};  // E[lambda_p] = 1e-12
  auto out = incorporate_prior(layer, prior);
  CHECK((out.means - layer.means).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((out.variances - layer.variances).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("incorporate_prior: unit prior halves a unit variance") {
  auto layer = layer_1x2(0.0, 0.0, 1.0, 1.0);
  PriorSpecd prior{1.0, 1.0};
  auto out = incorporate_prior(layer, prior);
  CHECK(out.means(0, 0) == doctest::Approx(0.0));
  CHECK(out.variances(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("incorporate_prior: point mass unchanged and variances never grow") {
  auto layer = layer_1x2(2.0, -1.0, 0.0, 0.8);
  PriorSpecd prior{3.0, 2.0};
  auto out = incorporate_prior(layer, prior);
  CHECK(out.means(0, 0) == doctest::Approx(2.0));
  CHECK(out.variances(0, 0) == doctest::Approx(0.0));
  for (Eigen::Index j = 0; j < 2; ++j)
    CHECK(out.variances(0, j) <= layer.variances(0, j) + 1e-15);
}

TEST_CASE("GaussianMatrix: invariant violations throw") {
  Eigen::MatrixXd m(1, 2), v(1, 2);
  m << 0.0, 0.0;
  v << -1.0, 0.0;
  CHECK_THROWS_AS(GaussianMatrixd(m, v), ContractError);
  Eigen::MatrixXd v2(2, 2);
  v2.setZero();
  CHECK_THROWS_AS(GaussianMatrixd(m, v2), ContractError);
}
