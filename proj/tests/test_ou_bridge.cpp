#include <doctest.h>

#include <cmath>

#include "bridgevq/error.hpp"
#include "bridgevq/ou_bridge.hpp"
#include "support.hpp"

using namespace bridgevq;
using testing_support::mean;
using testing_support::variance;

namespace {

DiffusionSchedule toy_schedule() { return DiffusionSchedule::uniform(50, 0.1, 2.0, 0.1, 2, 5); }

DiffusionSchedule random_schedule(Rng& rng, int steps, Eigen::Index d, Eigen::Index n, bool zero_target) {
  std::uniform_real_distribution<double> u(0.02, 0.4);
  std::vector<double> deltas(steps);
  for (double& x : deltas) x = u(rng);
  Latent zs = zero_target ? Latent::Zero(d, n) : standard_normal(d, n, rng);
  return DiffusionSchedule::make(steps, deltas, 0.5 + 2.0 * u(rng), 0.1 + u(rng), zs);
}

}  // namespace

TEST_CASE("schedule constants from the high-precision oracle") {
  const auto one = DiffusionSchedule::uniform(1, 0.1, 2.0, 0.1, 1, 1);
  CHECK(one.beta(1) == doctest::Approx(0.32967995396436069926).epsilon(1e-15));
  const auto s = toy_schedule();
  CHECK(s.alpha_bar(50) == doctest::Approx(2.061153622438557828e-9).epsilon(1e-12));
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.one_minus_alpha_bar(0) == 0.0);
}

TEST_CASE("stationary variance is one in the theta=1, eta=sqrt2 setting") {
  const auto s = DiffusionSchedule::uniform(7, 0.05, 1.0, std::sqrt(2.0), 1, 1);
  CHECK(s.stationary_variance() == doctest::Approx(1.0).epsilon(1e-15));
  for (int t = 1; t <= 7; ++t) CHECK(s.beta(t) == doctest::Approx(1.0 - std::exp(-2.0 * 0.05)).epsilon(1e-14));
}

TEST_CASE("schedule invariants on random grids") {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const auto s = random_schedule(rng, 30, 1, 1, true);
    double acc = 0.0;
    for (int t = 1; t <= s.steps(); ++t) {
      CHECK(s.beta(t) > 0.0);
      CHECK(s.beta(t) < 1.0);
      CHECK(s.alpha(t) == 1.0 - s.beta(t));
      CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
      CHECK(s.alpha_bar(t - 1) * s.alpha(t) == s.alpha_bar(t));
      acc += s.delta(t);
      const double exact = std::exp(-2.0 * s.theta() * acc);
      CHECK(std::abs(s.alpha_bar(t) - exact) <= 1e-12 * exact);
      CHECK(s.sqrt_alpha(t) == doctest::Approx(std::sqrt(s.alpha(t))).epsilon(1e-14));
    }
  }
}

TEST_CASE("schedule rejects bad parameters") {
  CHECK_THROWS_AS(DiffusionSchedule::uniform(3, 0.1, 0.0, 1.0, 1, 1), InvalidParameter);
  CHECK_THROWS_AS(DiffusionSchedule::uniform(3, 0.1, 1.0, -1.0, 1, 1), InvalidParameter);
  CHECK_THROWS_AS(DiffusionSchedule::uniform(3, 0.0, 1.0, 1.0, 1, 1), InvalidParameter);
  CHECK_THROWS_AS(DiffusionSchedule::make(3, {0.1, 0.1}, 1.0, 1.0, Latent::Zero(1, 1)), InvalidParameter);
  const auto s = DiffusionSchedule::uniform(3, 0.1, 1.0, 1.0, 1, 1);
  CHECK_THROWS_AS(s.beta(0), InvalidParameter);
  CHECK_THROWS_AS(s.beta(4), InvalidParameter);
  CHECK_THROWS_AS(forward_kernel(s, 4, Latent::Zero(1, 1)), InvalidParameter);
}

TEST_CASE("forward kernel closed form") {
  const auto s = toy_schedule();
  const Latent ones = Latent::Ones(2, 5);
  const auto m = forward_kernel(s, 1, ones);
  for (Eigen::Index i = 0; i < m.mean.size(); ++i)
    CHECK(m.mean.data()[i] == doctest::Approx(0.81873075307798185867).epsilon(1e-14));
  CHECK(m.var == doctest::Approx(0.00082419988491090174814).epsilon(1e-14));

  const Latent zs = Latent::Constant(2, 5, 0.3);
  const auto shifted = DiffusionSchedule::make(2, {0.1, 0.1}, 2.0, 0.1, zs);
  CHECK(forward_kernel(shifted, 2, zs).mean.isApprox(zs, 1e-15));

  const auto tiny = DiffusionSchedule::make(1, {1e-12}, 2.0, 0.1, Latent::Zero(2, 5));
  const auto lim = forward_kernel(tiny, 1, ones);
  CHECK((lim.mean - ones).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(lim.var < 1e-12);
}

TEST_CASE("marginal_from_zero edge cases") {
  const auto s = toy_schedule();
  Rng rng(1);
  const Latent z0 = standard_normal(2, 5, rng);
  CHECK(marginal_from_zero(s, 0, z0, standard_normal(2, 5, rng)) == z0);
  const Latent zs = Latent::Constant(2, 5, -0.7);
  const auto shifted = DiffusionSchedule::make(3, {0.1, 0.2, 0.3}, 1.5, 0.4, zs);
  CHECK(marginal_from_zero(shifted, 3, zs, Latent::Zero(2, 5)).isApprox(zs, 1e-15));
}

TEST_CASE("marginal moments by Monte Carlo") {
  const auto s = DiffusionSchedule::make(5, {0.1, 0.2, 0.1, 0.3, 0.05}, 1.3, 0.7, Latent::Constant(1, 1, 0.4));
  const Latent z0 = Latent::Constant(1, 1, 2.0);
  Rng rng(11);
  for (int t : {1, 3, 5}) {
    std::vector<double> draws;
    for (int i = 0; i < 100000; ++i) draws.push_back(marginal_from_zero(s, t, z0, standard_normal(1, 1, rng))(0, 0));
    const auto m = marginal_moments(s, t, z0);
    const double se = std::sqrt(m.var / draws.size());
    CHECK(std::abs(mean(draws) - m.mean(0, 0)) < 3 * se);
    const double se_var = m.var * std::sqrt(2.0 / (draws.size() - 1));
    CHECK(std::abs(variance(draws) - m.var) < 3 * se_var);
  }
}

TEST_CASE("bridge posterior fixed points and pinning") {
  Rng rng(5);
  const auto s = random_schedule(rng, 10, 2, 3, false);
  const Latent& zs = s.z_star();
  for (int t = 1; t <= 10; ++t) CHECK(bridge_posterior(s, t, zs, zs).mean.isApprox(zs, 1e-12));

  const Latent z0 = standard_normal(2, 3, rng), z1 = standard_normal(2, 3, rng);
  const auto first = bridge_posterior(s, 1, z0, z1);
  CHECK(first.var == 0.0);
  CHECK((first.mean - z0).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(bridge_posterior(s, 0, z0, z1), InvalidParameter);
}

TEST_CASE("bridge log-density equals the three-kernel ratio") {
  Rng rng(21);
  for (int rep = 0; rep < 50; ++rep) {
    const auto s = random_schedule(rng, 12, 2, 3, rep % 2 == 0);
    const Latent z0 = standard_normal(2, 3, rng);
    for (int t = 2; t <= s.steps(); ++t) {
      const Latent zprev = standard_normal(2, 3, rng), zt = standard_normal(2, 3, rng);
      const double lhs = gaussian_log_density(zprev, bridge_posterior(s, t, z0, zt));
      const double rhs = gaussian_log_density(zprev, marginal_moments(s, t - 1, z0)) +
                         gaussian_log_density(zt, forward_kernel(s, t, zprev)) -
                         gaussian_log_density(zt, marginal_moments(s, t, z0));
      CHECK(std::abs(lhs - rhs) < 1e-8 * std::max(1.0, std::abs(lhs)));
    }
  }
}

TEST_CASE("two-stage draw through the bridge matches the marginal") {
  const auto s = DiffusionSchedule::make(4, {0.2, 0.1, 0.3, 0.2}, 1.0, 1.0, Latent::Zero(1, 1));
  const Latent z0 = Latent::Constant(1, 1, 1.5);
  const int t = 3;
  Rng rng(8);
  std::vector<double> draws;
  for (int i = 0; i < 100000; ++i) {
    const Latent zt = marginal_from_zero(s, t, z0, standard_normal(1, 1, rng));
    const auto b = bridge_posterior(s, t, z0, zt);
    draws.push_back(b.mean(0, 0) + std::sqrt(b.var) * standard_normal(1, 1, rng)(0, 0));
  }
  const auto m = marginal_moments(s, t - 1, z0);
  CHECK(std::abs(mean(draws) - m.mean(0, 0)) < 3 * std::sqrt(m.var / draws.size()));
  CHECK(std::abs(variance(draws) - m.var) < 3 * m.var * std::sqrt(2.0 / (draws.size() - 1)));
}

TEST_CASE("reverse mean with the true noise reproduces the bridge mean") {
  Rng rng(9);
  for (int rep = 0; rep < 50; ++rep) {
    const auto s = random_schedule(rng, 15, 2, 5, true);
    const Latent z0 = standard_normal(2, 5, rng);
    for (int t = 1; t <= s.steps(); ++t) {
      const Latent eps = standard_normal(2, 5, rng);
      const Latent zt = marginal_from_zero(s, t, z0, eps);
      const auto rev = reverse_mean(s, t, zt, eps);
      const auto bridge = bridge_posterior(s, t, z0, zt);
      CHECK((rev.mean - bridge.mean).cwiseAbs().maxCoeff() < 1e-10);
      CHECK(rev.var == doctest::Approx(bridge.var).epsilon(1e-14));
    }
  }
}

TEST_CASE("reverse mean special cases") {
  const auto s = toy_schedule();
  Rng rng(2);
  const Latent zt = standard_normal(2, 5, rng);
  CHECK(reverse_mean(s, 7, zt, Latent::Zero(2, 5)).mean.isApprox(zt / s.sqrt_alpha(7), 1e-15));

  const Latent stationary = std::sqrt(s.stationary_variance()) * standard_normal(2, 5, rng);
  const auto last = reverse_mean(s, 50, stationary, Latent::Zero(2, 5));
  CHECK(last.mean.allFinite());
  CHECK(last.mean.norm() <= stationary.norm() / s.sqrt_alpha(50) * (1 + 1e-12));

  const auto shifted = DiffusionSchedule::make(2, {0.1, 0.1}, 1.0, 1.0, Latent::Ones(2, 5));
  CHECK_THROWS_AS(reverse_mean(shifted, 1, zt, zt), UnsupportedParameterization);
}

TEST_CASE("gaussian helpers") {
  const Latent x = Latent::Zero(2, 2);
  CHECK(gaussian_log_density(x, {x, 1.0}) == doctest::Approx(-2.0 * std::log(2.0 * M_PI)));
  CHECK(gaussian_kl({x, 0.5}, {x, 0.5}) == 0.0);
  CHECK(gaussian_kl({x, 0.5}, {Latent::Ones(2, 2), 2.0}) > 0.0);
  CHECK_THROWS_AS(gaussian_log_density(x, {x, 0.0}), InvalidParameter);
}
