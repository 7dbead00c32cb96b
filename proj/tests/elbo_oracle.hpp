#pragma once

// ELBO of a T = 2, d = 1, N = 1 model assembled two ways:
//   * from the library's per-term functions plus 1-D quadrature, and
//   * by brute force: 2-D quadrature over the forward chain (z_1, z_2) of the
//     full log-ratio log p / q, with exhaustive sums over every z_q^t.
// Both use the same generative model: p(z_2) stationary, p(z_1 | z_2) with the
// bridge variance, p(z_0 | z_1) with the one-step forward variance, tempered
// categoricals p_t(z_q^t | z_t) and q(z_q^t | z_t), and p(x | z_q^0) Gaussian.

#include <cmath>

#include "bridgevq/noise_model.hpp"
#include "bridgevq/ou_bridge.hpp"
#include "bridgevq/quantizer.hpp"
#include "bridgevq/training.hpp"
#include "support.hpp"

namespace testing_support {

struct ElboInstance {
  bridgevq::DiffusionSchedule schedule;
  bridgevq::NoisePredictor net;
  bridgevq::Codebook codebook;
  bridgevq::DecoderModel decoder;
  bridgevq::TemperatureSchedule temperatures;
  bridgevq::Latent x;  // z_0 = x
};

inline ElboInstance make_elbo_instance(std::uint64_t seed) {
  using namespace bridgevq;
  Rng rng(seed);
  NoiseArchitecture arch;
  arch.latent_dim = 1;
  arch.hidden = 6;
  arch.time_dim = 8;
  arch.max_step = 2;
  NoisePredictor net(arch, rng);
  Eigen::MatrixXd e(1, 2);
  e << -1.0, 1.0;
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  Latent x(1, 1);
  x << u(rng);
  return {DiffusionSchedule::make(2, {0.3, 0.4}, 1.0, 1.0, Latent::Zero(1, 1)), std::move(net), Codebook(e),
          DecoderModel{0.5}, TemperatureSchedule::geometric(1.0, 3.0, 0.5, 2), x};
}

inline double expected_rec(const ElboInstance& in) {
  using namespace bridgevq;
  const Eigen::MatrixXd q = column_softmax(categorical_logits(in.codebook, in.x), in.temperatures.tau);
  double acc = 0.0;
  for (int k = 0; k < in.codebook.size(); ++k)
    acc += q(k, 0) * reconstruction_term(in.decoder, in.x, DiscreteState{{k}, {}}, in.codebook);
  return acc;
}

/// Term route: L_T + L_2 + L_0 + rec + sum_t reg_t.
inline double elbo_by_terms(const ElboInstance& in, int nodes = 80) {
  using namespace bridgevq;
  const auto gh = gauss_hermite(nodes);
  const auto& s = in.schedule;
  double total = terminal_prior_term(s, in.x) + expected_rec(in);
  for (int t = 1; t <= 2; ++t) {
    double diff = 0.0, reg = 0.0;
    for (int i = 0; i < nodes; ++i) {
      const Latent eps = Latent::Constant(1, 1, gh.nodes[i]);
      diff += gh.weights[i] * diffusion_term(s, in.net, in.x, t, eps);
      reg += gh.weights[i] * exact_reg_term(in.codebook, marginal_from_zero(s, t, in.x, eps), in.temperatures, t);
    }
    total += diff + diffusion_term_constant(s, t) + reg;
  }
  return total + exact_reg_term(in.codebook, in.x, in.temperatures, 0);
}

/// Brute force over the forward chain with explicit log-densities.
inline double elbo_brute_force(const ElboInstance& in, int nodes = 80) {
  using namespace bridgevq;
  const auto gh = gauss_hermite(nodes);
  const auto& s = in.schedule;
  const double v = s.stationary_variance();
  auto log_n = [](double x, double m, double var) {
    return -0.5 * (x - m) * (x - m) / var - 0.5 * std::log(2.0 * M_PI * var);
  };
  auto reg_exhaustive = [&](double z, int t) {
    const Latent zl = Latent::Constant(1, 1, z);
    const Eigen::MatrixXd logits = categorical_logits(in.codebook, zl);
    auto log_norm = [&](double temp) {
      const double top = logits.col(0).maxCoeff() / temp;
      double sum = 0.0;
      for (int k = 0; k < logits.rows(); ++k) sum += std::exp(logits(k, 0) / temp - top);
      return top + std::log(sum);
    };
    const double lzq = log_norm(in.temperatures.tau), lzp = log_norm(in.temperatures.tau_t[t]);
    double acc = 0.0;
    for (int k = 0; k < logits.rows(); ++k) {
      const double lq = logits(k, 0) / in.temperatures.tau - lzq;
      const double lp = logits(k, 0) / in.temperatures.tau_t[t] - lzp;
      acc += std::exp(lq) * (lp - lq);
    }
    return acc;
  };
  auto predicted_mean = [&](double zt, int t) {
    const Latent zl = Latent::Constant(1, 1, zt);
    const double eps = in.net.predict(zl, t)(0, 0);
    const double scale = std::sqrt(v / s.one_minus_alpha_bar(t)) * s.beta(t);
    return (zt - scale * eps) / s.sqrt_alpha(t);
  };

  const double z0 = in.x(0, 0);
  const double var1 = v * s.beta(1), var2 = v * s.beta(2);
  double chain = 0.0;
  for (int i = 0; i < nodes; ++i) {
    const double z1 = s.sqrt_alpha(1) * z0 + std::sqrt(var1) * gh.nodes[i];
    double inner = 0.0;
    for (int j = 0; j < nodes; ++j) {
      const double z2 = s.sqrt_alpha(2) * z1 + std::sqrt(var2) * gh.nodes[j];
      const double log_p = log_n(z2, 0.0, v) + log_n(z1, predicted_mean(z2, 2), bridge_variance(s, 2)) +
                           log_n(z0, predicted_mean(z1, 1), final_step_variance(s));
      const double log_q = log_n(z1, s.sqrt_alpha(1) * z0, var1) + log_n(z2, s.sqrt_alpha(2) * z1, var2);
      inner += gh.weights[j] * (log_p - log_q + reg_exhaustive(z2, 2));
    }
    chain += gh.weights[i] * (inner + reg_exhaustive(z1, 1));
  }

  double rec = 0.0;
  {
    const Eigen::MatrixXd logits = categorical_logits(in.codebook, in.x);
    double zq = 0.0;
    for (int k = 0; k < logits.rows(); ++k) zq += std::exp(logits(k, 0) / in.temperatures.tau);
    const double sx2 = in.decoder.sigma_x * in.decoder.sigma_x;
    for (int k = 0; k < logits.rows(); ++k)
      rec += std::exp(logits(k, 0) / in.temperatures.tau) / zq * log_n(z0, in.codebook.vector(k)(0), sx2);
  }
  return chain + rec + reg_exhaustive(z0, 0);
}

}  // namespace testing_support
