#pragma once

// ELBO terms and the stochastic training loop. Every term is reported in the
// maximization sense (log-likelihood-like); the optimizer minimizes -total.

#include <cstdint>
#include <span>
#include <vector>

#include "bridgevq/noise_model.hpp"
#include "bridgevq/optimizer.hpp"
#include "bridgevq/ou_bridge.hpp"
#include "bridgevq/quantizer.hpp"

namespace bridgevq {

/// Observation model p(x | z_q^0): isotropic Gaussian around the looked-up
/// codebook vectors.
struct DecoderModel {
  double sigma_x = 0.1;

  void validate() const;
};

struct ElboTerms {
  double rec = 0.0;
  double diff = 0.0;
  double reg = 0.0;
  double total = 0.0;
  std::vector<int> t_drawn;  // one step per batch element
};

/// Weight w_t of the epsilon-form diffusion term -w_t ||eps - eps_theta||^2.
/// For t >= 2 this is beta_t / (2 alpha_t (1 - alpha_bar_{t-1})); t = 1 is
/// the final-step likelihood with weight 1 / (2 alpha_1).
double diffusion_term_weight(const DiffusionSchedule& s, int t);

/// Additive constant dropped by diffusion_term, so that
/// E[diffusion_term] + constant is the exact per-step ELBO term. Zero for t >= 2;
/// for t = 1 it is the Gaussian normalizer of p(z_0 | z_1).
double diffusion_term_constant(const DiffusionSchedule& s, int t);

/// Single-draw diffusion term at step t >= 1 from the noise eps used to build
/// z_t = marginal_from_zero(t, z0, eps). For t >= 2 this is the eps-form
/// -w_t ||eps - eps_theta(z_t, t)||^2; for t = 1 it is the final-step term
/// -||z0 - mu_theta(z_1, 1)||^2 / (2 sigma_1^2) with sigma_1^2 the one-step
/// forward variance. If `grad` is non-empty, `grad_scale` times the parameter
/// gradient is accumulated into it.
double diffusion_term(const DiffusionSchedule& s, const NoisePredictor& m, const Latent& z0, int t,
                      const Latent& eps, std::span<double> grad = {}, double grad_scale = 1.0);

/// -KL(q(z_T | z_0) || N(z_star, stationary variance)); held out of the
/// training gradient.
double terminal_prior_term(const DiffusionSchedule& s, const Latent& z0);

/// log N(x; E * onehot(zq0), sigma_x^2 I).
double reconstruction_term(const DecoderModel& dec, const Latent& x, const DiscreteState& zq0,
                           const Codebook& cb);

/// Straight-through reconstruction for end-to-end codebook learning: the
/// value is the hard lookup above, gradients flow through the relaxed
/// assignment of `zq0` (which must carry `relaxed`) into the codebook.
double reconstruction_term_st(const DecoderModel& dec, const Latent& x, const DiscreteState& zq0,
                              const Codebook& cb, double temperature, double logit_scale,
                              Eigen::MatrixXd* grad_codebook);

/// T = 0 ELBO with Dirac q (nearest assignment) and softmax p over unsquared
/// distances: reconstruction_term - vqvae_reduction_loss.
double elbo_t0_reduction(const Codebook& cb, const DecoderModel& dec, const Latent& x);

struct TrainConfig {
  int batch_size = 128;
  long long steps = 20000;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  bool end_to_end = false;
  double logit_scale = 1.0;      // quantizer logits -scale * ||z - e||^2
  double reg_gamma_sign = 1.0;   // +1 follows gamma_t as written, -1 flips it
  double reg_weight = 1.0;

  void validate() const;
};

/// Everything the training loop updates or reads.
struct ModelState {
  DiffusionSchedule schedule;
  NoisePredictor net;
  Codebook codebook;
  DecoderModel decoder;
  TemperatureSchedule temperatures;
};

/// Training steps: per batch element draw t uniform on {0..T}, form
/// z_t from the forward marginal and add rec + diffusion + reg; then take one
/// optimizer step on the negated batch mean.
class Trainer {
 public:
  Trainer(ModelState state, TrainConfig config);

  ElboTerms step(std::span<const Latent> batch, Rng& rng);

  const ModelState& state() const { return state_; }
  ModelState& mutable_state() { return state_; }
  const TrainConfig& config() const { return config_; }
  Optimizer& optimizer() { return optimizer_; }
  const Optimizer& optimizer() const { return optimizer_; }

  /// Size of the optimized vector: network parameters plus the codebook when
  /// it is trainable.
  std::size_t trainable_size() const;

 private:
  ModelState state_;
  TrainConfig config_;
  Optimizer optimizer_;
};

}  // namespace bridgevq
