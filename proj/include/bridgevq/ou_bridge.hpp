#pragma once

// Closed-form Ornstein-Uhlenbeck kernels for the noising chain
//
//     dZ = -theta (Z - z_star) dt + eta dW
//
// discretized on a grid of step sizes delta_1..delta_T. Every covariance in
// this family is a scalar multiple of the identity, so moments carry a scalar
// variance.

#include <vector>

#include "bridgevq/types.hpp"

namespace bridgevq {

class DiffusionSchedule {
 public:
  /// Validates and precomputes beta_t = 1 - exp(-2 theta delta_t),
  /// alpha_t = 1 - beta_t and the running products alpha_bar_t.
  static DiffusionSchedule make(int steps, std::vector<double> delta, double theta, double eta,
                                Latent z_star);

  /// Constant grid with a zero target of shape d x n.
  static DiffusionSchedule uniform(int steps, double delta, double theta, double eta,
                                   Eigen::Index d, Eigen::Index n);

  int steps() const { return static_cast<int>(delta_.size()); }
  double theta() const { return theta_; }
  double eta() const { return eta_; }
  const Latent& z_star() const { return z_star_; }
  const std::vector<double>& deltas() const { return delta_; }
  bool zero_target() const { return z_star_.isZero(0.0); }

  /// eta^2 / (2 theta), the variance of the stationary law.
  double stationary_variance() const { return eta_ * eta_ / (2.0 * theta_); }

  // Indexed 1..T; alpha_bar and one_minus_alpha_bar also accept t = 0.
  double delta(int t) const;
  double beta(int t) const;
  double alpha(int t) const;
  double sqrt_alpha(int t) const;
  double alpha_bar(int t) const;
  double one_minus_alpha_bar(int t) const;

 private:
  DiffusionSchedule() = default;
  void require_step(int t) const;

  double theta_ = 1.0;
  double eta_ = 1.0;
  Latent z_star_;
  std::vector<double> delta_;
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;            // index 0..T
  std::vector<double> one_minus_alpha_bar_;  // index 0..T, computed with expm1
};

struct GaussianMoments {
  Latent mean;
  double var = 0.0;  // isotropic
};

/// q(z_t | z_{t-1}): mean z* + (z_prev - z*) sqrt(alpha_t), var (eta^2/2theta) beta_t.
GaussianMoments forward_kernel(const DiffusionSchedule& s, int t, const Latent& z_prev);

/// Moments of q(z_t | z_0).
GaussianMoments marginal_moments(const DiffusionSchedule& s, int t, const Latent& z0);

/// Reparameterized draw from q(z_t | z_0) given caller-supplied standard normal noise.
Latent marginal_from_zero(const DiffusionSchedule& s, int t, const Latent& z0, const Latent& eps);

/// The bridge q(z_{t-1} | z_0, z_t). Pinned at z0 with zero variance when the
/// horizon 1 - alpha_bar_t underflows.
GaussianMoments bridge_posterior(const DiffusionSchedule& s, int t, const Latent& z0,
                                 const Latent& zt);

/// Reverse-step mean from a noise prediction (zero target only). The variance
/// equals the bridge variance, which is zero at t = 1.
GaussianMoments reverse_mean(const DiffusionSchedule& s, int t, const Latent& zt,
                             const Latent& eps_pred);

/// Bridge variance (eta^2/2theta)(1 - alpha_bar_{t-1})/(1 - alpha_bar_t) beta_t.
double bridge_variance(const DiffusionSchedule& s, int t);

/// Variance of the final denoising density p(z_0 | z_1). The bridge variance
/// vanishes at t = 1, so the last step uses the one-step forward variance.
double final_step_variance(const DiffusionSchedule& s);

/// Log-density of x under N(m.mean, m.var I). Requires m.var > 0.
double gaussian_log_density(const Latent& x, const GaussianMoments& m);

/// KL(N(a.mean, a.var I) || N(b.mean, b.var I)).
double gaussian_kl(const GaussianMoments& a, const GaussianMoments& b);

}  // namespace bridgevq
