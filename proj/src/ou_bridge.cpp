#include "bridgevq/ou_bridge.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "bridgevq/error.hpp"

namespace bridgevq {

namespace {

// Below this the bridge horizon is treated as empty.
constexpr double kHorizonFloor = 1e-12;

void require_same_shape(const Latent& a, const Latent& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidParameter(std::string(what) + ": shape mismatch");
}

}  // namespace

DiffusionSchedule DiffusionSchedule::make(int steps, std::vector<double> delta, double theta,
                                          double eta, Latent z_star) {
  if (steps < 0) throw InvalidParameter("schedule: step count must be >= 0");
  if (static_cast<int>(delta.size()) != steps)
    throw InvalidParameter("schedule: need exactly T step sizes");
  if (!(theta > 0.0) || !std::isfinite(theta)) throw InvalidParameter("schedule: theta must be > 0");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidParameter("schedule: eta must be > 0");
  for (double d : delta)
    if (!(d > 0.0) || !std::isfinite(d)) throw InvalidParameter("schedule: step sizes must be > 0");
  if (!z_star.allFinite()) throw InvalidParameter("schedule: z_star must be finite");

  DiffusionSchedule s;
  s.theta_ = theta;
  s.eta_ = eta;
  s.z_star_ = std::move(z_star);
  s.delta_ = std::move(delta);
  s.beta_.resize(steps);
  s.alpha_bar_.assign(steps + 1, 1.0);
  s.one_minus_alpha_bar_.assign(steps + 1, 0.0);
  double elapsed = 0.0;
  for (int t = 1; t <= steps; ++t) {
    const double d = s.delta_[t - 1];
    s.beta_[t - 1] = -std::expm1(-2.0 * theta * d);
    s.alpha_bar_[t] = s.alpha_bar_[t - 1] * (1.0 - s.beta_[t - 1]);
    elapsed += d;
    s.one_minus_alpha_bar_[t] = -std::expm1(-2.0 * theta * elapsed);
  }
  return s;
}

DiffusionSchedule DiffusionSchedule::uniform(int steps, double delta, double theta, double eta,
                                             Eigen::Index d, Eigen::Index n) {
  return make(steps, std::vector<double>(steps > 0 ? steps : 0, delta), theta, eta,
              Latent::Zero(d, n));
}

void DiffusionSchedule::require_step(int t) const {
  if (t < 1 || t > steps())
    throw InvalidParameter("step index " + std::to_string(t) + " outside 1.." +
                           std::to_string(steps()));
}

double DiffusionSchedule::delta(int t) const {
  require_step(t);
  return delta_[t - 1];
}

double DiffusionSchedule::beta(int t) const {
  require_step(t);
  return beta_[t - 1];
}

double DiffusionSchedule::alpha(int t) const { return 1.0 - beta(t); }

double DiffusionSchedule::sqrt_alpha(int t) const { return std::exp(-theta_ * delta(t)); }

double DiffusionSchedule::alpha_bar(int t) const {
  if (t < 0 || t > steps()) throw InvalidParameter("alpha_bar: step out of range");
  return alpha_bar_[t];
}

double DiffusionSchedule::one_minus_alpha_bar(int t) const {
  if (t < 0 || t > steps()) throw InvalidParameter("one_minus_alpha_bar: step out of range");
  return one_minus_alpha_bar_[t];
}

GaussianMoments forward_kernel(const DiffusionSchedule& s, int t, const Latent& z_prev) {
  require_same_shape(z_prev, s.z_star(), "forward_kernel");
  const double decay = s.sqrt_alpha(t);
  return {s.z_star() + (z_prev - s.z_star()) * decay, s.stationary_variance() * s.beta(t)};
}

GaussianMoments marginal_moments(const DiffusionSchedule& s, int t, const Latent& z0) {
  require_same_shape(z0, s.z_star(), "marginal_moments");
  const double keep = std::sqrt(s.alpha_bar(t));
  return {s.z_star() + (z0 - s.z_star()) * keep,
          s.stationary_variance() * s.one_minus_alpha_bar(t)};
}

Latent marginal_from_zero(const DiffusionSchedule& s, int t, const Latent& z0, const Latent& eps) {
  require_same_shape(eps, z0, "marginal_from_zero");
  if (t == 0) return z0;
  GaussianMoments m = marginal_moments(s, t, z0);
  return m.mean + std::sqrt(m.var) * eps;
}

double bridge_variance(const DiffusionSchedule& s, int t) {
  const double horizon = s.one_minus_alpha_bar(t);
  if (t < 1) throw InvalidParameter("bridge variance needs t >= 1");
  if (horizon < kHorizonFloor) return 0.0;
  return s.stationary_variance() * s.one_minus_alpha_bar(t - 1) / horizon * s.beta(t);
}

double final_step_variance(const DiffusionSchedule& s) {
  return s.stationary_variance() * s.beta(1);
}

GaussianMoments bridge_posterior(const DiffusionSchedule& s, int t, const Latent& z0,
                                 const Latent& zt) {
  if (t == 0) throw InvalidParameter("bridge_posterior: t = 0 has no predecessor");
  require_same_shape(z0, s.z_star(), "bridge_posterior");
  require_same_shape(zt, s.z_star(), "bridge_posterior");
  const double horizon = s.one_minus_alpha_bar(t);
  if (horizon < kHorizonFloor) return {z0, 0.0};

  const Latent& zs = s.z_star();
  const double beta = s.beta(t);
  const double sqrt_alpha = s.sqrt_alpha(t);
  const double prev_horizon = s.one_minus_alpha_bar(t - 1);
  const double w0 = beta / horizon;
  const double wt = prev_horizon / horizon * sqrt_alpha;
  Latent mean = w0 * (zs + std::sqrt(s.alpha_bar(t - 1)) * (z0 - zs)) +
                wt * (zt - (1.0 - sqrt_alpha) * zs);
  return {std::move(mean), bridge_variance(s, t)};
}

GaussianMoments reverse_mean(const DiffusionSchedule& s, int t, const Latent& zt,
                             const Latent& eps_pred) {
  if (!s.zero_target())
    throw UnsupportedParameterization("reverse_mean: epsilon parameterization needs z_star = 0");
  require_same_shape(zt, s.z_star(), "reverse_mean");
  require_same_shape(eps_pred, zt, "reverse_mean");
  const double horizon = s.one_minus_alpha_bar(t);
  const double noise_scale = std::sqrt(s.stationary_variance() / horizon) * s.beta(t);
  return {(zt - noise_scale * eps_pred) / s.sqrt_alpha(t), bridge_variance(s, t)};
}

double gaussian_log_density(const Latent& x, const GaussianMoments& m) {
  if (!(m.var > 0.0)) throw InvalidParameter("gaussian_log_density: variance must be > 0");
  require_same_shape(x, m.mean, "gaussian_log_density");
  const double n = static_cast<double>(x.size());
  return -0.5 * (x - m.mean).squaredNorm() / m.var -
         0.5 * n * std::log(2.0 * std::numbers::pi * m.var);
}

double gaussian_kl(const GaussianMoments& a, const GaussianMoments& b) {
  if (!(a.var > 0.0) || !(b.var > 0.0)) throw InvalidParameter("gaussian_kl: variances must be > 0");
  require_same_shape(a.mean, b.mean, "gaussian_kl");
  const double n = static_cast<double>(a.mean.size());
  return 0.5 * (n * (a.var / b.var - 1.0 + std::log(b.var / a.var)) +
                (a.mean - b.mean).squaredNorm() / b.var);
}

}  // namespace bridgevq
