#include "bridgevq/quantizer.hpp"

#include <algorithm>
#include <cmath>

#include "bridgevq/error.hpp"

namespace bridgevq {

namespace {

constexpr double kUniformClamp = 1e-10;

void require_dims(const Codebook& cb, const Latent& z_e) {
  if (cb.size() < 1) throw InvalidParameter("codebook is empty");
  if (z_e.rows() != cb.dim()) throw InvalidParameter("latent dimension does not match codebook");
}

Eigen::Index column_argmax(const Eigen::MatrixXd& m, Eigen::Index col) {
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < m.rows(); ++k)
    if (m(k, col) > m(best, col)) best = k;
  return best;
}

}  // namespace

void categorical_logits_backward(const Codebook& cb, const Latent& z, double scale,
                                 const Eigen::MatrixXd& grad_logits, QuantizerGrads grads) {
  const auto& e = cb.vectors();
  for (Eigen::Index n = 0; n < z.cols(); ++n) {
    for (Eigen::Index k = 0; k < e.cols(); ++k) {
      const double g = grad_logits(k, n);
      if (g == 0.0) continue;
      const Eigen::VectorXd diff = z.col(n) - e.col(k);
      if (grads.z) grads.z->col(n) -= 2.0 * scale * g * diff;
      if (grads.codebook) grads.codebook->col(k) += 2.0 * scale * g * diff;
    }
  }
}

Codebook::Codebook(Eigen::MatrixXd vectors, bool trainable)
    : vectors_(std::move(vectors)), trainable_(trainable) {
  if (vectors_.cols() < 1 || vectors_.rows() < 1)
    throw InvalidParameter("codebook needs K >= 1 and d >= 1");
  if (!vectors_.allFinite()) throw InvalidParameter("codebook vectors must be finite");
}

Latent Codebook::lookup(const std::vector<int>& indices) const {
  Latent out(dim(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t n = 0; n < indices.size(); ++n) {
    if (indices[n] < 0 || indices[n] >= size()) throw InvalidParameter("codebook index out of range");
    out.col(static_cast<Eigen::Index>(n)) = vectors_.col(indices[n]);
  }
  return out;
}

TemperatureSchedule TemperatureSchedule::geometric(double tau, double tau_first, double tau_last,
                                                   int steps) {
  if (!(tau > 0.0) || !(tau_first > 0.0) || !(tau_last > 0.0))
    throw InvalidParameter("temperatures must be > 0");
  if (steps < 0) throw InvalidParameter("temperature schedule needs T >= 0");
  TemperatureSchedule s;
  s.tau = tau;
  s.tau_t.resize(steps + 1);
  for (int t = 0; t <= steps; ++t) {
    const double frac = steps == 0 ? 0.0 : static_cast<double>(t) / steps;
    s.tau_t[t] = tau_first * std::pow(tau_last / tau_first, frac);
  }
  return s;
}

double TemperatureSchedule::gamma(int t) const {
  if (t < 0 || t >= static_cast<int>(tau_t.size()))
    throw InvalidParameter("temperature schedule: step out of range");
  return 1.0 / tau - 1.0 / tau_t[t];
}

DiscreteState nearest_assign(const Codebook& cb, const Latent& z_e) {
  require_dims(cb, z_e);
  DiscreteState out;
  out.indices.resize(z_e.cols());
  for (Eigen::Index n = 0; n < z_e.cols(); ++n) {
    int best = 0;
    double best_dist = (z_e.col(n) - cb.vector(0)).squaredNorm();
    for (Eigen::Index k = 1; k < cb.size(); ++k) {
      const double dist = (z_e.col(n) - cb.vector(k)).squaredNorm();
      if (dist < best_dist) {
        best_dist = dist;
        best = static_cast<int>(k);
      }
    }
    out.indices[n] = best;
  }
  return out;
}

Eigen::MatrixXd categorical_logits(const Codebook& cb, const Latent& z_e, double scale) {
  require_dims(cb, z_e);
  Eigen::MatrixXd logits(cb.size(), z_e.cols());
  for (Eigen::Index n = 0; n < z_e.cols(); ++n)
    for (Eigen::Index k = 0; k < cb.size(); ++k)
      logits(k, n) = -scale * (z_e.col(n) - cb.vector(k)).squaredNorm();
  return logits;
}

Eigen::MatrixXd column_log_softmax(const Eigen::MatrixXd& logits, double temperature) {
  if (!(temperature > 0.0)) throw InvalidParameter("temperature must be > 0");
  Eigen::MatrixXd out = logits / temperature;
  for (Eigen::Index n = 0; n < out.cols(); ++n) {
    const double top = out.col(n).maxCoeff();
    const double lse = top + std::log((out.col(n).array() - top).exp().sum());
    out.col(n).array() -= lse;
  }
  return out;
}

Eigen::MatrixXd column_softmax(const Eigen::MatrixXd& logits, double temperature) {
  return column_log_softmax(logits, temperature).array().exp().matrix();
}

Eigen::MatrixXd gumbel_noise(Eigen::Index k, Eigen::Index n, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Eigen::MatrixXd g(k, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < k; ++i) {
      const double u = std::clamp(uniform(rng), kUniformClamp, 1.0 - kUniformClamp);
      g(i, j) = -std::log(-std::log(u));
    }
  return g;
}

DiscreteState gumbel_softmax_sample(const Eigen::MatrixXd& logits, double temperature,
                                    const Eigen::MatrixXd& gumbel) {
  if (!(temperature > 0.0)) throw InvalidParameter("gumbel_softmax_sample: temperature must be > 0");
  if (gumbel.rows() != logits.rows() || gumbel.cols() != logits.cols())
    throw InvalidParameter("gumbel_softmax_sample: noise shape mismatch");
  const Eigen::MatrixXd perturbed = logits + gumbel;
  DiscreteState out;
  out.relaxed = column_softmax(perturbed, temperature);
  out.indices.resize(logits.cols());
  for (Eigen::Index n = 0; n < logits.cols(); ++n)
    out.indices[n] = static_cast<int>(column_argmax(perturbed, n));
  return out;
}

Eigen::MatrixXd gumbel_softmax_backward(const Eigen::MatrixXd& relaxed, double temperature,
                                        const Eigen::MatrixXd& grad_relaxed) {
  Eigen::MatrixXd grad(relaxed.rows(), relaxed.cols());
  for (Eigen::Index n = 0; n < relaxed.cols(); ++n) {
    const double inner = relaxed.col(n).dot(grad_relaxed.col(n));
    grad.col(n) = relaxed.col(n).cwiseProduct(grad_relaxed.col(n).array().matrix() -
                                              Eigen::VectorXd::Constant(relaxed.rows(), inner)) /
                  temperature;
  }
  return grad;
}

double reg_term(const Codebook& cb, const Latent& z_e_t, const TemperatureSchedule& sched, int t,
                const Eigen::MatrixXd& gumbel, const RegTermOptions& options,
                QuantizerGrads grads) {
  const double gamma = sched.gamma(t);
  const Eigen::MatrixXd logits = categorical_logits(cb, z_e_t, options.logit_scale);
  const DiscreteState draw = gumbel_softmax_sample(logits, sched.tau, gumbel);
  const Eigen::MatrixXd& relaxed = *draw.relaxed;

  Eigen::MatrixXd assign;
  if (options.relaxation == Relaxation::StraightThrough) {
    assign = Eigen::MatrixXd::Zero(cb.size(), z_e_t.cols());
    for (Eigen::Index n = 0; n < z_e_t.cols(); ++n) assign(draw.indices[n], n) = 1.0;
  } else {
    assign = relaxed;
  }
  const Latent residual = z_e_t - cb.vectors() * assign;
  const double value = gamma * residual.squaredNorm();

  if (gamma != 0.0 && (grads.z || grads.codebook)) {
    const Latent grad_zq = -2.0 * gamma * residual;
    if (grads.z) *grads.z += 2.0 * gamma * residual;
    if (grads.codebook) *grads.codebook += grad_zq * assign.transpose();
    const Eigen::MatrixXd grad_assign = cb.vectors().transpose() * grad_zq;
    const Eigen::MatrixXd grad_logits = gumbel_softmax_backward(relaxed, sched.tau, grad_assign);
    categorical_logits_backward(cb, z_e_t, options.logit_scale, grad_logits, grads);
  }
  return value;
}

double exact_reg_term(const Codebook& cb, const Latent& z_e_t, const TemperatureSchedule& sched,
                      int t, double logit_scale) {
  if (t < 0 || t > sched.steps()) throw InvalidParameter("exact_reg_term: step out of range");
  const Eigen::MatrixXd logits = categorical_logits(cb, z_e_t, logit_scale);
  const Eigen::MatrixXd log_q = column_log_softmax(logits, sched.tau);
  const Eigen::MatrixXd log_p = column_log_softmax(logits, sched.tau_t[t]);
  return (log_q.array().exp() * (log_p - log_q).array()).sum();
}

double vqvae_reduction_loss(const Codebook& cb, const Latent& z_e) {
  const DiscreteState hard = nearest_assign(cb, z_e);
  double total = 0.0;
  for (Eigen::Index n = 0; n < z_e.cols(); ++n) {
    Eigen::VectorXd neg_dist(cb.size());
    for (Eigen::Index k = 0; k < cb.size(); ++k) neg_dist(k) = -(z_e.col(n) - cb.vector(k)).norm();
    const double top = neg_dist.maxCoeff();
    const double lse = top + std::log((neg_dist.array() - top).exp().sum());
    total += (z_e.col(n) - cb.vector(hard.indices[n])).norm() + lse;
  }
  return total;
}

}  // namespace bridgevq
