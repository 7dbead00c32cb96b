#pragma once

#include <optional>
#include <vector>

#include "bridgevq/types.hpp"

namespace bridgevq {

/// K embedding vectors stored as the columns of a d x K matrix.
class Codebook {
 public:
  Codebook() = default;
  explicit Codebook(Eigen::MatrixXd vectors, bool trainable = false);

  Eigen::Index size() const { return vectors_.cols(); }
  Eigen::Index dim() const { return vectors_.rows(); }
  bool trainable() const { return trainable_; }
  void set_trainable(bool on) { trainable_ = on; }

  const Eigen::MatrixXd& vectors() const { return vectors_; }
  /// Mutable access for the optimizer; values must stay finite.
  Eigen::MatrixXd& mutable_vectors() { return vectors_; }
  auto vector(Eigen::Index k) const { return vectors_.col(k); }

  /// Gathers e_{indices[n]} into a d x N latent.
  Latent lookup(const std::vector<int>& indices) const;

 private:
  Eigen::MatrixXd vectors_;
  bool trainable_ = false;
};

/// Per-step temperatures tau_0..tau_T of p(z_q^t | z_e^t) together with the
/// temperature tau of q(z_q^t | z_e^t). gamma_t = 1/tau - 1/tau_t.
struct TemperatureSchedule {
  double tau = 1.0;
  std::vector<double> tau_t;

  /// Geometric interpolation from tau_first at t = 0 to tau_last at t = T.
  static TemperatureSchedule geometric(double tau, double tau_first, double tau_last, int steps);

  double gamma(int t) const;
  int steps() const { return static_cast<int>(tau_t.size()) - 1; }
};

struct DiscreteState {
  std::vector<int> indices;
  std::optional<Eigen::MatrixXd> relaxed;  // K x N, columns on the simplex
};

/// Hard assignment to the nearest codebook vector; ties go to the lowest index.
DiscreteState nearest_assign(const Codebook& cb, const Latent& z_e);

/// logits(k, n) = -scale * ||z_e[:, n] - e_k||^2. The unscaled form
/// (scale = 1) is the categorical law p(z_q | z_e) = Softmax{-||z_e - e_k||^2}.
Eigen::MatrixXd categorical_logits(const Codebook& cb, const Latent& z_e, double scale = 1.0);

/// Column-wise softmax of logits / temperature.
Eigen::MatrixXd column_softmax(const Eigen::MatrixXd& logits, double temperature = 1.0);

/// Column-wise log-softmax of logits / temperature.
Eigen::MatrixXd column_log_softmax(const Eigen::MatrixXd& logits, double temperature = 1.0);

/// Standard Gumbel draws -log(-log u), u clamped to (1e-10, 1 - 1e-10).
Eigen::MatrixXd gumbel_noise(Eigen::Index k, Eigen::Index n, Rng& rng);

/// Relaxed sample softmax((logits + G)/temperature); hard indices are the
/// column argmax (lowest index on ties).
DiscreteState gumbel_softmax_sample(const Eigen::MatrixXd& logits, double temperature,
                                    const Eigen::MatrixXd& gumbel);

/// Backward pass of a Gumbel-Softmax draw: maps dL/d(relaxed) onto dL/d(logits).
Eigen::MatrixXd gumbel_softmax_backward(const Eigen::MatrixXd& relaxed, double temperature,
                                        const Eigen::MatrixXd& grad_relaxed);

/// How the one-hot assignment enters a downstream expression.
enum class Relaxation {
  StraightThrough,  // hard one-hot forward, relaxed gradient backward
  Soft,             // relaxed vector forward and backward
};

/// Gradient sinks; any may be null.
struct QuantizerGrads {
  Latent* z = nullptr;                 // d x N
  Eigen::MatrixXd* codebook = nullptr;  // d x K
};

/// Pulls dL/dlogits back onto z_e and the codebook for
/// logits = -scale ||z_n - e_k||^2 (accumulating).
void categorical_logits_backward(const Codebook& cb, const Latent& z_e, double scale,
                                 const Eigen::MatrixXd& grad_logits, QuantizerGrads grads);

struct RegTermOptions {
  double logit_scale = 1.0;
  Relaxation relaxation = Relaxation::StraightThrough;
};

/// gamma_t * ||z_e_t - zq_hat||^2 with zq_hat a Gumbel-Softmax draw at the
/// q-temperature tau. Accumulates (not overwrites) gradients of the returned
/// value into `grads`.
double reg_term(const Codebook& cb, const Latent& z_e_t, const TemperatureSchedule& sched, int t,
                const Eigen::MatrixXd& gumbel, const RegTermOptions& options = {},
                QuantizerGrads grads = {});

/// Exact expectation of log p_t(z_q|z_e)/q(z_q|z_e) under q, with tempered
/// categoricals p_t = Softmax(logits / tau_t) and q = Softmax(logits / tau),
/// summed over positions. Equals -KL(q || p_t).
double exact_reg_term(const Codebook& cb, const Latent& z_e_t, const TemperatureSchedule& sched,
                      int t, double logit_scale = 1.0);

/// sum_n ||z_n - zq_hat_n|| + log sum_k exp(-||z_n - e_k||) with zq_hat the
/// nearest codebook vector (unsquared norms throughout).
double vqvae_reduction_loss(const Codebook& cb, const Latent& z_e);

}  // namespace bridgevq
