#pragma once

#include <functional>
#include <span>
#include <vector>

#include "bridgevq/generation.hpp"
#include "bridgevq/quantizer.hpp"
#include "bridgevq/types.hpp"

namespace bridgevq {

/// Symbol counts per position: counts[n][k].
struct PositionalHistograms {
  int K = 0;
  std::vector<std::vector<long long>> counts;

  static PositionalHistograms from_sequences(std::span<const std::vector<int>> sequences, int K);
  int positions() const { return static_cast<int>(counts.size()); }
  long long total(int n) const;
};

struct PositionalKl {
  std::vector<double> per_position;
  double mean = 0.0;
};

/// KL(truth_n || model_n) per position after adding `pseudo_count` to every
/// symbol (Laplace smoothing by default), plus the mean over positions.
PositionalKl positional_kl(const PositionalHistograms& truth, const PositionalHistograms& model,
                           double pseudo_count = 1.0);

/// Draws masked latents given the observed ones: receives the full z_e^0
/// (masked columns must be ignored) and the observed positions; returns a
/// full d x N latent at t = 0.
using ConditionalSampler =
    std::function<Latent(const Latent& z_e0, const std::vector<int>& observed, Rng& rng)>;

struct NllSample {
  Latent z_e0;
  std::vector<int> indices;  // discrete target per position
};

/// Monte Carlo masked-conditional NLL in nats per masked position:
///   p_hat = (1/M) sum_m prod_{n masked} p(z_q[n] = target[n] | z^(m)[:, n])
/// with p(z_q | z_e) = Softmax{-scale ||z_e - e_k||^2}, averaged as -log p_hat
/// over samples. Computed in log space.
double conditional_nll(std::span<const NllSample> samples, const std::vector<int>& masked,
                       const ConditionalSampler& draw, const Codebook& cb, double logit_scale,
                       int draws, Rng& rng);

/// The diffusion model's conditional sampler (inpaint with the observed
/// positions pinned).
ConditionalSampler inpaint_sampler(const DiffusionSchedule& s, const NoisePredictor& m,
                                   const Codebook& cb, const DecoderModel& dec,
                                   SamplerOptions options = {});

/// Order-1 position-dependent Markov chain over symbols, fitted by smoothed
/// maximum likelihood.
class ArBaseline {
 public:
  static ArBaseline fit(std::span<const std::vector<int>> sequences, int K, double pseudo_count = 0.1);

  int symbols() const { return K_; }
  int positions() const { return static_cast<int>(transitions_.size()) + 1; }
  const Eigen::VectorXd& initial() const { return initial_; }
  /// Row-stochastic K x K matrix from position s to s + 1.
  const Eigen::MatrixXd& transition(int s) const { return transitions_.at(s); }

  std::vector<int> sample(Rng& rng) const;
  double log_prob(std::span<const int> sequence) const;
  /// log p(observed positions) with the masked ones summed out.
  double log_marginal(std::span<const int> sequence, const std::vector<int>& masked) const;
  /// Mean of -log p(masked | observed) per masked position, in nats.
  double conditional_nll(std::span<const std::vector<int>> sequences,
                         const std::vector<int>& masked) const;

 private:
  int K_ = 0;
  Eigen::VectorXd initial_;
  std::vector<Eigen::MatrixXd> transitions_;
};

/// Minimum-cost perfect matching on a square cost matrix; returns
/// assignment[row] = column.
std::vector<int> hungarian_assignment(const Eigen::MatrixXd& cost);

/// Mean Euclidean distance between learned codebook vectors and true
/// centroids under the best index permutation.
double codebook_recovery(const Codebook& learned, const Eigen::MatrixXd& truth);

}  // namespace bridgevq
