#pragma once

// Small convolutional noise predictor eps_theta(z_t, t) for latents laid out
// as a length-N sequence with d channels:
//
//   temb = A * sinusoid(t) + c
//   h1   = silu(conv(c_in[t] * z; d -> H) + temb[0:H])
//   h2   = silu(conv(h1; H -> H) [+ temb[H:2H]])
//   out  = conv(h2; H -> d)
//
// All convolutions use zero "same" padding. Gradients are hand-derived.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "bridgevq/ou_bridge.hpp"
#include "bridgevq/types.hpp"

namespace bridgevq {

struct NoiseArchitecture {
  int latent_dim = 2;
  int hidden = 32;
  int kernel = 3;
  int time_dim = 32;    // width of the sinusoidal encoding
  int time_layers = 1;  // hidden layers receiving the time features (1 or 2)
  bool film = false;    // time features scale and shift (instead of only shift)
  int mixture_codes = 0;  // > 0: codebook-mixture output head over this many codes
  int max_step = 50;    // largest accepted t

  std::size_t param_count() const;
  void validate() const;
  bool operator==(const NoiseArchitecture&) const = default;
};

/// Sinusoidal encoding of t: sin/cos pairs at frequencies 10000^(-i/(dim/2)).
Eigen::VectorXd sinusoidal_embedding(int t, int dim);

class NoisePredictor {
 public:
  /// Glorot-uniform weights, zero biases.
  NoisePredictor(NoiseArchitecture arch, Rng& rng);
  NoisePredictor(NoiseArchitecture arch, std::vector<double> params);

  const NoiseArchitecture& architecture() const { return arch_; }
  std::size_t param_count() const { return params_.size(); }
  std::span<const double> params() const { return params_; }
  std::span<double> mutable_params() { return params_; }

  Latent predict(const Latent& z_t, int t) const;

  /// Fixed (untrained) per-step input scale c_in[t], t = 0..max_step.
  /// Defaults to all ones.
  const std::vector<double>& input_scale() const { return input_scale_; }
  void set_input_scale(std::vector<double> scale);

  /// Fixed per-step linear skip: the output is skip[t] * z_t plus the network.
  /// Defaults to all zeros.
  const std::vector<double>& output_skip() const { return output_skip_; }
  void set_output_skip(std::vector<double> skip);

  /// Codebook-mixture head. The last layer emits, per position, a noise
  /// correction (d channels) and K logit corrections. The logits are added to
  /// the exact single-position posterior logits of z_t under a mixture of
  /// Gaussians N(e_k, data_var) pushed through the forward marginal; the
  /// output is the noise implied by the resulting posterior mean of z_0 plus
  /// the correction.
  struct Mixture {
    Eigen::MatrixXd codes;          // d x K
    std::vector<double> signal;     // sqrt(alpha_bar_t), t = 0..max_step
    std::vector<double> noise_sd;   // sqrt(v (1 - alpha_bar_t))
    double data_var = 0.0;
  };
  bool has_mixture() const { return mixture_.codes.size() != 0; }
  const Mixture& mixture() const { return mixture_; }
  void set_mixture(const DiffusionSchedule& s, Eigen::MatrixXd codes, double data_var);
  /// Swaps in new code vectors (the codebook moved) keeping the schedule.
  void set_mixture_codes(Eigen::MatrixXd codes);

  /// Intermediate activations kept for the backward pass.
  struct Tape {
    Latent input;
    int step = 0;
    Eigen::VectorXd embedding;
    std::vector<double> temb;                      // projected time features
    std::vector<double> raw1, raw2;                // conv outputs before time modulation
    std::vector<double> pre1, post1, pre2, post2;  // channel-major, H x N
    Eigen::MatrixXd posterior;                     // K x N mixture weights
  };

  Latent forward(const Latent& z_t, int t, Tape& tape) const;

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  /// Optionally writes d(loss)/d(input).
  void backward(const Tape& tape, const Latent& grad_out, std::span<double> grad,
                Latent* grad_input = nullptr) const;

 private:
  struct Layout {
    std::size_t time_w, time_b, conv1_w, conv1_b, conv2_w, conv2_b, conv3_w, conv3_b, end;
  };
  static Layout layout_for(const NoiseArchitecture& arch);
  void check_input(const Latent& z_t, int t) const;
  void modulate(const Tape& tape, int layer, const std::vector<double>& raw, std::vector<double>& pre,
                int n) const;
  void demodulate(const Tape& tape, int layer, const std::vector<double>& raw, const std::vector<double>& g_pre,
                  std::vector<double>& g_raw, std::vector<double>& g_temb, int n) const;

  NoiseArchitecture arch_;
  Layout layout_;
  std::vector<double> params_;
  std::vector<double> input_scale_;
  std::vector<double> output_skip_;
  Mixture mixture_;
};

/// c_in[t] = 1 / sqrt(m2 * alpha_bar_t + v (1 - alpha_bar_t)): the inverse RMS
/// of z_t around a zero target when the data has per-coordinate second moment
/// m2. Keeps the predictor's input at unit scale along the whole chain.
std::vector<double> marginal_input_scale(const DiffusionSchedule& s, double second_moment, int max_step);

/// skip[t] = s_t / (m2 alpha_bar_t + s_t^2) with s_t^2 = v (1 - alpha_bar_t):
/// the best linear predictor of the noise from z_t when the data is centred
/// with per-coordinate second moment m2. Zero at t = 0.
std::vector<double> marginal_output_skip(const DiffusionSchedule& s, double second_moment, int max_step);

/// A scalar loss that adds its gradient with respect to the predictor's
/// parameters into `grad` (pre-zeroed, length param_count()).
using LossClosure = std::function<double(const NoisePredictor&, std::span<double> grad)>;

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Evaluates `closure` and returns loss plus exact gradient. Throws
/// NonFiniteLoss naming "loss" or "grad[i]" on NaN/Inf.
LossAndGrad loss_and_grad(const NoisePredictor& m, const LossClosure& closure);

}  // namespace bridgevq
