#pragma once

// Checkpoint file layout:
//
//   line 1   "bridgevq-checkpoint <format_version>"
//   line 2   single-line JSON header (config echo, shapes, counters, rng state,
//            mixture head variance)
//   rest     little-endian IEEE-754 doubles in this order:
//            theta, eta, deltas[T], z_star[d*N], tau, tau_t[T+1], sigma_x,
//            codebook[d*K], params[P], input_scale[max_step+1],
//            output_skip[max_step+1],
//            adam_m[S], adam_v[S]
//
// Matrices are column-major. S is P, plus d*K when the codebook is trained.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bridgevq/config.hpp"
#include "bridgevq/training.hpp"

namespace bridgevq {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int format_version = kCheckpointVersion;
  RunConfig config;
  // schedule
  double theta = 0.0;
  double eta = 0.0;
  std::vector<double> deltas;
  Latent z_star;
  TemperatureSchedule temperatures;
  double sigma_x = 0.0;
  // models
  Eigen::MatrixXd codebook;
  bool codebook_trainable = false;
  NoiseArchitecture architecture;
  std::vector<double> params;
  std::vector<double> input_scale;
  std::vector<double> output_skip;
  double mixture_data_var = 0.0;  // the head's codes are the codebook above
  // optimizer
  long long step = 0;
  long long optimizer_steps = 0;
  std::vector<double> adam_m, adam_v;
  std::string rng_state;

  static Checkpoint capture(const RunConfig& config, const Trainer& trainer, long long step, const Rng& rng);
  ModelState model_state() const;
  /// Restores optimizer moments and counters into a trainer built from model_state().
  void restore_optimizer(Trainer& trainer) const;
  void restore_rng(Rng& rng) const;
};

/// Writes atomically (temporary file, then rename).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws FormatError on a missing file, bad magic, version mismatch,
/// inconsistent shapes or a truncated/oversized payload.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bridgevq
