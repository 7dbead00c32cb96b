#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bridgevq/noise_model.hpp"
#include "bridgevq/ou_bridge.hpp"
#include "bridgevq/quantizer.hpp"
#include "bridgevq/training.hpp"

namespace bridgevq {

enum class QuantizeMode {
  Nearest,  // argmax of p(z_q | z_e): nearest codebook vector
  Sample,   // categorical draw from Softmax{-scale ||z_e - e_k||^2}
};

struct SamplerOptions {
  int record_stride = 10;
  bool stochastic_reverse = true;  // add sigma_t noise for t > 1
  QuantizeMode quantize = QuantizeMode::Nearest;
  double logit_scale = 1.0;
};

struct ChainSnapshot {
  int t = 0;
  Latent z;
  std::vector<int> nearest;  // nearest-codebook indices of z
};

struct ChainRecord {
  std::vector<ChainSnapshot> steps;  // strictly decreasing t, last one t = 0
  DiscreteState final_zq;
  Latent final_z;
  Latent final_x;
};

/// Observed positions and their z_e^0 values (d x |known|).
struct InpaintMask {
  std::vector<int> known;
  Latent known_values;

  void validate(Eigen::Index positions) const;
  /// Takes the known columns from a full d x N latent.
  static InpaintMask from_latent(std::vector<int> known, const Latent& full);
};

/// Mask grammar: "all", "none", or comma-separated position indices.
std::vector<int> parse_mask_positions(const std::string& text, int positions);

/// Ancestral sampling from the stationary law down to t = 0, then
/// quantization and decoding. Requires z_star = 0.
ChainRecord sample(const DiffusionSchedule& s, const NoisePredictor& m, const Codebook& cb,
                   const DecoderModel& dec, Rng& rng, const SamplerOptions& options = {});

/// Conditional sampling: unknown positions follow the learned reverse chain
/// on the full latent; known positions are redrawn from q(z_{t-1} | z_0) at
/// each step and set exactly at t = 0. An empty mask reproduces sample().
ChainRecord inpaint(const DiffusionSchedule& s, const NoisePredictor& m, const Codebook& cb,
                    const DecoderModel& dec, const InpaintMask& mask, Rng& rng,
                    const SamplerOptions& options = {});

/// One row per (chain, snapshot, position): chain,t,position,z0,z1,...,nearest.
void write_chains_csv(const std::filesystem::path& path, const std::vector<ChainRecord>& chains);

}  // namespace bridgevq
