#pragma once

// Run configuration: every tunable of a run in one JSON document. Unknown
// keys anywhere are rejected so that a typo cannot silently fall back to a
// default. Missing keys keep their defaults.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bridgevq/generation.hpp"
#include "bridgevq/noise_model.hpp"
#include "bridgevq/optimizer.hpp"
#include "bridgevq/ou_bridge.hpp"
#include "bridgevq/quantizer.hpp"
#include "bridgevq/toy_domain.hpp"
#include "bridgevq/training.hpp"

namespace bridgevq {

struct DiffusionConfig {
  int steps = 50;
  std::vector<double> delta{0.1};  // one value (uniform grid) or T values
  double theta = 2.0;
  double eta = 0.1;
  double z_star = 0.0;  // constant fill of the d x N target
};

struct QuantizerConfig {
  double tau = 1.0;
  double tau_first = 10.0;
  double tau_last = 0.1;
  double logit_scale = 1.0;
  double reg_gamma_sign = 1.0;
  double reg_weight = 1.0;
};

struct DataConfig {
  ToyConfig toy;
  int train_size = 20000;
  std::string dataset;  // optional CSV path; generated from the seed when empty
};

struct TrainingSection {
  OptimizerConfig optimizer;
  int batch_size = 128;
  long long steps = 20000;
  bool end_to_end = false;
  double codebook_init_std = 0.5;  // random init scale when end_to_end
  long long checkpoint_every = 5000;
  long long log_every = 100;
};

struct SamplingSection {
  bool stochastic_reverse = true;
  QuantizeMode quantize = QuantizeMode::Nearest;
  int count = 1000;
  int stride = 10;
  std::string inpaint_known = "0,4";             // pinned positions
  std::string inpaint_indices = "0,1,2,3,4";     // reference walk the pins come from
};

struct EvaluationSection {
  std::string observed = "0,1";  // observed positions for conditional NLL; the rest are masked
  int mc_draws = 64;
  int kl_samples = 10000;
  int nll_samples = 200;
  double kl_pseudo_count = 1.0;
  double ar_pseudo_count = 0.1;
};

struct RunConfig {
  std::uint64_t seed = 0;
  DiffusionConfig diffusion;
  QuantizerConfig quantizer;
  DataConfig data;
  NoiseArchitecture network;
  // network.precondition: fixed per-step input scale and linear output skip,
  // both derived from the training data's second moment.
  bool precondition = true;
  TrainingSection training;
  SamplingSection sampling;
  EvaluationSection evaluation;

  /// Cross-field checks; throws InvalidParameter.
  void validate() const;

  DiffusionSchedule make_schedule() const;
  TemperatureSchedule make_temperatures() const;
  TrainConfig make_train_config() const;
  SamplerOptions make_sampler_options() const;
  DecoderModel make_decoder() const { return DecoderModel{data.toy.sigma_x}; }
};

/// Comma-separated symbol list of exactly `positions` entries in 0..K-1.
std::vector<int> parse_index_list(const std::string& text, int positions, int K);

/// Canonical JSON text (sorted keys, full precision). Hashing this string
/// identifies a configuration.
std::string to_json_text(const RunConfig& cfg);

/// Parses and validates; throws InvalidParameter on unknown keys, wrong types
/// or out-of-range values.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace bridgevq
