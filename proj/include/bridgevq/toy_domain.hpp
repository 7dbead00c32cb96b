#pragma once

// Toy data: K centroids on a circle and random walks of length N over their
// indices, each step moving one centroid clockwise or counter-clockwise.

#include <filesystem>
#include <span>
#include <vector>

#include "bridgevq/quantizer.hpp"
#include "bridgevq/types.hpp"

namespace bridgevq {

struct ToyConfig {
  int K = 8;
  int N = 5;
  double radius = 1.0;
  double sigma_x = 0.1;

  void validate() const;
};

/// 2 x K matrix; centroid j sits at angle 2 pi j / K.
Eigen::MatrixXd toy_centroids(const ToyConfig& cfg);

struct ToySample {
  std::vector<int> q;
  Latent x;  // 2 x N
};

/// Builds the walk q_1 = first, q_{s+1} = q_s + steps[s] mod K and places
/// x = centroids + sigma_x * noise. `steps` holds N - 1 values in {-1, +1}.
ToySample toy_sample_from_walk(const ToyConfig& cfg, int first, std::span<const int> steps,
                               const Latent& noise);

std::vector<ToySample> generate(const ToyConfig& cfg, int count, Rng& rng);

/// True iff adjacent indices differ by +-1 modulo K.
bool is_valid_sequence(std::span<const int> q, int K);

/// Nearest-centroid indices per position.
std::vector<int> decode_to_indices(const Codebook& cb, const Latent& z_e);

/// CSV: q_1..q_N then x coordinates as x<n>_<c>, full double precision.
void write_dataset_csv(const std::filesystem::path& path, const std::vector<ToySample>& samples);
std::vector<ToySample> read_dataset_csv(const std::filesystem::path& path);

}  // namespace bridgevq
