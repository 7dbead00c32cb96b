#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace bridgevq {

/// Continuous latent, d rows (embedding dimension) by N columns (positions).
using Latent = Eigen::MatrixXd;

/// All randomness flows through explicitly passed engines of this type.
using Rng = std::mt19937_64;

/// Fills a d x N matrix with independent standard normal draws, column-major.
inline Latent standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Latent out(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
  return out;
}

inline bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace bridgevq
