#pragma once

// Minimal self-contained SVG scatter plots for 2-D latents.

#include <filesystem>
#include <string>
#include <vector>

#include "bridgevq/types.hpp"

namespace bridgevq {

struct ScatterLayer {
  Eigen::MatrixXd points;  // 2 x P
  std::string color = "#1f77b4";
  double radius = 2.0;
  double opacity = 0.6;
  bool polyline = false;  // join points in column order instead of dots
};

/// Writes layers over a square view [-extent, extent]^2 with axes.
void write_scatter_svg(const std::filesystem::path& path, const std::string& title,
                       const std::vector<ScatterLayer>& layers, double extent = 1.5);

/// Blue (t = T) to red (t = 0).
std::string step_color(int t, int steps);

}  // namespace bridgevq
