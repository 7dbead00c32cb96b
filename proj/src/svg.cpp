#include "bridgevq/svg.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "bridgevq/error.hpp"

namespace bridgevq {

namespace {

constexpr double kSize = 480.0;
constexpr double kMargin = 30.0;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string step_color(int t, int steps) {
  const double f = steps > 0 ? std::clamp(static_cast<double>(t) / steps, 0.0, 1.0) : 0.0;
  const int r = static_cast<int>(220 * (1.0 - f) + 30 * f);
  const int b = static_cast<int>(40 * (1.0 - f) + 200 * f);
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x40%02x", r, b);
  return buf;
}

void write_scatter_svg(const std::filesystem::path& path, const std::string& title,
                       const std::vector<ScatterLayer>& layers, double extent) {
  if (!(extent > 0.0)) throw InvalidParameter("svg: extent must be > 0");
  const double span = kSize - 2 * kMargin;
  auto px = [&](double x) { return kMargin + (x + extent) / (2 * extent) * span; };
  auto py = [&](double y) { return kMargin + (extent - y) / (2 * extent) * span; };

  std::ofstream f(path);
  if (!f) throw FormatError("svg: cannot write " + path.string());
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
    << "\" viewBox=\"0 0 " << kSize << ' ' << kSize << "\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f << "<text x=\"" << kSize / 2 << "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"13\">"
    << title << "</text>\n";
  f << "<line x1=\"" << fmt(px(-extent)) << "\" y1=\"" << fmt(py(0)) << "\" x2=\"" << fmt(px(extent))
    << "\" y2=\"" << fmt(py(0)) << "\" stroke=\"#bbb\"/>\n";
  f << "<line x1=\"" << fmt(px(0)) << "\" y1=\"" << fmt(py(-extent)) << "\" x2=\"" << fmt(px(0))
    << "\" y2=\"" << fmt(py(extent)) << "\" stroke=\"#bbb\"/>\n";
  for (const ScatterLayer& layer : layers) {
    if (layer.points.rows() != 2) throw InvalidParameter("svg: points must be 2 x P");
    if (layer.polyline) {
      f << "<polyline fill=\"none\" stroke=\"" << layer.color << "\" stroke-opacity=\"" << layer.opacity
        << "\" points=\"";
      for (Eigen::Index i = 0; i < layer.points.cols(); ++i)
        f << fmt(px(layer.points(0, i))) << ',' << fmt(py(layer.points(1, i))) << ' ';
      f << "\"/>\n";
      continue;
    }
    f << "<g fill=\"" << layer.color << "\" fill-opacity=\"" << layer.opacity << "\">\n";
    for (Eigen::Index i = 0; i < layer.points.cols(); ++i)
      f << "<circle cx=\"" << fmt(px(layer.points(0, i))) << "\" cy=\"" << fmt(py(layer.points(1, i)))
        << "\" r=\"" << layer.radius << "\"/>\n";
    f << "</g>\n";
  }
  f << "</svg>\n";
  if (!f) throw FormatError("svg: write failed for " + path.string());
}

}  // namespace bridgevq
