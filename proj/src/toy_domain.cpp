#include "bridgevq/toy_domain.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "bridgevq/error.hpp"

namespace bridgevq {

void ToyConfig::validate() const {
  if (K < 2) throw InvalidParameter("toy: K must be >= 2");
  if (N < 1) throw InvalidParameter("toy: N must be >= 1");
  if (!(radius > 0.0)) throw InvalidParameter("toy: radius must be > 0");
  if (!(sigma_x >= 0.0)) throw InvalidParameter("toy: sigma_x must be >= 0");
}

Eigen::MatrixXd toy_centroids(const ToyConfig& cfg) {
  cfg.validate();
  Eigen::MatrixXd c(2, cfg.K);
  for (int j = 0; j < cfg.K; ++j) {
    const double angle = 2.0 * std::numbers::pi * j / cfg.K;
    c(0, j) = cfg.radius * std::cos(angle);
    c(1, j) = cfg.radius * std::sin(angle);
  }
  return c;
}

ToySample toy_sample_from_walk(const ToyConfig& cfg, int first, std::span<const int> steps,
                               const Latent& noise) {
  if (first < 0 || first >= cfg.K) throw InvalidParameter("toy: first index out of range");
  if (static_cast<int>(steps.size()) != cfg.N - 1) throw InvalidParameter("toy: need N - 1 steps");
  if (noise.rows() != 2 || noise.cols() != cfg.N) throw InvalidParameter("toy: noise must be 2 x N");
  const Eigen::MatrixXd centroids = toy_centroids(cfg);
  ToySample s;
  s.q.resize(cfg.N);
  s.q[0] = first;
  for (int i = 1; i < cfg.N; ++i) {
    const int b = steps[i - 1];
    if (b != 1 && b != -1) throw InvalidParameter("toy: steps must be +1 or -1");
    s.q[i] = ((s.q[i - 1] + b) % cfg.K + cfg.K) % cfg.K;
  }
  s.x.resize(2, cfg.N);
  for (int i = 0; i < cfg.N; ++i) s.x.col(i) = centroids.col(s.q[i]) + cfg.sigma_x * noise.col(i);
  return s;
}

std::vector<ToySample> generate(const ToyConfig& cfg, int count, Rng& rng) {
  cfg.validate();
  if (count < 1) throw InvalidParameter("toy: count must be >= 1");
  std::uniform_int_distribution<int> first(0, cfg.K - 1);
  std::bernoulli_distribution coin(0.5);
  std::vector<ToySample> out;
  out.reserve(count);
  std::vector<int> steps(cfg.N - 1);
  for (int i = 0; i < count; ++i) {
    const int q1 = first(rng);
    for (int& b : steps) b = coin(rng) ? 1 : -1;
    const Latent noise = standard_normal(2, cfg.N, rng);
    out.push_back(toy_sample_from_walk(cfg, q1, steps, noise));
  }
  return out;
}

bool is_valid_sequence(std::span<const int> q, int K) {
  for (std::size_t i = 1; i < q.size(); ++i) {
    const int diff = ((q[i] - q[i - 1]) % K + K) % K;
    if (diff != 1 && diff != K - 1) return false;
  }
  return true;
}

std::vector<int> decode_to_indices(const Codebook& cb, const Latent& z_e) {
  return nearest_assign(cb, z_e).indices;
}

void write_dataset_csv(const std::filesystem::path& path, const std::vector<ToySample>& samples) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write dataset: " + path.string());
  if (samples.empty()) throw InvalidParameter("dataset is empty");
  const int n = static_cast<int>(samples.front().q.size());
  for (int i = 0; i < n; ++i) out << "q" << i << ',';
  for (int i = 0; i < n; ++i) out << "x" << i << "_0,x" << i << "_1" << (i + 1 < n ? "," : "\n");
  char buf[64];
  for (const ToySample& s : samples) {
    for (int q : s.q) out << q << ',';
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < 2; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", s.x(c, i));
        out << buf << (i + 1 < n || c == 0 ? "," : "\n");
      }
  }
  if (!out) throw FormatError("failed writing dataset: " + path.string());
}

std::vector<ToySample> read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read dataset: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("dataset has no header: " + path.string());
  int fields = 1;
  for (char ch : line) fields += ch == ',';
  if (fields % 3 != 0 || line.rfind("q0,", 0) != 0) throw FormatError("unexpected dataset header");
  const int n = fields / 3;
  std::vector<ToySample> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    ToySample s;
    s.q.resize(n);
    s.x.resize(2, n);
    try {
      for (int i = 0; i < n; ++i) {
        if (!std::getline(ss, cell, ',')) throw FormatError("short row");
        s.q[i] = std::stoi(cell);
      }
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < 2; ++c) {
          if (!std::getline(ss, cell, ',')) throw FormatError("short row");
          s.x(c, i) = std::stod(cell);
        }
    } catch (const std::logic_error&) {
      throw FormatError("malformed dataset row: " + line);
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw FormatError("dataset has no rows: " + path.string());
  return out;
}

}  // namespace bridgevq
