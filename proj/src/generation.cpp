#include "bridgevq/generation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bridgevq/error.hpp"

namespace bridgevq {

void InpaintMask::validate(Eigen::Index positions) const {
  std::vector<int> sorted = known;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw InvalidParameter("mask: duplicate positions");
  for (int p : known)
    if (p < 0 || p >= positions) throw InvalidParameter("mask: position " + std::to_string(p) + " out of range");
  if (known_values.cols() != static_cast<Eigen::Index>(known.size()))
    throw InvalidParameter("mask: known values do not match known positions");
}

InpaintMask InpaintMask::from_latent(std::vector<int> known, const Latent& full) {
  InpaintMask mask;
  mask.known = std::move(known);
  mask.known_values.resize(full.rows(), static_cast<Eigen::Index>(mask.known.size()));
  for (std::size_t i = 0; i < mask.known.size(); ++i) {
    if (mask.known[i] < 0 || mask.known[i] >= full.cols()) throw InvalidParameter("mask: position out of range");
    mask.known_values.col(static_cast<Eigen::Index>(i)) = full.col(mask.known[i]);
  }
  return mask;
}

std::vector<int> parse_mask_positions(const std::string& text, int positions) {
  std::vector<int> out;
  if (text == "none" || text.empty()) return out;
  if (text == "all") {
    for (int i = 0; i < positions; ++i) out.push_back(i);
    return out;
  }
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    std::size_t used = 0;
    int value = -1;
    try {
      value = std::stoi(cell, &used);
    } catch (const std::logic_error&) {
      throw InvalidParameter("mask: malformed entry '" + cell + "'");
    }
    if (used != cell.size()) throw InvalidParameter("mask: malformed entry '" + cell + "'");
    if (value < 0 || value >= positions) throw InvalidParameter("mask: position " + cell + " out of range");
    if (std::find(out.begin(), out.end(), value) != out.end())
      throw InvalidParameter("mask: duplicate position " + cell);
    out.push_back(value);
  }
  return out;
}

namespace {

// Overwrites the known columns of z with a draw from q(z_t | z_0 = known).
void redraw_known(const DiffusionSchedule& s, int t, const InpaintMask& mask, Latent& z, Rng& rng) {
  if (mask.known.empty()) return;
  Latent anchor = Latent::Zero(z.rows(), z.cols());
  Latent eps = Latent::Zero(z.rows(), z.cols());
  const Latent draws = standard_normal(z.rows(), static_cast<Eigen::Index>(mask.known.size()), rng);
  for (std::size_t i = 0; i < mask.known.size(); ++i) {
    anchor.col(mask.known[i]) = mask.known_values.col(static_cast<Eigen::Index>(i));
    eps.col(mask.known[i]) = draws.col(static_cast<Eigen::Index>(i));
  }
  const Latent noised = marginal_from_zero(s, t, anchor, eps);
  for (int p : mask.known) z.col(p) = noised.col(p);
}

ChainSnapshot snapshot(int t, const Latent& z, const Codebook& cb) {
  return {t, z, nearest_assign(cb, z).indices};
}

}  // namespace

ChainRecord inpaint(const DiffusionSchedule& s, const NoisePredictor& m, const Codebook& cb,
                    const DecoderModel& dec, const InpaintMask& mask, Rng& rng,
                    const SamplerOptions& options) {
  if (!s.zero_target()) throw UnsupportedParameterization("sampling requires z_star = 0");
  if (options.record_stride < 1) throw InvalidParameter("sampler: record_stride must be >= 1");
  const Eigen::Index d = s.z_star().rows(), n = s.z_star().cols();
  if (cb.dim() != d) throw InvalidParameter("sampler: codebook dimension mismatch");
  mask.validate(n);
  if (mask.known_values.rows() != d && !mask.known.empty())
    throw InvalidParameter("mask: known values have the wrong dimension");

  const int steps = s.steps();
  Latent z = std::sqrt(s.stationary_variance()) * standard_normal(d, n, rng);
  redraw_known(s, steps, mask, z, rng);

  ChainRecord record;
  record.steps.push_back(snapshot(steps, z, cb));
  for (int t = steps; t >= 1; --t) {
    const GaussianMoments rev = reverse_mean(s, t, z, m.predict(z, t));
    Latent next = rev.mean;
    if (options.stochastic_reverse && t > 1) next += std::sqrt(rev.var) * standard_normal(d, n, rng);
    redraw_known(s, t - 1, mask, next, rng);
    z = std::move(next);
    if ((t - 1) % options.record_stride == 0) record.steps.push_back(snapshot(t - 1, z, cb));
  }

  record.final_z = z;
  if (options.quantize == QuantizeMode::Nearest) {
    record.final_zq = nearest_assign(cb, z);
  } else {
    const Eigen::MatrixXd logits = categorical_logits(cb, z, options.logit_scale);
    record.final_zq = gumbel_softmax_sample(logits, 1.0, gumbel_noise(cb.size(), n, rng));
  }
  record.final_x = cb.lookup(record.final_zq.indices) + dec.sigma_x * standard_normal(d, n, rng);
  return record;
}

ChainRecord sample(const DiffusionSchedule& s, const NoisePredictor& m, const Codebook& cb,
                   const DecoderModel& dec, Rng& rng, const SamplerOptions& options) {
  return inpaint(s, m, cb, dec, InpaintMask{{}, Latent(s.z_star().rows(), 0)}, rng, options);
}

void write_chains_csv(const std::filesystem::path& path, const std::vector<ChainRecord>& chains) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write chains: " + path.string());
  if (chains.empty() || chains.front().steps.empty()) throw InvalidParameter("no chains to write");
  const Eigen::Index d = chains.front().steps.front().z.rows();
  out << "chain,t,position";
  for (Eigen::Index c = 0; c < d; ++c) out << ",z" << c;
  out << ",nearest\n";
  char buf[64];
  for (std::size_t i = 0; i < chains.size(); ++i)
    for (const ChainSnapshot& snap : chains[i].steps)
      for (Eigen::Index p = 0; p < snap.z.cols(); ++p) {
        out << i << ',' << snap.t << ',' << p;
        for (Eigen::Index c = 0; c < d; ++c) {
          std::snprintf(buf, sizeof buf, "%.17g", snap.z(c, p));
          out << ',' << buf;
        }
        out << ',' << snap.nearest[p] << '\n';
      }
  if (!out) throw FormatError("failed writing chains: " + path.string());
}

}  // namespace bridgevq
