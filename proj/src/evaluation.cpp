#include "bridgevq/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bridgevq/error.hpp"

namespace bridgevq {

namespace {

double log_sum_exp(std::span<const double> v) {
  const double top = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - top);
  return top + std::log(acc);
}

}  // namespace

PositionalHistograms PositionalHistograms::from_sequences(std::span<const std::vector<int>> sequences,
                                                          int K) {
  if (sequences.empty()) throw InvalidParameter("histograms: no sequences");
  PositionalHistograms h;
  h.K = K;
  const std::size_t n = sequences.front().size();
  h.counts.assign(n, std::vector<long long>(K, 0));
  for (const auto& seq : sequences) {
    if (seq.size() != n) throw InvalidParameter("histograms: ragged sequences");
    for (std::size_t i = 0; i < n; ++i) {
      if (seq[i] < 0 || seq[i] >= K) throw InvalidParameter("histograms: symbol out of range");
      ++h.counts[i][seq[i]];
    }
  }
  return h;
}

long long PositionalHistograms::total(int n) const {
  long long t = 0;
  for (long long c : counts.at(n)) t += c;
  return t;
}

PositionalKl positional_kl(const PositionalHistograms& truth, const PositionalHistograms& model,
                           double pseudo_count) {
  if (truth.K != model.K || truth.positions() != model.positions())
    throw InvalidParameter("positional_kl: histogram shapes differ");
  if (!(pseudo_count >= 0.0)) throw InvalidParameter("positional_kl: pseudo_count must be >= 0");
  PositionalKl out;
  for (int n = 0; n < truth.positions(); ++n) {
    const double tt = static_cast<double>(truth.total(n)) + pseudo_count * truth.K;
    const double mt = static_cast<double>(model.total(n)) + pseudo_count * model.K;
    if (truth.total(n) == 0 || model.total(n) == 0) throw InvalidParameter("positional_kl: zero totals");
    double kl = 0.0;
    for (int k = 0; k < truth.K; ++k) {
      const double p = (truth.counts[n][k] + pseudo_count) / tt;
      const double q = (model.counts[n][k] + pseudo_count) / mt;
      if (p > 0.0) kl += p * std::log(p / q);
    }
    out.per_position.push_back(kl);
  }
  double sum = 0.0;
  for (double v : out.per_position) sum += v;
  out.mean = sum / static_cast<double>(out.per_position.size());
  return out;
}

double conditional_nll(std::span<const NllSample> samples, const std::vector<int>& masked,
                       const ConditionalSampler& draw, const Codebook& cb, double logit_scale,
                       int draws, Rng& rng) {
  if (draws < 1) throw InvalidParameter("conditional_nll: need at least one draw");
  if (samples.empty()) throw InvalidParameter("conditional_nll: no samples");
  if (masked.empty()) throw InvalidParameter("conditional_nll: nothing is masked");
  const Eigen::Index n = samples.front().z_e0.cols();
  std::vector<int> observed;
  for (int p = 0; p < n; ++p)
    if (std::find(masked.begin(), masked.end(), p) == masked.end()) observed.push_back(p);

  double total = 0.0;
  std::vector<double> log_terms(draws);
  for (const NllSample& s : samples) {
    for (int m = 0; m < draws; ++m) {
      const Latent z = draw(s.z_e0, observed, rng);
      const Eigen::MatrixXd log_p = column_log_softmax(categorical_logits(cb, z, logit_scale));
      double acc = 0.0;
      for (int p : masked) acc += log_p(s.indices.at(p), p);
      log_terms[m] = acc;
    }
    const double log_estimate = log_sum_exp(log_terms) - std::log(static_cast<double>(draws));
    total += -log_estimate;
  }
  return total / (static_cast<double>(samples.size()) * static_cast<double>(masked.size()));
}

ConditionalSampler inpaint_sampler(const DiffusionSchedule& s, const NoisePredictor& m,
                                   const Codebook& cb, const DecoderModel& dec,
                                   SamplerOptions options) {
  return [&s, &m, &cb, dec, options](const Latent& z_e0, const std::vector<int>& observed, Rng& rng) {
    const InpaintMask mask = InpaintMask::from_latent(observed, z_e0);
    return inpaint(s, m, cb, dec, mask, rng, options).final_z;
  };
}

ArBaseline ArBaseline::fit(std::span<const std::vector<int>> sequences, int K, double pseudo_count) {
  if (sequences.empty()) throw InvalidParameter("ar baseline: empty training set");
  if (K < 1) throw InvalidParameter("ar baseline: K must be >= 1");
  if (!(pseudo_count > 0.0)) throw InvalidParameter("ar baseline: pseudo_count must be > 0");
  const std::size_t n = sequences.front().size();
  if (n < 1) throw InvalidParameter("ar baseline: empty sequences");
  ArBaseline b;
  b.K_ = K;
  b.initial_ = Eigen::VectorXd::Constant(K, pseudo_count);
  b.transitions_.assign(n - 1, Eigen::MatrixXd::Constant(K, K, pseudo_count));
  for (const auto& seq : sequences) {
    if (seq.size() != n) throw InvalidParameter("ar baseline: ragged sequences");
    for (int v : seq)
      if (v < 0 || v >= K) throw InvalidParameter("ar baseline: symbol out of range");
    b.initial_(seq[0]) += 1.0;
    for (std::size_t i = 0; i + 1 < n; ++i) b.transitions_[i](seq[i], seq[i + 1]) += 1.0;
  }
  b.initial_ /= b.initial_.sum();
  for (auto& t : b.transitions_)
    for (Eigen::Index r = 0; r < t.rows(); ++r) t.row(r) /= t.row(r).sum();
  return b;
}

std::vector<int> ArBaseline::sample(Rng& rng) const {
  auto draw = [&rng](const Eigen::VectorXd& probs) {
    std::discrete_distribution<int> dist(probs.data(), probs.data() + probs.size());
    return dist(rng);
  };
  std::vector<int> out(positions());
  out[0] = draw(initial_);
  for (int i = 1; i < positions(); ++i) {
    const Eigen::VectorXd row = transitions_[i - 1].row(out[i - 1]).transpose();
    out[i] = draw(row);
  }
  return out;
}

double ArBaseline::log_prob(std::span<const int> sequence) const {
  return log_marginal(sequence, {});
}

double ArBaseline::log_marginal(std::span<const int> sequence, const std::vector<int>& masked) const {
  if (static_cast<int>(sequence.size()) != positions())
    throw InvalidParameter("ar baseline: sequence length mismatch");
  auto is_masked = [&masked](int p) { return std::find(masked.begin(), masked.end(), p) != masked.end(); };
  // Scaled forward recursion restricted to symbols consistent with observations.
  Eigen::VectorXd alpha = initial_;
  if (!is_masked(0)) {
    const double keep = alpha(sequence[0]);
    alpha.setZero();
    alpha(sequence[0]) = keep;
  }
  double log_scale = 0.0;
  for (int i = 1; i < positions(); ++i) {
    const double norm = alpha.sum();
    if (norm <= 0.0) return -std::numeric_limits<double>::infinity();
    log_scale += std::log(norm);
    alpha /= norm;
    Eigen::VectorXd next = transitions_[i - 1].transpose() * alpha;
    if (!is_masked(i)) {
      const double keep = next(sequence[i]);
      next.setZero();
      next(sequence[i]) = keep;
    }
    alpha = std::move(next);
  }
  return log_scale + std::log(alpha.sum());
}

double ArBaseline::conditional_nll(std::span<const std::vector<int>> sequences,
                                   const std::vector<int>& masked) const {
  if (sequences.empty()) throw InvalidParameter("ar baseline: no sequences to score");
  if (masked.empty()) throw InvalidParameter("ar baseline: nothing is masked");
  double total = 0.0;
  for (const auto& seq : sequences) total += log_marginal(seq, masked) - log_prob(seq);
  return total / (static_cast<double>(sequences.size()) * static_cast<double>(masked.size()));
}

std::vector<int> hungarian_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw InvalidParameter("hungarian: cost matrix must be square");
  // Potentials formulation (1-indexed internally), O(n^3).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int row = 1; row <= n; ++row) {
    match[0] = row;
    int col0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[col0] = true;
      const int r = match[col0];
      double delta = inf;
      int col1 = 0;
      for (int c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double reduced = cost(r - 1, c - 1) - u[r] - v[c];
        if (reduced < minv[c]) {
          minv[c] = reduced;
          way[c] = col0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          col1 = c;
        }
      }
      for (int c = 0; c <= n; ++c) {
        if (used[c]) {
          u[match[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const int col1 = way[col0];
      match[col0] = match[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  std::vector<int> assignment(n, -1);
  for (int c = 1; c <= n; ++c) assignment[match[c] - 1] = c - 1;
  return assignment;
}

double codebook_recovery(const Codebook& learned, const Eigen::MatrixXd& truth) {
  if (learned.dim() != truth.rows() || learned.size() != truth.cols())
    throw InvalidParameter("codebook_recovery: shapes differ");
  const Eigen::Index k = truth.cols();
  Eigen::MatrixXd cost(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) cost(i, j) = (learned.vector(i) - truth.col(j)).norm();
  const std::vector<int> assignment = hungarian_assignment(cost);
  double total = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) total += cost(i, assignment[i]);
  return total / static_cast<double>(k);
}

}  // namespace bridgevq
