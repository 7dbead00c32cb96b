#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bridgevq/error.hpp"
#include "bridgevq/evaluation.hpp"
#include "bridgevq/toy_domain.hpp"

using namespace bridgevq;

namespace {

std::vector<std::vector<int>> toy_codes(int count, Rng& rng) {
  std::vector<std::vector<int>> out;
  for (const auto& s : generate(ToyConfig{}, count, rng)) out.push_back(s.q);
  return out;
}

}  // namespace

TEST_CASE("positional KL") {
  Rng rng(1);
  const auto seqs = toy_codes(500, rng);
  const auto h = PositionalHistograms::from_sequences(seqs, 8);
  CHECK(h.positions() == 5);
  CHECK(h.total(3) == 500);
  const auto same = positional_kl(h, h);
  CHECK(same.mean == 0.0);
  for (double v : same.per_position) CHECK(v == 0.0);

  // Uniform truth against a model that always emits symbol 0.
  std::vector<std::vector<int>> uniform, degenerate;
  for (int i = 0; i < 10000; ++i) {
    uniform.push_back({i % 8});
    degenerate.push_back({0});
  }
  const auto kl = positional_kl(PositionalHistograms::from_sequences(uniform, 8),
                                PositionalHistograms::from_sequences(degenerate, 8));
  CHECK(kl.mean == doctest::Approx(5.9803934645948466344).epsilon(1e-12));

  const auto other = positional_kl(h, PositionalHistograms::from_sequences(toy_codes(500, rng), 8));
  CHECK(other.mean > 0.0);
  CHECK(other.mean < 0.1);

  std::vector<std::vector<int>> short_seqs{{0, 1}};
  CHECK_THROWS_AS(positional_kl(h, PositionalHistograms::from_sequences(short_seqs, 8)), InvalidParameter);
}

TEST_CASE("conditional NLL against the exhaustive oracle") {
  Eigen::MatrixXd e(1, 2);
  e << -1, 1;
  const Codebook cb(e);
  ConditionalSampler draw = [](const Latent& z, const std::vector<int>& observed, Rng& rng) {
    CHECK(observed == std::vector<int>{0});
    Latent out = z;
    std::normal_distribution<double> normal(0.5 * z(0, 0), 0.6);
    out(0, 1) = normal(rng);
    return out;
  };
  Latent a(1, 2), b(1, 2);
  a << 0.4, 99.0;
  b << -0.8, -99.0;
  const std::vector<NllSample> rows{{a, {0, 1}}, {b, {1, 0}}};
  Rng rng(2);
  const double nll = conditional_nll(rows, {1}, draw, cb, 1.0, 100000, rng);
  CHECK(std::abs(nll - 0.42456420516698740313) < 1e-2);

  // Sample order does not matter beyond Monte Carlo noise.
  const std::vector<NllSample> swapped{rows[1], rows[0]};
  Rng rng2(3);
  CHECK(std::abs(conditional_nll(swapped, {1}, draw, cb, 1.0, 100000, rng2) - nll) < 1e-2);
}

TEST_CASE("conditional NLL degenerate cases") {
  Rng rng(4);
  Eigen::MatrixXd one(2, 1);
  one << 0.3, 0.3;
  ConditionalSampler noise = [](const Latent& z, const std::vector<int>&, Rng& r) {
    return Latent(standard_normal(z.rows(), z.cols(), r));
  };
  const std::vector<NllSample> rows{{Latent::Zero(2, 3), {0, 0, 0}}};
  CHECK(conditional_nll(rows, {1, 2}, noise, Codebook(one), 1.0, 16, rng) == doctest::Approx(0.0).scale(1.0));

  // Equidistant codebook vectors: every draw gives probability 1/K.
  Eigen::MatrixXd ring(2, 4);
  ring << 1, 0, -1, 0, 0, 1, 0, -1;
  ConditionalSampler centre = [](const Latent& z, const std::vector<int>&, Rng&) {
    return Latent(Latent::Zero(z.rows(), z.cols()));
  };
  const std::vector<NllSample> targets{{Latent::Zero(2, 3), {3, 1, 2}}};
  CHECK(conditional_nll(targets, {0, 2}, centre, Codebook(ring), 1.0, 8, rng) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK_THROWS_AS(conditional_nll(targets, {}, centre, Codebook(ring), 1.0, 8, rng), InvalidParameter);
  CHECK_THROWS_AS(conditional_nll(targets, {0}, centre, Codebook(ring), 1.0, 0, rng), InvalidParameter);
}

TEST_CASE("autoregressive baseline on toy walks") {
  Rng rng(5);
  const auto seqs = toy_codes(20000, rng);
  const auto ar = ArBaseline::fit(seqs, 8);
  CHECK(ar.positions() == 5);
  for (int s = 0; s < 4; ++s) {
    const auto& m = ar.transition(s);
    for (int k = 0; k < 8; ++k) {
      CHECK(m.row(k).sum() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(std::abs(m(k, (k + 1) % 8) - 0.5) < 0.05);
      CHECK(std::abs(m(k, (k + 7) % 8) - 0.5) < 0.05);
    }
  }
  int valid = 0;
  for (int i = 0; i < 2000; ++i) valid += is_valid_sequence(ar.sample(rng), 8);
  CHECK(valid >= 0.99 * 2000);

  // Three free binary moves given the first two symbols: log 2 per position.
  const std::vector<std::vector<int>> held(seqs.begin(), seqs.begin() + 2000);
  CHECK(std::abs(ar.conditional_nll(held, {2, 3, 4}) - std::log(2.0)) < 0.01);

  // Marginalizing everything leaves probability one; nothing masked gives the joint.
  const std::vector<int> q{0, 1, 2, 1, 0};
  CHECK(ar.log_marginal(q, {0, 1, 2, 3, 4}) == doctest::Approx(0.0).scale(1.0));
  CHECK(ar.log_marginal(q, {}) == doctest::Approx(ar.log_prob(q)).epsilon(1e-12));

  // Brute-force marginal over the two masked positions.
  double brute = 0.0;
  for (int a = 0; a < 8; ++a)
    for (int b = 0; b < 8; ++b) brute += std::exp(ar.log_prob(std::vector<int>{0, a, 2, b, 0}));
  CHECK(ar.log_marginal(q, {1, 3}) == doctest::Approx(std::log(brute)).epsilon(1e-12));
}

TEST_CASE("hungarian assignment matches brute force") {
  Rng rng(6);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int n : {1, 2, 3, 5, 6}) {
    for (int rep = 0; rep < 20; ++rep) {
      Eigen::MatrixXd cost(n, n);
      for (Eigen::Index i = 0; i < cost.size(); ++i) cost.data()[i] = u(rng);
      std::vector<int> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      double best = 1e300;
      do {
        double c = 0.0;
        for (int i = 0; i < n; ++i) c += cost(i, perm[i]);
        best = std::min(best, c);
      } while (std::next_permutation(perm.begin(), perm.end()));
      const auto a = hungarian_assignment(cost);
      double got = 0.0;
      for (int i = 0; i < n; ++i) got += cost(i, a[i]);
      CHECK(got == doctest::Approx(best).epsilon(1e-12));
      std::vector<int> sorted = a;
      std::sort(sorted.begin(), sorted.end());
      CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    }
  }
  CHECK_THROWS_AS(hungarian_assignment(Eigen::MatrixXd::Zero(2, 3)), InvalidParameter);
}

TEST_CASE("codebook recovery") {
  const Eigen::MatrixXd truth = toy_centroids(ToyConfig{});
  CHECK(codebook_recovery(Codebook(truth), truth) == 0.0);

  Eigen::MatrixXd rotated(2, 8);
  for (int k = 0; k < 8; ++k) rotated.col(k) = truth.col((k + 3) % 8);
  CHECK(codebook_recovery(Codebook(rotated), truth) == doctest::Approx(0.0).scale(1.0));

  const Eigen::Vector2d v(0.03, -0.04);
  CHECK(codebook_recovery(Codebook(truth.colwise() + v), truth) == doctest::Approx(0.05).epsilon(1e-12));

  Rng rng(7);
  const Eigen::MatrixXd a = standard_normal(2, 8, rng), b = standard_normal(2, 8, rng);
  CHECK(codebook_recovery(Codebook(a), b) == doctest::Approx(codebook_recovery(Codebook(b), a)).epsilon(1e-12));
  CHECK(codebook_recovery(Codebook(a), b) > 0.0);
  CHECK_THROWS_AS(codebook_recovery(Codebook(a.leftCols(7)), b), InvalidParameter);
}
