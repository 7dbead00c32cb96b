#include <doctest.h>

#include <cmath>

#include "bridgevq/error.hpp"
#include "bridgevq/generation.hpp"
#include "support.hpp"

using namespace bridgevq;

namespace {

NoisePredictor small_net(Rng& rng, int max_step) {
  NoiseArchitecture arch;
  arch.hidden = 8;
  arch.time_dim = 8;
  arch.max_step = max_step;
  return NoisePredictor(arch, rng);
}

Codebook ring() {
  Eigen::MatrixXd e(2, 4);
  e << 1, 0, -1, 0, 0, 1, 0, -1;
  return Codebook(e);
}

}  // namespace

TEST_CASE("T = 0 draws straight from the stationary law") {
  const auto s = DiffusionSchedule::uniform(0, 0.1, 2.0, 0.1, 2, 5);
  Rng rng(1);
  const auto net = small_net(rng, 1);
  std::vector<double> values;
  values.reserve(1000000);
  for (int i = 0; i < 100000; ++i) {
    const ChainRecord c = sample(s, net, ring(), DecoderModel{0.1}, rng);
    REQUIRE(c.steps.size() == 1);
    CHECK(c.steps.front().t == 0);
    CHECK(c.final_zq.indices.size() == 5);
    for (Eigen::Index k = 0; k < c.final_z.size(); ++k) values.push_back(c.final_z.data()[k]);
  }
  const double v = testing_support::variance(values);
  CHECK(std::abs(v / s.stationary_variance() - 1.0) < 0.01);
}

TEST_CASE("single-codebook model decodes at its only vector") {
  const auto s = DiffusionSchedule::uniform(10, 0.1, 2.0, 0.1, 2, 5);
  Rng rng(2);
  const auto net = small_net(rng, 10);
  Eigen::MatrixXd e(2, 1);
  e << 0.4, -0.3;
  const Codebook cb(e);
  const double sigma = 0.2;
  std::vector<double> xs, ys;
  for (int i = 0; i < 1000; ++i) {
    const auto c = sample(s, net, cb, DecoderModel{sigma}, rng);
    for (int p : c.final_zq.indices) CHECK(p == 0);
    for (Eigen::Index n = 0; n < 5; ++n) {
      xs.push_back(c.final_x(0, n));
      ys.push_back(c.final_x(1, n));
    }
  }
  const double se = sigma / std::sqrt(static_cast<double>(xs.size()));
  CHECK(std::abs(testing_support::mean(xs) - 0.4) < 3 * se);
  CHECK(std::abs(testing_support::mean(ys) + 0.3) < 3 * se);
}

TEST_CASE("chain records and determinism") {
  const auto s = DiffusionSchedule::uniform(23, 0.1, 2.0, 0.1, 2, 5);
  Rng init(3);
  const auto net = small_net(init, 23);
  SamplerOptions opt;
  opt.record_stride = 5;
  Rng a(9), b(9);
  const auto ca = sample(s, net, ring(), DecoderModel{0.1}, a, opt);
  const auto cb = sample(s, net, ring(), DecoderModel{0.1}, b, opt);
  std::vector<int> ts;
  for (const auto& snap : ca.steps) {
    ts.push_back(snap.t);
    CHECK(snap.z.rows() == 2);
    CHECK(snap.z.cols() == 5);
  }
  CHECK(ts == std::vector<int>{23, 20, 15, 10, 5, 0});
  CHECK(ca.final_z == cb.final_z);
  CHECK(ca.final_x == cb.final_x);
  CHECK(ca.final_zq.indices == cb.final_zq.indices);
  CHECK(ca.steps.back().z == ca.final_z);

  opt.stochastic_reverse = false;
  Rng c(9), d(9);
  CHECK(sample(s, net, ring(), DecoderModel{0.1}, c, opt).final_z ==
        sample(s, net, ring(), DecoderModel{0.1}, d, opt).final_z);

  opt.quantize = QuantizeMode::Sample;
  Rng e(10);
  const auto sampled = sample(s, net, ring(), DecoderModel{0.1}, e, opt);
  for (int k : sampled.final_zq.indices) CHECK((k >= 0 && k < 4));
}

TEST_CASE("inpainting edge cases") {
  const auto s = DiffusionSchedule::uniform(12, 0.1, 2.0, 0.1, 2, 5);
  Rng init(4);
  const auto net = small_net(init, 12);
  Latent full(2, 5);
  full << 1, 2, 3, 4, 5, -1, -2, -3, -4, -5;
  full *= 0.1;

  Rng rng(5);
  const auto all = inpaint(s, net, ring(), DecoderModel{0.1}, InpaintMask::from_latent({0, 1, 2, 3, 4}, full), rng);
  CHECK(all.final_z == full);

  Rng a(6), b(6);
  const auto empty = inpaint(s, net, ring(), DecoderModel{0.1}, InpaintMask{{}, Latent(2, 0)}, a);
  const auto plain = sample(s, net, ring(), DecoderModel{0.1}, b);
  CHECK(empty.final_z == plain.final_z);
  CHECK(empty.final_x == plain.final_x);

  Rng c(7);
  const auto ends = inpaint(s, net, ring(), DecoderModel{0.1}, InpaintMask::from_latent({0, 4}, full), c);
  CHECK(ends.final_z.col(0) == full.col(0));
  CHECK(ends.final_z.col(4) == full.col(4));

  CHECK_THROWS_AS(InpaintMask::from_latent({5}, full), InvalidParameter);
  Rng d(8);
  CHECK_THROWS_AS(inpaint(s, net, ring(), DecoderModel{0.1}, InpaintMask{{1, 1}, full.leftCols(2)}, d),
                  InvalidParameter);
}

TEST_CASE("known block follows the forward marginal at every step") {
  const auto s = DiffusionSchedule::uniform(3, 0.2, 1.0, 0.8, 1, 2);
  Rng init(11);
  NoiseArchitecture arch;
  arch.latent_dim = 1;
  arch.hidden = 4;
  arch.time_dim = 4;
  arch.max_step = 3;
  const NoisePredictor net(arch, init);
  Eigen::MatrixXd e(1, 2);
  e << -1, 1;
  Latent full(1, 2);
  full << 0.7, 0.0;
  const InpaintMask mask = InpaintMask::from_latent({0}, full);
  SamplerOptions opt;
  opt.record_stride = 1;
  Rng rng(12);
  std::vector<std::vector<double>> by_t(4);
  const int runs = 10000;
  for (int i = 0; i < runs; ++i) {
    const auto c = inpaint(s, net, Codebook(e), DecoderModel{0.1}, mask, rng, opt);
    for (const auto& snap : c.steps) by_t[snap.t].push_back(snap.z(0, 0));
  }
  for (int t = 1; t <= 3; ++t) {
    const auto m = marginal_moments(s, t, full);
    const double mean = testing_support::mean(by_t[t]);
    const double var = testing_support::variance(by_t[t]);
    CHECK(std::abs(mean - m.mean(0, 0)) < 3 * std::sqrt(m.var / runs));
    CHECK(std::abs(var - m.var) < 3 * m.var * std::sqrt(2.0 / (runs - 1)));
  }
  for (double v : by_t[0]) CHECK(v == 0.7);
}

TEST_CASE("sampler preconditions") {
  Rng rng(13);
  const auto net = small_net(rng, 5);
  Latent star = Latent::Constant(2, 5, 0.1);
  const auto shifted = DiffusionSchedule::make(5, std::vector<double>(5, 0.1), 2.0, 0.1, star);
  CHECK_THROWS_AS(sample(shifted, net, ring(), DecoderModel{0.1}, rng), UnsupportedParameterization);
  const auto s = DiffusionSchedule::uniform(5, 0.1, 2.0, 0.1, 2, 5);
  SamplerOptions bad;
  bad.record_stride = 0;
  CHECK_THROWS_AS(sample(s, net, ring(), DecoderModel{0.1}, rng, bad), InvalidParameter);
}

TEST_CASE("mask grammar") {
  CHECK(parse_mask_positions("all", 3) == std::vector<int>{0, 1, 2});
  CHECK(parse_mask_positions("none", 3).empty());
  CHECK(parse_mask_positions("", 3).empty());
  CHECK(parse_mask_positions("4,0", 5) == std::vector<int>{4, 0});
  CHECK_THROWS_AS(parse_mask_positions("5", 5), InvalidParameter);
  CHECK_THROWS_AS(parse_mask_positions("-1", 5), InvalidParameter);
  CHECK_THROWS_AS(parse_mask_positions("1,1", 5), InvalidParameter);
  CHECK_THROWS_AS(parse_mask_positions("1,x", 5), InvalidParameter);
  CHECK_THROWS_AS(parse_mask_positions("2a", 5), InvalidParameter);
  CHECK_THROWS_AS(parse_mask_positions("1,,2", 5), InvalidParameter);
}
