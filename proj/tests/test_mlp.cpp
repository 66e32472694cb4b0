// Copyright 2026 The PPNG Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ppng/mlp.hpp"
#include "test_support.hpp"

namespace ppng {
namespace {

// Naive decoder written from the architecture description.
RadianceSample<double> oracle_forward(const std::vector<double>& w, std::size_t nf, const std::vector<double>& z,
                                      const ShFeature<double>& sh) {
  std::vector<double> geo(16, 0.0);
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < nf; ++c) geo[r] += w[r * nf + c] * z[c];
  const double sigma = std::exp(std::min(15.0, std::max(-15.0, geo[0])));
  std::vector<double> in(sh.begin(), sh.end());
  in.insert(in.end(), geo.begin(), geo.end());
  const std::size_t o2 = 16 * nf, o3 = o2 + 16 * 32;
  std::vector<double> h(16, 0.0);
  for (std::size_t r = 0; r < 16; ++r) {
    for (std::size_t c = 0; c < 32; ++c) h[r] += w[o2 + r * 32 + c] * in[c];
    h[r] = h[r] > 0 ? h[r] : 0;
  }
  RadianceSample<double> s;
  for (std::size_t k = 0; k < 3; ++k) {
    double a = 0;
    for (std::size_t c = 0; c < 16; ++c) a += w[o3 + k * 16 + c] * h[c];
    s.color[k] = 1.0 / (1.0 + std::exp(-a));
  }
  s.sigma = sigma;
  return s;
}

ShallowMlp<double> random_mlp(std::size_t nf, std::uint64_t seed, std::size_t layers = 1, double scale = 1.0) {
  ShallowMlp<double> m(nf, layers);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : m.params()) v = u(rng);
  return m;
}

TEST(ShallowMlp, ParameterCountAtDefaults) {
  EXPECT_EQ(ShallowMlp<float>(32).parameter_count(), 1'072u);
  EXPECT_EQ(ShallowMlp<float>::parameter_count(32), 1'072u);
  std::size_t sum = 0;
  for (auto [r, c] : ShallowMlp<float>(32).matrix_shapes()) sum += r * c;
  EXPECT_EQ(sum, 1'072u);
}

TEST(ShallowMlp, ShapesAndOffsets) {
  ShallowMlp<float> m(24);
  const auto s = m.matrix_shapes();
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0], (std::array<std::size_t, 2>{16, 24}));
  EXPECT_EQ(s[1], (std::array<std::size_t, 2>{16, 32}));
  EXPECT_EQ(s[2], (std::array<std::size_t, 2>{3, 16}));
  EXPECT_EQ(m.color_hidden_offset(), 16u * 24u);
  EXPECT_EQ(m.color_out_offset(), 16u * 24u + 512u);

  ShallowMlp<float> m2(32, 2);
  EXPECT_EQ(m2.parameter_count(), 1'072u + 256u);
  EXPECT_EQ(m2.matrix_shapes().size(), 4u);
  EXPECT_THROW(ShallowMlp<float>(32, 3), ShapeError);
  EXPECT_THROW(ShallowMlp<float>(0), ShapeError);
}

TEST(ShallowMlp, XavierBounds) {
  ShallowMlp<double> m(32);
  std::mt19937_64 rng(1);
  m.init_xavier(rng);
  std::size_t off = 0;
  for (auto [r, c] : m.matrix_shapes()) {
    const double a = std::sqrt(6.0 / double(r + c));
    double mx = 0;
    for (std::size_t i = 0; i < r * c; ++i) mx = std::max(mx, std::abs(m.params()[off + i]));
    EXPECT_LE(mx, a);
    EXPECT_GT(mx, 0.5 * a);
    off += r * c;
  }
}

TEST(MlpForward, MatchesNaiveOracle) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t nf : {2u, 8u, 32u}) {
    auto m = random_mlp(nf, nf, 1, 0.5);
    for (int t = 0; t < 50; ++t) {
      std::vector<double> z(nf);
      for (auto& v : z) v = u(rng);
      const auto sh = sh_encode(testing::random_unit_dir(rng));
      const auto got = mlp_forward(std::span<const double>(z), sh, m);
      const auto want = oracle_forward({m.params().begin(), m.params().end()}, nf, z, sh);
      EXPECT_NEAR(got.sigma, want.sigma, 1e-12 * want.sigma);
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(got.color[k], want.color[k], 1e-13);
      EXPECT_EQ(mlp_density(std::span<const double>(z), m), got.sigma);
    }
  }
}

TEST(MlpForward, ZeroWeightsGiveUnitDensityGreyColour) {
  ShallowMlp<double> m(8);
  std::vector<double> z(8, 0.3);
  const auto s = mlp_forward(std::span<const double>(z), sh_encode(Vec3<double>{0, 0, 1}), m);
  EXPECT_EQ(s.sigma, 1.0);
  for (double c : s.color) EXPECT_EQ(c, 0.5);
}

TEST(MlpForward, LogitClamp) {
  ShallowMlp<double> m(1);
  std::vector<double> z{100.0};
  m.params()[0] = 1.0;
  EXPECT_DOUBLE_EQ(mlp_density(std::span<const double>(z), m), std::exp(15.0));
  z[0] = -100.0;
  EXPECT_DOUBLE_EQ(mlp_density(std::span<const double>(z), m), std::exp(-15.0));
}

TEST(MlpForward, RejectsWrongFeatureLength) {
  ShallowMlp<double> m(8);
  std::vector<double> z(7);
  EXPECT_THROW(mlp_forward(std::span<const double>(z), sh_encode(Vec3<double>{1, 0, 0}), m), ShapeError);
}

// Checks all weight and input gradients against central differences of the
// scalar g . color + gs * sigma.
void check_backward(std::size_t nf, std::size_t layers, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  auto m = random_mlp(nf, seed, layers, 0.4);
  std::vector<double> z(nf);
  for (auto& v : z) v = u(rng);
  const auto sh = sh_encode(testing::random_unit_dir(rng));
  const std::array<double, 3> g{u(rng), u(rng), u(rng)};
  const double gs = u(rng);
  auto objective = [&] {
    const auto s = mlp_forward(std::span<const double>(z), sh, m);
    return g[0] * s.color[0] + g[1] * s.color[1] + g[2] * s.color[2] + gs * s.sigma;
  };
  MlpCache<double> cache;
  mlp_forward(std::span<const double>(z), sh, m, cache);
  std::vector<double> gw(m.parameter_count(), 0.0), dz(nf, 123.0);
  mlp_backward(cache, m, g, gs, std::span<double>(gw), std::span<double>(dz));

  const double h = 1e-6;
  std::size_t bad = 0;
  auto p = m.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double fp = objective();
    p[i] = keep - h;
    const double fm = objective();
    p[i] = keep;
    if (testing::rel_err(gw[i], (fp - fm) / (2 * h)) > 1e-5) ++bad;
  }
  for (std::size_t i = 0; i < nf; ++i) {
    const double keep = z[i];
    z[i] = keep + h;
    const double fp = objective();
    z[i] = keep - h;
    const double fm = objective();
    z[i] = keep;
    EXPECT_LT(testing::rel_err(dz[i], (fp - fm) / (2 * h)), 1e-5) << "dz " << i;
  }
  EXPECT_EQ(bad, 0u);
}

TEST(MlpBackward, MatchesFiniteDifferences) {
  check_backward(8, 1, 3);
  check_backward(32, 1, 4);
}

TEST(MlpBackward, TwoLayerDensityBranch) { check_backward(12, 2, 5); }

TEST(MlpBackward, ClampedLogitStopsDensityGradient) {
  ShallowMlp<double> m(1);
  m.params()[0] = 1.0;
  std::vector<double> z{40.0};
  MlpCache<double> cache;
  mlp_forward(std::span<const double>(z), sh_encode(Vec3<double>{0, 1, 0}), m, cache);
  std::vector<double> gw(m.parameter_count(), 0.0), dz(1);
  mlp_backward(cache, m, {0, 0, 0}, 1.0, std::span<double>(gw), std::span<double>(dz));
  EXPECT_EQ(gw[0], 0.0);
  EXPECT_EQ(dz[0], 0.0);
}

TEST(MlpBackward, RejectsForeignCache) {
  ShallowMlp<double> a(4), b(4);
  std::vector<double> z(4, 0.1);
  MlpCache<double> cache;
  mlp_forward(std::span<const double>(z), sh_encode(Vec3<double>{0, 0, 1}), a, cache);
  std::vector<double> gw(b.parameter_count()), dz(4);
  EXPECT_THROW(mlp_backward(cache, b, {1, 1, 1}, 1.0, std::span<double>(gw), std::span<double>(dz)), ShapeError);
  std::vector<double> short_gw(3);
  EXPECT_THROW(mlp_backward(cache, a, {1, 1, 1}, 1.0, std::span<double>(short_gw), std::span<double>(dz)),
               ShapeError);
}

}  // namespace
}  // namespace ppng
