// Copyright 2026 The PPNG Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "ppng/trainer.hpp"
#include "test_support.hpp"

namespace ppng::testing {

// Early termination is effectively disabled so the march is smooth in sigma.
inline RayMarchConfig short_march(double step) {
  RayMarchConfig c;
  c.step = step;
  c.min_transmittance = 1e-300;
  c.background = {0.9f, 0.6f, 0.3f};
  c.workers = 1;
  return c;
}

inline std::vector<Ray<double>> random_rays(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<Ray<double>> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3<double> origin = random_unit_dir(rng) * 3.0;
    const Vec3<double> target{u(rng), u(rng), u(rng)};
    out.push_back({origin, normalized(target - origin)});
  }
  return out;
}

struct GradCheck {
  std::size_t total = 0, passed = 0;
  std::size_t max_samples = 0;
  bool kinked = false;  // some perturbation flipped a relu or the logit clamp
  double fraction() const { return total ? double(passed) / double(total) : 0.0; }
};

// Central differences of L = sum_r g_r . C_r over every field and decoder
// parameter, against the analytic reverse pass. The loss is re-evaluated
// with its own forward pass that also records which side of every relu and
// of the density clamp each sample falls on.
inline GradCheck check_pipeline(PpngType type, const FieldDims& dims, std::size_t density_layers, std::uint64_t seed,
                         double step, double h = 1e-3) {
  ModelInit init;
  init.field_scale = 0.5;
  init.density_layers = density_layers;
  init.occupancy_resolution = 4;
  init.seed = seed;
  PpngModel<double> m = make_model<double>(type, dims, Aabb{}, init);
  std::mt19937_64 rng(seed + 100);
  const auto rays = random_rays(rng, 3);
  std::normal_distribution<double> g;
  std::vector<std::array<double, 3>> upstream(rays.size());
  for (auto& a : upstream) a = {g(rng), g(rng), g(rng)};
  const RayMarchConfig cfg = short_march(step);
  const double clamp = ShallowMlp<double>::kLogitClamp;

  GradCheck out;
  std::visit(
      [&](auto& field) {
        using F = std::decay_t<decltype(field)>;
        std::vector<double> z(m.mlp.feature_size());
        std::vector<bool> pattern;
        auto loss = [&] {
          pattern.clear();
          double l = 0.0;
          for (std::size_t r = 0; r < rays.size(); ++r) {
            const ShFeature<double> sh = sh_encode(rays[r].dir);
            const auto res = march_ray(rays[r], m.aabb, m.occupancy, cfg, [&](const Vec3<double>& u, const Vec3<double>&) {
              query_feature(positional_encode(u, m.freqs), field, std::span<double>(z));
              MlpCache<double> cache;
              const auto s = mlp_forward(std::span<const double>(z), sh, m.mlp, cache);
              for (double v : cache.hidden_pre) pattern.push_back(v > 0);
              if (density_layers == 2)
                for (double v : cache.density_hidden) pattern.push_back(v > 0);
              pattern.push_back(std::abs(cache.geo[0]) < clamp);
              return s;
            });
            for (std::size_t c = 0; c < 3; ++c) l += upstream[r][c] * res.color[c];
          }
          return l;
        };
        loss();
        const std::vector<bool> nominal = pattern;

        RayBackprop<double, F> bp(field, m.mlp, m.freqs, m.aabb, m.occupancy, cfg);
        std::vector<double> gf(field.params().size(), 0.0), gm(m.mlp.parameter_count(), 0.0);
        for (std::size_t r = 0; r < rays.size(); ++r) {
          bp.forward(rays[r]);
          out.max_samples = std::max(out.max_samples, bp.sample_count());
          bp.backward(upstream[r], gf, gm);
        }
        auto sweep = [&](std::span<double> params, const std::vector<double>& analytic) {
          for (std::size_t i = 0; i < params.size(); ++i) {
            const double keep = params[i];
            params[i] = keep + h;
            const double lp = loss();
            out.kinked = out.kinked || pattern != nominal;
            params[i] = keep - h;
            const double lm = loss();
            out.kinked = out.kinked || pattern != nominal;
            params[i] = keep;
            const double numeric = (lp - lm) / (2 * h);
            ++out.total;
            if (rel_err(analytic[i], numeric) < 1e-3) ++out.passed;
          }
        };
        sweep(field.params(), gf);
        sweep(m.mlp.params(), gm);
      },
      m.field);
  return out;
}

// Finite differences are only an oracle where the loss is smooth within +-h,
// so each configuration draws seeds until no perturbation crosses a kink.
inline std::optional<GradCheck> smooth_check(PpngType type, const FieldDims& dims, std::size_t layers, std::uint64_t& seed, double step) {
  for (int attempt = 0; attempt < 40; ++attempt) {
    const GradCheck gc = check_pipeline(type, dims, layers, seed++, step);
    if (!gc.kinked) return gc;
  }
  return std::nullopt;
}

}  // namespace ppng::testing
