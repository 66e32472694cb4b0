// Copyright 2026 The PPNG Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "ppng/core.hpp"
#include "ppng/encoding.hpp"
#include "ppng/field.hpp"
#include "ppng/mlp.hpp"
#include "ppng/renderer.hpp"

namespace ppng {

// Everything a scene file carries.
template <class T>
struct PpngModel {
  AnyField<T> field;
  ShallowMlp<T> mlp;
  FrequencySchedule freqs;
  Aabb aabb;
  OccupancyGrid occupancy;

  PpngType type() const { return field_type(field); }
  const FieldDims& dims() const { return field_dims(field); }
  std::size_t field_parameter_count() const { return field_params(field).size(); }
  std::size_t parameter_count() const { return field_parameter_count() + mlp.parameter_count(); }
};

struct ModelInit {
  double field_scale = 1e-4;  // fields start uniform in [-scale, scale]
  std::size_t density_layers = 1;
  std::size_t occupancy_resolution = OccupancyGrid::kDefaultResolution;
  std::uint64_t seed = 0;
};

template <class T>
PpngModel<T> make_model(PpngType type, FieldDims dims, const Aabb& aabb, const ModelInit& init = {}) {
  if (aabb.degenerate()) throw DomainError("scene AABB is degenerate");
  PpngModel<T> m;
  m.field = make_field<T>(type, dims);
  m.freqs = FrequencySchedule::with_levels(dims.levels);
  m.mlp = ShallowMlp<T>(field_dims(m.field).feature_size(), init.density_layers);
  m.aabb = aabb;
  m.occupancy = OccupancyGrid(init.occupancy_resolution, true);
  std::mt19937_64 rng(init.seed);
  std::visit([&](auto& f) { f.init_uniform(rng, -init.field_scale, init.field_scale); }, m.field);
  m.mlp.init_xavier(rng);
  return m;
}

// Adapts a field + decoder pair to the marcher's RadianceModel/DensityModel.
template <class T, class Field>
class FieldRadiance {
 public:
  FieldRadiance(const Field& field, const ShallowMlp<T>& mlp, const FrequencySchedule& freqs)
      : field_(field), mlp_(mlp), freqs_(freqs) {
    if (field_dims_of(field).levels != freqs.levels()) throw ShapeError("frequency levels do not match field");
    if (field_dims_of(field).feature_size() != mlp.feature_size())
      throw ShapeError("decoder input size does not match field feature size");
  }

  RadianceSample<T> sample(Vec3<T> unit, Vec3<T> dir) const {
    thread_local std::vector<T> z;
    thread_local MlpCache<T> cache;
    z.resize(mlp_.feature_size());
    query_feature(positional_encode(unit, freqs_), field_, std::span<T>(z));
    return mlp_forward(std::span<const T>(z), sh_encode(dir), mlp_, cache);
  }

  T density(Vec3<T> unit) const {
    thread_local std::vector<T> z;
    z.resize(mlp_.feature_size());
    query_feature(positional_encode(unit, freqs_), field_, std::span<T>(z));
    return mlp_density(std::span<const T>(z), mlp_);
  }

 private:
  const Field& field_;
  const ShallowMlp<T>& mlp_;
  const FrequencySchedule& freqs_;
};

// Calls fn(FieldRadiance<T, ConcreteField>) with the variant resolved once.
template <class T, class Fn>
decltype(auto) with_radiance(const PpngModel<T>& m, Fn&& fn) {
  return std::visit(
      [&](const auto& f) -> decltype(auto) {
        using F = std::decay_t<decltype(f)>;
        return fn(FieldRadiance<T, F>(f, m.mlp, m.freqs));
      },
      m.field);
}

template <class T>
Image render_model(const PpngModel<T>& m, const Camera& cam, const RayMarchConfig& cfg,
                   RenderStats* stats = nullptr) {
  return with_radiance(m, [&](const auto& r) { return render_image<T>(cam, r, m.aabb, m.occupancy, cfg, stats); });
}

template <class T>
OccupancyGrid build_model_occupancy(const PpngModel<T>& m, std::size_t resolution, double threshold,
                                    std::uint64_t seed = 0, std::size_t workers = default_thread_count()) {
  return with_radiance(
      m, [&](const auto& r) { return build_occupancy<T>(r, resolution, threshold, seed, workers); });
}

}  // namespace ppng
