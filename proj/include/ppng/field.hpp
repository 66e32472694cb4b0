// Copyright 2026 The PPNG Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "ppng/core.hpp"
#include "ppng/encoding.hpp"
#include "ppng/parallel.hpp"

namespace ppng {

// Shape shared by all three representations. `rank` is 0 for dense cubes.
struct FieldDims {
  std::size_t q = 0;         // lattice resolution per axis
  std::size_t levels = 0;    // L
  std::size_t channels = 0;  // D
  std::size_t rank = 0;      // R

  std::size_t cubes() const { return 2 * levels; }
  std::size_t feature_size() const { return 2 * levels * channels; }
  std::size_t cells() const { return q * q * q; }

  friend bool operator==(const FieldDims&, const FieldDims&) = default;
};

namespace detail {

inline void check_dims(const FieldDims& dims, bool factorized) {
  if (dims.q < 2) throw ShapeError("field resolution Q must be >= 2");
  if (dims.levels < 1 || dims.levels > kMaxLevels) throw ShapeError("field levels L out of range");
  if (dims.channels < 1) throw ShapeError("field channels D must be >= 1");
  if (factorized && dims.rank < 1) throw ShapeError("factor rank R must be >= 1");
  if (!factorized && dims.rank != 0) throw ShapeError("dense cubes carry no rank");
}

template <class T, class Rng>
void fill_uniform(std::vector<T>& data, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : data) v = static_cast<T>(dist(rng));
}

}  // namespace detail

// Dense PPNG-3 cubes. Cube c holds Q^3 x D values, channel fastest, then x, y, z.
template <class T>
class FourierVolumeSet {
 public:
  static constexpr PpngType kType = PpngType::kDense;

  FourierVolumeSet() = default;
  explicit FourierVolumeSet(FieldDims dims) : dims_(dims) {
    detail::check_dims(dims_, false);
    data_.assign(parameter_count(dims_), T(0));
  }

  static std::size_t parameter_count(const FieldDims& d) { return d.cubes() * d.cells() * d.channels; }
  std::size_t parameter_count() const { return data_.size(); }
  std::size_t cube_size() const { return dims_.cells() * dims_.channels; }

  const FieldDims& dims() const { return dims_; }
  std::span<T> params() { return data_; }
  std::span<const T> params() const { return data_; }
  std::span<T> cube(std::size_t c) { return std::span<T>(data_).subspan(c * cube_size(), cube_size()); }
  std::span<const T> cube(std::size_t c) const {
    return std::span<const T>(data_).subspan(c * cube_size(), cube_size());
  }

  std::size_t index(std::size_t c, std::size_t x, std::size_t y, std::size_t z, std::size_t d) const {
    const std::size_t q = dims_.q;
    return c * cube_size() + ((z * q + y) * q + x) * dims_.channels + d;
  }
  T& at(std::size_t c, std::size_t x, std::size_t y, std::size_t z, std::size_t d) {
    return data_[index(c, x, y, z, d)];
  }
  T at(std::size_t c, std::size_t x, std::size_t y, std::size_t z, std::size_t d) const {
    return data_[index(c, x, y, z, d)];
  }

  template <class Rng>
  void init_uniform(Rng& rng, double lo, double hi) { detail::fill_uniform(data_, rng, lo, hi); }

 private:
  FieldDims dims_{};
  std::vector<T> data_;
};

// PPNG-1 CP factors. Per cube three banks [v_x | v_y | v_z], each R x Q x D,
// rank-major then position then channel.
template <class T>
class CpFactorSet {
 public:
  static constexpr PpngType kType = PpngType::kCp;

  CpFactorSet() = default;
  explicit CpFactorSet(FieldDims dims) : dims_(dims) {
    detail::check_dims(dims_, true);
    data_.assign(parameter_count(dims_), T(0));
  }

  static std::size_t parameter_count(const FieldDims& d) { return d.cubes() * 3 * d.rank * d.q * d.channels; }
  std::size_t parameter_count() const { return data_.size(); }
  std::size_t bank_size() const { return dims_.rank * dims_.q * dims_.channels; }
  std::size_t cube_size() const { return 3 * bank_size(); }

  const FieldDims& dims() const { return dims_; }
  std::span<T> params() { return data_; }
  std::span<const T> params() const { return data_; }

  // axis: 0 = x, 1 = y, 2 = z
  std::size_t index(std::size_t c, std::size_t axis, std::size_t r, std::size_t i, std::size_t d) const {
    return c * cube_size() + axis * bank_size() + (r * dims_.q + i) * dims_.channels + d;
  }
  T& at(std::size_t c, std::size_t axis, std::size_t r, std::size_t i, std::size_t d) {
    return data_[index(c, axis, r, i, d)];
  }
  T at(std::size_t c, std::size_t axis, std::size_t r, std::size_t i, std::size_t d) const {
    return data_[index(c, axis, r, i, d)];
  }

  template <class Rng>
  void init_uniform(Rng& rng, double lo, double hi) { detail::fill_uniform(data_, rng, lo, hi); }

 private:
  FieldDims dims_{};
  std::vector<T> data_;
};

// PPNG-2 tri-plane factors. Per cube three planes [P_xy | P_xz | P_yz], each
// R x Q^2 x D, rank-major; within a plane channel fastest, then the first
// named axis, then the second.
template <class T>
class TriplaneFactorSet {
 public:
  static constexpr PpngType kType = PpngType::kTriplane;
  enum Plane : std::size_t { kXY = 0, kXZ = 1, kYZ = 2 };

  TriplaneFactorSet() = default;
  explicit TriplaneFactorSet(FieldDims dims) : dims_(dims) {
    detail::check_dims(dims_, true);
    data_.assign(parameter_count(dims_), T(0));
  }

  static std::size_t parameter_count(const FieldDims& d) {
    return d.cubes() * 3 * d.rank * d.q * d.q * d.channels;
  }
  std::size_t parameter_count() const { return data_.size(); }
  std::size_t plane_size() const { return dims_.rank * dims_.q * dims_.q * dims_.channels; }
  std::size_t cube_size() const { return 3 * plane_size(); }

  const FieldDims& dims() const { return dims_; }
  std::span<T> params() { return data_; }
  std::span<const T> params() const { return data_; }

  std::size_t index(std::size_t c, std::size_t plane, std::size_t r, std::size_t i, std::size_t j,
                    std::size_t d) const {
    const std::size_t q = dims_.q;
    return c * cube_size() + plane * plane_size() + ((r * q + j) * q + i) * dims_.channels + d;
  }
  T& at(std::size_t c, std::size_t plane, std::size_t r, std::size_t i, std::size_t j, std::size_t d) {
    return data_[index(c, plane, r, i, j, d)];
  }
  T at(std::size_t c, std::size_t plane, std::size_t r, std::size_t i, std::size_t j, std::size_t d) const {
    return data_[index(c, plane, r, i, j, d)];
  }

  template <class Rng>
  void init_uniform(Rng& rng, double lo, double hi) { detail::fill_uniform(data_, rng, lo, hi); }

 private:
  FieldDims dims_{};
  std::vector<T> data_;
};

template <class T>
using AnyField = std::variant<FourierVolumeSet<T>, CpFactorSet<T>, TriplaneFactorSet<T>>;

template <class T>
PpngType field_type(const AnyField<T>& f) {
  return std::visit([](const auto& v) { return std::decay_t<decltype(v)>::kType; }, f);
}

template <class T>
const FieldDims& field_dims(const AnyField<T>& f) {
  return std::visit([](const auto& v) -> const FieldDims& { return v.dims(); }, f);
}

template <class T>
std::span<T> field_params(AnyField<T>& f) {
  return std::visit([](auto& v) { return v.params(); }, f);
}

template <class T>
std::span<const T> field_params(const AnyField<T>& f) {
  return std::visit([](const auto& v) { return std::span<const T>(v.params()); }, f);
}

inline std::size_t field_parameter_count(PpngType type, const FieldDims& d) {
  switch (type) {
    case PpngType::kCp: return CpFactorSet<float>::parameter_count(d);
    case PpngType::kTriplane: return TriplaneFactorSet<float>::parameter_count(d);
    case PpngType::kDense: return FourierVolumeSet<float>::parameter_count(d);
  }
  return 0;
}

template <class T>
AnyField<T> make_field(PpngType type, FieldDims dims) {
  switch (type) {
    case PpngType::kCp: return CpFactorSet<T>(dims);
    case PpngType::kTriplane: return TriplaneFactorSet<T>(dims);
    case PpngType::kDense: dims.rank = 0; return FourierVolumeSet<T>(dims);
  }
  throw DomainError("unknown ppng type");
}

// ---------------------------------------------------------------------------
// Composition of factorized cubes into dense cubes.

// Optional instrumentation: per-cell count of rank terms accumulated.
struct CompositionCounter {
  std::vector<std::uint32_t> touches;
};

template <class T>
std::vector<T> compose_cp(const CpFactorSet<T>& f, std::size_t cube, CompositionCounter* counter = nullptr) {
  const FieldDims& dm = f.dims();
  if (cube >= dm.cubes()) throw ShapeError("compose_cp: cube index out of range");
  const std::size_t q = dm.q, nd = dm.channels;
  std::vector<T> out(dm.cells() * nd, T(0));
  if (counter) counter->touches.assign(dm.cells(), 0);
  const std::span<const T> p = f.params();
  for (std::size_t r = 0; r < dm.rank; ++r) {
    const T* vx = &p[f.index(cube, 0, r, 0, 0)];
    const T* vy = &p[f.index(cube, 1, r, 0, 0)];
    const T* vz = &p[f.index(cube, 2, r, 0, 0)];
    for (std::size_t z = 0; z < q; ++z)
      for (std::size_t y = 0; y < q; ++y)
        for (std::size_t x = 0; x < q; ++x) {
          const std::size_t cell = (z * q + y) * q + x;
          T* o = &out[cell * nd];
          for (std::size_t d = 0; d < nd; ++d) o[d] += vx[x * nd + d] * vy[y * nd + d] * vz[z * nd + d];
          if (counter) ++counter->touches[cell];
        }
  }
  return out;
}

template <class T>
std::vector<T> compose_triplane(const TriplaneFactorSet<T>& f, std::size_t cube,
                                CompositionCounter* counter = nullptr) {
  using TP = TriplaneFactorSet<T>;
  const FieldDims& dm = f.dims();
  if (cube >= dm.cubes()) throw ShapeError("compose_triplane: cube index out of range");
  const std::size_t q = dm.q, nd = dm.channels;
  std::vector<T> out(dm.cells() * nd, T(0));
  if (counter) counter->touches.assign(dm.cells(), 0);
  const std::span<const T> p = f.params();
  for (std::size_t r = 0; r < dm.rank; ++r) {
    const T* pxy = &p[f.index(cube, TP::kXY, r, 0, 0, 0)];
    const T* pxz = &p[f.index(cube, TP::kXZ, r, 0, 0, 0)];
    const T* pyz = &p[f.index(cube, TP::kYZ, r, 0, 0, 0)];
    for (std::size_t z = 0; z < q; ++z)
      for (std::size_t y = 0; y < q; ++y)
        for (std::size_t x = 0; x < q; ++x) {
          const std::size_t cell = (z * q + y) * q + x;
          T* o = &out[cell * nd];
          const T* a = pxy + (y * q + x) * nd;
          const T* b = pyz + (z * q + y) * nd;
          const T* c = pxz + (z * q + x) * nd;
          for (std::size_t d = 0; d < nd; ++d) o[d] += a[d] * b[d] * c[d];
          if (counter) ++counter->touches[cell];
        }
  }
  return out;
}

// Composes every cube; cubes are independent so they are spread over workers.
template <class T>
FourierVolumeSet<T> to_dense(const CpFactorSet<T>& f, std::size_t workers = default_thread_count()) {
  FieldDims dims = f.dims();
  dims.rank = 0;
  FourierVolumeSet<T> out(dims);
  parallel_chunks(dims.cubes(), workers, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t c = b; c < e; ++c) {
      const auto cube = compose_cp(f, c);
      std::copy(cube.begin(), cube.end(), out.cube(c).begin());
    }
  });
  return out;
}

template <class T>
FourierVolumeSet<T> to_dense(const TriplaneFactorSet<T>& f, std::size_t workers = default_thread_count()) {
  FieldDims dims = f.dims();
  dims.rank = 0;
  FourierVolumeSet<T> out(dims);
  parallel_chunks(dims.cubes(), workers, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t c = b; c < e; ++c) {
      const auto cube = compose_triplane(f, c);
      std::copy(cube.begin(), cube.end(), out.cube(c).begin());
    }
  });
  return out;
}

template <class T>
FourierVolumeSet<T> to_dense(const FourierVolumeSet<T>& f, std::size_t = 1) {
  return f;
}

template <class T>
FourierVolumeSet<T> to_dense(const AnyField<T>& f, std::size_t workers = default_thread_count()) {
  return std::visit([&](const auto& v) { return to_dense(v, workers); }, f);
}

// ---------------------------------------------------------------------------
// Trilinear queries.

// Lattice neighbourhood of one sinusoidal triple: lower corner and fractional
// weight per axis. s in [-1,1] maps to u = (s+1)/2 (Q-1).
template <class T>
struct LatticeStencil {
  std::array<std::size_t, 3> lo{};
  std::array<T, 3> w{};

  static LatticeStencil from(const Vec3<T>& s, std::size_t q) {
    LatticeStencil st;
    const T qm1 = static_cast<T>(q - 1);
    for (std::size_t a = 0; a < 3; ++a) {
      T u = (s[a] + T(1)) * T(0.5) * qm1;
      u = std::clamp(u, T(0), qm1);
      std::size_t i = static_cast<std::size_t>(u);
      if (i > q - 2) i = q - 2;
      st.lo[a] = i;
      st.w[a] = u - static_cast<T>(i);
    }
    return st;
  }

  // Weight of corner k, bit 0 = x, bit 1 = y, bit 2 = z.
  T corner_weight(unsigned k) const {
    const T wx = (k & 1u) ? w[0] : T(1) - w[0];
    const T wy = (k & 2u) ? w[1] : T(1) - w[1];
    const T wz = (k & 4u) ? w[2] : T(1) - w[2];
    return wx * wy * wz;
  }
  std::array<std::size_t, 3> corner(unsigned k) const {
    return {lo[0] + (k & 1u), lo[1] + ((k >> 1) & 1u), lo[2] + ((k >> 2) & 1u)};
  }
};

namespace detail {

template <class T>
void check_query_shape(const SinusoidalCoords<T>& coords, const FieldDims& dims, std::size_t out_len) {
  if (coords.levels != dims.levels)
    throw ShapeError("query: coordinate levels (" + std::to_string(coords.levels) +
                     ") do not match field levels (" + std::to_string(dims.levels) + ")");
  if (out_len != dims.feature_size()) throw ShapeError("query: feature buffer has wrong length");
}

}  // namespace detail

template <class T>
void query_feature(const SinusoidalCoords<T>& coords, const FourierVolumeSet<T>& f, std::span<T> out) {
  const FieldDims& dm = f.dims();
  detail::check_query_shape(coords, dm, out.size());
  const std::size_t q = dm.q, nd = dm.channels;
  const std::span<const T> p = f.params();
  for (std::size_t c = 0; c < dm.cubes(); ++c) {
    const auto st = LatticeStencil<T>::from(coords[c], q);
    T* o = &out[c * nd];
    std::fill(o, o + nd, T(0));
    for (unsigned k = 0; k < 8; ++k) {
      const T wk = st.corner_weight(k);
      const auto ix = st.corner(k);
      const T* v = &p[f.index(c, ix[0], ix[1], ix[2], 0)];
      for (std::size_t d = 0; d < nd; ++d) o[d] += wk * v[d];
    }
  }
}

// Trilinear interpolation of a CP tensor separates per axis, so the eight
// lattice values never need to be formed explicitly.
template <class T>
void query_feature(const SinusoidalCoords<T>& coords, const CpFactorSet<T>& f, std::span<T> out) {
  const FieldDims& dm = f.dims();
  detail::check_query_shape(coords, dm, out.size());
  const std::size_t q = dm.q, nd = dm.channels;
  const std::span<const T> p = f.params();
  for (std::size_t c = 0; c < dm.cubes(); ++c) {
    const auto st = LatticeStencil<T>::from(coords[c], q);
    T* o = &out[c * nd];
    std::fill(o, o + nd, T(0));
    for (std::size_t r = 0; r < dm.rank; ++r) {
      const T* vx = &p[f.index(c, 0, r, st.lo[0], 0)];
      const T* vy = &p[f.index(c, 1, r, st.lo[1], 0)];
      const T* vz = &p[f.index(c, 2, r, st.lo[2], 0)];
      for (std::size_t d = 0; d < nd; ++d) {
        const T lx = (T(1) - st.w[0]) * vx[d] + st.w[0] * vx[nd + d];
        const T ly = (T(1) - st.w[1]) * vy[d] + st.w[1] * vy[nd + d];
        const T lz = (T(1) - st.w[2]) * vz[d] + st.w[2] * vz[nd + d];
        o[d] += lx * ly * lz;
      }
    }
  }
}

template <class T>
void query_feature(const SinusoidalCoords<T>& coords, const TriplaneFactorSet<T>& f, std::span<T> out) {
  using TP = TriplaneFactorSet<T>;
  const FieldDims& dm = f.dims();
  detail::check_query_shape(coords, dm, out.size());
  const std::size_t q = dm.q, nd = dm.channels;
  const std::span<const T> p = f.params();
  for (std::size_t c = 0; c < dm.cubes(); ++c) {
    const auto st = LatticeStencil<T>::from(coords[c], q);
    T* o = &out[c * nd];
    std::fill(o, o + nd, T(0));
    for (unsigned k = 0; k < 8; ++k) {
      const T wk = st.corner_weight(k);
      const auto ix = st.corner(k);
      for (std::size_t r = 0; r < dm.rank; ++r) {
        const T* a = &p[f.index(c, TP::kXY, r, ix[0], ix[1], 0)];
        const T* b = &p[f.index(c, TP::kYZ, r, ix[1], ix[2], 0)];
        const T* e = &p[f.index(c, TP::kXZ, r, ix[0], ix[2], 0)];
        for (std::size_t d = 0; d < nd; ++d) o[d] += wk * a[d] * b[d] * e[d];
      }
    }
  }
}

template <class T>
void query_feature(const SinusoidalCoords<T>& coords, const AnyField<T>& f, std::span<T> out) {
  std::visit([&](const auto& v) { query_feature(coords, v, out); }, f);
}

template <class T>
const FieldDims& field_dims_of(const FourierVolumeSet<T>& f) { return f.dims(); }
template <class T>
const FieldDims& field_dims_of(const CpFactorSet<T>& f) { return f.dims(); }
template <class T>
const FieldDims& field_dims_of(const TriplaneFactorSet<T>& f) { return f.dims(); }
template <class T>
const FieldDims& field_dims_of(const AnyField<T>& f) { return field_dims(f); }

template <class T, class Field>
std::vector<T> query_feature(const SinusoidalCoords<T>& coords, const Field& f) {
  std::vector<T> out(field_dims_of(f).feature_size());
  query_feature(coords, f, std::span<T>(out));
  return out;
}

// ---------------------------------------------------------------------------
// Backward: accumulates d(loss)/d(params) into `grad` (same layout as the
// field's parameter span). Gradients w.r.t. the coordinates are not produced.

namespace detail {

template <class T>
void check_backward_shape(const SinusoidalCoords<T>& coords, const FieldDims& dims, std::size_t up_len,
                          std::size_t grad_len, std::size_t param_len) {
  check_query_shape(coords, dims, up_len);
  if (grad_len != param_len) throw ShapeError("query backward: gradient buffer has wrong length");
}

}  // namespace detail

template <class T>
void query_feature_backward(const SinusoidalCoords<T>& coords, const FourierVolumeSet<T>& f,
                            std::span<const T> upstream, std::span<T> grad) {
  const FieldDims& dm = f.dims();
  detail::check_backward_shape(coords, dm, upstream.size(), grad.size(), f.parameter_count());
  const std::size_t q = dm.q, nd = dm.channels;
  for (std::size_t c = 0; c < dm.cubes(); ++c) {
    const auto st = LatticeStencil<T>::from(coords[c], q);
    const T* up = &upstream[c * nd];
    for (unsigned k = 0; k < 8; ++k) {
      const T wk = st.corner_weight(k);
      const auto ix = st.corner(k);
      T* g = &grad[f.index(c, ix[0], ix[1], ix[2], 0)];
      for (std::size_t d = 0; d < nd; ++d) g[d] += wk * up[d];
    }
  }
}

template <class T>
void query_feature_backward(const SinusoidalCoords<T>& coords, const CpFactorSet<T>& f,
                            std::span<const T> upstream, std::span<T> grad) {
  const FieldDims& dm = f.dims();
  detail::check_backward_shape(coords, dm, upstream.size(), grad.size(), f.parameter_count());
  const std::size_t q = dm.q, nd = dm.channels;
  const std::span<const T> p = f.params();
  for (std::size_t c = 0; c < dm.cubes(); ++c) {
    const auto st = LatticeStencil<T>::from(coords[c], q);
    const T* up = &upstream[c * nd];
    for (std::size_t r = 0; r < dm.rank; ++r) {
      const std::size_t ox = f.index(c, 0, r, st.lo[0], 0);
      const std::size_t oy = f.index(c, 1, r, st.lo[1], 0);
      const std::size_t oz = f.index(c, 2, r, st.lo[2], 0);
      for (std::size_t d = 0; d < nd; ++d) {
        const T lx = (T(1) - st.w[0]) * p[ox + d] + st.w[0] * p[ox + nd + d];
        const T ly = (T(1) - st.w[1]) * p[oy + d] + st.w[1] * p[oy + nd + d];
        const T lz = (T(1) - st.w[2]) * p[oz + d] + st.w[2] * p[oz + nd + d];
        const T gx = up[d] * ly * lz, gy = up[d] * lx * lz, gz = up[d] * lx * ly;
        grad[ox + d] += (T(1) - st.w[0]) * gx;
        grad[ox + nd + d] += st.w[0] * gx;
        grad[oy + d] += (T(1) - st.w[1]) * gy;
        grad[oy + nd + d] += st.w[1] * gy;
        grad[oz + d] += (T(1) - st.w[2]) * gz;
        grad[oz + nd + d] += st.w[2] * gz;
      }
    }
  }
}

template <class T>
void query_feature_backward(const SinusoidalCoords<T>& coords, const TriplaneFactorSet<T>& f,
                            std::span<const T> upstream, std::span<T> grad) {
  using TP = TriplaneFactorSet<T>;
  const FieldDims& dm = f.dims();
  detail::check_backward_shape(coords, dm, upstream.size(), grad.size(), f.parameter_count());
  const std::size_t q = dm.q, nd = dm.channels;
  const std::span<const T> p = f.params();
  for (std::size_t c = 0; c < dm.cubes(); ++c) {
    const auto st = LatticeStencil<T>::from(coords[c], q);
    const T* up = &upstream[c * nd];
    for (unsigned k = 0; k < 8; ++k) {
      const T wk = st.corner_weight(k);
      const auto ix = st.corner(k);
      for (std::size_t r = 0; r < dm.rank; ++r) {
        const std::size_t ia = f.index(c, TP::kXY, r, ix[0], ix[1], 0);
        const std::size_t ib = f.index(c, TP::kYZ, r, ix[1], ix[2], 0);
        const std::size_t ie = f.index(c, TP::kXZ, r, ix[0], ix[2], 0);
        for (std::size_t d = 0; d < nd; ++d) {
          const T g = wk * up[d];
          const T a = p[ia + d], b = p[ib + d], e = p[ie + d];
          grad[ia + d] += g * b * e;
          grad[ib + d] += g * a * e;
          grad[ie + d] += g * a * b;
        }
      }
    }
  }
}

template <class T>
void query_feature_backward(const SinusoidalCoords<T>& coords, const AnyField<T>& f,
                            std::span<const T> upstream, std::span<T> grad) {
  std::visit([&](const auto& v) { query_feature_backward(coords, v, upstream, grad); }, f);
}

template <class T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

}  // namespace ppng
