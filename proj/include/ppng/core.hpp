// Copyright 2026 The PPNG Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ppng {

// Error hierarchy. Each failure class the pipeline distinguishes gets its own
// type so callers (and the CLI exit-code table) can dispatch on it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

template <class T>
struct Vec3 {
  T x{}, y{}, z{};

  constexpr T& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr const T& operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend constexpr Vec3 operator*(Vec3 a, T s) { return {a.x * s, a.y * s, a.z * s}; }
  friend constexpr Vec3 operator*(T s, Vec3 a) { return a * s; }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;

  template <class U>
  constexpr Vec3<U> cast() const {
    return {static_cast<U>(x), static_cast<U>(y), static_cast<U>(z)};
  }
};

template <class T>
constexpr T dot(Vec3<T> a, Vec3<T> b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <class T>
constexpr Vec3<T> cross(Vec3<T> a, Vec3<T> b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <class T>
T norm(Vec3<T> a) {
  return std::sqrt(dot(a, a));
}

template <class T>
Vec3<T> normalized(Vec3<T> a) {
  return a * (T(1) / norm(a));
}

using Rgb = std::array<float, 3>;

// Axis-aligned scene bounds in world units.
struct Aabb {
  Vec3<double> min{-1.0, -1.0, -1.0};
  Vec3<double> max{1.0, 1.0, 1.0};

  Vec3<double> extent() const { return max - min; }
  Vec3<double> center() const { return (min + max) * 0.5; }
  double diagonal() const { return norm(extent()); }
  bool degenerate() const {
    return !(max.x > min.x && max.y > min.y && max.z > min.z) ||
           !std::isfinite(diagonal());
  }

  // World position to [0,1]^3, clamped.
  template <class T>
  Vec3<T> to_unit(Vec3<T> p) const {
    Vec3<T> u;
    for (std::size_t a = 0; a < 3; ++a) {
      T v = (p[a] - T(min[a])) / T(max[a] - min[a]);
      u[a] = v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
    }
    return u;
  }

  friend bool operator==(const Aabb&, const Aabb&) = default;
};

// Variants of the representation: 1 = CP factors, 2 = tri-plane factors,
// 3 = dense Fourier-indexed cubes.
enum class PpngType : int { kCp = 1, kTriplane = 2, kDense = 3 };

inline PpngType ppng_type_from_int(int v) {
  if (v < 1 || v > 3) throw DomainError("ppng_type must be 1, 2 or 3, got " + std::to_string(v));
  return static_cast<PpngType>(v);
}

inline double psnr_from_mse(double mse) { return 10.0 * std::log10(1.0 / mse); }

}  // namespace ppng
