// Copyright 2026 The PPNG Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "ppng/core.hpp"

namespace ppng {

inline constexpr std::size_t kMaxLevels = 12;

// Per-level frequency multipliers f_i; level i encodes sin/cos(f_i * pi * x).
class FrequencySchedule {
 public:
  FrequencySchedule() : FrequencySchedule(powers_of_two(4)) {}

  explicit FrequencySchedule(std::vector<double> freqs) : freqs_(std::move(freqs)) {
    if (freqs_.empty() || freqs_.size() > kMaxLevels)
      throw DomainError("frequency schedule needs 1.." + std::to_string(kMaxLevels) + " levels");
    for (std::size_t i = 0; i < freqs_.size(); ++i) {
      if (!(freqs_[i] > 0.0) || !std::isfinite(freqs_[i]))
        throw DomainError("frequencies must be positive and finite");
      if (i > 0 && !(freqs_[i] > freqs_[i - 1]))
        throw DomainError("frequencies must be strictly increasing");
    }
  }

  // f_i = 2^i, i = 0..levels-1.
  static std::vector<double> powers_of_two(std::size_t levels) {
    std::vector<double> f(levels);
    for (std::size_t i = 0; i < levels; ++i) f[i] = std::ldexp(1.0, static_cast<int>(i));
    return f;
  }
  static FrequencySchedule with_levels(std::size_t levels) {
    return FrequencySchedule(powers_of_two(levels));
  }

  std::size_t levels() const { return freqs_.size(); }
  double freq(std::size_t i) const { return freqs_[i]; }
  const std::vector<double>& freqs() const { return freqs_; }

  friend bool operator==(const FrequencySchedule&, const FrequencySchedule&) = default;

 private:
  std::vector<double> freqs_;
};

// 2L sinusoidal triples in the order sin_0, cos_0, sin_1, cos_1, ...
// Fixed capacity so the per-sample hot path never allocates.
template <class T>
struct SinusoidalCoords {
  std::array<Vec3<T>, 2 * kMaxLevels> triples{};
  std::size_t levels = 0;

  std::size_t cube_count() const { return 2 * levels; }
  const Vec3<T>& operator[](std::size_t cube) const { return triples[cube]; }
  const Vec3<T>& sin(std::size_t level) const { return triples[2 * level]; }
  const Vec3<T>& cos(std::size_t level) const { return triples[2 * level + 1]; }
};

inline constexpr double kUnitSlack = 1e-9;

template <class T>
SinusoidalCoords<T> positional_encode(Vec3<T> p, const FrequencySchedule& sched) {
  for (std::size_t a = 0; a < 3; ++a) {
    if (!(p[a] >= T(-kUnitSlack) && p[a] <= T(1.0 + kUnitSlack)))
      throw DomainError("positional_encode: coordinate outside [0,1]: " +
                        std::to_string(static_cast<double>(p[a])));
  }
  SinusoidalCoords<T> out;
  out.levels = sched.levels();
  for (std::size_t i = 0; i < out.levels; ++i) {
    const T w = static_cast<T>(sched.freq(i) * std::numbers::pi);
    Vec3<T>& s = out.triples[2 * i];
    Vec3<T>& c = out.triples[2 * i + 1];
    for (std::size_t a = 0; a < 3; ++a) {
      s[a] = std::sin(w * p[a]);
      c[a] = std::cos(w * p[a]);
    }
  }
  return out;
}

// Real spherical harmonics, bands 0..3, band-major (l, m = -l..l), orthonormal
// without the Condon-Shortley phase.
inline constexpr std::size_t kShCoeffs = 16;

template <class T>
using ShFeature = std::array<T, kShCoeffs>;

inline constexpr double kUnitDirTolerance = 1e-6;

template <class T>
ShFeature<T> sh_encode(Vec3<T> d) {
  const double n = std::sqrt(static_cast<double>(d.x) * d.x + static_cast<double>(d.y) * d.y +
                             static_cast<double>(d.z) * d.z);
  if (!(std::abs(n - 1.0) <= kUnitDirTolerance))
    throw DomainError("sh_encode: direction is not unit length (|d| = " + std::to_string(n) + ")");

  const T x = d.x, y = d.y, z = d.z;
  const T xx = x * x, yy = y * y, zz = z * z;
  ShFeature<T> sh;
  sh[0] = T(0.28209479177387814);
  sh[1] = T(0.48860251190291987) * y;
  sh[2] = T(0.48860251190291987) * z;
  sh[3] = T(0.48860251190291987) * x;
  sh[4] = T(1.0925484305920792) * x * y;
  sh[5] = T(1.0925484305920792) * y * z;
  sh[6] = T(0.31539156525252005) * (T(3) * zz - T(1));
  sh[7] = T(1.0925484305920792) * x * z;
  sh[8] = T(0.54627421529603959) * (xx - yy);
  sh[9] = T(0.59004358992664352) * y * (T(3) * xx - yy);
  sh[10] = T(2.8906114426405538) * x * y * z;
  sh[11] = T(0.45704579946446572) * y * (T(5) * zz - T(1));
  sh[12] = T(0.3731763325901154) * z * (T(5) * zz - T(3));
  sh[13] = T(0.45704579946446572) * x * (T(5) * zz - T(1));
  sh[14] = T(1.4453057213202769) * z * (xx - yy);
  sh[15] = T(0.59004358992664352) * x * (xx - T(3) * yy);
  return sh;
}

}  // namespace ppng
