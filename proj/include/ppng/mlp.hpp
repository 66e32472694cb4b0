// Copyright 2026 The PPNG Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ppng/core.hpp"
#include "ppng/encoding.hpp"

namespace ppng {

template <class T>
struct RadianceSample {
  std::array<T, 3> color{};
  T sigma{};
};

// Bias-free decoder. Density branch: feature (F) -> 16 values whose first
// entry is the density logit. Colour branch: [SH(16), density branch(16)] ->
// relu hidden(16) -> sigmoid RGB.
//
// With `density_layers == 2` the density branch gains a relu hidden layer of
// width 16 (F -> 16 -> 16).
template <class T>
class ShallowMlp {
 public:
  static constexpr std::size_t kGeoWidth = 16;
  static constexpr std::size_t kHidden = 16;
  static constexpr std::size_t kColorIn = kShCoeffs + kGeoWidth;
  static constexpr T kLogitClamp = T(15);

  ShallowMlp() = default;
  explicit ShallowMlp(std::size_t feature_size, std::size_t density_layers = 1)
      : feature_size_(feature_size), density_layers_(density_layers) {
    if (feature_size_ == 0) throw ShapeError("mlp feature size must be positive");
    if (density_layers_ != 1 && density_layers_ != 2)
      throw ShapeError("mlp density branch supports 1 or 2 layers");
    data_.assign(parameter_count(feature_size_, density_layers_), T(0));
  }

  static std::size_t parameter_count(std::size_t feature_size, std::size_t density_layers = 1) {
    std::size_t n = kGeoWidth * feature_size;
    if (density_layers == 2) n = kGeoWidth * feature_size + kGeoWidth * kGeoWidth;
    return n + kHidden * kColorIn + 3 * kHidden;
  }

  std::size_t feature_size() const { return feature_size_; }
  std::size_t density_layers() const { return density_layers_; }
  std::size_t parameter_count() const { return data_.size(); }
  std::span<T> params() { return data_; }
  std::span<const T> params() const { return data_; }

  // Weight matrices in storage order as (rows, cols), row-major.
  std::vector<std::array<std::size_t, 2>> matrix_shapes() const {
    std::vector<std::array<std::size_t, 2>> s;
    if (density_layers_ == 2) {
      s.push_back({kGeoWidth, feature_size_});
      s.push_back({kGeoWidth, kGeoWidth});
    } else {
      s.push_back({kGeoWidth, feature_size_});
    }
    s.push_back({kHidden, kColorIn});
    s.push_back({3, kHidden});
    return s;
  }

  // Offsets of the matrices inside params().
  std::size_t density_in_offset() const { return 0; }
  std::size_t density_out_offset() const { return density_layers_ == 2 ? kGeoWidth * feature_size_ : 0; }
  std::size_t color_hidden_offset() const {
    return density_out_offset() + kGeoWidth * (density_layers_ == 2 ? kGeoWidth : feature_size_);
  }
  std::size_t color_out_offset() const { return color_hidden_offset() + kHidden * kColorIn; }

  // Xavier-uniform per matrix.
  template <class Rng>
  void init_xavier(Rng& rng) {
    std::size_t off = 0;
    for (const auto& [rows, cols] : matrix_shapes()) {
      const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
      std::uniform_real_distribution<double> dist(-a, a);
      for (std::size_t i = 0; i < rows * cols; ++i) data_[off + i] = static_cast<T>(dist(rng));
      off += rows * cols;
    }
  }

  friend bool operator==(const ShallowMlp&, const ShallowMlp&) = default;

 private:
  std::size_t feature_size_ = 0;
  std::size_t density_layers_ = 1;
  std::vector<T> data_;
};

template <class T>
struct MlpCache {
  const void* owner = nullptr;
  std::vector<T> z;
  std::array<T, 16> density_hidden{};  // pre-activation, 2-layer branch only
  std::array<T, 16> geo{};              // density branch output, geo[0] = logit
  std::array<T, ShallowMlp<T>::kColorIn> color_in{};
  std::array<T, 16> hidden_pre{};
  std::array<T, 3> color{};
  T sigma{};
};

namespace detail {

template <class T>
inline void matvec(const T* w, std::size_t rows, std::size_t cols, const T* x, T* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = w + r * cols;
    T acc = T(0);
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

// din = W^T dy, dW += dy (outer) in
template <class T>
inline void matvec_backward(const T* w, std::size_t rows, std::size_t cols, const T* in, const T* dy,
                            T* dw, T* din) {
  if (din) std::fill(din, din + cols, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    const T g = dy[r];
    if (g == T(0)) continue;
    const T* row = w + r * cols;
    T* drow = dw + r * cols;
    for (std::size_t c = 0; c < cols; ++c) drow[c] += g * in[c];
    if (din)
      for (std::size_t c = 0; c < cols; ++c) din[c] += g * row[c];
  }
}

template <class T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace detail

template <class T>
RadianceSample<T> mlp_forward(std::span<const T> z, const ShFeature<T>& sh, const ShallowMlp<T>& mlp,
                              MlpCache<T>& cache) {
  using M = ShallowMlp<T>;
  if (z.size() != mlp.feature_size())
    throw ShapeError("mlp_forward: feature length " + std::to_string(z.size()) + " != " +
                     std::to_string(mlp.feature_size()));
  const std::span<const T> w = mlp.params();
  const std::size_t nf = mlp.feature_size();

  cache.owner = w.data();
  cache.z.assign(z.begin(), z.end());
  if (mlp.density_layers() == 2) {
    detail::matvec(&w[mlp.density_in_offset()], M::kGeoWidth, nf, z.data(), cache.density_hidden.data());
    std::array<T, 16> act;
    for (std::size_t i = 0; i < 16; ++i) act[i] = std::max(cache.density_hidden[i], T(0));
    detail::matvec(&w[mlp.density_out_offset()], M::kGeoWidth, M::kGeoWidth, act.data(), cache.geo.data());
  } else {
    detail::matvec(&w[mlp.density_in_offset()], M::kGeoWidth, nf, z.data(), cache.geo.data());
  }
  cache.sigma = std::exp(std::clamp(cache.geo[0], -M::kLogitClamp, M::kLogitClamp));

  std::copy(sh.begin(), sh.end(), cache.color_in.begin());
  std::copy(cache.geo.begin(), cache.geo.end(), cache.color_in.begin() + kShCoeffs);
  detail::matvec(&w[mlp.color_hidden_offset()], M::kHidden, M::kColorIn, cache.color_in.data(),
                 cache.hidden_pre.data());
  std::array<T, 16> hidden;
  for (std::size_t i = 0; i < 16; ++i) hidden[i] = std::max(cache.hidden_pre[i], T(0));
  std::array<T, 3> logits;
  detail::matvec(&w[mlp.color_out_offset()], 3, M::kHidden, hidden.data(), logits.data());
  for (std::size_t k = 0; k < 3; ++k) cache.color[k] = detail::sigmoid(logits[k]);

  return {cache.color, cache.sigma};
}

template <class T>
RadianceSample<T> mlp_forward(std::span<const T> z, const ShFeature<T>& sh, const ShallowMlp<T>& mlp) {
  MlpCache<T> cache;
  return mlp_forward(z, sh, mlp, cache);
}

// Density only: the colour branch is skipped. Used by occupancy refresh.
template <class T>
T mlp_density(std::span<const T> z, const ShallowMlp<T>& mlp) {
  using M = ShallowMlp<T>;
  if (z.size() != mlp.feature_size()) throw ShapeError("mlp_density: feature length mismatch");
  const std::span<const T> w = mlp.params();
  const std::size_t nf = mlp.feature_size();
  T logit;
  if (mlp.density_layers() == 2) {
    std::array<T, 16> hidden;
    detail::matvec(&w[mlp.density_in_offset()], M::kGeoWidth, nf, z.data(), hidden.data());
    for (auto& h : hidden) h = std::max(h, T(0));
    logit = T(0);
    for (std::size_t c = 0; c < M::kGeoWidth; ++c) logit += w[mlp.density_out_offset() + c] * hidden[c];
  } else {
    logit = T(0);
    for (std::size_t c = 0; c < nf; ++c) logit += w[c] * z[c];
  }
  return std::exp(std::clamp(logit, -M::kLogitClamp, M::kLogitClamp));
}

// Accumulates weight gradients into `grad_weights` (layout of params()) and
// overwrites `dz` with the gradient w.r.t. the feature vector.
template <class T>
void mlp_backward(const MlpCache<T>& cache, const ShallowMlp<T>& mlp, const std::array<T, 3>& dcolor,
                  T dsigma, std::span<T> grad_weights, std::span<T> dz) {
  using M = ShallowMlp<T>;
  const std::span<const T> w = mlp.params();
  if (cache.owner != w.data() || cache.z.size() != mlp.feature_size())
    throw ShapeError("mlp_backward: cache does not belong to this network");
  if (grad_weights.size() != mlp.parameter_count()) throw ShapeError("mlp_backward: gradient buffer size");
  if (dz.size() != mlp.feature_size()) throw ShapeError("mlp_backward: dz size");
  const std::size_t nf = mlp.feature_size();

  std::array<T, 3> dlogit;
  for (std::size_t k = 0; k < 3; ++k) dlogit[k] = dcolor[k] * cache.color[k] * (T(1) - cache.color[k]);
  std::array<T, 16> hidden;
  for (std::size_t i = 0; i < 16; ++i) hidden[i] = std::max(cache.hidden_pre[i], T(0));
  std::array<T, 16> dhidden;
  detail::matvec_backward(&w[mlp.color_out_offset()], 3, M::kHidden, hidden.data(), dlogit.data(),
                          &grad_weights[mlp.color_out_offset()], dhidden.data());
  for (std::size_t i = 0; i < 16; ++i)
    if (!(cache.hidden_pre[i] > T(0))) dhidden[i] = T(0);
  std::array<T, M::kColorIn> dcolor_in;
  detail::matvec_backward(&w[mlp.color_hidden_offset()], M::kHidden, M::kColorIn, cache.color_in.data(),
                          dhidden.data(), &grad_weights[mlp.color_hidden_offset()], dcolor_in.data());

  std::array<T, 16> dgeo;
  std::copy(dcolor_in.begin() + kShCoeffs, dcolor_in.end(), dgeo.begin());
  const T logit = cache.geo[0];
  if (logit >= -M::kLogitClamp && logit <= M::kLogitClamp) dgeo[0] += dsigma * cache.sigma;

  if (mlp.density_layers() == 2) {
    std::array<T, 16> act;
    for (std::size_t i = 0; i < 16; ++i) act[i] = std::max(cache.density_hidden[i], T(0));
    std::array<T, 16> dact;
    detail::matvec_backward(&w[mlp.density_out_offset()], M::kGeoWidth, M::kGeoWidth, act.data(), dgeo.data(),
                            &grad_weights[mlp.density_out_offset()], dact.data());
    for (std::size_t i = 0; i < 16; ++i)
      if (!(cache.density_hidden[i] > T(0))) dact[i] = T(0);
    detail::matvec_backward(&w[mlp.density_in_offset()], M::kGeoWidth, nf, cache.z.data(), dact.data(),
                            &grad_weights[mlp.density_in_offset()], dz.data());
  } else {
    detail::matvec_backward(&w[mlp.density_in_offset()], M::kGeoWidth, nf, cache.z.data(), dgeo.data(),
                            &grad_weights[mlp.density_in_offset()], dz.data());
  }
}

}  // namespace ppng
