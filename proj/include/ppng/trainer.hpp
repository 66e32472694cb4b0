// Copyright 2026 The PPNG Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ppng/core.hpp"
#include "ppng/dataset.hpp"
#include "ppng/encoding.hpp"
#include "ppng/field.hpp"
#include "ppng/mlp.hpp"
#include "ppng/model.hpp"
#include "ppng/parallel.hpp"
#include "ppng/renderer.hpp"

namespace ppng {

class DivergenceError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Loss

template <class T>
struct HuberResult {
  T loss = T(0);
  std::array<T, 3> grad{};
};

// Per channel: r^2/2 if |r| <= delta else delta (|r| - delta/2); summed.
template <class T>
HuberResult<T> huber_loss(const std::array<T, 3>& pred, const std::array<T, 3>& target, T delta) {
  if (!(delta > T(0))) throw DomainError("huber delta must be positive");
  HuberResult<T> out;
  for (std::size_t c = 0; c < 3; ++c) {
    const T r = pred[c] - target[c];
    const T a = std::abs(r);
    if (a <= delta) {
      out.loss += T(0.5) * r * r;
      out.grad[c] = r;
    } else {
      out.loss += delta * (a - T(0.5) * delta);
      out.grad[c] = r > T(0) ? delta : -delta;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-15;
};

template <class T>
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(std::size_t n) : m_(n, T(0)), v_(n, T(0)) {}

  std::size_t size() const { return m_.size(); }
  std::size_t step_count() const { return step_; }
  std::span<const T> first_moment() const { return m_; }
  std::span<const T> second_moment() const { return v_; }

  // Bias-corrected update. A gradient holding any non-finite entry leaves
  // parameters and moments untouched; the step still counts. Returns whether
  // the update was applied.
  bool step(std::span<T> params, std::span<const T> grads, const AdamConfig& cfg) {
    if (params.size() != m_.size() || grads.size() != m_.size()) throw ShapeError("adam: shape mismatch");
    ++step_;
    if (!all_finite(grads)) return false;
    apply(params, grads, cfg);
    return true;
  }

  // Counts a step without touching anything (used when a sibling group was skipped).
  void skip() { ++step_; }

  // Update assuming the caller has already checked finiteness and counted the step.
  void apply(std::span<T> params, std::span<const T> grads, const AdamConfig& cfg) {
    const double t = static_cast<double>(step_);
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(cfg.beta1, t)));
    const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(cfg.beta2, t)));
    const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const T g = grads[i];
      m_[i] = b1 * m_[i] + (T(1) - b1) * g;
      v_[i] = b2 * v_[i] + (T(1) - b2) * g * g;
      const T mh = m_[i] * c1, vh = v_[i] * c2;
      params[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
  void count() { ++step_; }

 private:
  std::vector<T> m_, v_;
  std::size_t step_ = 0;
};

// ---------------------------------------------------------------------------
// Differentiable ray rendering

// Forward march with per-sample caches, and its exact reverse pass.
// Stopping on low transmittance is part of the forward function: samples past
// the stop point receive no gradient.
template <class T, class Field>
class RayBackprop {
 public:
  RayBackprop(const Field& field, const ShallowMlp<T>& mlp, const FrequencySchedule& freqs, const Aabb& aabb,
              const OccupancyGrid& occ, const RayMarchConfig& cfg)
      : field_(field), mlp_(mlp), freqs_(freqs), aabb_(aabb), occ_(occ), cfg_(cfg) {
    z_.resize(mlp.feature_size());
    dz_.resize(mlp.feature_size());
  }

  const RayResult<T>& forward(const Ray<T>& ray) {
    count_ = 0;
    const ShFeature<T> sh = sh_encode(ray.dir);
    dt_ = static_cast<T>(cfg_.step_for(aabb_));
    result_ = march_ray(ray, aabb_, occ_, cfg_, [&](const Vec3<T>& unit, const Vec3<T>&) {
      if (count_ == records_.size()) records_.emplace_back();
      Record& rec = records_[count_++];
      rec.coords = positional_encode(unit, freqs_);
      query_feature(rec.coords, field_, std::span<T>(z_));
      return mlp_forward(std::span<const T>(z_), sh, mlp_, rec.cache);
    });
    return result_;
  }

  std::size_t sample_count() const { return count_; }

  // d(loss)/d(pixel colour) -> accumulated parameter gradients.
  void backward(const std::array<T, 3>& dcolor, std::span<T> grad_field, std::span<T> grad_mlp) {
    if (dcolor[0] == T(0) && dcolor[1] == T(0) && dcolor[2] == T(0)) return;
    trans_.resize(count_ + 1);
    trans_[0] = T(1);
    for (std::size_t k = 0; k < count_; ++k) trans_[k + 1] = trans_[k] * std::exp(-records_[k].cache.sigma * dt_);

    // Suffix radiance S_{k+1} = sum_{j>k} w_j c_j + T_final * background.
    std::array<T, 3> suffix;
    for (std::size_t c = 0; c < 3; ++c) suffix[c] = trans_[count_] * static_cast<T>(cfg_.background[c]);
    for (std::size_t kk = count_; kk-- > 0;) {
      const Record& rec = records_[kk];
      const T w = trans_[kk] - trans_[kk + 1];
      std::array<T, 3> dc;
      T dsigma = T(0);
      for (std::size_t c = 0; c < 3; ++c) {
        dc[c] = w * dcolor[c];
        dsigma += dcolor[c] * dt_ * (trans_[kk + 1] * rec.cache.color[c] - suffix[c]);
        suffix[c] += w * rec.cache.color[c];
      }
      mlp_backward(rec.cache, mlp_, dc, dsigma, grad_mlp, std::span<T>(dz_));
      query_feature_backward(rec.coords, field_, std::span<const T>(dz_), grad_field);
    }
  }

 private:
  struct Record {
    SinusoidalCoords<T> coords;
    MlpCache<T> cache;
  };

  const Field& field_;
  const ShallowMlp<T>& mlp_;
  const FrequencySchedule& freqs_;
  const Aabb& aabb_;
  const OccupancyGrid& occ_;
  const RayMarchConfig& cfg_;
  std::vector<Record> records_;
  std::size_t count_ = 0;
  std::vector<T> z_, dz_, trans_;
  RayResult<T> result_;
  T dt_{};
};

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  PpngType type = PpngType::kDense;
  std::size_t q = 16;
  std::size_t levels = 3;
  std::size_t channels = 4;
  std::size_t rank = 4;
  std::size_t density_layers = 1;

  std::size_t steps = 2000;
  std::size_t batch = 4096;
  AdamConfig adam;
  double huber_delta = 0.1;
  double init_scale = 1e-4;

  std::size_t occupancy_resolution = 128;
  std::size_t occupancy_interval = 16;
  double occupancy_decay = 0.95;
  double occupancy_threshold = 0.01;

  RayMarchConfig march;  // also used for training rays
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  FieldDims dims() const { return {q, levels, channels, type == PpngType::kDense ? 0 : rank}; }

  void validate() const {
    if (q < 2 || levels < 1 || channels < 1 || batch < 1) throw DomainError("train config: sizes must be positive");
    if (type != PpngType::kDense && rank < 1) throw DomainError("train config: rank must be positive");
    if (!(huber_delta > 0.0)) throw DomainError("train config: huber delta must be positive");
    if (!(adam.lr > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
        !(adam.eps > 0.0))
      throw DomainError("train config: invalid Adam settings");
    if (occupancy_resolution < 1 || occupancy_interval < 1) throw DomainError("train config: occupancy settings");
    if (!(occupancy_decay >= 0.0 && occupancy_decay <= 1.0)) throw DomainError("train config: occupancy decay");
    march.validate();
  }
};

struct LossRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double psnr = 0.0;  // from the batch MSE
};

struct TrainResult {
  PpngModel<float> model;
  std::vector<LossRecord> trace;
  std::size_t skipped_steps = 0;
};

template <class T>
struct PixelRef {
  std::uint32_t image;
  std::uint32_t pixel;
};

// Running density cache behind the occupancy grid. The first refresh stores
// sigma at a jittered point per cell; later ones blend
// cache = decay * cache + (1 - decay) * sigma. Cells stay occupied while the
// cache exceeds the threshold.
class DensityCache {
 public:
  DensityCache(std::size_t resolution, double decay, double threshold)
      : resolution_(resolution), decay_(decay), threshold_(threshold),
        values_(resolution * resolution * resolution, 0.0f) {}

  template <class Model>
  void refresh(const Model& model, OccupancyGrid& grid, std::uint64_t seed, std::size_t workers) {
    const std::size_t g = resolution_;
    parallel_chunks(g, workers, [&](std::size_t, std::size_t z0, std::size_t z1) {
      for (std::size_t z = z0; z < z1; ++z) {
        std::mt19937_64 rng(seed ^ (0xD1B54A32D192ED03ull * (z + 1)));
        std::uniform_real_distribution<double> jitter(0.0, 1.0);
        for (std::size_t y = 0; y < g; ++y)
          for (std::size_t x = 0; x < g; ++x) {
            const Vec3<float> unit{static_cast<float>((double(x) + jitter(rng)) / double(g)),
                                   static_cast<float>((double(y) + jitter(rng)) / double(g)),
                                   static_cast<float>((double(z) + jitter(rng)) / double(g))};
            const std::size_t i = grid.index(x, y, z);
            const auto sigma = static_cast<float>(model.density(unit));
            values_[i] = primed_ ? static_cast<float>(decay_) * values_[i] + static_cast<float>(1.0 - decay_) * sigma
                                 : sigma;
            grid.set(i, values_[i] > threshold_);
          }
      }
    });
    primed_ = true;
  }

  std::span<const float> values() const { return values_; }

 private:
  bool primed_ = false;
  std::size_t resolution_;
  double decay_, threshold_;
  std::vector<float> values_;
};

class Trainer {
 public:
  using StepCallback = std::function<void(const LossRecord&)>;

  Trainer(const PosedDataset& data, TrainConfig cfg) : data_(data), cfg_(std::move(cfg)) {
    cfg_.validate();
    if (data_.size() == 0) throw DomainError("training needs at least one image");
    for (const auto& img : data_.images)
      if (img.width != data_.width() || img.height != data_.height())
        throw DomainError("training images must share one resolution");
    if (data_.aabb.degenerate()) throw DomainError("scene AABB is degenerate");

    ModelInit init;
    init.field_scale = cfg_.init_scale;
    init.density_layers = cfg_.density_layers;
    init.occupancy_resolution = cfg_.occupancy_resolution;
    init.seed = cfg_.seed;
    model_ = make_model<float>(cfg_.type, cfg_.dims(), data_.aabb, init);
    model_.occupancy = OccupancyGrid(cfg_.occupancy_resolution, true);
    adam_field_ = AdamState<float>(model_.field_parameter_count());
    adam_mlp_ = AdamState<float>(model_.mlp.parameter_count());
    cache_ = std::make_unique<DensityCache>(cfg_.occupancy_resolution, cfg_.occupancy_decay,
                                            cfg_.occupancy_threshold);
    rng_.seed(cfg_.seed ^ 0x5851F42D4C957F2Dull);
    const std::size_t per_image = data_.width() * data_.height();
    pixels_.resize(data_.size() * per_image);
    for (std::size_t i = 0; i < pixels_.size(); ++i)
      pixels_[i] = {static_cast<std::uint32_t>(i / per_image), static_cast<std::uint32_t>(i % per_image)};
    cursor_ = pixels_.size();
  }

  const PpngModel<float>& model() const { return model_; }
  PpngModel<float>& model() { return model_; }
  std::size_t step_count() const { return step_; }
  std::size_t skipped_steps() const { return skipped_; }

  // Runs one optimisation step and returns its batch statistics.
  LossRecord step() {
    const std::size_t batch = std::min(cfg_.batch, pixels_.size());
    batch_.clear();
    while (batch_.size() < batch) {
      if (cursor_ == pixels_.size()) {
        std::shuffle(pixels_.begin(), pixels_.end(), rng_);
        cursor_ = 0;
      }
      batch_.push_back(pixels_[cursor_++]);
    }

    const std::size_t workers = std::max<std::size_t>(1, std::min(cfg_.workers, batch));
    ensure_worker_buffers(workers);
    const double loss_sum = std::visit([&](const auto& field) { return run_batch(field, workers); }, model_.field);

    // Merge worker gradients in fixed worker order.
    for (std::size_t w = 1; w < workers; ++w) {
      add_into(grad_field_[0], grad_field_[w]);
      add_into(grad_mlp_[0], grad_mlp_[w]);
    }
    LossRecord rec;
    rec.step = step_;
    rec.loss = loss_sum / static_cast<double>(batch);
    rec.psnr = psnr_from_mse(sq_err_sum_ / static_cast<double>(3 * batch));
    if (!std::isfinite(rec.loss))
      throw DivergenceError("training diverged at step " + std::to_string(step_) + ": batch loss is not finite");

    const bool finite = all_finite(std::span<const float>(grad_field_[0])) &&
                        all_finite(std::span<const float>(grad_mlp_[0]));
    if (finite) {
      adam_field_.count();
      adam_mlp_.count();
      adam_field_.apply(field_params(model_.field), grad_field_[0], cfg_.adam);
      adam_mlp_.apply(model_.mlp.params(), grad_mlp_[0], cfg_.adam);
    } else {
      adam_field_.skip();
      adam_mlp_.skip();
      ++skipped_;
    }
    ++step_;
    if (step_ % cfg_.occupancy_interval == 0) refresh_occupancy();
    return rec;
  }

  TrainResult run(const StepCallback& on_step = {}) {
    TrainResult out;
    for (std::size_t s = 0; s < cfg_.steps; ++s) {
      LossRecord r = step();
      if (on_step) on_step(r);
      out.trace.push_back(r);
    }
    out.model = model_;
    out.skipped_steps = skipped_;
    return out;
  }

  void refresh_occupancy() {
    with_radiance(model_, [&](const auto& r) {
      cache_->refresh(r, model_.occupancy, cfg_.seed + 0x9E3779B97F4A7C15ull * (step_ + 1), cfg_.workers);
      return 0;
    });
  }

 private:
  template <class Field>
  double run_batch(const Field& field, std::size_t workers) {
    std::vector<double> losses(workers, 0.0), sq(workers, 0.0);
    const float inv_batch = 1.0f / static_cast<float>(batch_.size());
    const float delta = static_cast<float>(cfg_.huber_delta);
    parallel_chunks(batch_.size(), workers, [&](std::size_t w, std::size_t b, std::size_t e) {
      std::fill(grad_field_[w].begin(), grad_field_[w].end(), 0.0f);
      std::fill(grad_mlp_[w].begin(), grad_mlp_[w].end(), 0.0f);
      RayBackprop<float, Field> bp(field, model_.mlp, model_.freqs, model_.aabb, model_.occupancy, cfg_.march);
      for (std::size_t i = b; i < e; ++i) {
        const PixelRef<float>& pr = batch_[i];
        const Image& img = data_.images[pr.image];
        const std::size_t px = pr.pixel % img.width, py = pr.pixel / img.width;
        const Ray<float> ray = data_.cameras[pr.image].generate_ray<float>(px, py);
        const RayResult<float>& fw = bp.forward(ray);
        const float* t = img.pixel(px, py);
        const std::array<float, 3> target{t[0], t[1], t[2]};
        const HuberResult<float> h = huber_loss(fw.color, target, delta);
        losses[w] += h.loss;
        for (std::size_t c = 0; c < 3; ++c) sq[w] += double(fw.color[c] - target[c]) * double(fw.color[c] - target[c]);
        const std::array<float, 3> dcolor{h.grad[0] * inv_batch, h.grad[1] * inv_batch, h.grad[2] * inv_batch};
        bp.backward(dcolor, grad_field_[w], grad_mlp_[w]);
      }
    });
    sq_err_sum_ = std::accumulate(sq.begin(), sq.end(), 0.0);
    return std::accumulate(losses.begin(), losses.end(), 0.0);
  }

  void ensure_worker_buffers(std::size_t workers) {
    while (grad_field_.size() < workers) {
      grad_field_.emplace_back(model_.field_parameter_count(), 0.0f);
      grad_mlp_.emplace_back(model_.mlp.parameter_count(), 0.0f);
    }
  }

  static void add_into(std::vector<float>& dst, const std::vector<float>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  const PosedDataset& data_;
  TrainConfig cfg_;
  PpngModel<float> model_;
  AdamState<float> adam_field_, adam_mlp_;
  std::unique_ptr<DensityCache> cache_;
  std::vector<std::vector<float>> grad_field_, grad_mlp_;
  std::vector<PixelRef<float>> pixels_, batch_;
  std::size_t cursor_ = 0;
  std::mt19937_64 rng_;
  std::size_t step_ = 0, skipped_ = 0;
  double sq_err_sum_ = 0.0;
};

inline TrainResult train(const PosedDataset& data, const TrainConfig& cfg, const Trainer::StepCallback& cb = {}) {
  Trainer t(data, cfg);
  return t.run(cb);
}

// Mean PSNR of model renders against every view of `data`.
inline std::vector<double> evaluate_psnr(const PpngModel<float>& m, const PosedDataset& data,
                                         const RayMarchConfig& cfg) {
  std::vector<double> out;
  for (std::size_t i = 0; i < data.size(); ++i) out.push_back(image_psnr(render_model(m, data.cameras[i], cfg), data.images[i]));
  return out;
}

}  // namespace ppng
