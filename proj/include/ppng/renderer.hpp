// Copyright 2026 The PPNG Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "ppng/core.hpp"
#include "ppng/mlp.hpp"
#include "ppng/parallel.hpp"

namespace ppng {

template <class T>
struct Ray {
  Vec3<T> origin;
  Vec3<T> dir;  // unit length
};

// Pinhole camera, OpenGL convention: looks along -Z, +Y up in camera space.
class Camera {
 public:
  Camera() = default;
  Camera(const std::array<double, 16>& c2w, double fov_x, std::size_t width, std::size_t height)
      : c2w_(c2w), fov_x_(fov_x), width_(width), height_(height) {
    if (!(fov_x > 0.0 && fov_x < std::numbers::pi)) throw DomainError("camera fov must lie in (0, pi)");
    if (width == 0 || height == 0) throw DomainError("camera image size must be positive");
    for (double v : c2w)
      if (!std::isfinite(v)) throw DomainError("camera pose is not finite");
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double d = 0.0;
        for (std::size_t k = 0; k < 3; ++k) d += c2w_[k * 4 + i] * c2w_[k * 4 + j];
        if (std::abs(d - (i == j ? 1.0 : 0.0)) > 1e-4)
          throw DomainError("camera rotation block is not orthonormal");
      }
  }

  // Camera at `eye` looking at `target`, world up +Z.
  static Camera look_at(Vec3<double> eye, Vec3<double> target, double fov_x, std::size_t width,
                        std::size_t height, Vec3<double> up = {0.0, 0.0, 1.0}) {
    const Vec3<double> back = normalized(eye - target);
    Vec3<double> right = cross(up, back);
    if (norm(right) < 1e-9) right = cross(Vec3<double>{0.0, 1.0, 0.0}, back);
    right = normalized(right);
    const Vec3<double> cam_up = cross(back, right);
    return Camera({right.x, cam_up.x, back.x, eye.x,  //
                   right.y, cam_up.y, back.y, eye.y,  //
                   right.z, cam_up.z, back.z, eye.z,  //
                   0.0, 0.0, 0.0, 1.0},
                  fov_x, width, height);
  }

  const std::array<double, 16>& c2w() const { return c2w_; }
  double fov_x() const { return fov_x_; }
  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  double focal() const { return 0.5 * static_cast<double>(width_) / std::tan(0.5 * fov_x_); }
  Vec3<double> position() const { return {c2w_[3], c2w_[7], c2w_[11]}; }

  template <class T = double>
  Ray<T> generate_ray(std::size_t px, std::size_t py) const {
    if (px >= width_ || py >= height_)
      throw DomainError("pixel (" + std::to_string(px) + ", " + std::to_string(py) + ") outside image");
    const double f = focal();
    const double cx = (static_cast<double>(px) + 0.5 - 0.5 * static_cast<double>(width_)) / f;
    const double cy = -(static_cast<double>(py) + 0.5 - 0.5 * static_cast<double>(height_)) / f;
    const Vec3<double> local{cx, cy, -1.0};
    Vec3<double> d;
    for (std::size_t r = 0; r < 3; ++r)
      d[r] = c2w_[r * 4 + 0] * local.x + c2w_[r * 4 + 1] * local.y + c2w_[r * 4 + 2] * local.z;
    return {position().cast<T>(), normalized(d).cast<T>()};
  }

 private:
  std::array<double, 16> c2w_{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
  double fov_x_ = std::numbers::pi / 2;
  std::size_t width_ = 1, height_ = 1;
};

// Binary G^3 grid over the scene AABB, x fastest.
class OccupancyGrid {
 public:
  static constexpr std::size_t kDefaultResolution = 128;

  OccupancyGrid() = default;
  explicit OccupancyGrid(std::size_t resolution, bool value = true)
      : resolution_(resolution), cells_(resolution * resolution * resolution, value ? 1 : 0) {
    if (resolution == 0) throw DomainError("occupancy resolution must be positive");
  }

  std::size_t resolution() const { return resolution_; }
  std::size_t size() const { return cells_.size(); }
  bool operator[](std::size_t i) const { return cells_[i] != 0; }
  void set(std::size_t i, bool v) { cells_[i] = v ? 1 : 0; }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return (z * resolution_ + y) * resolution_ + x;
  }

  template <class T>
  std::size_t cell_of(const Vec3<T>& unit) const {
    std::array<std::size_t, 3> ix;
    const T g = static_cast<T>(resolution_);
    for (std::size_t a = 0; a < 3; ++a) {
      const T u = unit[a] * g;
      ix[a] = u <= T(0) ? 0 : std::min(static_cast<std::size_t>(u), resolution_ - 1);
    }
    return index(ix[0], ix[1], ix[2]);
  }
  template <class T>
  bool occupied(const Vec3<T>& unit) const {
    return cells_[cell_of(unit)] != 0;
  }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
  }
  double fill_fraction() const { return cells_.empty() ? 0.0 : double(count()) / double(cells_.size()); }

  friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;

 private:
  std::size_t resolution_ = 0;
  std::vector<std::uint8_t> cells_;
};

struct RayMarchConfig {
  // World-space step. Zero selects diagonal / steps_per_diagonal of the scene AABB.
  double step = 0.0;
  double steps_per_diagonal = 512.0;
  double min_transmittance = 1e-4;
  Rgb background{1.0f, 1.0f, 1.0f};
  std::size_t workers = default_thread_count();

  double step_for(const Aabb& aabb) const {
    const double s = step > 0.0 ? step : aabb.diagonal() / steps_per_diagonal;
    if (!(s > 0.0)) throw DomainError("ray march step must be positive");
    return s;
  }
  void validate() const {
    if (!(step >= 0.0)) throw DomainError("ray march step must be positive");
    if (!(steps_per_diagonal > 0.0)) throw DomainError("steps per diagonal must be positive");
    if (!(min_transmittance > 0.0 && min_transmittance < 1.0))
      throw DomainError("transmittance threshold must lie in (0, 1)");
  }
};

// Anything that can be sampled by the marcher. Positions are in [0,1]^3.
template <class M, class T>
concept RadianceModel = requires(const M& m, Vec3<T> unit, Vec3<T> dir) {
  { m.sample(unit, dir) } -> std::convertible_to<RadianceSample<T>>;
};

template <class M, class T>
concept DensityModel = requires(const M& m, Vec3<T> unit) {
  { m.density(unit) } -> std::convertible_to<T>;
};

template <class T>
struct RayResult {
  std::array<T, 3> color{};
  T transmittance = T(1);
  T weight_sum = T(0);          // sum of T_k alpha_k
  std::size_t evaluated = 0;    // model evaluations
  std::size_t steps = 0;        // samples visited, including skipped ones
};

// Entry/exit distances of the ray through the box; false if it misses.
template <class T>
bool clip_ray(const Ray<T>& ray, const Aabb& box, T& t_near, T& t_far) {
  T t0 = T(0), t1 = std::numeric_limits<T>::infinity();
  for (std::size_t a = 0; a < 3; ++a) {
    const T o = ray.origin[a], d = ray.dir[a];
    const T lo = static_cast<T>(box.min[a]), hi = static_cast<T>(box.max[a]);
    if (d == T(0)) {
      if (o < lo || o > hi) return false;
      continue;
    }
    T ta = (lo - o) / d, tb = (hi - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  t_near = t0;
  t_far = t1;
  return t1 > t0;
}

// Sample k sits at t_near + (k + 1/2) dt; a segment of length N dt has N samples.
template <class T>
std::size_t sample_count(T t_near, T t_far, T dt) {
  const T n = std::ceil((t_far - t_near) / dt - T(0.5));
  return n > T(0) ? static_cast<std::size_t>(n) : 0;
}

// Fixed-step emission-absorption march. `eval(unit_pos, dir)` is called for
// every sample whose occupancy cell is set, in march order.
template <class T, class Eval>
RayResult<T> march_ray(const Ray<T>& ray, const Aabb& aabb, const OccupancyGrid& occ,
                       const RayMarchConfig& cfg, Eval&& eval) {
  RayResult<T> out;
  const T dt = static_cast<T>(cfg.step_for(aabb));
  const T threshold = static_cast<T>(cfg.min_transmittance);
  T t_near, t_far;
  if (clip_ray(ray, aabb, t_near, t_far)) {
    const std::size_t n = sample_count(t_near, t_far, dt);
    T trans = T(1);
    for (std::size_t k = 0; k < n; ++k) {
      ++out.steps;
      const T t = t_near + (static_cast<T>(k) + T(0.5)) * dt;
      const Vec3<T> unit = aabb.to_unit(ray.origin + ray.dir * t);
      if (!occ.occupied(unit)) continue;
      const RadianceSample<T> s = eval(unit, ray.dir);
      ++out.evaluated;
      const T survive = std::exp(-s.sigma * dt);
      const T w = trans * (T(1) - survive);
      for (std::size_t c = 0; c < 3; ++c) out.color[c] += w * s.color[c];
      out.weight_sum += w;
      trans *= survive;
      if (trans < threshold) break;
    }
    out.transmittance = trans;
  }
  for (std::size_t c = 0; c < 3; ++c) out.color[c] += out.transmittance * static_cast<T>(cfg.background[c]);
  return out;
}

template <class T, class Model>
  requires RadianceModel<Model, T>
RayResult<T> render_ray(const Ray<T>& ray, const Model& model, const Aabb& aabb, const OccupancyGrid& occ,
                        const RayMarchConfig& cfg) {
  return march_ray(ray, aabb, occ, cfg, [&](const Vec3<T>& u, const Vec3<T>& d) { return model.sample(u, d); });
}

struct Image {
  std::size_t width = 0, height = 0;
  std::vector<float> rgb;  // row-major, top row first, 3 floats per pixel

  Image() = default;
  Image(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 0.0f) {}
  float* pixel(std::size_t x, std::size_t y) { return &rgb[(y * width + x) * 3]; }
  const float* pixel(std::size_t x, std::size_t y) const { return &rgb[(y * width + x) * 3]; }
  friend bool operator==(const Image&, const Image&) = default;
};

struct RenderStats {
  std::size_t evaluated = 0;
  std::size_t steps = 0;
};

// Rows are split over workers; each pixel depends only on its own ray, so the
// image is identical for any worker count.
template <class T, class Model>
  requires RadianceModel<Model, T>
Image render_image(const Camera& cam, const Model& model, const Aabb& aabb, const OccupancyGrid& occ,
                   const RayMarchConfig& cfg, RenderStats* stats = nullptr) {
  cfg.validate();
  Image img(cam.width(), cam.height());
  std::vector<RenderStats> per_worker(std::max<std::size_t>(1, cfg.workers));
  parallel_chunks(cam.height(), cfg.workers, [&](std::size_t w, std::size_t y0, std::size_t y1) {
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = 0; x < cam.width(); ++x) {
        const RayResult<T> r = render_ray(cam.generate_ray<T>(x, y), model, aabb, occ, cfg);
        float* px = img.pixel(x, y);
        for (std::size_t c = 0; c < 3; ++c) px[c] = static_cast<float>(r.color[c]);
        per_worker[w].evaluated += r.evaluated;
        per_worker[w].steps += r.steps;
      }
  });
  if (stats) {
    *stats = {};
    for (const auto& s : per_worker) {
      stats->evaluated += s.evaluated;
      stats->steps += s.steps;
    }
  }
  return img;
}

// Thresholded snapshot: a cell is occupied iff the density at one jittered
// point inside it exceeds `threshold`.
template <class T, class Model>
  requires DensityModel<Model, T>
OccupancyGrid build_occupancy(const Model& model, std::size_t resolution, double threshold,
                              std::uint64_t seed = 0, std::size_t workers = default_thread_count()) {
  OccupancyGrid grid(resolution, false);
  const std::size_t g = resolution;
  parallel_chunks(g, workers, [&](std::size_t, std::size_t z0, std::size_t z1) {
    for (std::size_t z = z0; z < z1; ++z) {
      std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + z);
      std::uniform_real_distribution<double> jitter(0.0, 1.0);
      for (std::size_t y = 0; y < g; ++y)
        for (std::size_t x = 0; x < g; ++x) {
          const Vec3<T> unit{static_cast<T>((double(x) + jitter(rng)) / double(g)),
                             static_cast<T>((double(y) + jitter(rng)) / double(g)),
                             static_cast<T>((double(z) + jitter(rng)) / double(g))};
          grid.set(grid.index(x, y, z), model.density(unit) > static_cast<T>(threshold));
        }
    }
  });
  return grid;
}

inline double image_mse(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) throw ShapeError("image_mse: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = double(a.rgb[i]) - double(b.rgb[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.rgb.size());
}

inline double image_psnr(const Image& a, const Image& b) { return psnr_from_mse(image_mse(a, b)); }

inline double image_mean_abs_diff(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) throw ShapeError("image diff: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) s += std::abs(double(a.rgb[i]) - double(b.rgb[i]));
  return s / static_cast<double>(a.rgb.size());
}

}  // namespace ppng
