// Copyright 2026 The PPNG Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Analytic test scene: a Lambertian sphere resting on a flat disc, lit by one
// directional light plus ambient, over a white background. The sphere albedo
// varies with azimuth and the disc carries concentric rings, so the scene is
// not separable along the axes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <limits>

#include "ppng/core.hpp"
#include "ppng/dataset.hpp"
#include "ppng/renderer.hpp"

namespace ppng {

struct ToyScene {
  Vec3<double> sphere_center{0.0, 0.0, 0.4};
  double sphere_radius = 0.4;
  Rgb sphere_albedo{0.85f, 0.25f, 0.15f};
  Rgb sphere_albedo_alt{0.2f, 0.75f, 0.3f};
  double sphere_lobes = 3.0;  // albedo cycles per turn of azimuth
  double disc_radius = 0.95;
  Rgb disc_albedo{0.25f, 0.45f, 0.8f};
  Rgb disc_albedo_alt{0.9f, 0.8f, 0.3f};
  double ring_period = 0.3;
  Vec3<double> light = normalized(Vec3<double>{0.4, -0.3, 0.85});
  double ambient = 0.3;
  Rgb background{1.0f, 1.0f, 1.0f};
  Aabb aabb{{-1.0, -1.0, -0.1}, {1.0, 1.0, 0.9}};

  static Rgb mix(const Rgb& a, const Rgb& b, double t) {
    return {static_cast<float>(a[0] + (b[0] - a[0]) * t), static_cast<float>(a[1] + (b[1] - a[1]) * t),
            static_cast<float>(a[2] + (b[2] - a[2]) * t)};
  }

  Rgb sphere_color(const Vec3<double>& n) const {
    const double t = 0.5 + 0.5 * std::cos(sphere_lobes * std::atan2(n.y, n.x));
    return mix(sphere_albedo, sphere_albedo_alt, t);
  }

  Rgb disc_color(const Vec3<double>& p) const {
    const double r = std::sqrt(p.x * p.x + p.y * p.y);
    const double t = 0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * r / ring_period);
    return mix(disc_albedo, disc_albedo_alt, t);
  }

  Rgb shade(const Rgb& albedo, const Vec3<double>& n) const {
    const double lambert = ambient + (1.0 - ambient) * std::max(0.0, dot(n, light));
    return {static_cast<float>(albedo[0] * lambert), static_cast<float>(albedo[1] * lambert),
            static_cast<float>(albedo[2] * lambert)};
  }

  Rgb trace(const Ray<double>& ray) const {
    double best = std::numeric_limits<double>::infinity();
    Rgb color = background;
    // Sphere.
    const Vec3<double> oc = ray.origin - sphere_center;
    const double b = dot(oc, ray.dir);
    const double c = dot(oc, oc) - sphere_radius * sphere_radius;
    const double disc = b * b - c;
    if (disc >= 0.0) {
      const double t = -b - std::sqrt(disc);
      if (t > 0.0) {
        best = t;
        const Vec3<double> n = normalized(ray.origin + ray.dir * t - sphere_center);
        color = shade(sphere_color(n), n);
      }
    }
    // Disc in the z = 0 plane, lit from whichever side faces the viewer.
    if (std::abs(ray.dir.z) > 1e-12) {
      const double t = -ray.origin.z / ray.dir.z;
      if (t > 0.0 && t < best) {
        const Vec3<double> p = ray.origin + ray.dir * t;
        if (p.x * p.x + p.y * p.y <= disc_radius * disc_radius) {
          const Vec3<double> n{0.0, 0.0, ray.dir.z < 0.0 ? 1.0 : -1.0};
          color = shade(disc_color(p), n);
        }
      }
    }
    return color;
  }

  Image render(const Camera& cam) const {
    Image img(cam.width(), cam.height());
    for (std::size_t y = 0; y < cam.height(); ++y)
      for (std::size_t x = 0; x < cam.width(); ++x) {
        const Rgb c = trace(cam.generate_ray<double>(x, y));
        float* px = img.pixel(x, y);
        px[0] = c[0];
        px[1] = c[1];
        px[2] = c[2];
      }
    return img;
  }
};

// Orbit camera: azimuth and elevation in degrees, looking at `target`.
inline Camera orbit_camera(double azimuth_deg, double elevation_deg, double radius, const Vec3<double>& target,
                           double fov_x, std::size_t width, std::size_t height) {
  const double az = azimuth_deg * std::numbers::pi / 180.0;
  const double el = elevation_deg * std::numbers::pi / 180.0;
  const Vec3<double> eye = target + Vec3<double>{radius * std::cos(el) * std::cos(az),
                                                 radius * std::cos(el) * std::sin(az), radius * std::sin(el)};
  return Camera::look_at(eye, target, fov_x, width, height);
}

struct ToySplit {
  PosedDataset train;
  PosedDataset test;
};

// Views on a golden-angle spiral over elevations 20..60 degrees; every fifth
// view (offset 2) is held out.
inline ToySplit make_toy_dataset(const ToyScene& scene = {}, std::size_t views = 25, std::size_t resolution = 64,
                                 double radius = 3.2, double fov_x = 0.7) {
  ToySplit out;
  out.train.aabb = out.test.aabb = scene.aabb;
  const Vec3<double> target{0.0, 0.0, 0.3};
  for (std::size_t i = 0; i < views; ++i) {
    const double az = std::fmod(137.50776405 * static_cast<double>(i), 360.0);
    const double el = 20.0 + 40.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(views);
    const Camera cam = orbit_camera(az, el, radius, target, fov_x, resolution, resolution);
    PosedDataset& dst = (i % 5 == 2) ? out.test : out.train;
    dst.cameras.push_back(cam);
    dst.images.push_back(scene.render(cam));
  }
  return out;
}

}  // namespace ppng
