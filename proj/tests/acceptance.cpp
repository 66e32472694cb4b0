// Copyright 2026 The PPNG Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>

#include "grad_check.hpp"
#include "ppng/codec.hpp"
#include "ppng/toy_scene.hpp"
#include "ppng/trainer.hpp"
#include "test_support.hpp"

namespace ppng {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome parameter_counts() {
  struct Case {
    PpngType type;
    std::size_t rank, params, bytes;
  };
  std::string detail;
  bool ok = true;
  for (const Case c : {Case{PpngType::kCp, 8, 62'512, 125'024}, Case{PpngType::kTriplane, 2, 1'229'872, 2'459'744},
                       Case{PpngType::kDense, 0, 16'385'072, 32'770'144}}) {
    ModelInit init;
    init.field_scale = 0.0;
    const auto m = make_model<float>(c.type, {80, 4, 4, c.rank}, Aabb{}, init);
    const std::size_t file = encode_model(m).size();
    const std::size_t payload = payload_bytes(m);
    ok = ok && m.parameter_count() == c.params && payload == c.bytes && file >= payload && file - payload < 1024;
    detail += fmt("type %d: %zu params, %zu B payload, +%zu B framing; ", int(c.type), m.parameter_count(), payload,
                  file - payload);
  }
  return {ok, detail};
}

Outcome mlp_count() {
  const ShallowMlp<float> mlp(32);
  return {mlp.parameter_count() == 1072, fmt("%zu parameters", mlp.parameter_count())};
}

Outcome factor_dense_equivalence() {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const PpngType type = t % 2 ? PpngType::kCp : PpngType::kTriplane;
    const FieldDims dm{2 + rng() % 7, 1 + rng() % 3, 1 + rng() % 4, 1 + rng() % 4};
    const auto fac = testing::random_field<float>(type, dm, rng());
    const AnyField<float> dense = to_dense(fac, 1);
    const auto sched = FrequencySchedule::with_levels(dm.levels);
    for (int k = 0; k < 50; ++k) {
      const auto c = positional_encode(Vec3<float>{float(u(rng)), float(u(rng)), float(u(rng))}, sched);
      const auto a = query_feature(c, fac), b = query_feature(c, dense);
      for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, double(std::abs(a[i] - b[i])));
    }
  }
  return {worst < 1e-5, fmt("100 instances, max abs error %.3g", worst)};
}

Outcome composition_oracle() {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const FieldDims dm{2 + rng() % 7, 1 + rng() % 2, 1 + rng() % 4, 1 + rng() % 4};
    const auto cp_any = testing::random_field<float>(PpngType::kCp, dm, rng());
    const auto tp_any = testing::random_field<float>(PpngType::kTriplane, dm, rng());
    const auto& cp = std::get<CpFactorSet<float>>(cp_any);
    const auto& tp = std::get<TriplaneFactorSet<float>>(tp_any);
    const std::vector<double> cp_p(cp.params().begin(), cp.params().end());
    const std::vector<double> tp_p(tp.params().begin(), tp.params().end());
    for (std::size_t c = 0; c < dm.cubes(); ++c) {
      const auto a = compose_cp(cp, c);
      const auto wa = testing::oracle_compose_cp(cp_p, dm.q, dm.channels, dm.rank, c);
      const auto b = compose_triplane(tp, c);
      const auto wb = testing::oracle_compose_triplane(tp_p, dm.q, dm.channels, dm.rank, c);
      for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(double(a[i]) - wa[i]));
      for (std::size_t i = 0; i < b.size(); ++i) worst = std::max(worst, std::abs(double(b[i]) - wb[i]));
    }
  }
  return {worst < 1e-6, fmt("50 instances per factor form, max abs error %.3g", worst)};
}

Outcome gradient_suite() {
  std::uint64_t seed = 10;
  std::size_t configs = 0, params = 0, passed = 0, redraws = 0;
  double worst = 1.0;
  bool ok = true;
  for (PpngType type : {PpngType::kDense, PpngType::kCp, PpngType::kTriplane})
    for (std::size_t q : {2u, 3u})
      for (std::size_t l : {1u, 2u})
        for (std::size_t d : {1u, 2u})
          for (std::size_t r : {1u, 2u}) {
            if (type == PpngType::kDense && r == 2) continue;
            for (std::size_t layers : {1u, 2u}) {
              const std::uint64_t first = seed;
              const auto gc = testing::smooth_check(type, {q, l, d, type == PpngType::kDense ? 0 : r}, layers, seed,
                                                    1.2);
              redraws += seed - first - 1;
              ++configs;
              if (!gc || gc->max_samples < 1 || gc->max_samples > 3) {
                ok = false;
                continue;
              }
              params += gc->total;
              passed += gc->passed;
              worst = std::min(worst, gc->fraction());
              ok = ok && gc->fraction() >= 0.99;
            }
          }
  return {ok, fmt("%zu configs, %zu/%zu parameters within 1e-3, worst config %.2f%%, %zu kinked draws replaced",
                  configs, passed, params, 100.0 * worst, redraws)};
}

struct ConstantMedium {
  double sigma;
  RadianceSample<double> sample(Vec3<double>, Vec3<double>) const { return {{0.2, 0.4, 0.6}, sigma}; }
};

struct WavyMedium {
  RadianceSample<double> sample(Vec3<double> u, Vec3<double> d) const {
    return {{0.5 + 0.5 * std::sin(7 * u.x), 0.5 + 0.4 * d.z, u.z},
            20.0 * (1.0 + std::sin(9 * u.x + 4 * u.y) * std::cos(5 * u.z))};
  }
};

Outcome quadrature() {
  RayMarchConfig cfg;
  cfg.min_transmittance = 1e-300;
  cfg.workers = 1;
  const OccupancyGrid occ(4, true);
  double worst_t = 0.0;
  for (double sigma : {0.1, 0.7, 3.0})
    for (double step : {0.01, 0.037, 0.25}) {
      cfg.step = step;
      const auto r = render_ray(Ray<double>{{-5, 0.1, -0.2}, {1, 0, 0}}, ConstantMedium{sigma}, Aabb{}, occ, cfg);
      const double n = double(sample_count(4.0, 6.0, step));
      worst_t = std::max(worst_t, std::abs(r.transmittance - std::exp(-sigma * n * step)));
    }
  RayMarchConfig rc;
  rc.workers = 1;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1, 1);
  double worst_w = 0.0;
  for (int i = 0; i < 10'000; ++i) {
    const Vec3<double> o = testing::random_unit_dir(rng) * 3.0;
    const Vec3<double> t{0.5 * u(rng), 0.5 * u(rng), 0.5 * u(rng)};
    const auto r = render_ray(Ray<double>{o, normalized(t - o)}, WavyMedium{}, Aabb{}, OccupancyGrid(8, true), rc);
    worst_w = std::max(worst_w, std::abs(r.weight_sum + r.transmittance - 1.0));
  }
  return {worst_t < 1e-12 && worst_w < 1e-5,
          fmt("transmittance error %.3g, weight-sum error %.3g over 10000 rays", worst_t, worst_w)};
}

// Re-emits a decoded CBOR tree, letting `edit` replace any item.
void emit(cbor::Writer& w, const cbor::Value& v, const std::function<bool(cbor::Writer&, const cbor::Value&)>& edit) {
  if (edit(w, v)) return;
  if (const auto* u = v.as_uint()) {
    w.uint(*u);
  } else if (const auto* s = v.as_text()) {
    w.text(*s);
  } else if (const auto* b = v.as_bytes()) {
    w.bytes(*b);
  } else if (const auto* f = v.as_float()) {
    w.float32(static_cast<float>(*f));
  } else if (const auto* a = v.as_array()) {
    w.array(a->size());
    for (const auto& x : *a) emit(w, x, edit);
  } else if (const auto* m = v.as_map()) {
    w.map(m->size());
    for (const auto& [k, x] : *m) {
      emit(w, k, edit);
      emit(w, x, edit);
    }
  }
}

template <class Err>
bool rejects(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_model<float>(bytes);
  } catch (const Err&) {
    return true;
  } catch (const std::exception&) {
    return false;
  }
  return false;
}

Outcome codec() {
  std::mt19937_64 rng(3);
  std::size_t roundtrips = 0;
  bool ok = true;
  for (PpngType type : {PpngType::kCp, PpngType::kTriplane, PpngType::kDense})
    for (int i = 0; i < 20; ++i) {
      const FieldDims dm{2 + rng() % 6, 1 + rng() % 3, 1 + rng() % 4,
                         type == PpngType::kDense ? 0u : std::size_t(1 + rng() % 3)};
      auto m = testing::random_model<float>(type, dm, rng(), 2.0, 1 + rng() % 9);
      quantize_to_half(field_params(m.field));
      quantize_to_half(m.mlp.params());
      const auto bytes = encode_model(m);
      const auto back = decode_model<float>(bytes);
      const std::span<const float> pa = field_params(m.field), pb = field_params(back.field);
      const bool same = std::memcmp(pa.data(), pb.data(), pa.size_bytes()) == 0 && back.mlp == m.mlp &&
                        back.occupancy == m.occupancy && back.aabb == m.aabb && encode_model(back) == bytes;
      roundtrips += same;
      ok = ok && same;
    }

  std::size_t rle_cases = 0;
  for (std::size_t res : {1u, 5u, 16u, 37u}) {
    for (double p : {0.0, 0.1, 0.5, 0.9, 1.0}) {
      OccupancyGrid g(res, false);
      std::bernoulli_distribution b(p);
      for (std::size_t i = 0; i < g.size(); ++i) g.set(i, b(rng));
      ok = ok && rle_decode(rle_encode(g), res) == g;
      ++rle_cases;
    }
    for (int phase = 0; phase < 2; ++phase) {
      OccupancyGrid g(res, false);
      for (std::size_t i = 0; i < g.size(); ++i) g.set(i, (i + phase) % 2 == 1);
      ok = ok && rle_decode(rle_encode(g), res) == g;
      ++rle_cases;
    }
  }

  const auto clean = encode_model(testing::random_model<float>(PpngType::kTriplane, {3, 2, 2, 2}, 4));
  const cbor::Value root = cbor::Reader(clean).read();
  auto edited = [&](std::uint64_t key, const std::function<void(cbor::Writer&, const cbor::Value&)>& fn) {
    cbor::Writer w;
    const cbor::Value* target = root.find(key);
    emit(w, root, [&](cbor::Writer& ww, const cbor::Value& v) {
      if (&v != target) return false;
      fn(ww, v);
      return true;
    });
    return w.take();
  };
  auto with = [](std::vector<std::uint8_t> b, std::size_t at, std::uint8_t value) {
    b[at] = value;
    return b;
  };
  const auto first_cube = [](cbor::Writer& w, const cbor::Value& params, std::size_t drop) {
    const auto& cubes = *params.find(0)->as_array();
    const auto& mats = *params.find(1)->as_array();
    w.map(2);
    w.uint(0);
    w.array(cubes.size());
    for (std::size_t i = 0; i < cubes.size(); ++i) {
      const auto b = *cubes[i].as_bytes();
      w.bytes(i == 0 ? b.first(b.size() - drop) : b);
    }
    w.uint(1);
    w.array(mats.size());
    for (const auto& m : mats) w.bytes(*m.as_bytes());
  };
  std::vector<std::uint8_t> trailing = clean;
  trailing.push_back(0);
  const std::vector<std::uint8_t> truncated(clean.begin(), clean.end() - 7);
  const std::vector<std::pair<std::string, bool>> checks{
      {"magic", rejects<BadMagicError>(with(clean, 3, 'X'))},
      {"version", rejects<UnsupportedVersionError>(with(clean, 8, 2))},
      {"truncation", rejects<TruncatedFileError>(truncated)},
      {"blob length", rejects<BlobLengthError>(edited(9, [&](auto& w, const auto& v) { first_cube(w, v, 2); }))},
      {"rle", rejects<CorruptStreamError>(edited(10, [](auto& w, const auto&) {
         w.map(2);
         w.uint(0);
         w.uint(8);
         w.uint(1);
         const std::uint8_t bad[3] = {5, 0, 3};
         w.bytes(bad);
       }))},
      {"schema", rejects<MalformedFileError>(edited(2, [](auto& w, const auto&) { w.uint(7); }))},
      {"trailing", rejects<MalformedFileError>(trailing)},
  };
  std::string failed;
  for (const auto& [name, good] : checks)
    if (!good) failed += " " + name;
  ok = ok && failed.empty() && edited(1, [](auto& w, const auto&) { w.uint(1); }) == clean;
  return {ok, fmt("%zu/60 bitwise round trips, %zu RLE grids, corruption classes %s", roundtrips, rle_cases,
                  failed.empty() ? "all rejected correctly" : ("wrong for:" + failed).c_str())};
}

// ---------------------------------------------------------------------------
// Toy fit

TrainConfig toy_config(PpngType type) {
  TrainConfig cfg;
  cfg.type = type;
  cfg.q = 16;
  cfg.levels = 3;
  cfg.channels = 4;
  cfg.rank = type == PpngType::kCp ? 4 : 2;
  cfg.steps = 2000;
  cfg.batch = 512;
  cfg.occupancy_resolution = 64;
  cfg.occupancy_threshold = 0.1;
  cfg.march.steps_per_diagonal = 256;
  cfg.march.workers = default_thread_count();
  cfg.workers = default_thread_count();
  return cfg;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

}  // namespace
}  // namespace ppng

int main() {
  using namespace ppng;
  using Clock = std::chrono::steady_clock;
  int failures = 0;
  auto report = [&](const char* name, const Outcome& o, Clock::time_point t0) {
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("%s  %-28s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  };
  auto run = [&](const char* name, const std::function<Outcome()>& fn) {
    const auto t0 = Clock::now();
    report(name, fn(), t0);
  };

  run("parameter-count exactness", parameter_counts);
  run("mlp parameter count", mlp_count);
  run("factor/dense equivalence", factor_dense_equivalence);
  run("composition oracle", composition_oracle);
  run("gradient suite", gradient_suite);
  run("quadrature", quadrature);
  run("codec", codec);

  const auto t_fit = Clock::now();
  const ToySplit split = make_toy_dataset();
  RayMarchConfig render_cfg;
  double psnr[4] = {};
  PpngModel<float> dense_model;
  for (PpngType type : {PpngType::kDense, PpngType::kTriplane, PpngType::kCp}) {
    const auto t0 = Clock::now();
    const TrainResult res = train(split.train, toy_config(type));
    psnr[int(type)] = mean(evaluate_psnr(res.model, split.test, render_cfg));
    std::printf("      toy fit type %d: held-out PSNR %.2f dB, final batch loss %.5f (%.1f s)\n", int(type),
                psnr[int(type)], res.trace.back().loss, std::chrono::duration<double>(Clock::now() - t0).count());
    std::fflush(stdout);
    if (type == PpngType::kDense) dense_model = res.model;
  }
  const bool ordered = psnr[3] > psnr[2] && psnr[2] > psnr[1];
  report("end-to-end toy fit",
         {psnr[3] >= 25.0 && psnr[1] >= 22.0 && ordered,
          fmt("%zu train / %zu test views at 64x64; PPNG-3 %.2f dB (>= 25), PPNG-2 %.2f dB, PPNG-1 %.2f dB (>= 22), "
              "ordering 3 > 2 > 1 %s",
              split.train.size(), split.test.size(), psnr[3], psnr[2], psnr[1], ordered ? "holds" : "violated")},
         t_fit);

  const auto t_skip = Clock::now();
  std::size_t pruned = 0, full = 0;
  double mad = 0.0;
  PpngModel<float> all_occupied = dense_model;
  all_occupied.occupancy = OccupancyGrid(dense_model.occupancy.resolution(), true);
  for (const Camera& cam : split.test.cameras) {
    RenderStats a, b;
    const Image ia = render_model(dense_model, cam, render_cfg, &a);
    const Image ib = render_model(all_occupied, cam, render_cfg, &b);
    pruned += a.evaluated;
    full += b.evaluated;
    mad = std::max(mad, image_mean_abs_diff(ia, ib));
  }
  const double ratio = double(full) / double(std::max<std::size_t>(pruned, 1));
  report("empty-space skipping",
         {mad <= 2.0 / 255.0 && ratio >= 3.0,
          fmt("occupancy fill %.1f%%, field evaluations %zu -> %zu (%.2fx, >= 3), worst mean abs diff %.5f (<= %.5f)",
              100.0 * dense_model.occupancy.fill_fraction(), full, pruned, ratio, mad, 2.0 / 255.0)},
         t_skip);

  std::printf("%d of 9 criteria failed\n", failures);
  return failures ? 1 : 0;
}
