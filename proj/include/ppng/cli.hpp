// Copyright 2026 The PPNG Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Command-line front end: train, render, convert, inspect, eval, serve.
//
// Exit codes: 0 ok, 1 usage, 2 dataset, 3 IO/codec, 4 divergence, 5 serve.

#include <sys/socket.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <locale>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "ppng/codec.hpp"
#include "ppng/dataset.hpp"
#include "ppng/image_io.hpp"
#include "ppng/model.hpp"
#include "ppng/toy_scene.hpp"
#include "ppng/trainer.hpp"

namespace ppng {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitDataset = 2,
  kExitCodec = 3,
  kExitDivergence = 4,
  kExitServe = 5,
};

class ServeError : public Error {
 public:
  using Error::Error;
};

// Thousands separators: 1229872 -> "1,229,872".
inline std::string group_digits(std::size_t v) {
  std::string s = std::to_string(v);
  for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

inline std::size_t default_rank(PpngType t) {
  switch (t) {
    case PpngType::kCp: return 8;
    case PpngType::kTriplane: return 2;
    default: return 0;
  }
}

// Per-sample step as a fraction of the AABB diagonal.
inline RayMarchConfig march_config(std::size_t samples_per_diagonal, std::size_t workers) {
  RayMarchConfig cfg;
  cfg.workers = workers ? workers : default_thread_count();
  if (samples_per_diagonal == 0) throw DomainError("samples per diagonal must be positive");
  cfg.step = 0.0;
  cfg.steps_per_diagonal = static_cast<double>(samples_per_diagonal);
  return cfg;
}

// --pose accepts inline JSON or a path to a JSON file holding either a 4x4
// camera-to-world matrix or an object with "transform_matrix" and optionally
// "camera_angle_x".
inline Camera parse_pose(const std::string& spec, double fov_x, std::size_t width, std::size_t height) {
  nlohmann::json j;
  try {
    const auto first = spec.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && (spec[first] == '[' || spec[first] == '{')) {
      j = nlohmann::json::parse(spec);
    } else {
      std::ifstream in(spec);
      if (!in) throw DomainError("cannot open pose file '" + spec + "'");
      in >> j;
    }
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("bad pose JSON: ") + e.what());
  }
  if (j.is_object()) {
    if (j.contains("camera_angle_x") && j["camera_angle_x"].is_number()) fov_x = j["camera_angle_x"].get<double>();
    if (!j.contains("transform_matrix")) throw DomainError("pose object needs transform_matrix");
    j = j["transform_matrix"];
  }
  std::array<double, 16> m{};
  if (!j.is_array() || j.size() != 4) throw DomainError("pose must be a 4x4 matrix");
  for (std::size_t r = 0; r < 4; ++r) {
    if (!j[r].is_array() || j[r].size() != 4) throw DomainError("pose must be a 4x4 matrix");
    for (std::size_t c = 0; c < 4; ++c) {
      if (!j[r][c].is_number()) throw DomainError("pose entries must be numbers");
      m[r * 4 + c] = j[r][c].get<double>();
    }
  }
  return Camera(m, fov_x, width, height);
}

// "azimuth,elevation,radius" in degrees and scene units, aimed at the AABB centre.
inline Camera parse_orbit(const std::string& spec, const Aabb& aabb, double fov_x, std::size_t width,
                          std::size_t height) {
  std::vector<double> v;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(part, &used));
      if (part.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw DomainError("bad orbit component '" + part + "'");
    }
  }
  if (v.size() != 3) throw DomainError("orbit must be \"azimuth,elevation,radius\"");
  if (!(v[2] > 0.0)) throw DomainError("orbit radius must be positive");
  return orbit_camera(v[0], v[1], v[2], aabb.center(), fov_x, width, height);
}

inline void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& trace) {
  std::ofstream out(path);
  if (!out) throw ImageIoError("cannot write '" + path.string() + "'");
  out << "step,loss,psnr_estimate\n";
  out << std::setprecision(9);
  for (const auto& r : trace) out << r.step << "," << r.loss << "," << r.psnr << "\n";
}

inline void print_summary(std::ostream& out, const ModelSummary& s) {
  out << "ppng_type: " << static_cast<int>(s.type) << "\n";
  out << "Q: " << s.dims.q << "\n";
  out << "L: " << s.dims.levels << "\n";
  out << "D: " << s.dims.channels << "\n";
  out << "R: " << s.dims.rank << "\n";
  out << "params: " << group_digits(s.field_params + s.mlp_params) << " (field " << group_digits(s.field_params)
      << " + mlp " << group_digits(s.mlp_params) << ")\n";
  out << "payload_bytes: " << group_digits(s.payload_bytes) << "\n";
  if (s.file_bytes) out << "file_bytes: " << group_digits(s.file_bytes) << "\n";
  std::ostringstream fill;
  fill << std::fixed << std::setprecision(2) << 100.0 * s.occupancy_fill;
  out << "occupancy: " << s.occupancy_resolution << "^3, fill " << fill.str() << "%, rle " << group_digits(s.rle_bytes)
      << " bytes\n";
}

struct ServeOptions {
  std::filesystem::path model;
  std::filesystem::path viewer;
  std::string host = "127.0.0.1";
  int port = 8080;
};

// Binds, then calls `on_ready` (if set) before blocking in the accept loop.
// Throws ServeError if the address cannot be bound.
inline void serve(const ServeOptions& opt, const std::function<void(httplib::Server&)>& on_ready = {}) {
  httplib::Server srv;
  // Exclusive bind so a second server on the same port fails.
  srv.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  srv.set_file_extension_and_mimetype_mapping("ppng", "application/octet-stream");
  srv.set_file_extension_and_mimetype_mapping("js", "text/javascript");
  srv.set_file_extension_and_mimetype_mapping("mjs", "text/javascript");
  srv.set_file_extension_and_mimetype_mapping("wasm", "application/wasm");

  const auto model_bytes = std::make_shared<std::vector<std::uint8_t>>(read_file_bytes(opt.model));
  decode_model<float>(*model_bytes);  // refuse to serve a file the viewer would reject
  const std::string model_name = opt.model.filename().string();
  auto send_model = [model_bytes](const httplib::Request&, httplib::Response& res) {
    res.set_content(reinterpret_cast<const char*>(model_bytes->data()), model_bytes->size(),
                    "application/octet-stream");
  };
  srv.Get("/model.ppng", send_model);
  if (model_name != "model.ppng") srv.Get("/" + model_name, send_model);

  if (!opt.viewer.empty()) {
    if (!std::filesystem::is_directory(opt.viewer))
      throw ImageIoError("viewer directory '" + opt.viewer.string() + "' does not exist");
    srv.set_mount_point("/", opt.viewer.string());
  } else {
    srv.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("<!doctype html><title>ppng</title><p><a href=\"/model.ppng\">model.ppng</a></p>\n",
                      "text/html");
    });
  }

  if (!srv.bind_to_port(opt.host, opt.port))
    throw ServeError("cannot bind " + opt.host + ":" + std::to_string(opt.port) + " (port in use?)");
  if (on_ready) on_ready(srv);
  srv.listen_after_bind();
}

struct CliHooks {
  std::function<void(httplib::Server&)> on_serve_ready;
};

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
                   const CliHooks& hooks = {}) {
  CLI::App app{"Fourier-feature radiance fields: train, render, convert and serve .ppng scenes", "ppng"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // train
  std::filesystem::path dataset, out_path, loss_csv;
  int type_int = 3;
  std::size_t q = 80, levels = 4, channels = 4, rank = 0, steps = 2000, batch = 4096, samples = 512;
  std::size_t occ_res = 128, workers = 0;
  std::uint64_t seed = 0;
  double lr = 1e-2, occ_threshold = 0.01;
  auto* train_cmd = app.add_subcommand("train", "Fit a model to posed images");
  train_cmd->add_option("--dataset", dataset, "Dataset directory with transforms.json")->required();
  train_cmd->add_option("--type", type_int, "1 = CP, 2 = tri-plane, 3 = dense")->required()->check(CLI::Range(1, 3));
  train_cmd->add_option("--out", out_path, "Output .ppng file")->required();
  train_cmd->add_option("--q", q, "Lattice size per axis")->capture_default_str()->check(CLI::Range(2, 1024));
  train_cmd->add_option("--l", levels, "Frequency levels")->capture_default_str()->check(CLI::Range(1, 12));
  train_cmd->add_option("--d", channels, "Feature channels")->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--r", rank, "Factor rank (0 = 8 for type 1, 2 for type 2)")->capture_default_str();
  train_cmd->add_option("--steps", steps, "Optimisation steps")->capture_default_str();
  train_cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
  train_cmd->add_option("--batch", batch, "Rays per step")->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", lr, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
  train_cmd->add_option("--samples", samples, "Ray-march samples per AABB diagonal")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--occupancy-res", occ_res, "Occupancy grid resolution")
      ->capture_default_str()
      ->check(CLI::Range(1, 1024));
  train_cmd->add_option("--occupancy-threshold", occ_threshold, "Density threshold for occupied cells")
      ->capture_default_str();
  train_cmd->add_option("--loss-csv", loss_csv, "Loss trace CSV (default: <out>.loss.csv)");
  train_cmd->add_option("--workers", workers, "Worker threads (0 = all cores)")->capture_default_str()->check(CLI::NonNegativeNumber);

  // render
  std::filesystem::path model_path, png_path;
  std::string pose, orbit;
  std::size_t width = 800, height = 800;
  double fov = 0.6911112070083618;
  auto* render_cmd = app.add_subcommand("render", "Render a view of a model to PNG");
  render_cmd->add_option("--model", model_path, "Input .ppng file")->required();
  auto* pose_opt = render_cmd->add_option("--pose", pose, "Camera-to-world 4x4 matrix as JSON text or file");
  auto* orbit_opt = render_cmd->add_option("--orbit", orbit, "\"azimuth,elevation,radius\" in degrees around the AABB centre");
  pose_opt->excludes(orbit_opt);
  render_cmd->add_option("--width", width, "Image width")->capture_default_str()->check(CLI::PositiveNumber);
  render_cmd->add_option("--height", height, "Image height")->capture_default_str()->check(CLI::PositiveNumber);
  render_cmd->add_option("--fov", fov, "Horizontal field of view in radians")->capture_default_str();
  render_cmd->add_option("--samples", samples, "Ray-march samples per AABB diagonal")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  render_cmd->add_option("--out", png_path, "Output PNG")->required();
  render_cmd->add_option("--workers", workers, "Worker threads (0 = all cores)")->capture_default_str()->check(CLI::NonNegativeNumber);

  // convert
  std::filesystem::path in_path;
  auto* convert_cmd = app.add_subcommand("convert", "Compose a type 1/2 model into a dense type 3 model");
  convert_cmd->add_option("--in", in_path, "Input .ppng file")->required();
  convert_cmd->add_option("--out", out_path, "Output .ppng file")->required();
  convert_cmd->add_option("--workers", workers, "Worker threads (0 = all cores)")->capture_default_str()->check(CLI::NonNegativeNumber);

  // inspect
  auto* inspect_cmd = app.add_subcommand("inspect", "Print model type, sizes and occupancy");
  inspect_cmd->add_option("--model", model_path, "Input .ppng file")->required();

  // eval
  std::filesystem::path csv_path;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR of a model against every view of a dataset");
  eval_cmd->add_option("--model", model_path, "Input .ppng file")->required();
  eval_cmd->add_option("--dataset", dataset, "Dataset directory with transforms.json")->required();
  eval_cmd->add_option("--samples", samples, "Ray-march samples per AABB diagonal")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--out", csv_path, "Write the CSV here instead of stdout");
  eval_cmd->add_option("--workers", workers, "Worker threads (0 = all cores)")->capture_default_str()->check(CLI::NonNegativeNumber);

  // serve
  ServeOptions sopt;
  auto* serve_cmd = app.add_subcommand("serve", "Serve a model and an optional viewer bundle over HTTP (GET only)");
  serve_cmd->add_option("--model", sopt.model, "Model .ppng file, served at /model.ppng")->required();
  serve_cmd->add_option("--port", sopt.port, "TCP port")->capture_default_str()->check(CLI::Range(1, 65535));
  serve_cmd->add_option("--host", sopt.host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--viewer", sopt.viewer, "Directory of static viewer files served at /");

  // CLI11 wants argv[0] first; args here exclude it.
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train_cmd->parsed()) {
      PosedDataset ds = load_dataset(dataset);
      TrainConfig cfg;
      cfg.type = ppng_type_from_int(type_int);
      cfg.q = q;
      cfg.levels = levels;
      cfg.channels = channels;
      cfg.rank = cfg.type == PpngType::kDense ? 0 : (rank ? rank : default_rank(cfg.type));
      cfg.steps = steps;
      cfg.batch = batch;
      cfg.seed = seed;
      cfg.adam.lr = lr;
      cfg.occupancy_resolution = occ_res;
      cfg.occupancy_threshold = occ_threshold;
      cfg.march = march_config(samples, workers);
      cfg.workers = cfg.march.workers;
      const std::size_t report = std::max<std::size_t>(1, steps / 20);
      TrainResult res = train(ds, cfg, [&](const LossRecord& r) {
        if (r.step % report == 0 || r.step + 1 == steps)
          err << "step " << r.step << " loss " << r.loss << " psnr " << r.psnr << "\n";
      });
      save_model(res.model, out_path);
      std::filesystem::path csv = loss_csv;
      if (csv.empty()) csv = std::filesystem::path(out_path.string() + ".loss.csv");
      write_loss_csv(csv, res.trace);
      if (res.skipped_steps) err << "warning: " << res.skipped_steps << " steps skipped on non-finite gradients\n";
      out << "wrote " << out_path.string() << "\n";
    } else if (render_cmd->parsed()) {
      if (pose.empty() == orbit.empty()) throw DomainError("render needs exactly one of --pose or --orbit");
      const PpngModel<float> m = load_model(model_path);
      const Camera cam = pose.empty() ? parse_orbit(orbit, m.aabb, fov, width, height)
                                      : parse_pose(pose, fov, width, height);
      write_png(png_path, render_model(m, cam, march_config(samples, workers)));
      out << "wrote " << png_path.string() << "\n";
    } else if (convert_cmd->parsed()) {
      const auto bytes = read_file_bytes(in_path);
      const PpngModel<float> m = decode_model<float>(bytes);
      if (m.type() == PpngType::kDense) {
        err << "warning: " << in_path.string() << " is already type 3; copying unchanged\n";
        write_file_bytes(out_path, bytes);
      } else {
        save_model(convert_to_dense(m, workers ? workers : default_thread_count()), out_path);
      }
      out << "wrote " << out_path.string() << "\n";
    } else if (inspect_cmd->parsed()) {
      const auto bytes = read_file_bytes(model_path);
      print_summary(out, summarize(decode_model<float>(bytes), bytes.size()));
    } else if (eval_cmd->parsed()) {
      const PpngModel<float> m = load_model(model_path);
      const PosedDataset ds = load_dataset(dataset);
      const std::vector<double> psnr = evaluate_psnr(m, ds, march_config(samples, workers));
      std::ostringstream csv;
      csv << "view,psnr\n" << std::fixed << std::setprecision(4);
      double sum = 0.0;
      for (std::size_t i = 0; i < psnr.size(); ++i) {
        csv << i << "," << psnr[i] << "\n";
        sum += psnr[i];
      }
      csv << "mean," << sum / static_cast<double>(psnr.size()) << "\n";
      if (csv_path.empty()) {
        out << csv.str();
      } else {
        std::ofstream f(csv_path);
        if (!f) throw ImageIoError("cannot write '" + csv_path.string() + "'");
        f << csv.str();
        out << "wrote " << csv_path.string() << "\n";
      }
    } else if (serve_cmd->parsed()) {
      serve(sopt, [&](httplib::Server& srv) {
        out << "serving " << sopt.model.string() << " on http://" << sopt.host << ":" << sopt.port << "/\n";
        out.flush();
        if (hooks.on_serve_ready) hooks.on_serve_ready(srv);
      });
    }
  } catch (const DatasetError& e) {
    err << "dataset error: " << e.what() << "\n";
    return kExitDataset;
  } catch (const CodecError& e) {
    err << "codec error: " << e.what() << "\n";
    return kExitCodec;
  } catch (const ImageIoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitCodec;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return kExitCodec;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const ServeError& e) {
    err << "serve error: " << e.what() << "\n";
    return kExitServe;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace ppng
