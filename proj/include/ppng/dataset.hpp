// Copyright 2026 The PPNG Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppng/core.hpp"
#include "ppng/image_io.hpp"
#include "ppng/renderer.hpp"

namespace ppng {

class DatasetError : public Error {
 public:
  using Error::Error;
};
class MissingFileError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class MalformedJsonError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class InconsistentResolutionError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

struct PosedDataset {
  std::vector<Image> images;
  std::vector<Camera> cameras;
  Aabb aabb;

  std::size_t size() const { return images.size(); }
  std::size_t width() const { return images.empty() ? 0 : images.front().width; }
  std::size_t height() const { return images.empty() ? 0 : images.front().height; }
};

// Scenes without an "aabb" entry get this cube (fits the NeRF-synthetic objects).
inline const Aabb kDefaultSceneAabb{{-1.5, -1.5, -1.5}, {1.5, 1.5, 1.5}};

namespace detail {

inline std::filesystem::path resolve_frame_path(const std::filesystem::path& dir, const std::string& rel) {
  std::filesystem::path p = dir / rel;
  if (std::filesystem::exists(p)) return p;
  if (!p.has_extension()) {
    std::filesystem::path png = p;
    png += ".png";
    if (std::filesystem::exists(png)) return png;
  }
  throw MissingFileError("image '" + p.string() + "' referenced by transforms does not exist");
}

inline std::array<double, 16> read_matrix(const nlohmann::json& m) {
  if (!m.is_array() || m.size() != 4) throw MalformedJsonError("transform_matrix must be 4x4");
  std::array<double, 16> out{};
  for (std::size_t r = 0; r < 4; ++r) {
    if (!m[r].is_array() || m[r].size() != 4) throw MalformedJsonError("transform_matrix must be 4x4");
    for (std::size_t c = 0; c < 4; ++c) {
      if (!m[r][c].is_number()) throw MalformedJsonError("transform_matrix entries must be numbers");
      out[r * 4 + c] = m[r][c].get<double>();
    }
  }
  return out;
}

}  // namespace detail

// Reads `<dir>/<file>` in the NeRF-synthetic schema: camera_angle_x,
// frames[].file_path, frames[].transform_matrix (camera-to-world). An optional
// "aabb": [[minx,miny,minz],[maxx,maxy,maxz]] sets the scene bounds.
inline PosedDataset load_dataset(const std::filesystem::path& dir, const std::string& file = "transforms.json") {
  const std::filesystem::path tpath = dir / file;
  std::ifstream in(tpath);
  if (!in) throw MissingFileError("cannot open '" + tpath.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedJsonError("cannot parse '" + tpath.string() + "': " + e.what());
  }

  PosedDataset ds;
  try {
    if (!j.contains("camera_angle_x") || !j["camera_angle_x"].is_number())
      throw MalformedJsonError("missing numeric camera_angle_x");
    if (!j.contains("frames") || !j["frames"].is_array() || j["frames"].empty())
      throw MalformedJsonError("missing or empty frames array");
    const double fov = j["camera_angle_x"].get<double>();

    ds.aabb = kDefaultSceneAabb;
    if (j.contains("aabb")) {
      const auto& b = j["aabb"];
      if (!b.is_array() || b.size() != 2 || b[0].size() != 3 || b[1].size() != 3)
        throw MalformedJsonError("aabb must be [[minx,miny,minz],[maxx,maxy,maxz]]");
      for (std::size_t a = 0; a < 3; ++a) {
        ds.aabb.min[a] = b[0][a].get<double>();
        ds.aabb.max[a] = b[1][a].get<double>();
      }
      if (ds.aabb.degenerate()) throw MalformedJsonError("aabb is degenerate");
    }

    for (const auto& fr : j["frames"]) {
      if (!fr.contains("file_path") || !fr["file_path"].is_string())
        throw MalformedJsonError("frame without file_path");
      if (!fr.contains("transform_matrix")) throw MalformedJsonError("frame without transform_matrix");
      const auto c2w = detail::read_matrix(fr["transform_matrix"]);
      Image img = read_png(detail::resolve_frame_path(dir, fr["file_path"].get<std::string>()));
      if (!ds.images.empty() && (img.width != ds.width() || img.height != ds.height()))
        throw InconsistentResolutionError("frame '" + fr["file_path"].get<std::string>() + "' is " +
                                          std::to_string(img.width) + "x" + std::to_string(img.height) +
                                          ", expected " + std::to_string(ds.width()) + "x" +
                                          std::to_string(ds.height()));
      try {
        ds.cameras.emplace_back(c2w, fov, img.width, img.height);
      } catch (const DomainError& e) {
        throw MalformedJsonError(std::string("invalid camera: ") + e.what());
      }
      ds.images.push_back(std::move(img));
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedJsonError("bad transforms schema: " + std::string(e.what()));
  } catch (const ImageIoError& e) {
    throw MissingFileError(e.what());
  }
  return ds;
}

// Writes images as PNG plus a transforms.json that load_dataset reads back.
inline void write_dataset(const PosedDataset& ds, const std::filesystem::path& dir,
                          const std::string& file = "transforms.json") {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["camera_angle_x"] = ds.cameras.empty() ? 0.0 : ds.cameras.front().fov_x();
  j["aabb"] = {{ds.aabb.min.x, ds.aabb.min.y, ds.aabb.min.z}, {ds.aabb.max.x, ds.aabb.max.y, ds.aabb.max.z}};
  j["frames"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::string name = "r_" + std::to_string(i);
    write_png(dir / (name + ".png"), ds.images[i]);
    nlohmann::json m = nlohmann::json::array();
    const auto& c = ds.cameras[i].c2w();
    for (std::size_t r = 0; r < 4; ++r) m.push_back({c[r * 4], c[r * 4 + 1], c[r * 4 + 2], c[r * 4 + 3]});
    j["frames"].push_back({{"file_path", "./" + name}, {"transform_matrix", m}});
  }
  std::ofstream out(dir / file);
  if (!out) throw MissingFileError("cannot write '" + (dir / file).string() + "'");
  out << j.dump(2) << "\n";
}

}  // namespace ppng
