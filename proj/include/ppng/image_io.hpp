// Copyright 2026 The PPNG Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "ppng/core.hpp"
#include "ppng/renderer.hpp"

namespace ppng {

class ImageIoError : public Error {
 public:
  using Error::Error;
};

inline std::uint8_t to_byte(float c) {
  const float v = std::clamp(c, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(255.0f * v));
}

inline std::vector<std::uint8_t> to_rgb8(const Image& img) {
  std::vector<std::uint8_t> out(img.rgb.size());
  std::transform(img.rgb.begin(), img.rgb.end(), out.begin(), to_byte);
  return out;
}

inline void write_png(const std::filesystem::path& path, const Image& img) {
  png_image pi;
  std::memset(&pi, 0, sizeof(pi));
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.width);
  pi.height = static_cast<png_uint_32>(img.height);
  pi.format = PNG_FORMAT_RGB;
  const auto bytes = to_rgb8(img);
  if (!png_image_write_to_file(&pi, path.string().c_str(), 0, bytes.data(), 0, nullptr))
    throw ImageIoError("cannot write PNG '" + path.string() + "': " + pi.message);
}

// 8-bit RGBA decode; alpha is composited over white. Values are v / 255.
inline Image read_png(const std::filesystem::path& path) {
  png_image pi;
  std::memset(&pi, 0, sizeof(pi));
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pi, path.string().c_str()))
    throw ImageIoError("cannot read PNG '" + path.string() + "': " + pi.message);
  pi.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&pi);
    throw ImageIoError("cannot decode PNG '" + path.string() + "': " + pi.message);
  }
  Image img(pi.width, pi.height);
  for (std::size_t i = 0; i < img.width * img.height; ++i) {
    const float a = buf[4 * i + 3] / 255.0f;
    for (std::size_t c = 0; c < 3; ++c) img.rgb[3 * i + c] = buf[4 * i + c] / 255.0f * a + (1.0f - a);
  }
  return img;
}

}  // namespace ppng
