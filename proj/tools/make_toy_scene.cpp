// Copyright 2026 The PPNG Authors
// SPDX-License-Identifier: Apache-2.0

// Writes the analytic sphere-and-disc scene as train/ and test/ datasets.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "ppng/toy_scene.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Render the analytic toy scene into NeRF-style dataset folders", "make_toy_scene"};
  std::filesystem::path out;
  std::size_t views = 25, resolution = 64;
  app.add_option("--out", out, "Output directory (train/ and test/ are created inside)")->required();
  app.add_option("--views", views, "Total views; every fifth is held out")->capture_default_str()->check(CLI::Range(5, 10000));
  app.add_option("--resolution", resolution, "Image width and height")->capture_default_str()->check(CLI::Range(1, 4096));
  CLI11_PARSE(app, argc, argv);

  try {
    const ppng::ToySplit split = ppng::make_toy_dataset({}, views, resolution);
    ppng::write_dataset(split.train, out / "train");
    ppng::write_dataset(split.test, out / "test");
  } catch (const ppng::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  std::cout << "wrote " << (out / "train").string() << " and " << (out / "test").string() << "\n";
  return 0;
}
