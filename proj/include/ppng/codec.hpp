// Copyright 2026 The PPNG Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// `.ppng` scene files: one canonical CBOR map with small integer keys.
//
//   0  magic       text "PPNG"
//   1  version     uint (1)
//   2  ppng_type   uint 1 | 2 | 3
//   3  Q           uint
//   4  L           uint
//   5  D           uint
//   6  R           uint (0 for type 3)
//   7  freqs       array of L float32
//   8  aabb        array of 6 float32: min xyz, max xyz
//   9  params      map {0: array of 2L byte strings, one per cube,
//                       1: array of byte strings, one per decoder matrix}
//  10  occupancy   map {0: resolution uint, 1: RLE byte string}
//
// Tensor blobs are little-endian binary16 in the in-memory layouts of
// FourierVolumeSet / CpFactorSet / TriplaneFactorSet / ShallowMlp.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "ppng/cbor.hpp"
#include "ppng/field.hpp"
#include "ppng/half.hpp"
#include "ppng/mlp.hpp"
#include "ppng/model.hpp"
#include "ppng/renderer.hpp"

namespace ppng {

inline constexpr std::string_view kMagic = "PPNG";
inline constexpr std::uint64_t kFormatVersion = 1;

// ---------------------------------------------------------------------------
// Occupancy run-length encoding: alternating run lengths as unsigned LEB128,
// starting with a run of zeros (possibly empty), cells in x-fastest order.

inline std::vector<std::uint64_t> rle_runs(const OccupancyGrid& grid) {
  std::vector<std::uint64_t> runs;
  bool current = false;
  std::uint64_t run = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] == current) {
      ++run;
    } else {
      runs.push_back(run);
      current = !current;
      run = 1;
    }
  }
  runs.push_back(run);
  return runs;
}

inline void put_leb128(std::vector<std::uint8_t>& out, std::uint64_t v) {
  do {
    std::uint8_t b = v & 0x7fu;
    v >>= 7;
    if (v) b |= 0x80u;
    out.push_back(b);
  } while (v);
}

inline std::vector<std::uint8_t> rle_encode(const OccupancyGrid& grid) {
  std::vector<std::uint8_t> out;
  for (std::uint64_t r : rle_runs(grid)) put_leb128(out, r);
  return out;
}

inline std::vector<std::uint64_t> rle_decode_runs(std::span<const std::uint8_t> stream) {
  std::vector<std::uint64_t> runs;
  std::size_t i = 0;
  while (i < stream.size()) {
    std::uint64_t v = 0;
    int shift = 0;
    for (;;) {
      if (i >= stream.size()) throw CorruptStreamError("rle: truncated varint");
      if (shift > 63) throw CorruptStreamError("rle: varint overflow");
      const std::uint8_t b = stream[i++];
      v |= static_cast<std::uint64_t>(b & 0x7fu) << shift;
      shift += 7;
      if (!(b & 0x80u)) break;
    }
    runs.push_back(v);
  }
  return runs;
}

inline OccupancyGrid rle_decode(std::span<const std::uint8_t> stream, std::size_t resolution) {
  const std::uint64_t total = static_cast<std::uint64_t>(resolution) * resolution * resolution;
  const auto runs = rle_decode_runs(stream);
  OccupancyGrid grid(resolution, false);
  std::uint64_t pos = 0;
  bool value = false;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const std::uint64_t r = runs[k];
    if (r == 0 && k != 0) throw CorruptStreamError("rle: zero-length run");
    if (r > total - pos) throw CorruptStreamError("rle: runs exceed grid size");
    if (value)
      for (std::uint64_t i = 0; i < r; ++i) grid.set(static_cast<std::size_t>(pos + i), true);
    pos += r;
    value = !value;
  }
  if (pos != total)
    throw CorruptStreamError("rle: runs cover " + std::to_string(pos) + " cells, grid has " + std::to_string(total));
  return grid;
}

// ---------------------------------------------------------------------------

namespace detail {

template <class T>
std::vector<std::uint8_t> to_half_blob(std::span<const T> values) {
  std::vector<std::uint8_t> out(values.size() * 2);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::uint16_t h = float_to_half(static_cast<float>(values[i]));
    out[2 * i] = static_cast<std::uint8_t>(h & 0xffu);
    out[2 * i + 1] = static_cast<std::uint8_t>(h >> 8);
  }
  return out;
}

template <class T>
void from_half_blob(std::span<const std::uint8_t> blob, std::span<T> out, const char* what) {
  if (blob.size() != out.size() * 2)
    throw BlobLengthError(std::string("blob '") + what + "' has " + std::to_string(blob.size()) +
                          " bytes, expected " + std::to_string(out.size() * 2));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto h = static_cast<std::uint16_t>(blob[2 * i] | (blob[2 * i + 1] << 8));
    out[i] = static_cast<T>(half_to_float(h));
  }
}

inline const cbor::Value& require(const cbor::Value& map, std::uint64_t key, const char* name) {
  const cbor::Value* v = map.find(key);
  if (!v) throw MalformedFileError(std::string("missing field '") + name + "'");
  return *v;
}

inline std::uint64_t require_uint(const cbor::Value& map, std::uint64_t key, const char* name) {
  const auto* u = require(map, key, name).as_uint();
  if (!u) throw MalformedFileError(std::string("field '") + name + "' is not an unsigned integer");
  return *u;
}

inline std::vector<double> require_floats(const cbor::Value& map, std::uint64_t key, const char* name) {
  const auto* a = require(map, key, name).as_array();
  if (!a) throw MalformedFileError(std::string("field '") + name + "' is not an array");
  std::vector<double> out;
  for (const auto& v : *a) {
    const double* f = v.as_float();
    if (!f) throw MalformedFileError(std::string("field '") + name + "' holds a non-float");
    out.push_back(*f);
  }
  return out;
}

inline std::span<const std::uint8_t> require_bytes(const cbor::Value& v, const char* name) {
  const auto* b = v.as_bytes();
  if (!b) throw MalformedFileError(std::string("field '") + name + "' is not a byte string");
  return *b;
}

// Bytes of each cube's parameters in the field's storage layout.
template <class T>
std::size_t cube_param_count(const AnyField<T>& f) {
  return std::visit([](const auto& v) { return v.cube_size(); }, f);
}

}  // namespace detail

// Parameter bytes only: 2 bytes per field and decoder weight.
inline std::size_t payload_bytes(std::size_t field_params, std::size_t mlp_params) {
  return 2 * (field_params + mlp_params);
}

template <class T>
std::size_t payload_bytes(const PpngModel<T>& m) {
  return payload_bytes(m.field_parameter_count(), m.mlp.parameter_count());
}

template <class T>
std::vector<std::uint8_t> encode_model(const PpngModel<T>& m) {
  const FieldDims& dims = m.dims();
  if (m.freqs.levels() != dims.levels) throw ShapeError("encode: frequency levels do not match field");
  if (m.mlp.feature_size() != dims.feature_size()) throw ShapeError("encode: decoder input size mismatch");

  cbor::Writer w;
  w.map(11);
  w.uint(0);
  w.text(kMagic);
  w.uint(1);
  w.uint(kFormatVersion);
  w.uint(2);
  w.uint(static_cast<std::uint64_t>(m.type()));
  w.uint(3);
  w.uint(dims.q);
  w.uint(4);
  w.uint(dims.levels);
  w.uint(5);
  w.uint(dims.channels);
  w.uint(6);
  w.uint(m.type() == PpngType::kDense ? 0 : dims.rank);
  w.uint(7);
  w.array(m.freqs.levels());
  for (double f : m.freqs.freqs()) w.float32(static_cast<float>(f));
  w.uint(8);
  w.array(6);
  for (std::size_t a = 0; a < 3; ++a) w.float32(static_cast<float>(m.aabb.min[a]));
  for (std::size_t a = 0; a < 3; ++a) w.float32(static_cast<float>(m.aabb.max[a]));

  w.uint(9);
  w.map(2);
  w.uint(0);
  w.array(dims.cubes());
  const std::span<const T> fp = field_params(m.field);
  const std::size_t per_cube = detail::cube_param_count(m.field);
  for (std::size_t c = 0; c < dims.cubes(); ++c) w.bytes(detail::to_half_blob(fp.subspan(c * per_cube, per_cube)));
  w.uint(1);
  const auto shapes = m.mlp.matrix_shapes();
  w.array(shapes.size());
  std::size_t off = 0;
  for (const auto& [rows, cols] : shapes) {
    w.bytes(detail::to_half_blob(m.mlp.params().subspan(off, rows * cols)));
    off += rows * cols;
  }

  w.uint(10);
  w.map(2);
  w.uint(0);
  w.uint(m.occupancy.resolution());
  w.uint(1);
  w.bytes(rle_encode(m.occupancy));
  return w.take();
}

template <class T = float>
PpngModel<T> decode_model(std::span<const std::uint8_t> bytes) {
  cbor::Reader reader(bytes);
  const cbor::Value root = reader.read();
  if (!root.as_map()) throw BadMagicError("not a PPNG file (top-level item is not a map)");
  const cbor::Value* magic = root.find(0);
  if (!magic || !magic->as_text() || *magic->as_text() != kMagic) throw BadMagicError("not a PPNG file (bad magic)");
  if (!reader.at_end()) throw MalformedFileError("trailing bytes after scene map");

  const std::uint64_t version = detail::require_uint(root, 1, "version");
  if (version != kFormatVersion)
    throw UnsupportedVersionError("unsupported PPNG version " + std::to_string(version));

  const std::uint64_t type_raw = detail::require_uint(root, 2, "ppng_type");
  if (type_raw < 1 || type_raw > 3) throw MalformedFileError("ppng_type must be 1, 2 or 3");
  const auto type = static_cast<PpngType>(type_raw);
  FieldDims dims;
  dims.q = detail::require_uint(root, 3, "Q");
  dims.levels = detail::require_uint(root, 4, "L");
  dims.channels = detail::require_uint(root, 5, "D");
  dims.rank = detail::require_uint(root, 6, "R");
  if (type == PpngType::kDense && dims.rank != 0) throw MalformedFileError("type 3 files must declare R = 0");
  if (dims.q > 4096 || dims.channels > 4096 || dims.rank > 4096)
    throw MalformedFileError("declared dimensions are implausibly large");

  PpngModel<T> m;
  try {
    m.field = make_field<T>(type, dims);
    m.freqs = FrequencySchedule(detail::require_floats(root, 7, "freqs"));
  } catch (const ShapeError& e) {
    throw MalformedFileError(std::string("invalid dimensions: ") + e.what());
  } catch (const DomainError& e) {
    throw MalformedFileError(std::string("invalid frequencies: ") + e.what());
  }
  if (m.freqs.levels() != dims.levels) throw MalformedFileError("freqs length does not match L");

  const auto box = detail::require_floats(root, 8, "aabb");
  if (box.size() != 6) throw MalformedFileError("aabb must hold 6 floats");
  m.aabb = Aabb{{box[0], box[1], box[2]}, {box[3], box[4], box[5]}};
  if (m.aabb.degenerate()) throw MalformedFileError("aabb is degenerate");

  const cbor::Value& params = detail::require(root, 9, "params");
  const cbor::Value& cubes_v = detail::require(params, 0, "params.field");
  const auto* cubes = cubes_v.as_array();
  if (!cubes) throw MalformedFileError("params.field is not an array");
  if (cubes->size() != dims.cubes())
    throw BlobLengthError("expected " + std::to_string(dims.cubes()) + " cube blobs, found " +
                          std::to_string(cubes->size()));
  const std::span<T> fp = field_params(m.field);
  const std::size_t per_cube = detail::cube_param_count(m.field);
  for (std::size_t c = 0; c < dims.cubes(); ++c)
    detail::from_half_blob(detail::require_bytes((*cubes)[c], "cube"), fp.subspan(c * per_cube, per_cube), "cube");

  const auto* mats = detail::require(params, 1, "params.mlp").as_array();
  if (!mats) throw MalformedFileError("params.mlp is not an array");
  if (mats->size() != 3 && mats->size() != 4)
    throw BlobLengthError("decoder must have 3 or 4 weight matrices, found " + std::to_string(mats->size()));
  m.mlp = ShallowMlp<T>(dims.feature_size(), mats->size() == 4 ? 2 : 1);
  std::size_t off = 0;
  const auto shapes = m.mlp.matrix_shapes();
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const std::size_t n = shapes[i][0] * shapes[i][1];
    detail::from_half_blob(detail::require_bytes((*mats)[i], "mlp"), m.mlp.params().subspan(off, n), "mlp");
    off += n;
  }

  const cbor::Value& occ = detail::require(root, 10, "occupancy");
  const std::uint64_t res = detail::require_uint(occ, 0, "occupancy.resolution");
  if (res == 0 || res > 1024) throw MalformedFileError("occupancy resolution out of range");
  m.occupancy = rle_decode(detail::require_bytes(detail::require(occ, 1, "occupancy.rle"), "occupancy.rle"),
                           static_cast<std::size_t>(res));
  return m;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CodecError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CodecError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CodecError("write failed for '" + path.string() + "'");
}

template <class T>
void save_model(const PpngModel<T>& m, const std::filesystem::path& path) {
  write_file_bytes(path, encode_model(m));
}

template <class T = float>
PpngModel<T> load_model(const std::filesystem::path& path) {
  return decode_model<T>(read_file_bytes(path));
}

// Factorized -> dense. Composition runs in T from the (already half-exact)
// factors; the composed cubes are rounded to binary16 so that the dense model
// holds exactly what its file will store.
template <class T>
PpngModel<T> convert_to_dense(const PpngModel<T>& m, std::size_t workers = default_thread_count()) {
  PpngModel<T> out;
  FourierVolumeSet<T> dense = to_dense(m.field, workers);
  quantize_to_half(dense.params());
  out.field = std::move(dense);
  out.mlp = m.mlp;
  out.freqs = m.freqs;
  out.aabb = m.aabb;
  out.occupancy = m.occupancy;
  return out;
}

struct ModelSummary {
  PpngType type;
  FieldDims dims;
  std::size_t field_params = 0;
  std::size_t mlp_params = 0;
  std::size_t payload_bytes = 0;
  std::size_t rle_bytes = 0;
  std::size_t file_bytes = 0;
  std::size_t occupancy_resolution = 0;
  double occupancy_fill = 0.0;
};

template <class T>
ModelSummary summarize(const PpngModel<T>& m, std::size_t file_bytes = 0) {
  ModelSummary s;
  s.type = m.type();
  s.dims = m.dims();
  s.field_params = m.field_parameter_count();
  s.mlp_params = m.mlp.parameter_count();
  s.payload_bytes = payload_bytes(m);
  s.rle_bytes = rle_encode(m.occupancy).size();
  s.file_bytes = file_bytes;
  s.occupancy_resolution = m.occupancy.resolution();
  s.occupancy_fill = m.occupancy.fill_fraction();
  return s;
}

}  // namespace ppng
