// Copyright 2026 The PPNG Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// The subset of CBOR (RFC 8949) the scene container needs: unsigned/negative
// integers, byte and text strings, arrays, maps, float32/64 and simple
// values, definite lengths only. Encoding is canonical: shortest heads, and
// callers emit map keys in ascending order.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "ppng/core.hpp"
#include "ppng/half.hpp"

namespace ppng {

class CodecError : public Error {
 public:
  using Error::Error;
};
class BadMagicError : public CodecError {
 public:
  using CodecError::CodecError;
};
class UnsupportedVersionError : public CodecError {
 public:
  using CodecError::CodecError;
};
class BlobLengthError : public CodecError {
 public:
  using CodecError::CodecError;
};
class TruncatedFileError : public CodecError {
 public:
  using CodecError::CodecError;
};
class MalformedFileError : public CodecError {
 public:
  using CodecError::CodecError;
};
class CorruptStreamError : public CodecError {
 public:
  using CodecError::CodecError;
};

namespace cbor {

enum Major : std::uint8_t {
  kUnsigned = 0,
  kNegative = 1,
  kBytes = 2,
  kText = 3,
  kArray = 4,
  kMap = 5,
  kTag = 6,
  kSimple = 7,
};

class Writer {
 public:
  void head(Major major, std::uint64_t value) {
    const auto m = static_cast<std::uint8_t>(major << 5);
    if (value < 24) {
      out_.push_back(static_cast<std::uint8_t>(m | value));
    } else if (value <= 0xffu) {
      out_.push_back(m | 24);
      put_be(value, 1);
    } else if (value <= 0xffffu) {
      out_.push_back(m | 25);
      put_be(value, 2);
    } else if (value <= 0xffffffffu) {
      out_.push_back(m | 26);
      put_be(value, 4);
    } else {
      out_.push_back(m | 27);
      put_be(value, 8);
    }
  }

  void uint(std::uint64_t v) { head(kUnsigned, v); }
  void text(std::string_view s) {
    head(kText, s.size());
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void bytes(std::span<const std::uint8_t> b) {
    head(kBytes, b.size());
    out_.insert(out_.end(), b.begin(), b.end());
  }
  void array(std::size_t n) { head(kArray, n); }
  void map(std::size_t n) { head(kMap, n); }
  void float32(float f) {
    out_.push_back(static_cast<std::uint8_t>((kSimple << 5) | 26));
    put_be(std::bit_cast<std::uint32_t>(f), 4);
  }

  const std::vector<std::uint8_t>& data() const { return out_; }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void put_be(std::uint64_t v, int n) {
    for (int i = n - 1; i >= 0; --i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

struct Value;
using Array = std::vector<Value>;
using Map = std::vector<std::pair<Value, Value>>;

struct Null {};

// Byte strings are views into the decoded buffer, which must outlive them.
struct Value {
  std::variant<Null, std::uint64_t, std::int64_t, std::span<const std::uint8_t>, std::string, Array, Map,
               double, bool>
      v;

  bool is_uint() const { return std::holds_alternative<std::uint64_t>(v); }
  const std::uint64_t* as_uint() const { return std::get_if<std::uint64_t>(&v); }
  const std::string* as_text() const { return std::get_if<std::string>(&v); }
  const std::span<const std::uint8_t>* as_bytes() const { return std::get_if<std::span<const std::uint8_t>>(&v); }
  const Array* as_array() const { return std::get_if<Array>(&v); }
  const Map* as_map() const { return std::get_if<Map>(&v); }
  const double* as_float() const { return std::get_if<double>(&v); }

  // Integer-keyed lookup in a map value.
  const Value* find(std::uint64_t key) const {
    const Map* m = as_map();
    if (!m) return nullptr;
    for (const auto& [k, val] : *m)
      if (const auto* u = k.as_uint(); u && *u == key) return &val;
    return nullptr;
  }
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  Value read() { return read_item(0); }
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t position() const { return pos_; }

 private:
  static constexpr int kMaxDepth = 32;

  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw TruncatedFileError("cbor: unexpected end of data");
  }
  std::uint8_t byte() {
    need(1);
    return data_[pos_++];
  }
  std::uint64_t be(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 8) | data_[pos_++];
    return v;
  }
  std::uint64_t argument(std::uint8_t info) {
    if (info < 24) return info;
    switch (info) {
      case 24: return be(1);
      case 25: return be(2);
      case 26: return be(4);
      case 27: return be(8);
      default: throw MalformedFileError("cbor: indefinite lengths and reserved heads are not supported");
    }
  }
  std::size_t length(std::uint64_t n) {
    if (n > data_.size() - pos_) throw TruncatedFileError("cbor: length exceeds remaining data");
    return static_cast<std::size_t>(n);
  }

  Value read_item(int depth) {
    if (depth > kMaxDepth) throw MalformedFileError("cbor: nesting too deep");
    const std::uint8_t ib = byte();
    const auto major = static_cast<Major>(ib >> 5);
    const std::uint8_t info = ib & 0x1f;
    if (major == kSimple) {
      switch (info) {
        case 20: return {false};
        case 21: return {true};
        case 22: return {Null{}};
        case 25: {
          const auto h = static_cast<std::uint16_t>(be(2));
          return {static_cast<double>(half_to_float(h))};
        }
        case 26: return {static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(be(4))))};
        case 27: return {std::bit_cast<double>(be(8))};
        default: throw MalformedFileError("cbor: unsupported simple value");
      }
    }
    const std::uint64_t arg = argument(info);
    switch (major) {
      case kUnsigned: return {arg};
      case kNegative:
        if (arg > static_cast<std::uint64_t>(INT64_MAX)) throw MalformedFileError("cbor: negative out of range");
        return {-1 - static_cast<std::int64_t>(arg)};
      case kBytes: {
        const std::size_t n = length(arg);
        Value v{data_.subspan(pos_, n)};
        pos_ += n;
        return v;
      }
      case kText: {
        const std::size_t n = length(arg);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return {std::move(s)};
      }
      case kArray: {
        // Every element takes at least one byte.
        const std::size_t n = length(arg);
        Array a;
        a.reserve(n);
        for (std::size_t i = 0; i < n; ++i) a.push_back(read_item(depth + 1));
        return {std::move(a)};
      }
      case kMap: {
        const std::size_t n = length(arg);
        Map m;
        m.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
          Value k = read_item(depth + 1);
          Value val = read_item(depth + 1);
          m.emplace_back(std::move(k), std::move(val));
        }
        return {std::move(m)};
      }
      default: throw MalformedFileError("cbor: tags are not supported");
    }
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace cbor
}  // namespace ppng
