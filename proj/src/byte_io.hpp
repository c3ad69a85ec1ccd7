// Copyright 2026 The nmsparse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nmsparse/tensor_io.hpp"

namespace nmsparse::detail {

class ByteWriter {
 public:
  template <typename T>
  void put_le(T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bytes_.push_back(static_cast<std::uint8_t>(
          static_cast<std::uint64_t>(value) >> (8 * i)));
    }
  }
  void put_f32(float value) { put_le(std::bit_cast<std::uint32_t>(value)); }
  void put_bytes(std::span<const std::uint8_t> data) {
    bytes_.insert(bytes_.end(), data.begin(), data.end());
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get_le(const char* what) {
    require(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  float get_f32(const char* what) {
    return std::bit_cast<float>(get_le<std::uint32_t>(what));
  }
  std::span<const std::uint8_t> get_bytes(std::size_t n, const char* what) {
    require(n, what);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void require(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(std::string("truncated ") + what);
    }
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace nmsparse::detail
