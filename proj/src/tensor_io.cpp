// Copyright 2026 The nmsparse Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsparse/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "byte_io.hpp"

namespace nmsparse {

namespace {

void write_header(detail::ByteWriter& w, const BlockedTensor& tensor) {
  for (char c : kTensorMagic) w.put_le(static_cast<std::uint8_t>(c));
  w.put_le(kTensorVersion);
  w.put_le(kDtypeFloat32);
  if (tensor.rank() > std::numeric_limits<std::uint16_t>::max()) {
    throw InvalidArgument("tensor rank too large for file format");
  }
  w.put_le(static_cast<std::uint16_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) w.put_le(static_cast<std::uint64_t>(d));
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const BlockedTensor& tensor) {
  detail::ByteWriter w;
  write_header(w, tensor);
  for (std::size_t i = 0; i < tensor.size(); ++i) {
    const auto value = static_cast<float>(tensor.data()[i]);
    if (!std::isfinite(value)) {
      throw InvalidArgument("value at index " + std::to_string(i) +
                            " is not representable as a finite binary32");
    }
    w.put_f32(value);
  }
  return w.take();
}

BlockedTensor decode_tensor(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  const auto magic = r.get_bytes(4, "header");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kTensorMagic))) {
    throw FormatError("bad magic");
  }
  const auto version = r.get_le<std::uint16_t>("header");
  if (version != kTensorVersion) {
    throw FormatError("unsupported version " + std::to_string(version));
  }
  const auto dtype = r.get_le<std::uint16_t>("header");
  if (dtype != kDtypeFloat32) {
    throw FormatError("unsupported dtype " + std::to_string(dtype));
  }
  const auto ndim = r.get_le<std::uint16_t>("header");
  std::vector<std::size_t> shape(ndim);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    const auto dim = r.get_le<std::uint64_t>("shape");
    d = static_cast<std::size_t>(dim);
    if (dim != 0 && count > std::numeric_limits<std::uint64_t>::max() / dim) {
      throw FormatError("shape overflows");
    }
    count *= dim;
  }
  if (count > r.remaining() / 4) throw FormatError("truncated payload");
  std::vector<double> data(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const float v = r.get_f32("payload");
    if (!std::isfinite(v)) {
      throw FormatError("non-finite value at element " + std::to_string(i));
    }
    data[i] = v;
  }
  if (r.remaining() != 0) {
    throw FormatError("trailing bytes after payload");
  }
  return BlockedTensor(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

BlockedTensor read_tensor(const std::filesystem::path& path) {
  return decode_tensor(read_file_bytes(path));
}

void write_tensor(const std::filesystem::path& path, const BlockedTensor& tensor) {
  write_file_bytes(path, encode_tensor(tensor));
}

}  // namespace nmsparse
