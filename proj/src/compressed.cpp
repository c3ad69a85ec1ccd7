// Copyright 2026 The nmsparse Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsparse/compressed.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iterator>
#include <limits>
#include <numeric>

#include "byte_io.hpp"
#include "nmsparse/tensor_io.hpp"

namespace nmsparse {

namespace {

int position_bits(int block_length) { return std::countr_zero(
    static_cast<unsigned>(block_length)); }

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

std::size_t index_bytes(SparsityPattern pattern) {
  const int bits = pattern.kept() * position_bits(pattern.length());
  return static_cast<std::size_t>((bits + 7) / 8);
}

std::uint32_t pack_positions(std::span<const int> positions, int block_length) {
  const int bits = position_bits(block_length);
  std::uint32_t packed = 0;
  for (std::size_t k = 0; k < positions.size(); ++k) {
    packed |= static_cast<std::uint32_t>(positions[k]) << (k * bits);
  }
  return packed;
}

std::vector<int> unpack_positions(std::uint32_t packed, int kept,
                                  int block_length) {
  const int bits = position_bits(block_length);
  const std::uint32_t field = (1U << bits) - 1;
  std::vector<int> out(static_cast<std::size_t>(kept));
  for (int k = 0; k < kept; ++k) {
    out[k] = static_cast<int>((packed >> (k * bits)) & field);
  }
  return out;
}

std::size_t CompressedSparseTensor::block_count() const {
  return values.size() / static_cast<std::size_t>(pattern.kept());
}

std::size_t CompressedSparseTensor::element_count() const {
  return product(shape);
}

std::size_t CompressedSparseTensor::payload_bytes() const {
  return 4 * values.size() + indices.size() + 4 * tail.size();
}

double CompressedSparseTensor::compression_ratio() const {
  const std::size_t dense = 4 * element_count();
  return dense == 0 ? 1.0
                    : static_cast<double>(payload_bytes()) /
                          static_cast<double>(dense);
}

CompressedSparseTensor compress(const BlockedTensor& pruned,
                                SparsityPattern pattern) {
  const SplitTensor split = split_into_blocks(pruned, pattern);
  const int m = pattern.length();
  const auto kept = static_cast<std::size_t>(pattern.kept());
  const std::size_t nbytes = index_bytes(pattern);

  CompressedSparseTensor out;
  out.pattern = pattern;
  out.shape = split.layout.shape;
  out.axis = split.layout.axis;
  out.values.reserve(split.blocks.size() * kept);
  out.indices.reserve(split.blocks.size() * nbytes);

  std::vector<int> positions;
  for (std::size_t b = 0; b < split.blocks.size(); ++b) {
    const Block& block = split.blocks[b];
    std::array<float, kMaxBlockLength> narrow{};
    positions.clear();
    for (int i = 0; i < m; ++i) {
      narrow[i] = static_cast<float>(block[i]);
      // -0.0f counts as occupied so that it survives bit-exactly.
      if (std::bit_cast<std::uint32_t>(narrow[i]) != 0) positions.push_back(i);
    }
    if (positions.size() > kept) {
      throw InvalidArgument("pattern violation: block " + std::to_string(b) +
                            " holds " + std::to_string(positions.size()) +
                            " nonzeros, " + pattern.to_string() + " allows " +
                            std::to_string(kept));
    }
    for (int i = 0; i < m && positions.size() < kept; ++i) {
      if (std::find(positions.begin(), positions.end(), i) == positions.end()) {
        positions.push_back(i);
      }
    }
    std::sort(positions.begin(), positions.end());
    for (int i : positions) out.values.push_back(narrow[i]);
    const std::uint32_t packed = pack_positions(positions, m);
    for (std::size_t k = 0; k < nbytes; ++k) {
      out.indices.push_back(static_cast<std::uint8_t>(packed >> (8 * k)));
    }
  }
  for (double v : split.tail) out.tail.push_back(static_cast<float>(v));
  return out;
}

BlockedTensor decompress(const CompressedSparseTensor& c) {
  const BlockLayout layout = BlockLayout::make(c.shape, c.axis, c.pattern);
  const auto m = static_cast<std::size_t>(c.pattern.length());
  const auto kept = static_cast<std::size_t>(c.pattern.kept());
  const std::size_t nbytes = index_bytes(c.pattern);
  if (c.values.size() != layout.block_count() * kept ||
      c.indices.size() != layout.block_count() * nbytes ||
      c.tail.size() != layout.tail_count()) {
    throw FormatError("compressed payload sizes disagree with shape");
  }

  std::vector<double> data(layout.fiber_count() * layout.axis_length, 0.0);
  std::size_t b = 0;
  std::size_t next_tail = 0;
  for (std::size_t f = 0; f < layout.fiber_count(); ++f) {
    for (std::size_t k = 0; k < layout.blocks_per_fiber(); ++k, ++b) {
      std::uint32_t packed = 0;
      for (std::size_t j = 0; j < nbytes; ++j) {
        packed |= static_cast<std::uint32_t>(c.indices[b * nbytes + j]) << (8 * j);
      }
      const auto positions = unpack_positions(
          packed, static_cast<int>(kept), static_cast<int>(m));
      for (std::size_t j = 0; j < kept; ++j) {
        if (positions[j] >= static_cast<int>(m) ||
            (j > 0 && positions[j] <= positions[j - 1])) {
          throw FormatError("corrupt index byte in block " + std::to_string(b));
        }
        data[layout.offset(f, k * m + positions[j])] = c.values[b * kept + j];
      }
    }
    for (std::size_t k = layout.blocks_per_fiber() * m; k < layout.axis_length;
         ++k) {
      data[layout.offset(f, k)] = c.tail[next_tail++];
    }
  }
  return BlockedTensor(c.shape, std::move(data), static_cast<int>(c.axis));
}

std::vector<std::uint8_t> encode_compressed(const CompressedSparseTensor& c) {
  detail::ByteWriter w;
  for (char ch : kCompressedMagic) w.put_le(static_cast<std::uint8_t>(ch));
  w.put_le(kCompressedVersion);
  w.put_le(kDtypeFloat32);
  w.put_le(static_cast<std::uint8_t>(c.pattern.pruned()));
  w.put_le(static_cast<std::uint8_t>(c.pattern.length()));
  w.put_le(static_cast<std::uint16_t>(c.shape.size()));
  w.put_le(static_cast<std::uint16_t>(c.axis));
  for (std::size_t d : c.shape) w.put_le(static_cast<std::uint64_t>(d));

  const auto kept = static_cast<std::size_t>(c.pattern.kept());
  const std::size_t nbytes = index_bytes(c.pattern);
  for (std::size_t b = 0; b < c.block_count(); ++b) {
    for (std::size_t j = 0; j < kept; ++j) w.put_f32(c.values[b * kept + j]);
    w.put_bytes(std::span(c.indices).subspan(b * nbytes, nbytes));
  }
  for (float v : c.tail) w.put_f32(v);
  return w.take();
}

CompressedSparseTensor decode_compressed(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  const auto magic = r.get_bytes(4, "header");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kCompressedMagic))) {
    throw FormatError("bad magic");
  }
  const auto version = r.get_le<std::uint16_t>("header");
  if (version != kCompressedVersion) {
    throw FormatError("unsupported version " + std::to_string(version));
  }
  const auto dtype = r.get_le<std::uint16_t>("header");
  if (dtype != kDtypeFloat32) {
    throw FormatError("unsupported dtype " + std::to_string(dtype));
  }
  const int n = r.get_le<std::uint8_t>("header");
  const int m = r.get_le<std::uint8_t>("header");
  CompressedSparseTensor c;
  try {
    c.pattern = SparsityPattern::create(n, m);
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("bad pattern: ") + e.what());
  }
  const auto ndim = r.get_le<std::uint16_t>("header");
  c.axis = r.get_le<std::uint16_t>("header");
  c.shape.resize(ndim);
  for (auto& d : c.shape) d = static_cast<std::size_t>(r.get_le<std::uint64_t>("shape"));
  if (c.axis >= c.shape.size()) throw FormatError("block axis out of range");
  std::size_t numel = 1;
  for (std::size_t d : c.shape) {
    if (d != 0 && numel > std::numeric_limits<std::size_t>::max() / 4 / d) {
      throw FormatError("shape overflows");
    }
    numel *= d;
  }

  const BlockLayout layout = BlockLayout::make(c.shape, c.axis, c.pattern);
  const auto kept = static_cast<std::size_t>(c.pattern.kept());
  const std::size_t nbytes = index_bytes(c.pattern);
  const std::size_t per_block = 4 * kept + nbytes;
  if (layout.block_count() > r.remaining() / per_block) {
    throw FormatError("truncated payload");
  }
  c.values.reserve(layout.block_count() * kept);
  c.indices.reserve(layout.block_count() * nbytes);
  for (std::size_t b = 0; b < layout.block_count(); ++b) {
    for (std::size_t j = 0; j < kept; ++j) {
      c.values.push_back(r.get_f32("payload"));
    }
    const auto idx = r.get_bytes(nbytes, "payload");
    c.indices.insert(c.indices.end(), idx.begin(), idx.end());
  }
  if (layout.tail_count() > r.remaining() / 4) throw FormatError("truncated payload");
  for (std::size_t t = 0; t < layout.tail_count(); ++t) {
    c.tail.push_back(r.get_f32("payload"));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after payload");
  for (float v : c.values) {
    if (!std::isfinite(v)) throw FormatError("non-finite kept value");
  }
  for (float v : c.tail) {
    if (!std::isfinite(v)) throw FormatError("non-finite tail value");
  }
  return c;
}

void write_compressed(const std::filesystem::path& path,
                      const CompressedSparseTensor& c) {
  write_file_bytes(path, encode_compressed(c));
}

CompressedSparseTensor read_compressed(const std::filesystem::path& path) {
  return decode_compressed(read_file_bytes(path));
}

}  // namespace nmsparse
