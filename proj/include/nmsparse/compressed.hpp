// Copyright 2026 The nmsparse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nmsparse/core.hpp"

namespace nmsparse {

/// N:M compressed storage. Each whole block keeps its m-n surviving values
/// (ascending position) plus the positions packed log2(m) bits apiece,
/// LSB first. Tails shorter than m are stored raw.
///
/// File layout, little-endian:
///
///   offset  size      field
///   0       4         magic "NMSC"
///   4       2         version (1)
///   6       2         dtype (0 = IEEE-754 binary32)
///   8       1         n (pruned per block)
///   9       1         m (block length)
///   10      2         ndim
///   12      2         block axis
///   14      8 * ndim  shape, u64 per dimension
///   ...               per block: (m-n) f32 values, index_bytes() bytes
///   ...     4 * tail  dense tails of every fiber, fiber-major
struct CompressedSparseTensor {
  SparsityPattern pattern = SparsityPattern::two_four();
  std::vector<std::size_t> shape;
  std::size_t axis = 0;
  std::vector<float> values;          ///< kept values, block-major
  std::vector<std::uint8_t> indices;  ///< packed positions, block-major
  std::vector<float> tail;

  std::size_t block_count() const;
  std::size_t element_count() const;
  /// Bytes of block payload plus tail, header excluded.
  std::size_t payload_bytes() const;
  /// payload_bytes() over the dense binary32 payload.
  double compression_ratio() const;
};

inline constexpr char kCompressedMagic[4] = {'N', 'M', 'S', 'C'};
inline constexpr std::uint16_t kCompressedVersion = 1;

/// Index bytes per block: ceil((m - n) * log2(m) / 8).
std::size_t index_bytes(SparsityPattern pattern);
std::uint32_t pack_positions(std::span<const int> positions, int block_length);
std::vector<int> unpack_positions(std::uint32_t packed, int kept, int block_length);

/// `pruned` must already satisfy `pattern` along its block axis; a block
/// with more than m-n nonzero entries raises InvalidArgument. Values are
/// narrowed to binary32.
CompressedSparseTensor compress(const BlockedTensor& pruned,
                                SparsityPattern pattern);
BlockedTensor decompress(const CompressedSparseTensor& compressed);

std::vector<std::uint8_t> encode_compressed(const CompressedSparseTensor& c);
CompressedSparseTensor decode_compressed(std::span<const std::uint8_t> bytes);

void write_compressed(const std::filesystem::path& path,
                      const CompressedSparseTensor& c);
CompressedSparseTensor read_compressed(const std::filesystem::path& path);

}  // namespace nmsparse
