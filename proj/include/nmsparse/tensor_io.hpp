// Copyright 2026 The nmsparse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nmsparse/core.hpp"

namespace nmsparse {

/// Malformed file contents (bad magic, truncation, unsupported dtype, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// The file system refused a read or write.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Dense tensor file, little-endian throughout:
///
///   offset  size      field
///   0       4         magic "NMSP"
///   4       2         version (1)
///   6       2         dtype (0 = IEEE-754 binary32)
///   8       2         ndim
///   10      8 * ndim  shape, u64 per dimension
///   ...     4 * numel payload, row-major
///
/// Values are held as double in memory and narrowed to binary32 on write.
inline constexpr char kTensorMagic[4] = {'N', 'M', 'S', 'P'};
inline constexpr std::uint16_t kTensorVersion = 1;
inline constexpr std::uint16_t kDtypeFloat32 = 0;

std::vector<std::uint8_t> encode_tensor(const BlockedTensor& tensor);
BlockedTensor decode_tensor(std::span<const std::uint8_t> bytes);

BlockedTensor read_tensor(const std::filesystem::path& path);
void write_tensor(const std::filesystem::path& path, const BlockedTensor& tensor);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::uint8_t> bytes);

}  // namespace nmsparse
