// Copyright 2026 The nmsparse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nmsparse {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller passed a value that violates a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

inline constexpr std::size_t kMaxBlockLength = 8;

/// N:M fine-grained sparsity: `pruned` of every `length` contiguous elements
/// are zero, so `kept() == length - pruned` survive.
class SparsityPattern {
 public:
  /// Throws InvalidArgument unless 0 < pruned < length and length is 2, 4 or 8.
  static SparsityPattern create(int pruned, int length);
  /// Parses "N:M".
  static SparsityPattern parse(std::string_view text);

  static constexpr SparsityPattern one_two() { return {1, 2}; }
  static constexpr SparsityPattern two_four() { return {2, 4}; }
  static constexpr SparsityPattern four_eight() { return {4, 8}; }

  constexpr int pruned() const { return pruned_; }
  constexpr int length() const { return length_; }
  constexpr int kept() const { return length_ - pruned_; }
  std::string to_string() const;

  friend constexpr bool operator==(SparsityPattern, SparsityPattern) = default;

 private:
  constexpr SparsityPattern(int pruned, int length)
      : pruned_(pruned), length_(length) {}

  int pruned_;
  int length_;
};

/// A contiguous run of 1..8 finite scalars; the unit a mask is decided on.
class Block {
 public:
  Block() = default;
  explicit Block(std::span<const double> values);
  Block(std::initializer_list<double> values);

  std::size_t size() const { return size_; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return {values_.data(), size_}; }
  double magnitude_sum() const;
  bool is_zero() const;

  friend bool operator==(const Block& a, const Block& b);

 private:
  std::array<double, kMaxBlockLength> values_{};
  std::size_t size_ = 0;
};

/// Which positions of a block survive pruning. Always holds exactly
/// `pattern.kept()` set bits; the constructor enforces it.
class BlockMask {
 public:
  BlockMask() = default;
  BlockMask(std::uint8_t bits, SparsityPattern pattern);
  static BlockMask from_indices(std::span<const int> indices,
                                SparsityPattern pattern);

  bool kept(std::size_t i) const { return (bits_ >> i) & 1U; }
  std::uint8_t bits() const { return bits_; }
  std::size_t size() const { return size_; }
  std::vector<int> kept_indices() const;

  friend bool operator==(const BlockMask&, const BlockMask&) = default;

 private:
  std::uint8_t bits_ = 0;
  std::size_t size_ = 0;
};

/// Output of a pruning method: values are zero wherever the mask drops a
/// position. A kept position may still hold an exact zero.
class PrunedBlock {
 public:
  PrunedBlock() = default;
  PrunedBlock(std::span<const double> values, BlockMask mask);

  std::size_t size() const { return mask_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return {values_.data(), size()}; }
  const BlockMask& mask() const { return mask_; }
  std::size_t nonzero_count() const;

 private:
  std::array<double, kMaxBlockLength> values_{};
  BlockMask mask_;
};

/// Dense row-major tensor plus the axis along which blocks run.
class BlockedTensor {
 public:
  BlockedTensor() = default;
  /// Negative `block_axis` counts from the innermost axis (-1 = innermost).
  BlockedTensor(std::vector<std::size_t> shape, std::vector<double> data,
                int block_axis = -1);

  const std::vector<std::size_t>& shape() const { return shape_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& mutable_data() { return data_; }
  int block_axis() const { return block_axis_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  /// Resolved non-negative axis; throws InvalidArgument when out of range.
  std::size_t resolved_axis() const;

  /// Compares shape, data and the axis after resolving negative indices.
  friend bool operator==(const BlockedTensor& a, const BlockedTensor& b);

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
  int block_axis_ = -1;
};

/// Geometry of a tensor cut into fibers along the block axis. Each fiber is
/// `blocks_per_fiber` whole blocks followed by a dense tail.
struct BlockLayout {
  std::vector<std::size_t> shape;
  std::size_t axis = 0;
  SparsityPattern pattern = SparsityPattern::two_four();
  std::size_t outer = 0;
  std::size_t axis_length = 0;
  std::size_t inner = 0;

  static BlockLayout make(std::span<const std::size_t> shape, std::size_t axis,
                          SparsityPattern pattern);

  std::size_t fiber_count() const { return outer * inner; }
  std::size_t blocks_per_fiber() const;
  std::size_t tail_per_fiber() const;
  std::size_t block_count() const { return fiber_count() * blocks_per_fiber(); }
  std::size_t tail_count() const { return fiber_count() * tail_per_fiber(); }
  /// Flat row-major offset of element `pos` (along the axis) of `fiber`.
  std::size_t offset(std::size_t fiber, std::size_t pos) const;
};

/// Blocks in fiber-major order plus the concatenated tails of every fiber.
struct SplitTensor {
  BlockLayout layout;
  std::vector<Block> blocks;
  std::vector<double> tail;
};

SplitTensor split_into_blocks(const BlockedTensor& tensor,
                              SparsityPattern pattern);

BlockedTensor merge_blocks(std::span<const Block> blocks,
                           std::span<const double> tail,
                           std::span<const std::size_t> shape,
                           std::size_t axis, SparsityPattern pattern);
BlockedTensor merge_blocks(const SplitTensor& split);

/// Throws InvalidArgument naming the first non-finite element.
void require_finite(std::span<const double> values, std::string_view what);

}  // namespace nmsparse
