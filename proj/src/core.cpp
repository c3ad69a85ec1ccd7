// Copyright 2026 The nmsparse Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsparse/core.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <functional>
#include <numeric>

namespace nmsparse {

SparsityPattern SparsityPattern::create(int pruned, int length) {
  if (length != 2 && length != 4 && length != 8) {
    throw InvalidArgument("unsupported block length " + std::to_string(length) +
                          " (expected 2, 4 or 8)");
  }
  if (pruned <= 0 || pruned >= length) {
    throw InvalidArgument("pattern " + std::to_string(pruned) + ":" +
                          std::to_string(length) +
                          " must prune between 1 and M-1 elements");
  }
  return {pruned, length};
}

SparsityPattern SparsityPattern::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw InvalidArgument("pattern '" + std::string(text) + "' is not N:M");
  }
  auto parse_int = [&](std::string_view part) {
    int value = 0;
    const auto* end = part.data() + part.size();
    auto [ptr, ec] = std::from_chars(part.data(), end, value);
    if (ec != std::errc{} || ptr != end || part.empty()) {
      throw InvalidArgument("pattern '" + std::string(text) + "' is not N:M");
    }
    return value;
  };
  return create(parse_int(text.substr(0, colon)),
                parse_int(text.substr(colon + 1)));
}

std::string SparsityPattern::to_string() const {
  return std::to_string(pruned_) + ":" + std::to_string(length_);
}

void require_finite(std::span<const double> values, std::string_view what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw InvalidArgument(std::string(what) + ": non-finite value at index " +
                            std::to_string(i));
    }
  }
}

Block::Block(std::span<const double> values) {
  if (values.empty() || values.size() > kMaxBlockLength) {
    throw InvalidArgument("block length " + std::to_string(values.size()) +
                          " outside 1..8");
  }
  require_finite(values, "block");
  std::copy(values.begin(), values.end(), values_.begin());
  size_ = values.size();
}

Block::Block(std::initializer_list<double> values)
    : Block(std::span<const double>(values.begin(), values.size())) {}

double Block::magnitude_sum() const {
  double sum = 0.0;
  for (double v : values()) sum += std::abs(v);
  return sum;
}

bool Block::is_zero() const {
  return std::all_of(values().begin(), values().end(),
                     [](double v) { return v == 0.0; });
}

bool operator==(const Block& a, const Block& b) {
  return std::ranges::equal(a.values(), b.values());
}

BlockMask::BlockMask(std::uint8_t bits, SparsityPattern pattern)
    : bits_(bits), size_(static_cast<std::size_t>(pattern.length())) {
  const unsigned limit = 1U << size_;
  if (bits >= limit) {
    throw InvalidArgument("mask has bits beyond block length");
  }
  if (std::popcount(bits) != pattern.kept()) {
    throw InvalidArgument("mask keeps " + std::to_string(std::popcount(bits)) +
                          " positions, pattern " + pattern.to_string() +
                          " requires " + std::to_string(pattern.kept()));
  }
}

BlockMask BlockMask::from_indices(std::span<const int> indices,
                                  SparsityPattern pattern) {
  unsigned bits = 0;
  for (int i : indices) {
    if (i < 0 || i >= pattern.length()) {
      throw InvalidArgument("mask index out of range");
    }
    bits |= 1U << i;
  }
  if (static_cast<std::size_t>(std::popcount(bits)) != indices.size()) {
    throw InvalidArgument("duplicate mask index");
  }
  return BlockMask(static_cast<std::uint8_t>(bits), pattern);
}

std::vector<int> BlockMask::kept_indices() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < size_; ++i) {
    if (kept(i)) out.push_back(static_cast<int>(i));
  }
  return out;
}

PrunedBlock::PrunedBlock(std::span<const double> values, BlockMask mask)
    : mask_(mask) {
  if (values.size() != mask.size()) {
    throw InvalidArgument("pruned values and mask differ in length");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!mask.kept(i) && values[i] != 0.0) {
      throw InvalidArgument("pruned block holds a value at a dropped position");
    }
    values_[i] = values[i];
  }
}

std::size_t PrunedBlock::nonzero_count() const {
  return static_cast<std::size_t>(std::ranges::count_if(
      values(), [](double v) { return v != 0.0; }));
}

BlockedTensor::BlockedTensor(std::vector<std::size_t> shape,
                             std::vector<double> data, int block_axis)
    : shape_(std::move(shape)), data_(std::move(data)), block_axis_(block_axis) {
  const std::size_t expected =
      std::accumulate(shape_.begin(), shape_.end(), std::size_t{1},
                      std::multiplies<>());
  if (expected != data_.size()) {
    throw InvalidArgument("shape holds " + std::to_string(expected) +
                          " elements but data has " +
                          std::to_string(data_.size()));
  }
}

std::size_t BlockedTensor::resolved_axis() const {
  const auto rank = static_cast<int>(shape_.size());
  const int axis = block_axis_ < 0 ? rank + block_axis_ : block_axis_;
  if (axis < 0 || axis >= rank) {
    throw InvalidArgument("block axis " + std::to_string(block_axis_) +
                          " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(axis);
}

bool operator==(const BlockedTensor& a, const BlockedTensor& b) {
  auto normalized = [](const BlockedTensor& t) {
    return t.block_axis_ < 0 ? static_cast<int>(t.shape_.size()) + t.block_axis_
                             : t.block_axis_;
  };
  return a.shape_ == b.shape_ && a.data_ == b.data_ &&
         normalized(a) == normalized(b);
}

BlockLayout BlockLayout::make(std::span<const std::size_t> shape,
                              std::size_t axis, SparsityPattern pattern) {
  if (axis >= shape.size()) {
    throw InvalidArgument("block axis " + std::to_string(axis) +
                          " out of range for rank " +
                          std::to_string(shape.size()));
  }
  BlockLayout layout;
  layout.shape.assign(shape.begin(), shape.end());
  layout.axis = axis;
  layout.pattern = pattern;
  layout.outer = std::accumulate(shape.begin(), shape.begin() + axis,
                                 std::size_t{1}, std::multiplies<>());
  layout.axis_length = shape[axis];
  layout.inner = std::accumulate(shape.begin() + axis + 1, shape.end(),
                                 std::size_t{1}, std::multiplies<>());
  return layout;
}

std::size_t BlockLayout::blocks_per_fiber() const {
  return axis_length / static_cast<std::size_t>(pattern.length());
}

std::size_t BlockLayout::tail_per_fiber() const {
  return axis_length % static_cast<std::size_t>(pattern.length());
}

std::size_t BlockLayout::offset(std::size_t fiber, std::size_t pos) const {
  const std::size_t o = fiber / inner;
  const std::size_t i = fiber % inner;
  return (o * axis_length + pos) * inner + i;
}

SplitTensor split_into_blocks(const BlockedTensor& tensor,
                              SparsityPattern pattern) {
  const std::size_t axis = tensor.resolved_axis();
  require_finite(tensor.data(), "tensor");

  SplitTensor out;
  out.layout = BlockLayout::make(tensor.shape(), axis, pattern);
  const auto& layout = out.layout;
  const auto m = static_cast<std::size_t>(pattern.length());
  out.blocks.reserve(layout.block_count());
  out.tail.reserve(layout.tail_count());

  const auto& data = tensor.data();
  std::array<double, kMaxBlockLength> scratch{};
  for (std::size_t f = 0; f < layout.fiber_count(); ++f) {
    for (std::size_t b = 0; b < layout.blocks_per_fiber(); ++b) {
      for (std::size_t k = 0; k < m; ++k) {
        scratch[k] = data[layout.offset(f, b * m + k)];
      }
      out.blocks.emplace_back(std::span<const double>(scratch.data(), m));
    }
    for (std::size_t k = layout.blocks_per_fiber() * m; k < layout.axis_length;
         ++k) {
      out.tail.push_back(data[layout.offset(f, k)]);
    }
  }
  return out;
}

BlockedTensor merge_blocks(std::span<const Block> blocks,
                           std::span<const double> tail,
                           std::span<const std::size_t> shape,
                           std::size_t axis, SparsityPattern pattern) {
  const BlockLayout layout = BlockLayout::make(shape, axis, pattern);
  if (blocks.size() != layout.block_count() ||
      tail.size() != layout.tail_count()) {
    throw InvalidArgument(
        "merge_blocks: expected " + std::to_string(layout.block_count()) +
        " blocks and " + std::to_string(layout.tail_count()) +
        " tail elements, got " + std::to_string(blocks.size()) + " and " +
        std::to_string(tail.size()));
  }
  const auto m = static_cast<std::size_t>(pattern.length());
  std::vector<double> data(layout.fiber_count() * layout.axis_length);
  std::size_t next_block = 0;
  std::size_t next_tail = 0;
  for (std::size_t f = 0; f < layout.fiber_count(); ++f) {
    for (std::size_t b = 0; b < layout.blocks_per_fiber(); ++b) {
      const Block& block = blocks[next_block++];
      if (block.size() != m) {
        throw InvalidArgument("merge_blocks: block length differs from pattern");
      }
      for (std::size_t k = 0; k < m; ++k) {
        data[layout.offset(f, b * m + k)] = block[k];
      }
    }
    for (std::size_t k = layout.blocks_per_fiber() * m; k < layout.axis_length;
         ++k) {
      data[layout.offset(f, k)] = tail[next_tail++];
    }
  }
  return BlockedTensor({shape.begin(), shape.end()}, std::move(data),
                       static_cast<int>(axis));
}

BlockedTensor merge_blocks(const SplitTensor& split) {
  return merge_blocks(split.blocks, split.tail, split.layout.shape,
                      split.layout.axis, split.layout.pattern);
}

}  // namespace nmsparse
