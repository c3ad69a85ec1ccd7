// Copyright 2026 The nmsparse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>

namespace nmsparse {

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

/// Next output of SplitMix64 whose state is `x`; used to derive child
/// stream ids.
std::uint64_t splitmix64_mix(std::uint64_t x);

/// Counter-based random stream. Draw `k` of stream `(seed, stream)` is a pure
/// function of those three integers, so results do not depend on how work is
/// scheduled across threads or on the platform.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  std::uint64_t next_u64();
  /// Uniform integer in [0, bound); bound must be positive.
  std::uint64_t below(std::uint64_t bound);
  /// Standard normal via Box-Muller (consumes two draws).
  double normal();

  /// Independent stream for sub-task `child`.
  RandomStream split(std::uint64_t child) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t draw_index() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

}  // namespace nmsparse
