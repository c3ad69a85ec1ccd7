// Copyright 2026 The nmsparse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>

#include "nmsparse/core.hpp"
#include "nmsparse/random.hpp"

namespace nmsparse {

/// Block-level pruning methods. The 1:2 baselines are the comparison points
/// for Mvue12: Biased12 samples like Mvue12 but does not rescale, Uniform12
/// keeps either entry with probability 1/2 unscaled, UnbiasedUniform12 keeps
/// either entry with probability 1/2 doubled.
enum class EstimatorKind {
  kGreedyMse,
  kMvue12,
  kMvue24Exact,
  kMvue24Approx,
  kBiased12,
  kUniform12,
  kUnbiasedUniform12,
};

inline constexpr std::array<EstimatorKind, 7> kAllEstimators = {
    EstimatorKind::kGreedyMse,   EstimatorKind::kMvue12,
    EstimatorKind::kMvue24Exact, EstimatorKind::kMvue24Approx,
    EstimatorKind::kBiased12,    EstimatorKind::kUniform12,
    EstimatorKind::kUnbiasedUniform12};

/// Command-line name: greedy, mvue12, mvue24, approx24, biased, uniform,
/// unbiased-uniform.
std::string_view estimator_name(EstimatorKind kind);
EstimatorKind parse_estimator(std::string_view name);

bool is_stochastic(EstimatorKind kind);
/// True for estimators whose expectation equals the input block.
bool is_unbiased(EstimatorKind kind);
/// 1:2 for the 1:2 family, 2:4 for the 2:4 family and for greedy.
SparsityPattern natural_pattern(EstimatorKind kind);
/// Throws InvalidArgument when `kind` is not defined for `pattern`.
void require_compatible(EstimatorKind kind, SparsityPattern pattern);

// ---------------------------------------------------------------------------
// 2:4 probability machinery. Pair slots are ordered (0,1) (0,2) (0,3) (1,2)
// (1,3) (2,3) in the block's own index order. All formulas act on |a_i|.

inline constexpr std::array<std::array<int, 2>, 6> kPairs24 = {
    {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

using PairProbs = std::array<double, 6>;
using Probs4 = std::array<double, 4>;

/// Regime of the exact 2:4 sampler on sorted magnitudes a1<=a2<=a3<=a4.
enum class Exact24Case {
  kAllZero,
  kCase1,  ///< a4 <= 2 a1 + a3
  kCase2,  ///< 2 a1 + a3 < a4 <= a1 + a2 + a3
  kCase3,  ///< a4 > a1 + a2 + a3
};

Exact24Case exact24_case(const Block& block);

/// Joint probability of keeping each pair under the minimum-variance
/// unbiased 2:4 sampler.
PairProbs pair_probs_exact24(const Block& block);

/// Pair probabilities of the sequential proportional sampler: first index
/// with probability |a_i|/sum, second with |a_j|/(sum - |a_i|).
PairProbs pair_probs_approx24(const Block& block);

/// Marginal inclusion probabilities of the exact sampler in closed form:
/// 2|a_i|/sum when the largest entry is at most the sum of the others,
/// otherwise 1 for the largest and |a_k|/(sum - max) for the rest.
Probs4 marginal_probs_exact24(const Block& block);

/// Closed-form inclusion probabilities of the sequential proportional
/// sampler. Throws InvalidArgument for an all-zero block.
Probs4 inclusion_probs_approx24(const Block& block);

/// Marginals implied by a pair table.
Probs4 marginals_from_pairs(const PairProbs& pairs);

/// sum_i (a_i^2 / p_i - a_i^2), with 0^2/0 taken as 0. Throws when p_i == 0
/// for a nonzero a_i.
double analytic_variance_from_probs(const Block& block,
                                    std::span<const double> probs);

/// Same quantity evaluated as sum_i a_i^2 (1 - p_i) / p_i, where 1 - p_i is
/// summed directly from the pairs that exclude i. Accurate when p_i is
/// close to 1.
double analytic_variance_from_pairs(const Block& block, const PairProbs& pairs);

/// 2 |a1| |a2|.
double analytic_variance_mvue12(const Block& block);

/// sum_i (theta_i - a_i)^2 for a single draw.
double block_mse(const Block& original, const PrunedBlock& pruned);

// ---------------------------------------------------------------------------

/// One possible mask of a block estimator and its probability.
struct Outcome {
  std::uint8_t mask = 0;
  double probability = 0.0;
};

/// The full output distribution of one estimator on one block: at most six
/// masks with their probabilities, plus the value each position takes when
/// kept. Every estimator here keeps position i at the same value regardless
/// of which other positions survive, so that pair is a complete description.
class BlockSampler {
 public:
  BlockSampler(const Block& block, EstimatorKind kind, SparsityPattern pattern);
  BlockSampler(const Block& block, EstimatorKind kind)
      : BlockSampler(block, kind, natural_pattern(kind)) {}

  /// Consumes exactly one uniform variate.
  PrunedBlock draw(RandomStream& rng) const { return select(rng.uniform()); }
  /// Inverse-CDF selection over the outcome list for u in [0, 1).
  PrunedBlock select(double u) const;

  std::span<const Outcome> outcomes() const { return {outcomes_.data(), count_}; }
  double kept_value(std::size_t i) const { return kept_values_[i]; }
  const Block& block() const { return block_; }
  SparsityPattern pattern() const { return pattern_; }
  EstimatorKind kind() const { return kind_; }

  std::array<double, kMaxBlockLength> inclusion_probabilities() const;
  std::array<double, kMaxBlockLength> expected_values() const;
  /// Sum of per-element variances, by enumeration of the outcomes.
  double total_variance() const;

 private:
  void add(std::uint8_t mask, double probability);
  void finish();

  Block block_;
  EstimatorKind kind_;
  SparsityPattern pattern_;
  std::array<double, kMaxBlockLength> kept_values_{};
  std::array<Outcome, 6> outcomes_{};
  std::array<double, 6> cumulative_{};
  std::size_t count_ = 0;
};

/// Keeps the m-n largest magnitudes unscaled; ties keep the lower index.
PrunedBlock prune_greedy(const Block& block, SparsityPattern pattern);
PrunedBlock prune_mvue12(const Block& block, RandomStream& rng);
PrunedBlock prune_mvue24_exact(const Block& block, RandomStream& rng);
PrunedBlock prune_mvue24_approx(const Block& block, RandomStream& rng);
/// kind must be Biased12, Uniform12 or UnbiasedUniform12.
PrunedBlock prune_baseline(const Block& block, EstimatorKind kind,
                           RandomStream& rng);
PrunedBlock prune_block(const Block& block, EstimatorKind kind,
                        SparsityPattern pattern, RandomStream& rng);

/// Prunes every whole block of `tensor` along its block axis. Block `b`
/// (fiber-major order) draws from RandomStream(seed, b); tails stay dense.
BlockedTensor prune_tensor(const BlockedTensor& tensor, EstimatorKind kind,
                           SparsityPattern pattern, std::uint64_t seed);

/// True when every whole block along the axis has at most m-n nonzeros.
bool satisfies_pattern(const BlockedTensor& tensor, SparsityPattern pattern);

}  // namespace nmsparse
