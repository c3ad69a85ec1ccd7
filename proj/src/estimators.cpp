// Copyright 2026 The nmsparse Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsparse/estimators.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

namespace nmsparse {

namespace {

constexpr std::array<std::pair<EstimatorKind, std::string_view>, 7> kNames = {{
    {EstimatorKind::kGreedyMse, "greedy"},
    {EstimatorKind::kMvue12, "mvue12"},
    {EstimatorKind::kMvue24Exact, "mvue24"},
    {EstimatorKind::kMvue24Approx, "approx24"},
    {EstimatorKind::kBiased12, "biased"},
    {EstimatorKind::kUniform12, "uniform"},
    {EstimatorKind::kUnbiasedUniform12, "unbiased-uniform"},
}};

bool is_one_two_family(EstimatorKind kind) {
  return kind == EstimatorKind::kMvue12 || kind == EstimatorKind::kBiased12 ||
         kind == EstimatorKind::kUniform12 ||
         kind == EstimatorKind::kUnbiasedUniform12;
}

void require_length(const Block& block, std::size_t length) {
  if (block.size() != length) {
    throw InvalidArgument("expected a block of length " + std::to_string(length) +
                          ", got " + std::to_string(block.size()));
  }
}

constexpr int pair_slot(int i, int j) {
  if (i > j) std::swap(i, j);
  // (0,1)=0 (0,2)=1 (0,3)=2 (1,2)=3 (1,3)=4 (2,3)=5
  return i == 0 ? j - 1 : (i == 1 ? j + 1 : 5);
}

constexpr std::uint8_t pair_mask(int slot) {
  return static_cast<std::uint8_t>((1U << kPairs24[slot][0]) |
                                   (1U << kPairs24[slot][1]));
}

struct SortedMagnitudes {
  std::array<double, 4> value;  // ascending
  std::array<int, 4> index;     // original position of value[k]
};

SortedMagnitudes sort_magnitudes(const Block& block) {
  SortedMagnitudes s;
  std::iota(s.index.begin(), s.index.end(), 0);
  std::stable_sort(s.index.begin(), s.index.end(), [&](int a, int b) {
    return std::abs(block[a]) < std::abs(block[b]);
  });
  for (int k = 0; k < 4; ++k) s.value[k] = std::abs(block[s.index[k]]);
  return s;
}

Exact24Case classify(const std::array<double, 4>& a) {
  if (a[3] == 0.0) return Exact24Case::kAllZero;
  if (a[3] <= 2.0 * a[0] + a[2]) return Exact24Case::kCase1;
  if (a[3] <= a[0] + a[1] + a[2]) return Exact24Case::kCase2;
  return Exact24Case::kCase3;
}

// Sum of |a_j| over j != skip, accumulated without subtraction.
double sum_except(const std::array<double, 4>& m, int skip) {
  double s = 0.0;
  for (int j = 0; j < 4; ++j) {
    if (j != skip) s += m[j];
  }
  return s;
}

std::array<double, 4> magnitudes4(const Block& block) {
  return {std::abs(block[0]), std::abs(block[1]), std::abs(block[2]),
          std::abs(block[3])};
}

double sign_of(double v) { return v < 0.0 ? -1.0 : 1.0; }

}  // namespace

std::string_view estimator_name(EstimatorKind kind) {
  for (const auto& [k, name] : kNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

EstimatorKind parse_estimator(std::string_view name) {
  for (const auto& [k, n] : kNames) {
    if (n == name) return k;
  }
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

bool is_stochastic(EstimatorKind kind) {
  return kind != EstimatorKind::kGreedyMse;
}

bool is_unbiased(EstimatorKind kind) {
  return kind == EstimatorKind::kMvue12 || kind == EstimatorKind::kMvue24Exact ||
         kind == EstimatorKind::kMvue24Approx ||
         kind == EstimatorKind::kUnbiasedUniform12;
}

SparsityPattern natural_pattern(EstimatorKind kind) {
  return is_one_two_family(kind) ? SparsityPattern::one_two()
                                 : SparsityPattern::two_four();
}

void require_compatible(EstimatorKind kind, SparsityPattern pattern) {
  if (kind == EstimatorKind::kGreedyMse) return;
  if (pattern != natural_pattern(kind)) {
    throw InvalidArgument("method '" + std::string(estimator_name(kind)) +
                          "' requires pattern " +
                          natural_pattern(kind).to_string() + ", got " +
                          pattern.to_string());
  }
}

Exact24Case exact24_case(const Block& block) {
  require_length(block, 4);
  return classify(sort_magnitudes(block).value);
}

PairProbs pair_probs_exact24(const Block& block) {
  require_length(block, 4);
  const SortedMagnitudes s = sort_magnitudes(block);
  const auto& [a1, a2, a3, a4] = s.value;
  PairProbs sorted{};  // slots refer to sorted positions
  switch (classify(s.value)) {
    case Exact24Case::kAllZero:
      sorted.fill(1.0 / 6.0);
      break;
    case Exact24Case::kCase1: {
      const double total = a1 + a2 + a3 + a4;
      sorted[pair_slot(0, 1)] = 0.0;
      sorted[pair_slot(0, 2)] = (2.0 * a1 + a3 - a4) / (2.0 * total);
      sorted[pair_slot(0, 3)] = (2.0 * a1 - a3 + a4) / (2.0 * total);
      sorted[pair_slot(1, 2)] = (2.0 * a2 + a3 - a4) / (2.0 * total);
      sorted[pair_slot(1, 3)] = (2.0 * a2 - a3 + a4) / (2.0 * total);
      sorted[pair_slot(2, 3)] = (a3 + a4 - a1 - a2) / total;
      break;
    }
    case Exact24Case::kCase2: {
      const double total = a1 + a2 + a3 + a4;
      sorted[pair_slot(0, 3)] = 2.0 * a1 / total;
      sorted[pair_slot(1, 2)] = (a1 + a2 + a3 - a4) / total;
      sorted[pair_slot(1, 3)] = (a2 - a1 + a4 - a3) / total;
      sorted[pair_slot(2, 3)] = (a3 + a4 - a1 - a2) / total;
      break;
    }
    case Exact24Case::kCase3: {
      const double rest = a1 + a2 + a3;
      for (int k = 0; k < 3; ++k) {
        sorted[pair_slot(k, 3)] = rest > 0.0 ? s.value[k] / rest : 1.0 / 3.0;
      }
      break;
    }
  }
  PairProbs out{};
  for (int slot = 0; slot < 6; ++slot) {
    const int i = s.index[kPairs24[slot][0]];
    const int j = s.index[kPairs24[slot][1]];
    out[pair_slot(i, j)] = std::max(0.0, sorted[slot]);
  }
  return out;
}

PairProbs pair_probs_approx24(const Block& block) {
  require_length(block, 4);
  const auto m = magnitudes4(block);
  const double total = m[0] + m[1] + m[2] + m[3];
  PairProbs out{};
  if (total == 0.0) {
    out.fill(1.0 / 6.0);
    return out;
  }
  // P(second = j | first = i); uniform over the rest when nothing is left.
  auto second_given_first = [&](int i, int j) {
    const double rest = sum_except(m, i);
    return rest > 0.0 ? m[j] / rest : 1.0 / 3.0;
  };
  for (int slot = 0; slot < 6; ++slot) {
    const int i = kPairs24[slot][0];
    const int j = kPairs24[slot][1];
    out[slot] = m[i] / total * second_given_first(i, j) +
                m[j] / total * second_given_first(j, i);
  }
  return out;
}

Probs4 marginal_probs_exact24(const Block& block) {
  require_length(block, 4);
  const SortedMagnitudes s = sort_magnitudes(block);
  const auto m = magnitudes4(block);
  Probs4 p{};
  switch (classify(s.value)) {
    case Exact24Case::kAllZero:
      p.fill(0.5);
      break;
    case Exact24Case::kCase1:
    case Exact24Case::kCase2: {
      const double total = m[0] + m[1] + m[2] + m[3];
      for (int i = 0; i < 4; ++i) p[i] = 2.0 * m[i] / total;
      break;
    }
    case Exact24Case::kCase3: {
      const int top = s.index[3];
      const double rest = sum_except(m, top);
      for (int i = 0; i < 4; ++i) {
        p[i] = i == top ? 1.0 : (rest > 0.0 ? m[i] / rest : 1.0 / 3.0);
      }
      break;
    }
  }
  return p;
}

Probs4 inclusion_probs_approx24(const Block& block) {
  require_length(block, 4);
  const auto m = magnitudes4(block);
  const double total = m[0] + m[1] + m[2] + m[3];
  if (total == 0.0) {
    throw InvalidArgument("inclusion probabilities undefined for a zero block");
  }
  Probs4 p{};
  for (int i = 0; i < 4; ++i) {
    double prob = m[i] / total;
    for (int k = 0; k < 4; ++k) {
      if (k == i) continue;
      const double rest = sum_except(m, k);
      prob += m[k] / total * (rest > 0.0 ? m[i] / rest : 1.0 / 3.0);
    }
    p[i] = prob;
  }
  return p;
}

Probs4 marginals_from_pairs(const PairProbs& pairs) {
  Probs4 p{};
  for (int slot = 0; slot < 6; ++slot) {
    p[kPairs24[slot][0]] += pairs[slot];
    p[kPairs24[slot][1]] += pairs[slot];
  }
  return p;
}

double analytic_variance_from_probs(const Block& block,
                                    std::span<const double> probs) {
  if (probs.size() != block.size()) {
    throw InvalidArgument("probability vector length differs from block");
  }
  double var = 0.0;
  for (std::size_t i = 0; i < block.size(); ++i) {
    const double a2 = block[i] * block[i];
    if (a2 == 0.0) continue;
    if (!(probs[i] > 0.0)) {
      throw InvalidArgument("zero inclusion probability for nonzero entry " +
                            std::to_string(i));
    }
    var += a2 / probs[i] - a2;
  }
  return var;
}

double analytic_variance_from_pairs(const Block& block, const PairProbs& pairs) {
  require_length(block, 4);
  double var = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double a2 = block[i] * block[i];
    if (a2 == 0.0) continue;
    double included = 0.0;
    double excluded = 0.0;
    for (int slot = 0; slot < 6; ++slot) {
      const bool has = kPairs24[slot][0] == i || kPairs24[slot][1] == i;
      (has ? included : excluded) += pairs[slot];
    }
    if (!(included > 0.0)) {
      throw InvalidArgument("zero inclusion probability for nonzero entry " +
                            std::to_string(i));
    }
    var += a2 * excluded / included;
  }
  return var;
}

double analytic_variance_mvue12(const Block& block) {
  require_length(block, 2);
  return 2.0 * std::abs(block[0]) * std::abs(block[1]);
}

double block_mse(const Block& original, const PrunedBlock& pruned) {
  if (original.size() != pruned.size()) {
    throw InvalidArgument("block_mse: length mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    const double d = pruned[i] - original[i];
    sum += d * d;
  }
  return sum;
}

// ---------------------------------------------------------------------------

BlockSampler::BlockSampler(const Block& block, EstimatorKind kind,
                           SparsityPattern pattern)
    : block_(block), kind_(kind), pattern_(pattern) {
  require_compatible(kind, pattern);
  require_length(block, static_cast<std::size_t>(pattern.length()));

  switch (kind) {
    case EstimatorKind::kGreedyMse: {
      std::array<int, kMaxBlockLength> order{};
      const auto m = static_cast<int>(block.size());
      std::iota(order.begin(), order.begin() + m, 0);
      std::stable_sort(order.begin(), order.begin() + m, [&](int a, int b) {
        return std::abs(block[a]) > std::abs(block[b]);
      });
      unsigned bits = 0;
      for (int k = 0; k < pattern.kept(); ++k) bits |= 1U << order[k];
      for (std::size_t i = 0; i < block.size(); ++i) kept_values_[i] = block[i];
      add(static_cast<std::uint8_t>(bits), 1.0);
      break;
    }
    case EstimatorKind::kMvue12: {
      const double m0 = std::abs(block[0]);
      const double m1 = std::abs(block[1]);
      const double total = m0 + m1;
      if (total == 0.0) {
        add(0b01, 1.0);
        break;
      }
      kept_values_[0] = sign_of(block[0]) * total;
      kept_values_[1] = sign_of(block[1]) * total;
      add(0b01, m0 / total);
      add(0b10, m1 / total);
      break;
    }
    case EstimatorKind::kBiased12: {
      const double m0 = std::abs(block[0]);
      const double m1 = std::abs(block[1]);
      const double total = m0 + m1;
      const double p = total == 0.0 ? 0.5 : m0 / total;
      kept_values_[0] = block[0];
      kept_values_[1] = block[1];
      add(0b01, p);
      add(0b10, total == 0.0 ? 0.5 : m1 / total);
      break;
    }
    case EstimatorKind::kUniform12:
    case EstimatorKind::kUnbiasedUniform12: {
      const double scale = kind == EstimatorKind::kUniform12 ? 1.0 : 2.0;
      kept_values_[0] = scale * block[0];
      kept_values_[1] = scale * block[1];
      add(0b01, 0.5);
      add(0b10, 0.5);
      break;
    }
    case EstimatorKind::kMvue24Exact:
    case EstimatorKind::kMvue24Approx: {
      const bool exact = kind == EstimatorKind::kMvue24Exact;
      const PairProbs pairs =
          exact ? pair_probs_exact24(block) : pair_probs_approx24(block);
      if (!block.is_zero()) {
        const Probs4 p = exact ? marginal_probs_exact24(block)
                               : inclusion_probs_approx24(block);
        for (int i = 0; i < 4; ++i) {
          kept_values_[i] = block[i] == 0.0 ? 0.0 : block[i] / p[i];
        }
      }
      for (int slot = 0; slot < 6; ++slot) add(pair_mask(slot), pairs[slot]);
      break;
    }
  }
  finish();
}

void BlockSampler::add(std::uint8_t mask, double probability) {
  if (probability <= 0.0) return;
  outcomes_[count_++] = {mask, probability};
}

void BlockSampler::finish() {
  double total = 0.0;
  for (std::size_t k = 0; k < count_; ++k) {
    total += outcomes_[k].probability;
    cumulative_[k] = total;
  }
}

PrunedBlock BlockSampler::select(double u) const {
  std::size_t k = 0;
  while (k + 1 < count_ && !(u < cumulative_[k])) ++k;
  const std::uint8_t mask = outcomes_[k].mask;
  std::array<double, kMaxBlockLength> values{};
  for (std::size_t i = 0; i < block_.size(); ++i) {
    if ((mask >> i) & 1U) values[i] = kept_values_[i];
  }
  return PrunedBlock(std::span<const double>(values.data(), block_.size()),
                     BlockMask(mask, pattern_));
}

std::array<double, kMaxBlockLength> BlockSampler::inclusion_probabilities()
    const {
  std::array<double, kMaxBlockLength> p{};
  for (const Outcome& o : outcomes()) {
    for (std::size_t i = 0; i < block_.size(); ++i) {
      if ((o.mask >> i) & 1U) p[i] += o.probability;
    }
  }
  return p;
}

std::array<double, kMaxBlockLength> BlockSampler::expected_values() const {
  const auto p = inclusion_probabilities();
  std::array<double, kMaxBlockLength> mean{};
  for (std::size_t i = 0; i < block_.size(); ++i) mean[i] = p[i] * kept_values_[i];
  return mean;
}

double BlockSampler::total_variance() const {
  const auto mean = expected_values();
  double var = 0.0;
  for (const Outcome& o : outcomes()) {
    double sq = 0.0;
    for (std::size_t i = 0; i < block_.size(); ++i) {
      const double v = ((o.mask >> i) & 1U) ? kept_values_[i] : 0.0;
      sq += (v - mean[i]) * (v - mean[i]);
    }
    var += o.probability * sq;
  }
  return var;
}

// ---------------------------------------------------------------------------

PrunedBlock prune_greedy(const Block& block, SparsityPattern pattern) {
  return BlockSampler(block, EstimatorKind::kGreedyMse, pattern).select(0.0);
}

PrunedBlock prune_mvue12(const Block& block, RandomStream& rng) {
  return BlockSampler(block, EstimatorKind::kMvue12).draw(rng);
}

PrunedBlock prune_mvue24_exact(const Block& block, RandomStream& rng) {
  return BlockSampler(block, EstimatorKind::kMvue24Exact).draw(rng);
}

PrunedBlock prune_mvue24_approx(const Block& block, RandomStream& rng) {
  return BlockSampler(block, EstimatorKind::kMvue24Approx).draw(rng);
}

PrunedBlock prune_baseline(const Block& block, EstimatorKind kind,
                           RandomStream& rng) {
  if (kind != EstimatorKind::kBiased12 && kind != EstimatorKind::kUniform12 &&
      kind != EstimatorKind::kUnbiasedUniform12) {
    throw InvalidArgument("prune_baseline: '" +
                          std::string(estimator_name(kind)) +
                          "' is not a 1:2 baseline");
  }
  return BlockSampler(block, kind).draw(rng);
}

PrunedBlock prune_block(const Block& block, EstimatorKind kind,
                        SparsityPattern pattern, RandomStream& rng) {
  const BlockSampler sampler(block, kind, pattern);
  return is_stochastic(kind) ? sampler.draw(rng) : sampler.select(0.0);
}

BlockedTensor prune_tensor(const BlockedTensor& tensor, EstimatorKind kind,
                           SparsityPattern pattern, std::uint64_t seed) {
  require_compatible(kind, pattern);
  const SplitTensor split = split_into_blocks(tensor, pattern);
  const BlockLayout& layout = split.layout;
  const auto m = static_cast<std::size_t>(pattern.length());

  std::vector<double> out = tensor.data();
  std::size_t b = 0;
  for (std::size_t f = 0; f < layout.fiber_count(); ++f) {
    for (std::size_t k = 0; k < layout.blocks_per_fiber(); ++k, ++b) {
      RandomStream rng(seed, b);
      const PrunedBlock pruned = prune_block(split.blocks[b], kind, pattern, rng);
      for (std::size_t i = 0; i < m; ++i) {
        out[layout.offset(f, k * m + i)] = pruned[i];
      }
    }
  }
  return BlockedTensor(tensor.shape(), std::move(out), tensor.block_axis());
}

bool satisfies_pattern(const BlockedTensor& tensor, SparsityPattern pattern) {
  const BlockLayout layout =
      BlockLayout::make(tensor.shape(), tensor.resolved_axis(), pattern);
  const auto m = static_cast<std::size_t>(pattern.length());
  const auto& data = tensor.data();
  for (std::size_t f = 0; f < layout.fiber_count(); ++f) {
    for (std::size_t k = 0; k < layout.blocks_per_fiber(); ++k) {
      int nonzero = 0;
      for (std::size_t i = 0; i < m; ++i) {
        if (data[layout.offset(f, k * m + i)] != 0.0) ++nonzero;
      }
      if (nonzero > pattern.kept()) return false;
    }
  }
  return true;
}

}  // namespace nmsparse
