// Copyright 2026 The nmsparse Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsparse/estimators.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

namespace nmsparse {
namespace {

constexpr double kTight = 1e-12;

// Minimum of sum a_i^2 / p_i subject to sum p_i = 2 and 0 <= p_i <= 1:
// p_i = min(1, c |a_i|) with c chosen so the total is 2.
Probs4 water_filling_marginals(const Block& b) {
  std::array<double, 4> a{};
  for (int i = 0; i < 4; ++i) a[i] = std::abs(b[i]);
  Probs4 p{};
  std::array<bool, 4> capped{};
  for (int round = 0; round < 4; ++round) {
    double budget = 2.0;
    double free_sum = 0.0;
    for (int i = 0; i < 4; ++i) {
      if (capped[i]) {
        budget -= 1.0;
      } else {
        free_sum += a[i];
      }
    }
    bool changed = false;
    for (int i = 0; i < 4; ++i) {
      if (capped[i]) {
        p[i] = 1.0;
        continue;
      }
      p[i] = budget * a[i] / free_sum;
      if (p[i] > 1.0) {
        capped[i] = true;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return p;
}

// Pair table of "draw i proportional to |a|, then j proportional to |a|
// among the rest", by explicit enumeration of ordered draws.
PairProbs sequential_pairs(const Block& b) {
  const double s = b.magnitude_sum();
  PairProbs out{};
  for (int slot = 0; slot < 6; ++slot) {
    const int i = kPairs24[slot][0];
    const int j = kPairs24[slot][1];
    const double ai = std::abs(b[i]);
    const double aj = std::abs(b[j]);
    out[slot] = ai / s * aj / (s - ai) + aj / s * ai / (s - aj);
  }
  return out;
}

double variance_from_marginals(const Block& b, const Probs4& p) {
  double v = 0.0;
  for (int i = 0; i < 4; ++i) v += b[i] * b[i] / p[i] - b[i] * b[i];
  return v;
}

std::vector<Block> sample_blocks(std::uint64_t seed, int count) {
  RandomStream r(seed);
  std::vector<Block> out;
  for (int k = 0; k < count; ++k) {
    std::array<double, 4> v{};
    for (double& x : v) x = (k % 2 == 0) ? r.normal() : std::exp(2.0 * r.normal()) * (r.uniform() < 0.5 ? -1 : 1);
    out.emplace_back(std::span<const double>(v));
  }
  return out;
}

TEST(EstimatorNamesTest, RoundTrip) {
  for (EstimatorKind k : kAllEstimators) {
    EXPECT_EQ(parse_estimator(estimator_name(k)), k);
  }
  EXPECT_EQ(parse_estimator("mvue24"), EstimatorKind::kMvue24Exact);
  EXPECT_EQ(parse_estimator("approx24"), EstimatorKind::kMvue24Approx);
  EXPECT_THROW(parse_estimator("topk"), InvalidArgument);
}

TEST(EstimatorNamesTest, Compatibility) {
  EXPECT_NO_THROW(require_compatible(EstimatorKind::kGreedyMse, SparsityPattern::four_eight()));
  EXPECT_NO_THROW(require_compatible(EstimatorKind::kMvue12, SparsityPattern::one_two()));
  EXPECT_THROW(require_compatible(EstimatorKind::kMvue12, SparsityPattern::two_four()),
               InvalidArgument);
  EXPECT_THROW(require_compatible(EstimatorKind::kMvue24Exact, SparsityPattern::one_two()),
               InvalidArgument);
  EXPECT_THROW(require_compatible(EstimatorKind::kBiased12, SparsityPattern::four_eight()),
               InvalidArgument);
}

TEST(GreedyTest, KeepsLargestMagnitudes) {
  const auto p = prune_greedy(Block{-1, -2, 3, 4}, SparsityPattern::two_four());
  EXPECT_EQ(std::vector<double>(p.values().begin(), p.values().end()),
            (std::vector<double>{0, 0, 3, 4}));
  const auto q = prune_greedy(Block{-5, -4, 1, 2}, SparsityPattern::two_four());
  EXPECT_EQ(std::vector<double>(q.values().begin(), q.values().end()),
            (std::vector<double>{-5, -4, 0, 0}));
}

TEST(GreedyTest, TiesGoToLowerIndex) {
  EXPECT_EQ(prune_greedy(Block{1, 1, 1, 1}, SparsityPattern::two_four()).mask().bits(),
            0b0011);
  EXPECT_EQ(prune_greedy(Block{2, -2}, SparsityPattern::one_two()).mask().bits(), 0b01);
  EXPECT_EQ(prune_greedy(Block{0, 3, -3, 3}, SparsityPattern::two_four()).mask().bits(),
            0b0110);
  EXPECT_EQ(prune_greedy(Block{0, 0, 0, 0, 0, 0, 0, 0}, SparsityPattern::four_eight())
                .mask()
                .bits(),
            0b1111);
}

TEST(GreedyTest, RejectsLengthMismatch) {
  EXPECT_THROW(prune_greedy(Block{1, 2, 3}, SparsityPattern::two_four()), InvalidArgument);
}

TEST(Mvue12Test, DistributionAndVariance) {
  const Block b{3.0, -1.0};
  const BlockSampler s(b, EstimatorKind::kMvue12);
  EXPECT_DOUBLE_EQ(s.kept_value(0), 4.0);
  EXPECT_DOUBLE_EQ(s.kept_value(1), -4.0);
  const auto incl = s.inclusion_probabilities();
  EXPECT_NEAR(incl[0], 0.75, kTight);
  EXPECT_NEAR(incl[1], 0.25, kTight);
  const auto mean = s.expected_values();
  EXPECT_NEAR(mean[0], 3.0, kTight);
  EXPECT_NEAR(mean[1], -1.0, kTight);
  EXPECT_NEAR(s.total_variance(), 6.0, kTight);
  EXPECT_DOUBLE_EQ(analytic_variance_mvue12(b), 6.0);
}

TEST(Mvue12Test, ZeroEntries) {
  RandomStream r(1);
  for (int i = 0; i < 50; ++i) {
    const auto p = prune_mvue12(Block{0.0, -2.5}, r);
    EXPECT_EQ(p[0], 0.0);
    EXPECT_EQ(p[1], -2.5);
    const auto z = prune_mvue12(Block{0.0, 0.0}, r);
    EXPECT_EQ(z.nonzero_count(), 0u);
  }
}

TEST(BaselinesTest, ExpectationsByEnumeration) {
  const Block b{3.0, -1.0};
  const auto biased = BlockSampler(b, EstimatorKind::kBiased12).expected_values();
  EXPECT_NEAR(biased[0], 3.0 * 0.75, kTight);
  EXPECT_NEAR(biased[1], -1.0 * 0.25, kTight);
  const auto uniform = BlockSampler(b, EstimatorKind::kUniform12).expected_values();
  EXPECT_NEAR(uniform[0], 1.5, kTight);
  const auto unbiased = BlockSampler(b, EstimatorKind::kUnbiasedUniform12).expected_values();
  EXPECT_NEAR(unbiased[0], 3.0, kTight);
  EXPECT_NEAR(unbiased[1], -1.0, kTight);
  EXPECT_NEAR(BlockSampler(b, EstimatorKind::kUnbiasedUniform12).total_variance(),
              9.0 + 1.0, kTight);
}

TEST(Exact24Test, WorkedExample) {
  const Block b{1, 2, 3, 4};
  EXPECT_EQ(exact24_case(b), Exact24Case::kCase1);
  const PairProbs p = pair_probs_exact24(b);
  const PairProbs expected{0.0, 0.05, 0.15, 0.15, 0.25, 0.4};
  for (int k = 0; k < 6; ++k) EXPECT_NEAR(p[k], expected[k], kTight) << k;
  EXPECT_NEAR(analytic_variance_from_pairs(b, p), 20.0, 1e-10);
}

TEST(Exact24Test, CaseBoundaries) {
  EXPECT_EQ(exact24_case(Block{1, 2, 3, 5}), Exact24Case::kCase1);  // a4 = 2a1 + a3
  EXPECT_EQ(exact24_case(Block{1, 2, 3, 5.5}), Exact24Case::kCase2);
  EXPECT_EQ(exact24_case(Block{1, 2, 3, 6}), Exact24Case::kCase2);  // a4 = a1 + a2 + a3
  EXPECT_EQ(exact24_case(Block{1, 2, 3, 6.5}), Exact24Case::kCase3);
  EXPECT_EQ(exact24_case(Block{0, 0, 0, 0}), Exact24Case::kAllZero);
  EXPECT_EQ(exact24_case(Block{-6, 3, 1, -2}), Exact24Case::kCase2);
}

TEST(Exact24Test, ContinuousAcrossBoundaries) {
  for (const Block& at : {Block{1, 2, 3, 5}, Block{1, 2, 3, 6}}) {
    const Block above{at[0], at[1], at[2], at[3] + 1e-9};
    const PairProbs p = pair_probs_exact24(at);
    const PairProbs q = pair_probs_exact24(above);
    for (int k = 0; k < 6; ++k) EXPECT_NEAR(p[k], q[k], 1e-8);
  }
}

TEST(Exact24Test, Case3KeepsLargest) {
  const Block b{1, -2, 3, 7};
  const PairProbs p = pair_probs_exact24(b);
  EXPECT_NEAR(p[2], 1.0 / 6.0, kTight);  // (0,3)
  EXPECT_NEAR(p[4], 2.0 / 6.0, kTight);  // (1,3)
  EXPECT_NEAR(p[5], 3.0 / 6.0, kTight);  // (2,3)
  EXPECT_NEAR(p[0] + p[1] + p[3], 0.0, kTight);
}

TEST(Exact24Test, MatchesWaterFillingOracle) {
  for (const Block& b : sample_blocks(3, 2000)) {
    const PairProbs p = pair_probs_exact24(b);
    double total = 0.0;
    for (double x : p) {
      EXPECT_GE(x, 0.0);
      total += x;
    }
    EXPECT_NEAR(total, 1.0, kTight);
    const Probs4 got = marginals_from_pairs(p);
    const Probs4 oracle = water_filling_marginals(b);
    const Probs4 formula = marginal_probs_exact24(b);
    for (int i = 0; i < 4; ++i) {
      EXPECT_NEAR(got[i], oracle[i], 1e-12);
      EXPECT_NEAR(formula[i], oracle[i], 1e-12);
    }
    const double v = variance_from_marginals(b, oracle);
    EXPECT_NEAR(analytic_variance_from_pairs(b, p), v, 1e-9 * (1.0 + v));
    EXPECT_NEAR(BlockSampler(b, EstimatorKind::kMvue24Exact).total_variance(), v,
                1e-9 * (1.0 + v));
  }
}

TEST(Exact24Test, PermutationEquivariant) {
  const std::array<double, 4> base{0.3, -1.7, 2.2, 0.9};
  std::array<int, 4> perm{0, 1, 2, 3};
  const PairProbs ref = pair_probs_exact24(Block{base[0], base[1], base[2], base[3]});
  auto slot_of = [](int i, int j) {
    if (i > j) std::swap(i, j);
    for (int k = 0; k < 6; ++k) {
      if (kPairs24[k][0] == i && kPairs24[k][1] == j) return k;
    }
    return -1;
  };
  do {
    const Block b{base[perm[0]], base[perm[1]], base[perm[2]], base[perm[3]]};
    const PairProbs p = pair_probs_exact24(b);
    for (int k = 0; k < 6; ++k) {
      const int i = perm[kPairs24[k][0]];
      const int j = perm[kPairs24[k][1]];
      EXPECT_NEAR(p[k], ref[slot_of(i, j)], kTight);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST(Approx24Test, MatchesSequentialEnumeration) {
  for (const Block& b : sample_blocks(4, 2000)) {
    const PairProbs p = pair_probs_approx24(b);
    const PairProbs oracle = sequential_pairs(b);
    for (int k = 0; k < 6; ++k) EXPECT_NEAR(p[k], oracle[k], 1e-12);
    const Probs4 incl = inclusion_probs_approx24(b);
    const Probs4 from_pairs = marginals_from_pairs(oracle);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(incl[i], from_pairs[i], 1e-12);
  }
}

TEST(Approx24Test, WorkedExample) {
  const Block b{1, 2, 3, 4};
  const Probs4 p = inclusion_probs_approx24(b);
  EXPECT_NEAR(p[0], 0.234524, 1e-6);
  EXPECT_NEAR(p[1], 0.441270, 1e-6);
  EXPECT_NEAR(p[2], 0.608333, 1e-6);
  EXPECT_NEAR(p[3], 0.715873, 1e-6);
  EXPECT_NEAR(analytic_variance_from_probs(b, p), 20.4736, 1e-4);
  EXPECT_THROW(inclusion_probs_approx24(Block{0, 0, 0, 0}), InvalidArgument);
}

TEST(SamplerTest, UnbiasedKindsHaveExactMeans) {
  for (const Block& b : sample_blocks(5, 500)) {
    for (EstimatorKind k : {EstimatorKind::kMvue24Exact, EstimatorKind::kMvue24Approx}) {
      const auto mean = BlockSampler(b, k).expected_values();
      for (int i = 0; i < 4; ++i) EXPECT_NEAR(mean[i], b[i], 1e-12 * (1 + std::abs(b[i])));
    }
    const Block half{b[0], b[1]};
    for (EstimatorKind k : {EstimatorKind::kMvue12, EstimatorKind::kUnbiasedUniform12}) {
      const auto mean = BlockSampler(half, k).expected_values();
      for (int i = 0; i < 2; ++i) EXPECT_NEAR(mean[i], half[i], 1e-12 * (1 + std::abs(half[i])));
    }
  }
}

TEST(SamplerTest, ZeroEntriesNeverKeptWithValue) {
  RandomStream r(8);
  const Block b{0, 0, 0, 5};
  for (EstimatorKind k : {EstimatorKind::kMvue24Exact, EstimatorKind::kMvue24Approx}) {
    for (int t = 0; t < 200; ++t) {
      const auto p = prune_block(b, k, SparsityPattern::two_four(), r);
      EXPECT_EQ(p[3], 5.0);
      EXPECT_EQ(p.nonzero_count(), 1u);
    }
  }
  const auto z = prune_block(Block{0, 0, 0, 0}, EstimatorKind::kMvue24Exact,
                             SparsityPattern::two_four(), r);
  EXPECT_EQ(z.nonzero_count(), 0u);
}

TEST(SamplerTest, DrawFrequenciesFollowOutcomes) {
  const Block b{0.5, -1.5, 2.0, 3.0};
  const BlockSampler s(b, EstimatorKind::kMvue24Exact);
  RandomStream r(21);
  const int n = 100000;
  std::map<std::uint8_t, int> counts;
  for (int t = 0; t < n; ++t) ++counts[s.draw(r).mask().bits()];
  for (const Outcome& o : s.outcomes()) {
    const double sd = std::sqrt(o.probability * (1 - o.probability) / n);
    EXPECT_NEAR(counts[o.mask] / static_cast<double>(n), o.probability, 5 * sd);
  }
}

TEST(PruneTensorTest, DeterministicAndSatisfiesPattern) {
  std::vector<double> data(6 * 10);
  RandomStream r(2);
  for (double& x : data) x = r.normal();
  const BlockedTensor t({6, 10}, data);
  for (EstimatorKind k : kAllEstimators) {
    const SparsityPattern p = natural_pattern(k);
    const BlockedTensor a = prune_tensor(t, k, p, 99);
    const BlockedTensor b = prune_tensor(t, k, p, 99);
    EXPECT_EQ(a, b);
    EXPECT_TRUE(satisfies_pattern(a, p));
    // Length 10 leaves a dense tail of 2 for 2:4.
    if (p == SparsityPattern::two_four()) {
      EXPECT_EQ(a.data()[8], data[8]);
      EXPECT_EQ(a.data()[59], data[59]);
    }
  }
  EXPECT_FALSE(satisfies_pattern(t, SparsityPattern::two_four()));
}

TEST(PruneTensorTest, BlockStreamsAreIndependentOfOtherBlocks) {
  std::vector<double> data(16);
  RandomStream r(3);
  for (double& x : data) x = r.normal();
  const BlockedTensor full({16}, data);
  const BlockedTensor head({4}, std::vector<double>(data.begin(), data.begin() + 4));
  const auto a = prune_tensor(full, EstimatorKind::kMvue24Exact, SparsityPattern::two_four(), 5);
  const auto b = prune_tensor(head, EstimatorKind::kMvue24Exact, SparsityPattern::two_four(), 5);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
}

}  // namespace
}  // namespace nmsparse
