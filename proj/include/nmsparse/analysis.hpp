// Copyright 2026 The nmsparse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "nmsparse/core.hpp"
#include "nmsparse/estimators.hpp"

namespace nmsparse {

// ---------------------------------------------------------------------------
// Monte-Carlo oracle

/// Statistics of repeated independent draws of one estimator on one block.
struct McReport {
  std::size_t samples = 0;
  std::vector<double> empirical_mean;
  std::vector<double> empirical_var;  ///< unbiased sample variance
  std::vector<double> std_errors;     ///< sqrt(empirical_var / samples)
  /// Keyed by mask bits (bit i set = position i kept).
  std::map<std::uint8_t, double> pair_frequencies;
  /// Mean and standard error of the per-draw block_mse.
  double mse_mean = 0.0;
  double mse_std_error = 0.0;
  /// Draws whose nonzero count exceeded the pattern.
  std::size_t pattern_violations = 0;
};

inline constexpr std::size_t kMinMcSamples = 1000;

/// Draws `samples` times from RandomStream(seed, stream). Throws
/// InvalidArgument for fewer than kMinMcSamples draws or an incompatible
/// kind/pattern. Without a pattern, the estimator's natural pattern is used
/// (greedy picks m/2:m from the block length).
McReport mc_estimate(const Block& block, EstimatorKind kind, std::size_t samples,
                     std::uint64_t seed, std::uint64_t stream = 0,
                     std::optional<SparsityPattern> pattern = std::nullopt);

/// "{0,2}" style rendering of a mask key.
std::string format_mask(std::uint8_t mask, std::size_t length);

/// Test blocks: even indices ~ N(0,1), odd indices ~ random sign times
/// lognormal(0,1).
std::vector<Block> generate_test_blocks(std::size_t length, std::size_t count,
                                        std::uint64_t seed);

struct PropertyResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  EstimatorKind kind = EstimatorKind::kMvue12;
  std::size_t blocks = 1000;
  std::size_t samples = 100000;
  std::uint64_t seed = 7;
  double sigmas = 5.0;
};

/// Runs the statistical property suite for one estimator over random
/// blocks: unbiasedness, variance formula, mask frequencies, pattern.
/// Deterministic estimators instead get determinism and MSE-optimality.
std::vector<PropertyResult> verify_estimator(const VerifyOptions& options);

// ---------------------------------------------------------------------------
// Variance ratio scan of the approximate vs exact 2:4 samplers

struct ScanRecord {
  double a1 = 0.0;
  double a2 = 0.0;
  double a3 = 0.0;
  double var_exact = 0.0;
  double var_approx = 0.0;
  std::optional<double> ratio;  ///< absent where var_exact < kScanMinVariance
};

inline constexpr double kScanMinVariance = 1e-12;
inline constexpr int kRefineValuesPerAxis = 40;
inline constexpr double kRefineSmallest = 1e-6;

struct ScanOptions {
  double step = 0.02;
  bool refine_edges = false;
};

struct ScanSummary {
  std::size_t grid_points = 0;
  std::size_t refine_points = 0;
  std::size_t skipped = 0;
  double max_ratio = 0.0;
  ScanRecord argmax;
  double min_ratio = 0.0;
};

/// Block [a1, a2, a3, 1] evaluated analytically for both samplers.
ScanRecord scan_point(double a1, double a2, double a3);

/// Scans a1, a2, a3 over {0, step, 2 step, ..., 1} with a4 = 1; with
/// refine_edges also scans kRefineValuesPerAxis log-spaced values per axis
/// down to kRefineSmallest. Every record goes to `sink` when set. Throws
/// InvalidArgument unless 0 < step <= 0.1.
ScanSummary variance_ratio_scan(
    const ScanOptions& options,
    const std::function<void(const ScanRecord&)>& sink = {});

/// Writes `a1,a2,a3,var_exact,var_approx,ratio` rows with LF endings.
class ScanCsvWriter {
 public:
  explicit ScanCsvWriter(std::ostream& out);
  void operator()(const ScanRecord& record);

 private:
  std::ostream* out_;
};

// ---------------------------------------------------------------------------
// Exact 2:4 versus two independent 1:2 draws

struct VarianceGap {
  double var_exact = 0.0;        ///< exact 2:4 sampler variance
  double var_closed_form = 0.0;  ///< sum_{i<j} a_i a_j - sum a_i^2 / 2
  double var_paired = 0.0;       ///< 2 a1 a2 + 2 a3 a4
  double d = 0.0;                ///< var_closed_form - var_paired
  double identity = 0.0;         ///< -(A + B)^2 / 2
  double d_exact = 0.0;          ///< var_exact - var_paired
};

/// Operates on the sorted magnitudes a1 <= a2 <= a3 <= a4 with
/// A = a1 - a4 and B = a2 - a3. var_exact equals var_closed_form unless the
/// largest magnitude exceeds the sum of the others, where the closed form
/// is not attainable and var_exact is larger (but still below var_paired).
VarianceGap variance_gap_d(const Block& block);

// ---------------------------------------------------------------------------
// Expected MAC count when both GEMM operands carry random N:M masks

struct MacsReport {
  std::size_t trials = 0;
  double empirical_mean = 0.0;
  double empirical_std_error = 0.0;
  double analytic_mean = 0.0;
};

/// Mean overlap of two masks drawn uniformly from all valid masks,
/// enumerated over every pair.
double analytic_expected_macs(SparsityPattern pattern);

/// Every valid mask of `pattern`, ascending by bits.
std::vector<BlockMask> all_masks(SparsityPattern pattern);

MacsReport expected_macs(SparsityPattern pattern, std::size_t trials,
                         std::uint64_t seed);

// ---------------------------------------------------------------------------

struct MaskSearchResult {
  BlockMask mask;
  double mse = 0.0;
};

/// Exhaustive minimum-MSE mask. Candidates are visited in lexicographic
/// order of their kept index tuples and only a strictly smaller MSE
/// replaces the incumbent, so ties resolve toward lower indices.
MaskSearchResult brute_force_min_mse_mask(const Block& block,
                                          SparsityPattern pattern);

}  // namespace nmsparse
