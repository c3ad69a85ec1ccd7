// Copyright 2026 The nmsparse Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsparse/analysis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace nmsparse {

namespace {

// Welford accumulator.
struct RunningStats {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }
  double variance() const {
    return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
  }
};

SparsityPattern pattern_for(EstimatorKind kind, const Block& block) {
  if (kind != EstimatorKind::kGreedyMse) return natural_pattern(kind);
  const int m = static_cast<int>(block.size());
  return SparsityPattern::create(m / 2, m);
}

// Exact moments of a sampler obtained by enumerating its outcomes.
struct ExactMoments {
  std::array<double, kMaxBlockLength> element_var{};
  double mse_mean = 0.0;
  double mse_var = 0.0;
};

ExactMoments exact_moments(const BlockSampler& sampler) {
  ExactMoments out;
  const Block& block = sampler.block();
  const auto mean = sampler.expected_values();
  double mse_sq = 0.0;
  for (const Outcome& o : sampler.outcomes()) {
    double mse = 0.0;
    for (std::size_t i = 0; i < block.size(); ++i) {
      const double v = ((o.mask >> i) & 1U) ? sampler.kept_value(i) : 0.0;
      out.element_var[i] += o.probability * (v - mean[i]) * (v - mean[i]);
      mse += (v - block[i]) * (v - block[i]);
    }
    out.mse_mean += o.probability * mse;
    mse_sq += o.probability * mse * mse;
  }
  out.mse_var = std::max(0.0, mse_sq - out.mse_mean * out.mse_mean);
  return out;
}

std::string fmt(const char* format, auto... args) {
  char buffer[256];
  std::snprintf(buffer, sizeof buffer, format, args...);
  return buffer;
}

// Reference mask probabilities computed from the closed-form definitions.
std::map<std::uint8_t, double> reference_mask_probs(const Block& block,
                                                    EstimatorKind kind) {
  std::map<std::uint8_t, double> ref;
  switch (kind) {
    case EstimatorKind::kMvue12:
    case EstimatorKind::kBiased12: {
      const double total = std::abs(block[0]) + std::abs(block[1]);
      if (total == 0.0) {
        if (kind == EstimatorKind::kMvue12) {
          ref[0b01] = 1.0;
        } else {
          ref[0b01] = ref[0b10] = 0.5;
        }
      } else {
        ref[0b01] = std::abs(block[0]) / total;
        ref[0b10] = std::abs(block[1]) / total;
      }
      break;
    }
    case EstimatorKind::kUniform12:
    case EstimatorKind::kUnbiasedUniform12:
      ref[0b01] = ref[0b10] = 0.5;
      break;
    case EstimatorKind::kMvue24Exact:
    case EstimatorKind::kMvue24Approx: {
      const PairProbs pairs = kind == EstimatorKind::kMvue24Exact
                                  ? pair_probs_exact24(block)
                                  : pair_probs_approx24(block);
      for (int slot = 0; slot < 6; ++slot) {
        const auto mask = static_cast<std::uint8_t>((1U << kPairs24[slot][0]) |
                                                    (1U << kPairs24[slot][1]));
        ref[mask] = pairs[slot];
      }
      break;
    }
    case EstimatorKind::kGreedyMse:
      break;
  }
  return ref;
}

// Closed-form block variance of the unbiased estimators.
double reference_variance(const Block& block, EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::kMvue12:
      return analytic_variance_mvue12(block);
    case EstimatorKind::kUnbiasedUniform12:
      return block[0] * block[0] + block[1] * block[1];
    case EstimatorKind::kMvue24Exact:
      return analytic_variance_from_probs(block, marginal_probs_exact24(block));
    case EstimatorKind::kMvue24Approx:
      return analytic_variance_from_probs(block,
                                          inclusion_probs_approx24(block));
    default:
      return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

McReport mc_estimate(const Block& block, EstimatorKind kind, std::size_t samples,
                     std::uint64_t seed, std::uint64_t stream,
                     std::optional<SparsityPattern> pattern) {
  if (samples < kMinMcSamples) {
    throw InvalidArgument("mc_estimate needs at least " +
                          std::to_string(kMinMcSamples) + " samples");
  }
  const SparsityPattern p = pattern.value_or(pattern_for(kind, block));
  const BlockSampler sampler(block, kind, p);
  RandomStream rng(seed, stream);

  const std::size_t m = block.size();
  std::array<RunningStats, kMaxBlockLength> element{};
  RunningStats mse;
  std::map<std::uint8_t, std::size_t> counts;
  McReport report;
  report.samples = samples;
  for (std::size_t k = 0; k < samples; ++k) {
    const PrunedBlock draw = is_stochastic(kind) ? sampler.draw(rng)
                                                 : sampler.select(0.0);
    double sq = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      element[i].add(draw[i]);
      const double d = draw[i] - block[i];
      sq += d * d;
    }
    mse.add(sq);
    ++counts[draw.mask().bits()];
    if (draw.nonzero_count() > static_cast<std::size_t>(p.kept())) {
      ++report.pattern_violations;
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    report.empirical_mean.push_back(element[i].mean);
    report.empirical_var.push_back(element[i].variance());
    report.std_errors.push_back(
        std::sqrt(element[i].variance() / static_cast<double>(samples)));
  }
  for (const auto& [mask, count] : counts) {
    report.pair_frequencies[mask] =
        static_cast<double>(count) / static_cast<double>(samples);
  }
  report.mse_mean = mse.mean;
  report.mse_std_error = std::sqrt(mse.variance() / static_cast<double>(samples));
  return report;
}

std::string format_mask(std::uint8_t mask, std::size_t length) {
  std::string out = "{";
  bool first = true;
  for (std::size_t i = 0; i < length; ++i) {
    if ((mask >> i) & 1U) {
      if (!first) out += ',';
      out += std::to_string(i);
      first = false;
    }
  }
  return out + "}";
}

std::vector<Block> generate_test_blocks(std::size_t length, std::size_t count,
                                        std::uint64_t seed) {
  std::vector<Block> blocks;
  blocks.reserve(count);
  std::array<double, kMaxBlockLength> values{};
  for (std::size_t b = 0; b < count; ++b) {
    RandomStream rng(seed, b);
    for (std::size_t i = 0; i < length; ++i) {
      if (b % 2 == 0) {
        values[i] = rng.normal();
      } else {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        values[i] = sign * std::exp(rng.normal());
      }
    }
    blocks.emplace_back(std::span<const double>(values.data(), length));
  }
  return blocks;
}

std::vector<PropertyResult> verify_estimator(const VerifyOptions& options) {
  const EstimatorKind kind = options.kind;
  const SparsityPattern pattern = natural_pattern(kind);
  const auto length = static_cast<std::size_t>(pattern.length());
  const auto blocks = generate_test_blocks(length, options.blocks, options.seed);
  const double k = static_cast<double>(options.samples);
  const double z = options.sigmas;

  std::size_t biased_blocks = 0;
  std::size_t variance_misses = 0;
  std::size_t frequency_misses = 0;
  std::size_t violations = 0;
  std::size_t nondeterministic = 0;
  std::size_t suboptimal = 0;
  double worst_mean_z = 0.0;
  double worst_var_z = 0.0;

  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const Block& block = blocks[b];
    const McReport report = mc_estimate(block, kind, options.samples,
                                        options.seed ^ 0x5eedULL, b, pattern);
    violations += report.pattern_violations;

    if (!is_stochastic(kind)) {
      for (double v : report.empirical_var) {
        if (v != 0.0) ++nondeterministic;
      }
      const auto best = brute_force_min_mse_mask(block, pattern);
      if (prune_greedy(block, pattern).mask() != best.mask) ++suboptimal;
      continue;
    }

    // The exact per-element spread bounds the tolerance from below so that
    // rare outcomes never observed in K draws cannot shrink it to zero.
    const BlockSampler sampler(block, kind, pattern);
    const ExactMoments exact = exact_moments(sampler);

    bool block_biased = false;
    for (std::size_t i = 0; i < length; ++i) {
      const double sigma = std::max(std::sqrt(report.empirical_var[i]),
                                    std::sqrt(exact.element_var[i]));
      const double tol = z * sigma / std::sqrt(k) + 1e-12 * (1 + std::abs(block[i]));
      const double err = std::abs(report.empirical_mean[i] - block[i]);
      if (err > tol) block_biased = true;
      if (sigma > 0) worst_mean_z = std::max(worst_mean_z, err * std::sqrt(k) / sigma);
    }
    if (block_biased) ++biased_blocks;

    if (is_unbiased(kind)) {
      const double expected = reference_variance(block, kind);
      const double se =
          std::max(report.mse_std_error, std::sqrt(exact.mse_var / k));
      const double err = std::abs(report.mse_mean - expected);
      if (err > z * se + 1e-9 * (1 + expected)) ++variance_misses;
      if (se > 0) worst_var_z = std::max(worst_var_z, err / se);
    }

    const auto reference = reference_mask_probs(block, kind);
    for (const auto& [mask, p] : reference) {
      const auto it = report.pair_frequencies.find(mask);
      const double freq = it == report.pair_frequencies.end() ? 0.0 : it->second;
      const double sigma = std::sqrt(p * (1 - p) / k);
      if (std::abs(freq - p) > z * sigma + 1e-12) ++frequency_misses;
    }
    for (const auto& [mask, freq] : report.pair_frequencies) {
      if (!reference.contains(mask)) ++frequency_misses;
    }
  }

  const std::size_t n = blocks.size();
  std::vector<PropertyResult> results;
  if (!is_stochastic(kind)) {
    results.push_back({"deterministic", nondeterministic == 0,
                       fmt("%zu nonzero empirical variances", nondeterministic)});
    results.push_back({"mse-optimal", suboptimal == 0,
                       fmt("%zu/%zu blocks differ from exhaustive search",
                           suboptimal, n)});
  } else {
    results.push_back(
        {"unbiased", biased_blocks == 0,
         fmt("%zu/%zu blocks outside %.0f sigma (max |z| %.2f)", biased_blocks,
             n, z, worst_mean_z)});
    if (is_unbiased(kind)) {
      results.push_back({"variance", variance_misses == 0,
                         fmt("%zu/%zu blocks outside %.0f SE (max |z| %.2f)",
                             variance_misses, n, z, worst_var_z)});
    }
    results.push_back({"mask-frequencies", frequency_misses == 0,
                       fmt("%zu mask frequencies outside %.0f sigma",
                           frequency_misses, z)});
  }
  results.push_back({"pattern", violations == 0,
                     fmt("%zu draws exceed %s", violations,
                         pattern.to_string().c_str())});
  return results;
}

// ---------------------------------------------------------------------------

ScanRecord scan_point(double a1, double a2, double a3) {
  const Block block{a1, a2, a3, 1.0};
  ScanRecord record{a1, a2, a3, 0.0, 0.0, std::nullopt};
  record.var_exact = analytic_variance_from_pairs(block, pair_probs_exact24(block));
  record.var_approx =
      analytic_variance_from_pairs(block, pair_probs_approx24(block));
  if (record.var_exact >= kScanMinVariance) {
    record.ratio = record.var_approx / record.var_exact;
  }
  return record;
}

ScanSummary variance_ratio_scan(
    const ScanOptions& options,
    const std::function<void(const ScanRecord&)>& sink) {
  if (!(options.step > 0.0 && options.step <= 0.1)) {
    throw InvalidArgument("scan step must satisfy 0 < step <= 0.1");
  }
  ScanSummary summary;
  summary.min_ratio = std::numeric_limits<double>::infinity();
  auto visit = [&](double a1, double a2, double a3) {
    const ScanRecord record = scan_point(a1, a2, a3);
    if (sink) sink(record);
    if (!record.ratio) {
      ++summary.skipped;
      return;
    }
    if (*record.ratio > summary.max_ratio) {
      summary.max_ratio = *record.ratio;
      summary.argmax = record;
    }
    summary.min_ratio = std::min(summary.min_ratio, *record.ratio);
  };

  const auto steps = static_cast<int>(std::floor(1.0 / options.step + 1e-9));
  std::vector<double> grid;
  for (int k = 0; k <= steps; ++k) grid.push_back(k * options.step);
  for (double a1 : grid) {
    for (double a2 : grid) {
      for (double a3 : grid) {
        visit(a1, a2, a3);
        ++summary.grid_points;
      }
    }
  }

  if (options.refine_edges) {
    std::vector<double> edge;
    const double lo = std::log10(kRefineSmallest);
    for (int k = 0; k < kRefineValuesPerAxis; ++k) {
      edge.push_back(std::pow(10.0, lo - lo * k / (kRefineValuesPerAxis - 1)));
    }
    for (double a1 : edge) {
      for (double a2 : edge) {
        for (double a3 : edge) {
          visit(a1, a2, a3);
          ++summary.refine_points;
        }
      }
    }
  }
  if (summary.grid_points + summary.refine_points == summary.skipped) {
    summary.min_ratio = 0.0;
  }
  return summary;
}

ScanCsvWriter::ScanCsvWriter(std::ostream& out) : out_(&out) {
  *out_ << "a1,a2,a3,var_exact,var_approx,ratio\n";
}

void ScanCsvWriter::operator()(const ScanRecord& r) {
  char line[192];
  int n = std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g,",
                        r.a1, r.a2, r.a3, r.var_exact, r.var_approx);
  out_->write(line, n);
  if (r.ratio) {
    n = std::snprintf(line, sizeof line, "%.17g", *r.ratio);
    out_->write(line, n);
  }
  out_->put('\n');
}

// ---------------------------------------------------------------------------

VarianceGap variance_gap_d(const Block& block) {
  if (block.size() != 4) {
    throw InvalidArgument("variance_gap_d needs a block of length 4");
  }
  std::array<double, 4> a{std::abs(block[0]), std::abs(block[1]),
                          std::abs(block[2]), std::abs(block[3])};
  std::sort(a.begin(), a.end());
  const Block sorted{a[0], a[1], a[2], a[3]};

  VarianceGap gap;
  gap.var_exact = analytic_variance_from_pairs(sorted, pair_probs_exact24(sorted));
  double cross = 0.0;
  double squares = 0.0;
  for (int i = 0; i < 4; ++i) {
    squares += a[i] * a[i];
    for (int j = i + 1; j < 4; ++j) cross += a[i] * a[j];
  }
  gap.var_closed_form = cross - 0.5 * squares;
  gap.var_paired = 2.0 * a[0] * a[1] + 2.0 * a[2] * a[3];
  gap.d = gap.var_closed_form - gap.var_paired;
  const double sum_ab = (a[0] - a[3]) + (a[1] - a[2]);
  gap.identity = -0.5 * sum_ab * sum_ab;
  gap.d_exact = gap.var_exact - gap.var_paired;
  return gap;
}

// ---------------------------------------------------------------------------

std::vector<BlockMask> all_masks(SparsityPattern pattern) {
  std::vector<BlockMask> masks;
  for (unsigned bits = 0; bits < (1U << pattern.length()); ++bits) {
    if (std::popcount(bits) == pattern.kept()) {
      masks.emplace_back(static_cast<std::uint8_t>(bits), pattern);
    }
  }
  return masks;
}

double analytic_expected_macs(SparsityPattern pattern) {
  const auto masks = all_masks(pattern);
  double total = 0.0;
  for (const BlockMask& x : masks) {
    for (const BlockMask& w : masks) {
      total += std::popcount(static_cast<unsigned>(x.bits() & w.bits()));
    }
  }
  const auto count = static_cast<double>(masks.size());
  return total / (count * count);
}

MacsReport expected_macs(SparsityPattern pattern, std::size_t trials,
                         std::uint64_t seed) {
  if (trials < kMinMcSamples) {
    throw InvalidArgument("expected_macs needs at least " +
                          std::to_string(kMinMcSamples) + " trials");
  }
  const auto masks = all_masks(pattern);
  RandomStream rng(seed, 0);
  RunningStats stats;
  for (std::size_t t = 0; t < trials; ++t) {
    const BlockMask& x = masks[rng.below(masks.size())];
    const BlockMask& w = masks[rng.below(masks.size())];
    stats.add(std::popcount(static_cast<unsigned>(x.bits() & w.bits())));
  }
  MacsReport report;
  report.trials = trials;
  report.empirical_mean = stats.mean;
  report.empirical_std_error =
      std::sqrt(stats.variance() / static_cast<double>(trials));
  report.analytic_mean = analytic_expected_macs(pattern);
  return report;
}

// ---------------------------------------------------------------------------

MaskSearchResult brute_force_min_mse_mask(const Block& block,
                                          SparsityPattern pattern) {
  const auto m = static_cast<std::size_t>(pattern.length());
  if (block.size() != m) {
    throw InvalidArgument("block length differs from pattern");
  }
  const auto kept = static_cast<std::size_t>(pattern.kept());

  std::optional<MaskSearchResult> best;
  std::vector<int> chosen(kept);
  // Lexicographic enumeration of kept index tuples.
  std::function<void(std::size_t, int)> recurse = [&](std::size_t depth,
                                                      int start) {
    if (depth == kept) {
      unsigned bits = 0;
      for (int i : chosen) bits |= 1U << i;
      std::array<double, kMaxBlockLength> dropped{};
      std::size_t n = 0;
      for (std::size_t i = 0; i < m; ++i) {
        if (!((bits >> i) & 1U)) dropped[n++] = block[i] * block[i];
      }
      // Canonical summation order makes equal multisets sum identically.
      std::sort(dropped.begin(), dropped.begin() + n);
      double mse = 0.0;
      for (std::size_t i = 0; i < n; ++i) mse += dropped[i];
      if (!best || mse < best->mse) {
        best = MaskSearchResult{BlockMask(static_cast<std::uint8_t>(bits), pattern),
                                mse};
      }
      return;
    }
    for (int i = start; i < static_cast<int>(m); ++i) {
      chosen[depth] = i;
      recurse(depth + 1, i + 1);
    }
  };
  recurse(0, 0);
  return *best;
}

}  // namespace nmsparse
