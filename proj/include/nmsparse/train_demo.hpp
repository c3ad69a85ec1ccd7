// Copyright 2026 The nmsparse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "nmsparse/core.hpp"
#include "nmsparse/estimators.hpp"

namespace nmsparse {

enum class DatasetKind { kTwoMoons, kSpirals };
DatasetKind parse_dataset(std::string_view name);

struct Dataset {
  std::vector<std::array<double, 2>> points;
  std::vector<int> labels;  ///< 0 or 1

  std::size_t size() const { return labels.size(); }
};

/// Deterministic given the seed; class sizes differ by at most one.
/// Throws InvalidArgument for n < 100 or negative noise.
Dataset generate_dataset(DatasetKind kind, std::size_t n, double noise,
                         std::uint64_t seed);

/// How hidden activations are formed.
enum class ActivationMask {
  kNone,            ///< ReLU
  kPruneOnly,       ///< greedy N:M on the raw pre-activation, no ReLU
  kReluThenGreedy,  ///< ReLU followed by greedy N:M
};
ActivationMask parse_activation_mask(std::string_view name);

/// Greedy N:M applied to max(x, 0) along the vector. A tail shorter than m
/// passes through after the ReLU.
std::vector<double> relu_then_prune(std::span<const double> activations,
                                    SparsityPattern pattern);
/// Greedy N:M applied to the raw values; a tail passes through unchanged.
std::vector<double> prune_only(std::span<const double> activations,
                               SparsityPattern pattern);

struct MlpConfig {
  std::vector<int> widths{2, 64, 64, 2};
  int epochs = 200;
  double learning_rate = 0.1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 7;

  DatasetKind dataset = DatasetKind::kTwoMoons;
  std::size_t train_size = 1000;
  std::size_t val_size = 1000;
  double noise = 0.1;

  /// Estimator applied to the neural gradients feeding the weight update.
  std::optional<EstimatorKind> grad_mask;
  /// Defaults to the estimator's natural pattern.
  std::optional<SparsityPattern> grad_pattern;
  ActivationMask act_mask = ActivationMask::kNone;
  SparsityPattern act_pattern = SparsityPattern::two_four();

  /// Throws InvalidArgument on non-positive hyperparameters, fewer than
  /// three layers, or masked hidden widths narrower than the block.
  void validate() const;
  SparsityPattern effective_grad_pattern() const;
};

struct TrainRecord {
  int epoch = 0;
  double loss = 0.0;     ///< mean training cross-entropy over the epoch
  double val_acc = 0.0;  ///< in [0, 1]
};

/// Fully-connected network trained with plain SGD and explicit
/// backpropagation. Neural gradients (with respect to each layer's
/// pre-activations) are optionally pruned along the feature axis before
/// they form the weight gradient; the gradient propagated to the previous
/// layer stays dense.
class MlpTrainer {
 public:
  explicit MlpTrainer(MlpConfig config);
  ~MlpTrainer();
  MlpTrainer(MlpTrainer&&) noexcept;
  MlpTrainer& operator=(MlpTrainer&&) noexcept;

  /// One pass over the shuffled training set. Throws Error when the loss
  /// turns non-finite.
  TrainRecord run_epoch();
  double accuracy(const Dataset& data) const;

  /// Dense neural gradient [batch, width] of layer `layer` (0-based weight
  /// layer) on the first `batch` training examples at the current weights.
  BlockedTensor neural_gradient(std::size_t layer, std::size_t batch) const;

  const MlpConfig& config() const;
  const Dataset& train_set() const;
  const Dataset& val_set() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Runs config.epochs epochs; deterministic given the config.
std::vector<TrainRecord> train(const MlpConfig& config);

void write_train_csv(std::ostream& out, std::span<const TrainRecord> records);

/// Averaging a masked neural gradient over re-drawn masks.
struct GradientMeanCheck {
  std::size_t draws = 0;
  std::size_t elements = 0;
  std::size_t outside = 0;  ///< elements whose mean misses by > sigmas
  double max_z = 0.0;
  bool passed = false;
};

/// Trains `warmup_epochs` dense epochs, takes the neural gradient of the
/// first hidden layer on one batch, masks it `draws` times with `kind` and
/// checks the componentwise mean against the dense gradient.
GradientMeanCheck check_gradient_mean(const MlpConfig& config,
                                      EstimatorKind kind, int warmup_epochs,
                                      std::size_t draws, double sigmas = 5.0);

}  // namespace nmsparse
