// Copyright 2026 The nmsparse Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsparse/train_demo.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <string>

#include "nmsparse/random.hpp"

namespace nmsparse {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

constexpr std::uint64_t kValidationStream = 0x7661'6c69'6400ULL;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix64_mix(seed ^ splitmix64_mix(a ^ splitmix64_mix(b)));
}

// Greedy selection along each row; tails stay dense. Returns the kept mask.
Matrix greedy_rows(const Matrix& values, SparsityPattern pattern) {
  const auto m = static_cast<Eigen::Index>(pattern.length());
  Matrix keep = Matrix::Ones(values.rows(), values.cols());
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c0 = 0; c0 + m <= values.cols(); c0 += m) {
      const Block block(std::span<const double>(&values(r, c0), m));
      const BlockMask mask = prune_greedy(block, pattern).mask();
      for (Eigen::Index k = 0; k < m; ++k) {
        keep(r, c0 + k) = mask.kept(static_cast<std::size_t>(k)) ? 1.0 : 0.0;
      }
    }
  }
  return keep;
}

BlockedTensor to_tensor(const Matrix& m) {
  return BlockedTensor({static_cast<std::size_t>(m.rows()),
                        static_cast<std::size_t>(m.cols())},
                       std::vector<double>(m.data(), m.data() + m.size()), 1);
}

Matrix from_tensor(const BlockedTensor& t) {
  Matrix m(static_cast<Eigen::Index>(t.shape()[0]),
           static_cast<Eigen::Index>(t.shape()[1]));
  std::copy(t.data().begin(), t.data().end(), m.data());
  return m;
}

std::vector<double> prune_rows(std::span<const double> x, SparsityPattern pattern,
                               bool relu) {
  std::vector<double> out(x.begin(), x.end());
  if (relu) {
    for (double& v : out) v = std::max(v, 0.0);
  }
  const auto m = static_cast<std::size_t>(pattern.length());
  for (std::size_t c0 = 0; c0 + m <= out.size(); c0 += m) {
    const PrunedBlock pruned =
        prune_greedy(Block(std::span<const double>(out.data() + c0, m)), pattern);
    std::copy(pruned.values().begin(), pruned.values().end(), out.begin() + c0);
  }
  return out;
}

}  // namespace

DatasetKind parse_dataset(std::string_view name) {
  if (name == "two-moons") return DatasetKind::kTwoMoons;
  if (name == "spirals") return DatasetKind::kSpirals;
  throw InvalidArgument("unknown dataset '" + std::string(name) + "'");
}

ActivationMask parse_activation_mask(std::string_view name) {
  if (name == "none") return ActivationMask::kNone;
  if (name == "greedy" || name == "prune-only") return ActivationMask::kPruneOnly;
  if (name == "relu-greedy") return ActivationMask::kReluThenGreedy;
  throw InvalidArgument("unknown activation mask '" + std::string(name) + "'");
}

Dataset generate_dataset(DatasetKind kind, std::size_t n, double noise,
                         std::uint64_t seed) {
  if (n < 100) throw InvalidArgument("dataset needs at least 100 points");
  if (!(noise >= 0.0) || !std::isfinite(noise)) {
    throw InvalidArgument("noise must be a finite non-negative number");
  }
  RandomStream rng(seed, 0);
  Dataset data;
  data.points.reserve(n);
  data.labels.reserve(n);
  const std::size_t first = n / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i < first ? 0 : 1;
    const std::size_t j = label == 0 ? i : i - first;
    const std::size_t count = label == 0 ? first : n - first;
    const double t = count > 1 ? static_cast<double>(j) / static_cast<double>(count - 1)
                               : 0.0;
    double x = 0.0;
    double y = 0.0;
    if (kind == DatasetKind::kTwoMoons) {
      const double angle = std::numbers::pi * t;
      if (label == 0) {
        x = std::cos(angle);
        y = std::sin(angle);
      } else {
        x = 1.0 - std::cos(angle);
        y = 0.5 - std::sin(angle);
      }
    } else {
      const double radius = 0.15 + 0.85 * t;
      const double angle = 3.0 * std::numbers::pi * t + (label == 0 ? 0.0 : std::numbers::pi);
      x = radius * std::cos(angle);
      y = radius * std::sin(angle);
    }
    x += noise * rng.normal();
    y += noise * rng.normal();
    data.points.push_back({x, y});
    data.labels.push_back(label);
  }
  return data;
}

std::vector<double> relu_then_prune(std::span<const double> activations,
                                    SparsityPattern pattern) {
  return prune_rows(activations, pattern, true);
}

std::vector<double> prune_only(std::span<const double> activations,
                               SparsityPattern pattern) {
  return prune_rows(activations, pattern, false);
}

void MlpConfig::validate() const {
  if (widths.size() < 3) throw InvalidArgument("MLP needs at least one hidden layer");
  if (widths.front() != 2 || widths.back() != 2) {
    throw InvalidArgument("MLP input and output widths must be 2");
  }
  for (int w : widths) {
    if (w <= 0) throw InvalidArgument("layer widths must be positive");
  }
  if (epochs <= 0 || batch_size == 0 || !(learning_rate > 0.0)) {
    throw InvalidArgument("epochs, batch size and learning rate must be positive");
  }
  if (train_size < 100 || val_size < 100) {
    throw InvalidArgument("train and validation sets need at least 100 points");
  }
  if (!(noise >= 0.0)) throw InvalidArgument("noise must be non-negative");
  if (grad_mask) require_compatible(*grad_mask, effective_grad_pattern());
  for (std::size_t l = 1; l + 1 < widths.size(); ++l) {
    if (act_mask != ActivationMask::kNone && widths[l] < act_pattern.length()) {
      throw InvalidArgument("hidden width narrower than activation block");
    }
    if (grad_mask && widths[l] < effective_grad_pattern().length()) {
      throw InvalidArgument("hidden width narrower than gradient block");
    }
  }
}

SparsityPattern MlpConfig::effective_grad_pattern() const {
  if (grad_pattern) return *grad_pattern;
  return grad_mask ? natural_pattern(*grad_mask) : SparsityPattern::one_two();
}

struct MlpTrainer::Impl {
  MlpConfig config;
  Dataset train;
  Dataset val;
  std::vector<Matrix> weights;  // [in, out]
  std::vector<RowVector> biases;
  std::uint64_t step = 0;
  int epoch = 0;

  struct Forward {
    std::vector<Matrix> inputs;     // activation entering each layer
    std::vector<Matrix> pre;        // pre-activations
    std::vector<Matrix> act_grad;   // d activation / d pre-activation
    Matrix probs;
  };

  Matrix batch_inputs(const Dataset& data, std::span<const std::size_t> idx) const {
    Matrix x(static_cast<Eigen::Index>(idx.size()), 2);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      x(static_cast<Eigen::Index>(r), 0) = data.points[idx[r]][0];
      x(static_cast<Eigen::Index>(r), 1) = data.points[idx[r]][1];
    }
    return x;
  }

  Forward forward(Matrix x) const {
    Forward f;
    const std::size_t layers = weights.size();
    for (std::size_t l = 0; l < layers; ++l) {
      f.inputs.push_back(x);
      Matrix z = x * weights[l];
      z.rowwise() += biases[l];
      f.pre.push_back(z);
      if (l + 1 == layers) {
        Matrix shifted = z.colwise() - z.rowwise().maxCoeff();
        Matrix e = shifted.array().exp().matrix();
        f.probs = e.array().colwise() / e.rowwise().sum().array();
        break;
      }
      Matrix a;
      Matrix grad;
      switch (config.act_mask) {
        case ActivationMask::kNone:
          a = z.cwiseMax(0.0);
          grad = (z.array() > 0.0).cast<double>().matrix();
          break;
        case ActivationMask::kReluThenGreedy: {
          Matrix relu = z.cwiseMax(0.0);
          const Matrix keep = greedy_rows(relu, config.act_pattern);
          a = relu.cwiseProduct(keep);
          grad = (z.array() > 0.0).cast<double>().matrix().cwiseProduct(keep);
          break;
        }
        case ActivationMask::kPruneOnly: {
          const Matrix keep = greedy_rows(z, config.act_pattern);
          a = z.cwiseProduct(keep);
          grad = keep;
          break;
        }
      }
      f.act_grad.push_back(std::move(grad));
      x = std::move(a);
    }
    return f;
  }

  // Dense neural gradients, output layer first.
  std::vector<Matrix> neural_gradients(const Forward& f,
                                       std::span<const int> labels) const {
    const std::size_t layers = weights.size();
    std::vector<Matrix> deltas(layers);
    Matrix delta = f.probs;
    for (std::size_t r = 0; r < labels.size(); ++r) {
      delta(static_cast<Eigen::Index>(r), labels[r]) -= 1.0;
    }
    delta /= static_cast<double>(labels.size());
    for (std::size_t l = layers; l-- > 0;) {
      deltas[l] = delta;
      if (l == 0) break;
      delta = (delta * weights[l].transpose()).cwiseProduct(f.act_grad[l - 1]);
    }
    return deltas;
  }

  double sgd_step(std::span<const std::size_t> idx) {
    const Matrix x = batch_inputs(train, idx);
    std::vector<int> labels;
    for (std::size_t i : idx) labels.push_back(train.labels[i]);
    const Forward f = forward(x);

    double loss = 0.0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
      loss -= std::log(std::max(f.probs(static_cast<Eigen::Index>(r), labels[r]),
                                1e-300));
    }

    const std::vector<Matrix> deltas = neural_gradients(f, labels);
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Matrix delta = deltas[l];
      if (config.grad_mask) {
        const BlockedTensor pruned =
            prune_tensor(to_tensor(delta), *config.grad_mask,
                         config.effective_grad_pattern(), derive_seed(config.seed, step, l));
        delta = from_tensor(pruned);
      }
      weights[l] -= config.learning_rate * (f.inputs[l].transpose() * delta);
      biases[l] -= config.learning_rate * delta.colwise().sum();
    }
    ++step;
    return loss;
  }
};

MlpTrainer::MlpTrainer(MlpConfig config) : impl_(std::make_unique<Impl>()) {
  config.validate();
  impl_->config = std::move(config);
  auto& c = impl_->config;
  impl_->train = generate_dataset(c.dataset, c.train_size, c.noise, c.seed);
  impl_->val = generate_dataset(c.dataset, c.val_size, c.noise,
                                splitmix64_mix(c.seed ^ kValidationStream));
  RandomStream rng(c.seed, 1);
  for (std::size_t l = 0; l + 1 < c.widths.size(); ++l) {
    const int in = c.widths[l];
    const int out = c.widths[l + 1];
    const double limit = std::sqrt(6.0 / in);
    Matrix w(in, out);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w.data()[i] = (2.0 * rng.uniform() - 1.0) * limit;
    }
    impl_->weights.push_back(std::move(w));
    impl_->biases.push_back(RowVector::Zero(out));
  }
}

MlpTrainer::~MlpTrainer() = default;
MlpTrainer::MlpTrainer(MlpTrainer&&) noexcept = default;
MlpTrainer& MlpTrainer::operator=(MlpTrainer&&) noexcept = default;

TrainRecord MlpTrainer::run_epoch() {
  auto& s = *impl_;
  const std::size_t n = s.train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  RandomStream shuffle(s.config.seed, derive_seed(s.config.seed, 0x5u, s.epoch));
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[shuffle.below(i)]);
  }
  double loss = 0.0;
  for (std::size_t start = 0; start < n; start += s.config.batch_size) {
    const std::size_t end = std::min(n, start + s.config.batch_size);
    loss += s.sgd_step(std::span(order).subspan(start, end - start));
  }
  loss /= static_cast<double>(n);
  ++s.epoch;
  if (!std::isfinite(loss)) {
    throw Error("non-finite training loss at epoch " + std::to_string(s.epoch));
  }
  return {s.epoch, loss, accuracy(s.val)};
}

double MlpTrainer::accuracy(const Dataset& data) const {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto f = impl_->forward(impl_->batch_inputs(data, idx));
  std::size_t correct = 0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    const int predicted = f.probs(row, 1) > f.probs(row, 0) ? 1 : 0;
    if (predicted == data.labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

BlockedTensor MlpTrainer::neural_gradient(std::size_t layer,
                                          std::size_t batch) const {
  const auto& s = *impl_;
  if (layer >= s.weights.size()) throw InvalidArgument("layer out of range");
  batch = std::min(batch, s.train.size());
  std::vector<std::size_t> idx(batch);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<int> labels(s.train.labels.begin(), s.train.labels.begin() + batch);
  const auto f = s.forward(s.batch_inputs(s.train, idx));
  return to_tensor(s.neural_gradients(f, labels)[layer]);
}

const MlpConfig& MlpTrainer::config() const { return impl_->config; }
const Dataset& MlpTrainer::train_set() const { return impl_->train; }
const Dataset& MlpTrainer::val_set() const { return impl_->val; }

std::vector<TrainRecord> train(const MlpConfig& config) {
  MlpTrainer trainer(config);
  std::vector<TrainRecord> records;
  records.reserve(static_cast<std::size_t>(config.epochs));
  for (int e = 0; e < config.epochs; ++e) records.push_back(trainer.run_epoch());
  return records;
}

void write_train_csv(std::ostream& out, std::span<const TrainRecord> records) {
  out << "epoch,loss,val_acc\n";
  char line[96];
  for (const auto& r : records) {
    const int n = std::snprintf(line, sizeof line, "%d,%.17g,%.17g\n", r.epoch,
                                r.loss, r.val_acc);
    out.write(line, n);
  }
}

GradientMeanCheck check_gradient_mean(const MlpConfig& config,
                                      EstimatorKind kind, int warmup_epochs,
                                      std::size_t draws, double sigmas) {
  MlpConfig dense = config;
  dense.grad_mask.reset();
  dense.grad_pattern.reset();
  MlpTrainer trainer(dense);
  for (int e = 0; e < warmup_epochs; ++e) trainer.run_epoch();

  const SparsityPattern pattern = natural_pattern(kind);
  const BlockedTensor grad = trainer.neural_gradient(0, config.batch_size);
  const std::size_t n = grad.size();

  // Exact per-element spread of the estimator, used as a floor for the
  // empirical one.
  std::vector<double> exact_sd(n, 0.0);
  const SplitTensor split = split_into_blocks(grad, pattern);
  const auto m = static_cast<std::size_t>(pattern.length());
  for (std::size_t b = 0; b < split.blocks.size(); ++b) {
    const BlockSampler sampler(split.blocks[b], kind, pattern);
    const auto mean = sampler.expected_values();
    const std::size_t f = b / split.layout.blocks_per_fiber();
    const std::size_t k = b % split.layout.blocks_per_fiber();
    for (std::size_t i = 0; i < m; ++i) {
      double var = 0.0;
      for (const Outcome& o : sampler.outcomes()) {
        const double v = ((o.mask >> i) & 1U) ? sampler.kept_value(i) : 0.0;
        var += o.probability * (v - mean[i]) * (v - mean[i]);
      }
      exact_sd[split.layout.offset(f, k * m + i)] = std::sqrt(var);
    }
  }

  std::vector<double> sum(n, 0.0);
  std::vector<double> sum_sq(n, 0.0);
  for (std::size_t d = 0; d < draws; ++d) {
    const BlockedTensor masked =
        prune_tensor(grad, kind, pattern, derive_seed(config.seed, 0xD2A3u, d));
    for (std::size_t i = 0; i < n; ++i) {
      sum[i] += masked.data()[i];
      sum_sq[i] += masked.data()[i] * masked.data()[i];
    }
  }

  GradientMeanCheck check;
  check.draws = draws;
  check.elements = n;
  const double k = static_cast<double>(draws);
  for (std::size_t i = 0; i < n; ++i) {
    const double mean = sum[i] / k;
    const double var = std::max(0.0, (sum_sq[i] - k * mean * mean) / (k - 1));
    const double sd = std::max(std::sqrt(var), exact_sd[i]);
    const double err = std::abs(mean - grad.data()[i]);
    const double tol = sigmas * sd / std::sqrt(k) + 1e-12 * (1.0 + std::abs(grad.data()[i]));
    if (err > tol) ++check.outside;
    if (sd > 0.0) check.max_z = std::max(check.max_z, err * std::sqrt(k) / sd);
  }
  check.passed = check.outside == 0;
  return check;
}

}  // namespace nmsparse
