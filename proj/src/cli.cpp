// Copyright 2026 The nmsparse Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsparse/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "nmsparse/analysis.hpp"
#include "nmsparse/compressed.hpp"
#include "nmsparse/estimators.hpp"
#include "nmsparse/tensor_io.hpp"
#include "nmsparse/train_demo.hpp"

namespace nmsparse {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

struct PruneArgs {
  std::string method = "greedy";
  std::string pattern;
  int axis = -1;
  std::uint64_t seed = 0;
  std::string in;
  std::string out;
  std::string compressed;
};

struct VerifyArgs {
  std::string method = "mvue12";
  std::size_t blocks = 1000;
  std::size_t samples = 100000;
  std::uint64_t seed = 7;
};

struct ScanArgs {
  double step = 0.02;
  bool refine_edges = false;
  std::string out;
};

struct MacsArgs {
  std::string pattern = "2:4";
  std::size_t trials = 1000000;
  std::uint64_t seed = 7;
};

struct TrainArgs {
  std::string dataset = "two-moons";
  std::string grad_mask = "none";
  std::string grad_pattern;
  std::string act_mask = "none";
  std::string pattern = "2:4";
  int epochs = 200;
  std::uint64_t seed = 7;
  double lr = 0.1;
  std::size_t batch = 32;
  double noise = 0.1;
  std::size_t train_size = 1000;
  std::string out;
};

std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  return f;
}

int run_prune(const PruneArgs& a, std::ostream& out) {
  const EstimatorKind kind = parse_estimator(a.method);
  const SparsityPattern pattern =
      a.pattern.empty() ? natural_pattern(kind) : SparsityPattern::parse(a.pattern);
  require_compatible(kind, pattern);

  const BlockedTensor loaded = read_tensor(a.in);
  const BlockedTensor input(loaded.shape(), loaded.data(), a.axis);
  input.resolved_axis();
  const BlockedTensor pruned = prune_tensor(input, kind, pattern, a.seed);
  write_tensor(a.out, pruned);

  // Check what actually landed on disk.
  const BlockedTensor written = read_tensor(a.out);
  if (!satisfies_pattern(BlockedTensor(written.shape(), written.data(), a.axis),
                         pattern)) {
    throw Error("pruned output violates " + pattern.to_string());
  }
  out << "pruned " << input.size() << " values with " << estimator_name(kind)
      << " " << pattern.to_string() << " -> " << a.out << "\n";

  if (!a.compressed.empty()) {
    const CompressedSparseTensor c = compress(written, pattern);
    write_compressed(a.compressed, c);
    out << "compressed " << c.payload_bytes() << " payload bytes, ratio "
        << fmt("%.6f", c.compression_ratio()) << " -> " << a.compressed << "\n";
  }
  return kExitOk;
}

int run_verify(const VerifyArgs& a, std::ostream& out) {
  VerifyOptions options;
  options.kind = parse_estimator(a.method);
  options.blocks = a.blocks;
  options.samples = a.samples;
  options.seed = a.seed;
  if (a.blocks == 0) throw InvalidArgument("--blocks must be positive");
  bool all = true;
  for (const PropertyResult& r : verify_estimator(options)) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name;
    if (!r.detail.empty()) out << "  " << r.detail;
    out << "\n";
    all = all && r.passed;
  }
  return all ? kExitOk : kExitPropertyFailure;
}

int run_scan(const ScanArgs& a, std::ostream& out) {
  ScanOptions options;
  options.step = a.step;
  options.refine_edges = a.refine_edges;

  std::optional<std::ofstream> file;
  std::optional<ScanCsvWriter> writer;
  if (!a.out.empty()) {
    file.emplace(open_output(a.out));
    writer.emplace(*file);
  }
  const auto start = std::chrono::steady_clock::now();
  const ScanSummary s = variance_ratio_scan(
      options, writer ? std::function<void(const ScanRecord&)>(std::ref(*writer))
                      : std::function<void(const ScanRecord&)>());
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (file) {
    file->flush();
    if (!*file) throw IoError("failed writing '" + a.out + "'");
  }
  out << "points " << s.grid_points << " grid + " << s.refine_points
      << " refine, " << s.skipped << " without ratio\n";
  out << "max ratio " << fmt("%.12f", s.max_ratio) << " at a1="
      << fmt("%.6g", s.argmax.a1) << " a2=" << fmt("%.6g", s.argmax.a2)
      << " a3=" << fmt("%.6g", s.argmax.a3) << " a4=1\n";
  out << "min ratio " << fmt("%.12f", s.min_ratio) << "\n";
  out << "elapsed " << fmt("%.2f", seconds) << " s\n";
  const bool bounded = s.max_ratio < 2.0;
  out << (bounded ? "PASS" : "FAIL") << " ratio < 2\n";
  return bounded ? kExitOk : kExitPropertyFailure;
}

int run_macs(const MacsArgs& a, std::ostream& out) {
  const SparsityPattern pattern = SparsityPattern::parse(a.pattern);
  const MacsReport r = expected_macs(pattern, a.trials, a.seed);
  const double z = r.empirical_std_error > 0.0
                       ? std::abs(r.empirical_mean - r.analytic_mean) / r.empirical_std_error
                       : (r.empirical_mean == r.analytic_mean ? 0.0 : INFINITY);
  out << "pattern " << pattern.to_string() << " trials " << r.trials << "\n";
  out << "analytic mean " << fmt("%.12g", r.analytic_mean) << "\n";
  out << "empirical mean " << fmt("%.12g", r.empirical_mean) << " (std error "
      << fmt("%.3g", r.empirical_std_error) << ", z " << fmt("%.3f", z) << ")\n";
  const bool ok = z <= 3.0;
  out << (ok ? "PASS" : "FAIL") << " within 3 sigma\n";
  return ok ? kExitOk : kExitPropertyFailure;
}

int run_train(const TrainArgs& a, std::ostream& out) {
  MlpConfig config;
  config.dataset = parse_dataset(a.dataset);
  if (a.grad_mask != "none") config.grad_mask = parse_estimator(a.grad_mask);
  if (!a.grad_pattern.empty()) config.grad_pattern = SparsityPattern::parse(a.grad_pattern);
  config.act_mask = parse_activation_mask(a.act_mask);
  config.act_pattern = SparsityPattern::parse(a.pattern);
  config.epochs = a.epochs;
  config.seed = a.seed;
  config.learning_rate = a.lr;
  config.batch_size = a.batch;
  config.noise = a.noise;
  config.train_size = a.train_size;
  config.validate();

  const auto records = train(config);
  if (!a.out.empty()) {
    std::ofstream f = open_output(a.out);
    write_train_csv(f, records);
    f.flush();
    if (!f) throw IoError("failed writing '" + a.out + "'");
  }
  const TrainRecord& last = records.back();
  out << "epochs " << last.epoch << " loss " << fmt("%.6f", last.loss)
      << " val_acc " << fmt("%.4f", last.val_acc) << "\n";
  return kExitOk;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out,
             std::ostream& err) {
  CLI::App app{"N:M structured sparsity estimators"};
  app.name("nmsparse");
  app.require_subcommand(1);

  PruneArgs prune;
  auto* p = app.add_subcommand("prune", "Prune a tensor file block-wise");
  p->add_option("--method", prune.method, "Estimator")->capture_default_str();
  p->add_option("--pattern", prune.pattern, "N:M pattern");
  p->add_option("--axis", prune.axis, "Block axis")->capture_default_str();
  p->add_option("--seed", prune.seed, "Seed")->capture_default_str();
  p->add_option("--compressed", prune.compressed, "Also write compressed output");
  p->add_option("in", prune.in, "Input tensor")->required();
  p->add_option("out", prune.out, "Output tensor")->required();

  VerifyArgs verify;
  auto* v = app.add_subcommand("verify", "Statistical property suite");
  v->add_option("--method", verify.method)->capture_default_str();
  v->add_option("--blocks", verify.blocks)->capture_default_str();
  v->add_option("--samples", verify.samples)->capture_default_str();
  v->add_option("--seed", verify.seed)->capture_default_str();

  ScanArgs scan;
  auto* s = app.add_subcommand("scan", "Approx/exact 2:4 variance ratio scan");
  s->add_option("--step", scan.step)->capture_default_str();
  s->add_flag("--refine-edges", scan.refine_edges);
  s->add_option("--out", scan.out, "CSV output");

  MacsArgs macs;
  auto* m = app.add_subcommand("macs", "Expected MACs of two random masks");
  m->add_option("--pattern", macs.pattern)->capture_default_str();
  m->add_option("--trials", macs.trials)->capture_default_str();
  m->add_option("--seed", macs.seed)->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("demo-train", "Train the MLP demo");
  t->add_option("--dataset", tr.dataset)->capture_default_str();
  t->add_option("--grad-mask", tr.grad_mask)->capture_default_str();
  t->add_option("--grad-pattern", tr.grad_pattern);
  t->add_option("--act-mask", tr.act_mask)->capture_default_str();
  t->add_option("--pattern", tr.pattern, "Activation pattern")->capture_default_str();
  t->add_option("--epochs", tr.epochs)->capture_default_str();
  t->add_option("--seed", tr.seed)->capture_default_str();
  t->add_option("--lr", tr.lr)->capture_default_str();
  t->add_option("--batch", tr.batch)->capture_default_str();
  t->add_option("--noise", tr.noise)->capture_default_str();
  t->add_option("--train-size", tr.train_size)->capture_default_str();
  t->add_option("--out", tr.out, "CSV output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (p->parsed()) return run_prune(prune, out);
    if (v->parsed()) return run_verify(verify, out);
    if (s->parsed()) return run_scan(scan, out);
    if (m->parsed()) return run_macs(macs, out);
    if (t->parsed()) return run_train(tr, out);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitPropertyFailure;
  }
  return kExitUsage;
}

int cli_main(int argc, const char* const* argv) {
  return cli_main(argc, argv, std::cout, std::cerr);
}

}  // namespace nmsparse
