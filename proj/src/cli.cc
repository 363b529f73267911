/* Copyright 2026 The shiftq Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "shiftq/cli.h"

#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>

#include "CLI11.hpp"
#include "shiftq/bitkernel.h"
#include "shiftq/config.h"

namespace shiftq {
namespace {

namespace fs = std::filesystem;

std::string num(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string checkpoint;
  std::optional<double> lambda;
  std::optional<int> s_bits;
  std::string mode;
  std::optional<int> word_width;
  std::optional<int> m;
  std::size_t length = 1000;
  int trials = 100;
  std::size_t samples = 201;
  double x_min = -1.5;
  double x_max = 1.5;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "experiment config file");
  cmd->add_option("--seed", o.seed, "training seed (overrides the config)");
  cmd->add_option("--out", o.out, "output directory (overrides the config)");
}

Config resolve_config(const Options& o) {
  Config c = o.config.empty() ? Config{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.out_dir = o.out;
  if (o.s_bits) c.plan.bits = *o.s_bits;
  if (!o.mode.empty()) {
    if (o.mode == "shift") {
      c.plan.mode = QuantMode::kShift;
    } else if (o.mode == "uniform") {
      c.plan.mode = QuantMode::kUniform;
    } else {
      throw ConfigError("--mode must be shift or uniform");
    }
  }
  if (o.word_width) c.word_width = *o.word_width;
  if (o.m) c.m = *o.m;
  c.validate();
  return c;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

template <typename Fn>
void write_csv(const fs::path& path, Fn fn) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  fn(f);
}

PretrainOptions pretrain_options(const Config& c) {
  PretrainOptions p;
  p.sgd = {c.batch_size, c.momentum, c.seed};
  p.epochs = c.pretrain_epochs;
  p.learning_rate = c.pretrain_lr;
  return p;
}

PretrainResult do_pretrain(const Config& c, const DataSplit& data,
                           std::ostream& out) {
  fs::create_directories(c.out_dir);
  PretrainResult r = pretrain_full_precision(build_model(c, data.train),
                                             data.train, data.test,
                                             pretrain_options(c));
  save_checkpoint(r.model, fs::path(c.out_dir) / "pretrained.json");
  write_csv(fs::path(c.out_dir) / "pretrain_metrics.csv",
            [&](std::ostream& f) { write_metrics_csv(r.records, f); });
  write_file(fs::path(c.out_dir) / "config.ini", serialize_config(c));
  out << "baseline_accuracy=" << num(r.baseline_accuracy) << "\n";
  return r;
}

int cmd_pretrain(const Options& o, std::ostream& out) {
  const Config c = resolve_config(o);
  do_pretrain(c, load_data(c), out);
  return kExitOk;
}

int cmd_finetune(const Options& o, std::ostream& out) {
  const Config c = resolve_config(o);
  const DataSplit data = load_data(c);
  fs::create_directories(c.out_dir);
  Model model = o.checkpoint.empty() ? do_pretrain(c, data, out).model
                                     : load_checkpoint(o.checkpoint);
  FinetuneOptions f;
  f.sgd = {c.batch_size, c.momentum, c.seed};
  f.plan = c.plan;
  const FinetuneResult r =
      finetune_quantized(std::move(model), c.schedule, data.train, data.test, f);
  save_checkpoint(r.model, fs::path(c.out_dir) / "finetuned.json");
  write_csv(fs::path(c.out_dir) / "metrics.csv",
            [&](std::ostream& s) { write_metrics_csv(r.records, s); });
  write_csv(fs::path(c.out_dir) / "curve.csv",
            [&](std::ostream& s) { write_curve_csv(r.records, s); });
  const GapCheck gap = check_no_exploitation(r.records);
  out << "final_acc_lambda=" << num(r.records.back().acc_lambda)
      << " final_acc_zero=" << num(r.records.back().acc_zero) << "\n"
      << gap.message << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const Config c = resolve_config(o);
  const DataSplit data = load_data(c);
  const fs::path ckpt = o.checkpoint.empty()
                            ? fs::path(c.out_dir) / "finetuned.json"
                            : fs::path(o.checkpoint);
  const Model model = load_checkpoint(ckpt);
  const double lambda = o.lambda.value_or(0.0);
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("--lambda must be in [0, 1]");
  }
  out << "lambda=" << num(lambda)
      << " accuracy=" << num(eval_at_lambda(model, data.test, lambda)) << "\n";
  bool shift_only = !quantized_layers(model).empty();
  for (std::size_t i : quantized_layers(model)) {
    shift_only &= model.layers[i].weight_spec.mode() == QuantMode::kShift;
  }
  if (shift_only) {
    const BitExactOptions bx{c.word_width, c.m};
    out << "bitexact_accuracy=" << num(eval_bitexact(model, data.test, bx))
        << "\n";
  }
  return kExitOk;
}

int cmd_export(const Options& o, std::ostream& out) {
  const Config c = resolve_config(o);
  const fs::path ckpt = o.checkpoint.empty()
                            ? fs::path(c.out_dir) / "finetuned.json"
                            : fs::path(o.checkpoint);
  const Model model = load_checkpoint(ckpt);
  fs::create_directories(c.out_dir);
  const fs::path dest = fs::path(c.out_dir) / "model.shqp";
  export_packed(model, dest, c.m);
  out << "wrote " << dest.string() << "\n";
  return kExitOk;
}

int cmd_macbench(const Options& o, std::ostream& out) {
  const int s = o.s_bits.value_or(2);
  check_shift_bits(s);
  const int w = o.word_width.value_or(32);
  if (w != 32 && w != 64) throw ConfigError("--word-width must be 32 or 64");
  if (o.trials < 0) throw ConfigError("--trials must be >= 0");
  const MacBenchResult r =
      run_macbench(s, o.length, o.trials, w, o.seed.value_or(1));
  write_macbench_csv(r, out);
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_csv(fs::path(o.out) / "macbench.csv",
              [&](std::ostream& f) { write_macbench_csv(r, f); });
  }
  return r.verified ? kExitOk : kExitVerify;
}

int cmd_fndump(const Options& o, std::ostream& out) {
  const double lambda = o.lambda.value_or(0.0);
  const int bits = o.s_bits.value_or(2);
  const QuantSpec spec = o.mode == "uniform" ? QuantSpec::uniform(bits, lambda)
                                            : QuantSpec::shift(bits, lambda);
  if (!o.mode.empty() && o.mode != "uniform" && o.mode != "shift") {
    throw ConfigError("--mode must be shift or uniform");
  }
  if (o.out.empty()) {
    write_fndump(spec, o.x_min, o.x_max, o.samples, out);
  } else {
    fs::create_directories(o.out);
    write_csv(fs::path(o.out) / "fndump.csv", [&](std::ostream& f) {
      write_fndump(spec, o.x_min, o.x_max, o.samples, f);
    });
  }
  return kExitOk;
}

template <typename Fn>
double time_ns(Fn fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::nano>(t1 - t0).count();
}

}  // namespace

void write_metrics_csv(const std::vector<MetricsRecord>& records,
                       std::ostream& out) {
  out << "stage_lambda,epoch,loss,acc_lambda,acc_zero,layer,grad_raw,"
         "grad_scaled\n";
  for (const MetricsRecord& r : records) {
    const std::string head = num(r.stage_lambda) + "," +
                             std::to_string(r.epoch) + "," + num(r.loss) +
                             "," + num(r.acc_lambda) + "," + num(r.acc_zero);
    if (r.grads.empty()) {
      out << head << ",,,\n";
      continue;
    }
    for (const GradMagnitude& g : r.grads) {
      out << head << "," << g.name << "," << num(g.raw) << ","
          << num(g.scaled) << "\n";
    }
  }
}

void write_curve_csv(const std::vector<MetricsRecord>& records,
                     std::ostream& out) {
  out << "stage_lambda,epoch,loss,acc_lambda,acc_zero,gap\n";
  for (const MetricsRecord& r : records) {
    out << num(r.stage_lambda) << "," << r.epoch << "," << num(r.loss) << ","
        << num(r.acc_lambda) << "," << num(r.acc_zero) << "," << num(r.gap())
        << "\n";
  }
}

MacBenchResult run_macbench(int s_bits, std::size_t length, int trials,
                            int word_width, std::uint64_t seed) {
  check_shift_bits(s_bits);
  std::mt19937_64 rng(seed);
  const auto draw = [&](int s) {
    std::vector<std::vector<CodePair>> sets(static_cast<std::size_t>(trials));
    std::uniform_int_distribution<int> mag(0, (1 << s) - 1);
    for (auto& set : sets) {
      set.resize(length);
      for (CodePair& p : set) {
        p.first = ShiftCode::make(rng() & 1, static_cast<std::uint8_t>(mag(rng)), s);
        p.second = ShiftCode::make(rng() & 1, static_cast<std::uint8_t>(mag(rng)), s);
      }
    }
    return sets;
  };
  const double ops = static_cast<double>(length) * trials;
  const auto per_op = [&](double ns) { return ops > 0 ? ns / ops : 0.0; };

  MacBenchResult result;
  // Times body first; the checksum is read only after it has run.
  const auto add = [&](const std::string& kernel, int s,
                       const std::function<void()>& body, const std::int64_t& sum) {
    const double ns = time_ns(body);
    result.rows.push_back(
        {kernel, s, length, trials, word_width, per_op(ns), sum});
  };

  const auto sets = draw(s_bits);
  std::int64_t oracle = 0;
  add("oracle", s_bits, [&] {
        for (const auto& set : sets) oracle += mac_oracle(set);
      },
      oracle);
  std::int64_t bank = 0;
  add("bank", s_bits, [&] {
        for (const auto& set : sets) bank += mac_bank(set, s_bits, word_width);
      },
      bank);
  std::vector<std::vector<double>> fa(sets.size()), fb(sets.size());
  for (std::size_t t = 0; t < sets.size(); ++t) {
    for (const CodePair& p : sets[t]) {
      fa[t].push_back(static_cast<double>(p.first.value()));
      fb[t].push_back(static_cast<double>(p.second.value()));
    }
  }
  std::int64_t flt = 0;
  add("float_mac", s_bits, [&] {
        for (std::size_t t = 0; t < sets.size(); ++t) {
          double acc = 0.0;
          for (std::size_t i = 0; i < length; ++i) acc += fa[t][i] * fb[t][i];
          flt += static_cast<std::int64_t>(acc);
        }
      },
      flt);
  result.verified = bank == oracle && flt == oracle;

  // The s = 0 case is the plain binary network: a single accumulator lane.
  const auto signs = draw(0);
  std::int64_t bank0 = 0;
  add("bank", 0, [&] {
        for (const auto& set : signs) bank0 += mac_bank(set, 0, word_width);
      },
      bank0);
  std::vector<std::vector<std::uint64_t>> wa(signs.size()), wb(signs.size());
  for (std::size_t t = 0; t < signs.size(); ++t) {
    wa[t].assign((length + 63) / 64, 0);
    wb[t].assign((length + 63) / 64, 0);
    for (std::size_t i = 0; i < length; ++i) {
      wa[t][i / 64] |= std::uint64_t{signs[t][i].first.positive} << (i % 64);
      wb[t][i / 64] |= std::uint64_t{signs[t][i].second.positive} << (i % 64);
    }
  }
  std::int64_t xnor = 0;
  add("xnor_popcount", 0, [&] {
        for (std::size_t t = 0; t < signs.size(); ++t) {
          xnor += xnor_popcount_dot(wa[t], wb[t], length);
        }
      },
      xnor);
  result.verified = result.verified && bank0 == xnor;
  return result;
}

void write_macbench_csv(const MacBenchResult& result, std::ostream& out) {
  out << "kernel,s_bits,length,trials,word_width,ns_per_op,checksum\n";
  for (const MacBenchRow& r : result.rows) {
    out << r.kernel << "," << r.s_bits << "," << r.length << "," << r.trials
        << "," << r.word_width << "," << num(r.ns_per_op) << "," << r.checksum
        << "\n";
  }
}

void write_fndump(const QuantSpec& spec, double lo, double hi,
                  std::size_t samples, std::ostream& out) {
  if (!(lo <= hi)) throw std::invalid_argument("fndump range is empty");
  out << "x,eval,grad\n";
  for (std::size_t i = 0; i < samples; ++i) {
    const double x =
        samples == 1 ? lo
                     : lo + (hi - lo) * static_cast<double>(i) /
                                static_cast<double>(samples - 1);
    out << num(x) << "," << num(eval(x, spec)) << "," << num(grad(x, spec))
        << "\n";
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"shift quantization toolkit", "shiftq"};
  app.require_subcommand(1);
  Options o;

  auto* pretrain = app.add_subcommand("pretrain", "train the full-precision model");
  add_common(pretrain, o);

  auto* finetune = app.add_subcommand("finetune", "quantized fine-tuning down the lambda ladder");
  add_common(finetune, o);
  finetune->add_option("--checkpoint", o.checkpoint, "pretrained checkpoint");
  finetune->add_option("--s-bits", o.s_bits, "quantizer bits");
  finetune->add_option("--mode", o.mode, "shift | uniform");

  auto* evalc = app.add_subcommand("eval", "test accuracy of a checkpoint");
  add_common(evalc, o);
  evalc->add_option("--checkpoint", o.checkpoint, "checkpoint to evaluate");
  evalc->add_option("--lambda", o.lambda, "quantizer slope (default 0)");
  evalc->add_option("--word-width", o.word_width, "popcount word width");
  evalc->add_option("--m", o.m, "activation scale bits, weight-only mode");

  auto* macbench = app.add_subcommand("macbench", "time and cross-check the MAC kernels");
  macbench->add_option("--seed", o.seed, "code generator seed");
  macbench->add_option("--out", o.out, "also write macbench.csv here");
  macbench->add_option("--s-bits", o.s_bits, "shift bits (0-4)");
  macbench->add_option("--word-width", o.word_width, "32 or 64");
  macbench->add_option("--length", o.length, "codes per dot product");
  macbench->add_option("--trials", o.trials, "dot products per kernel");

  auto* fndump = app.add_subcommand("fndump", "CSV of a quantization function");
  fndump->add_option("--out", o.out, "write fndump.csv here instead of stdout");
  fndump->add_option("--mode", o.mode, "shift | uniform");
  fndump->add_option("--s-bits", o.s_bits, "bits (shift: 0-4, uniform: q)");
  fndump->add_option("--lambda", o.lambda, "slope (default 0)");
  fndump->add_option("--samples", o.samples, "points");
  fndump->add_option("--x-min", o.x_min, "range start");
  fndump->add_option("--x-max", o.x_max, "range end");

  auto* exportc = app.add_subcommand("export", "write the packed integer model");
  add_common(exportc, o);
  exportc->add_option("--checkpoint", o.checkpoint, "quantized checkpoint");
  exportc->add_option("--m", o.m, "activation scale bits, weight-only mode");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*pretrain) return cmd_pretrain(o, out);
    if (*finetune) return cmd_finetune(o, out);
    if (*evalc) return cmd_eval(o, out);
    if (*macbench) return cmd_macbench(o, out);
    if (*fndump) return cmd_fndump(o, out);
    if (*exportc) return cmd_export(o, out);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace shiftq
