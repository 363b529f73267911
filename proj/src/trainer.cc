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

#include "shiftq/trainer.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>

namespace shiftq {
namespace {

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct Velocity {
  std::vector<double> weight;
  std::vector<double> bias;
  double alpha = 0.0;
};

std::vector<Velocity> make_velocity(const Model& model) {
  std::vector<Velocity> v(model.layers.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i].weight.assign(model.layers[i].weight.size(), 0.0);
    v[i].bias.assign(model.layers[i].bias.size(), 0.0);
  }
  return v;
}

void sgd_step(Model& model, const ModelGrads& grads, std::vector<Velocity>& vel,
              double lr, double momentum) {
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    QuantLayer& layer = model.layers[i];
    const LayerGrads& g = grads.layers[i];
    Velocity& v = vel[i];
    for (std::size_t k = 0; k < v.weight.size(); ++k) {
      v.weight[k] = momentum * v.weight[k] + g.weight[k];
      layer.weight[k] -= lr * v.weight[k];
    }
    for (std::size_t k = 0; k < v.bias.size(); ++k) {
      v.bias[k] = momentum * v.bias[k] + g.bias[k];
      layer.bias[k] -= lr * v.bias[k];
    }
    if (layer.quantized()) {
      v.alpha = momentum * v.alpha + g.alpha;
      layer.alpha = std::max(layer.alpha - lr * v.alpha, 1e-6);
    }
  }
}

double mean_abs(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s / static_cast<double>(v.size());
}

template <typename Forward>
double accuracy(const Dataset& data, std::size_t classes, Forward forward) {
  if (data.empty()) return 0.0;
  constexpr std::size_t kChunk = 256;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t end = std::min(data.size(), start + kChunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits = forward(data.batch(idx));
    for (std::size_t n = 0; n < idx.size(); ++n) {
      const auto row = logits.sample(n);
      const auto best = std::max_element(row.begin(), row.begin() + classes);
      if (best - row.begin() == data.labels[idx[n]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::vector<int> labels_of(const Dataset& data,
                           std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(data.labels[i]);
  return out;
}

// One pass over the shuffled training set; returns the mean batch loss.
double train_epoch(Model& model, const Dataset& train, double lambda,
                   double lr, const SgdOptions& sgd, bool grad_scale,
                   std::vector<Velocity>& vel, std::vector<std::size_t>& order,
                   std::mt19937_64& rng) {
  std::shuffle(order.begin(), order.end(), rng);
  const BackwardOptions bopts{grad_scale};
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += sgd.batch_size) {
    const std::size_t end = std::min(order.size(), start + sgd.batch_size);
    const std::span<const std::size_t> idx(order.data() + start, end - start);
    const Tensor x = train.batch(idx);
    const std::vector<int> y = labels_of(train, idx);
    ModelCache cache;
    const Tensor logits = forward_train(model, x, lambda, &cache);
    Tensor grad;
    const double loss = softmax_cross_entropy(logits, y, &grad);
    if (!std::isfinite(loss)) return loss;
    sgd_step(model, backward(model, cache, grad, bopts), vel, lr,
             sgd.momentum);
    total += loss;
    ++batches;
  }
  return batches == 0 ? 0.0 : total / static_cast<double>(batches);
}

void check_data(const Model& model, const Dataset& data, const char* which) {
  if (data.empty()) return;
  if (data.sample_size() != shape_size(model.input_shape)) {
    throw DataError(std::string(which) +
                    " samples do not match the model input size");
  }
  for (int l : data.labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= model.classes) {
      throw DataError(std::string(which) + " label out of range");
    }
  }
}

}  // namespace

Schedule Schedule::default_ladder() {
  return {{{1.0, 1, 1e-2},
           {0.5, 3, 1e-2},
           {0.25, 3, 1e-2},
           {0.125, 3, 1e-3},
           {0.0625, 2, 1e-3},
           {0.03125, 1, 1e-3},
           {0.015625, 1, 1e-3},
           {0.0078125, 1, 1e-3}}};
}

void Schedule::validate() const {
  if (stages.empty()) throw std::invalid_argument("schedule has no stages");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const Stage& s = stages[i];
    if (!(s.lambda > 0.0) || s.lambda > 1.0) {
      throw std::invalid_argument("stage lambda must be in (0, 1]");
    }
    if (i > 0 && !(s.lambda < stages[i - 1].lambda)) {
      throw std::invalid_argument("stage lambdas must be strictly decreasing");
    }
    if (s.epochs < 0) throw std::invalid_argument("negative epoch count");
    if (!(s.learning_rate > 0.0)) {
      throw std::invalid_argument("learning rate must be positive");
    }
  }
}

int Schedule::total_epochs() const {
  int n = 0;
  for (const Stage& s : stages) n += s.epochs;
  return n;
}

DivergenceError::DivergenceError(double lambda, int epoch,
                                 const std::string& detail)
    : std::runtime_error("diverged at stage lambda=" + fmt(lambda) +
                         " epoch " + std::to_string(epoch) + ": " +
                         (detail.empty() ? "non-finite loss" : detail)),
      lambda_(lambda),
      epoch_(epoch) {}

double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels,
                             Tensor* grad) {
  const std::size_t n = logits.batch();
  if (labels.size() != n) throw std::invalid_argument("label count mismatch");
  const std::size_t k = logits.sample_size();
  if (grad != nullptr) *grad = Tensor(logits.shape());
  double loss = 0.0;
  std::vector<double> p(k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = logits.sample(i);
    const double top = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += p[j] = std::exp(row[j] - top);
    const auto y = static_cast<std::size_t>(labels[i]);
    loss += std::log(z) - (row[y] - top);
    if (grad != nullptr) {
      for (std::size_t j = 0; j < k; ++j) {
        (*grad)[i * k + j] =
            (p[j] / z - (j == y ? 1.0 : 0.0)) / static_cast<double>(n);
      }
    }
  }
  return n == 0 ? 0.0 : loss / static_cast<double>(n);
}

double eval_at_lambda(const Model& model, const Dataset& data, double lambda) {
  return accuracy(data, model.classes, [&](const Tensor& x) {
    return forward_eval(model, x, lambda);
  });
}

double eval_bitexact(const Model& model, const Dataset& data,
                     const BitExactOptions& options) {
  return accuracy(data, model.classes, [&](const Tensor& x) {
    return forward_bitexact(model, x, options);
  });
}

std::vector<GradMagnitude> grad_magnitude_report(const Model& model,
                                                 const Tensor& x,
                                                 std::span<const int> labels,
                                                 double lambda) {
  if (!(lambda > 0.0)) throw std::domain_error("gradient report needs lambda > 0");
  ModelCache cache;
  const Tensor logits = forward_eval(model, x, lambda, &cache);
  Tensor grad;
  softmax_cross_entropy(logits, labels, &grad);
  const ModelGrads raw = backward(model, cache, grad, {false});
  const ModelGrads scaled = backward(model, cache, grad, {true});
  std::vector<GradMagnitude> out;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const QuantLayer& layer = model.layers[i];
    const std::string tag = "L" + std::to_string(i);
    if (i == 0 || layer.quantize_weights) {
      out.push_back({tag + ".w", mean_abs(raw.layers[i].weight.values()),
                     mean_abs(scaled.layers[i].weight.values())});
    }
    if (layer.quantize_acts) {
      out.push_back({tag + ".a", mean_abs(raw.layers[i].input.values()),
                     mean_abs(scaled.layers[i].input.values())});
    }
  }
  return out;
}

PretrainResult pretrain_full_precision(Model model, const Dataset& train,
                                       const Dataset& test,
                                       const PretrainOptions& options) {
  if (!quantized_layers(model).empty()) {
    throw std::invalid_argument("pretraining expects a full-precision model");
  }
  if (options.epochs < 0) throw std::invalid_argument("negative epoch count");
  if (options.sgd.batch_size == 0) throw std::invalid_argument("batch size 0");
  if (options.epochs > 0 && train.empty()) throw DataError("dataset missing: empty training set");
  check_data(model, train, "training");
  check_data(model, test, "test");

  PretrainResult result;
  std::mt19937_64 rng(options.sgd.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Velocity> vel = make_velocity(model);
  for (int e = 1; e <= options.epochs; ++e) {
    double loss;
    try {
      loss = train_epoch(model, train, 1.0, options.learning_rate, options.sgd,
                         false, vel, order, rng);
    } catch (const std::domain_error& err) {
      throw DivergenceError(1.0, e, err.what());
    }
    if (!std::isfinite(loss)) throw DivergenceError(1.0, e);
    MetricsRecord rec;
    rec.stage_lambda = 1.0;
    rec.epoch = e;
    rec.loss = loss;
    rec.acc_lambda = rec.acc_zero = eval_at_lambda(model, test, 1.0);
    result.records.push_back(std::move(rec));
  }
  result.baseline_accuracy = eval_at_lambda(model, test, 1.0);
  result.model = std::move(model);
  return result;
}

FinetuneResult finetune_quantized(Model model, const Schedule& schedule,
                                  const Dataset& train, const Dataset& test,
                                  const FinetuneOptions& options) {
  schedule.validate();
  if (options.sgd.batch_size == 0) throw std::invalid_argument("batch size 0");
  if (train.empty()) throw DataError("dataset missing: empty training set");
  check_data(model, train, "training");
  check_data(model, test, "test");
  enable_quantization(model, options.plan);

  std::vector<std::size_t> probe(std::min(options.probe_size, train.size()));
  std::iota(probe.begin(), probe.end(), 0);
  const Tensor probe_x = train.batch(probe);
  const std::vector<int> probe_y = labels_of(train, probe);

  FinetuneResult result;
  std::mt19937_64 rng(options.sgd.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Velocity> vel = make_velocity(model);
  int epoch = 0;
  for (std::size_t si = 0; si < schedule.stages.size(); ++si) {
    const Stage& stage = schedule.stages[si];
    if (si == 1) freeze_stats(model);
    for (int e = 0; e < stage.epochs; ++e) {
      ++epoch;
      double loss;
      try {
        loss = train_epoch(model, train, stage.lambda, stage.learning_rate,
                           options.sgd, options.plan.grad_scale, vel, order,
                           rng);
      } catch (const std::domain_error& err) {
        // non-finite values reaching a quantizer, or collapsed statistics
        throw DivergenceError(stage.lambda, epoch, err.what());
      }
      if (!std::isfinite(loss)) throw DivergenceError(stage.lambda, epoch);
      MetricsRecord rec;
      rec.stage_lambda = stage.lambda;
      rec.epoch = epoch;
      rec.loss = loss;
      rec.acc_lambda = eval_at_lambda(model, test, stage.lambda);
      rec.acc_zero = eval_at_lambda(model, test, 0.0);
      rec.grads = grad_magnitude_report(model, probe_x, probe_y, stage.lambda);
      result.records.push_back(std::move(rec));
    }
  }
  freeze_stats(model);
  result.model = std::move(model);
  return result;
}

GapCheck check_no_exploitation(const std::vector<MetricsRecord>& records,
                               double tolerance) {
  GapCheck check;
  check.tolerance = tolerance;
  if (records.empty()) {
    check.message = "no records";
    return check;
  }
  check.final_gap = records.back().gap();
  check.ok = check.final_gap <= tolerance;
  check.message = check.ok ? "no exploitation of lambda: final gap " +
                                 fmt(check.final_gap)
                           : "lambda exploited: final gap " +
                                 fmt(check.final_gap) + " exceeds " +
                                 fmt(tolerance);
  return check;
}

}  // namespace shiftq
