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

// Random layers and the numerical oracles shared by the layer tests and the
// acceptance binary.

#ifndef SHIFTQ_TESTS_LAYER_FIXTURES_H_
#define SHIFTQ_TESTS_LAYER_FIXTURES_H_

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "shiftq/layer.h"

namespace shiftq::testing {

inline Tensor random_tensor(std::vector<std::size_t> shape, double stddev,
                            std::mt19937_64& rng, double mean = 0.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(mean, stddev);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

struct LayerRecipe {
  bool conv = false;
  QuantMode mode = QuantMode::kShift;
  int bits = 2;
  bool quantize_weights = true;
  bool quantize_acts = true;
};

// Small random layer with frozen activation stats and a recorded sigma_out
// that differs from the current weight std.
inline QuantLayer random_layer(const LayerRecipe& r, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> small(2, 5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  QuantLayer layer;
  if (r.conv) {
    ConvShape c;
    c.in_channels = small(rng) - 1;
    c.out_channels = small(rng);
    c.kernel = 3;
    c.stride = unit(rng) < 0.5 ? 1 : 2;
    c.padding = unit(rng) < 0.5 ? 0 : 1;
    c.in_height = small(rng) + 2;
    c.in_width = small(rng) + 2;
    layer = QuantLayer::conv2d(c);
  } else {
    layer = QuantLayer::dense(small(rng) + 2, small(rng));
  }
  layer.weight = random_tensor(layer.weight.shape(), 0.5, rng);
  for (double& b : layer.bias) b = unit(rng) - 0.5;
  const auto make = [&](double lambda) {
    return r.mode == QuantMode::kShift ? QuantSpec::shift(r.bits, lambda)
                                       : QuantSpec::uniform(r.bits, lambda);
  };
  layer.weight_spec = make(1.0);
  layer.act_spec = make(1.0);
  layer.quantize_weights = r.quantize_weights;
  layer.quantize_acts = r.quantize_acts;
  layer.freeze_weight_sigma();
  for (double& s : layer.weight_sigma_out) s *= 0.5 + unit(rng);
  layer.act_stats.set(unit(rng) - 0.5, 0.5 + unit(rng));
  layer.act_stats.freeze();
  layer.alpha = 0.5 + 1.5 * unit(rng);
  return layer;
}

inline Tensor random_input(const QuantLayer& layer, std::size_t batch,
                           std::mt19937_64& rng) {
  std::vector<std::size_t> shape = {batch};
  if (layer.kind == LayerKind::kConv2D) {
    shape.insert(shape.end(), {layer.conv.in_channels, layer.conv.in_height,
                               layer.conv.in_width});
  } else {
    shape.push_back(layer.in_features);
  }
  return random_tensor(std::move(shape), 1.0, rng, layer.act_stats.mu());
}

// Level values at lambda = 0 of every quantized weight and activation; two
// configurations with the same signature lie on the same smooth piece.
inline std::vector<double> level_signature(const QuantLayer& layer,
                                           const Tensor& x) {
  LayerCache cache;
  forward_eval(layer, x, 0.0, &cache);
  std::vector<double> sig;
  if (layer.quantize_acts) {
    sig.insert(sig.end(), cache.q_input.values().begin(),
               cache.q_input.values().end());
  }
  if (layer.quantize_weights) {
    sig.insert(sig.end(), cache.q_weight.values().begin(),
               cache.q_weight.values().end());
  }
  return sig;
}

inline double probe_loss(const QuantLayer& layer, const Tensor& x,
                         const Tensor& r, double lambda) {
  const Tensor y = forward_eval(layer, x, lambda);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
  return s;
}

struct FdResult {
  double rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

// Central differences of sum(r * y) against backward() with raw slopes, over
// weights, inputs, biases and alpha. Coordinates whose stencil changes a
// level are skipped.
inline FdResult finite_difference_check(QuantLayer layer, Tensor x,
                                        double lambda, std::mt19937_64& rng,
                                        double h = 1e-6) {
  LayerCache cache;
  const Tensor y = forward_eval(layer, x, lambda, &cache);
  const Tensor r = random_tensor(y.shape(), 1.0, rng);
  const LayerGrads g = backward(layer, cache, r, {false});
  const std::vector<double> base = level_signature(layer, x);

  std::vector<double> analytic;
  std::vector<double> numeric;
  FdResult res;
  const auto probe = [&](double& slot, double expected) {
    const double keep = slot;
    slot = keep + h;
    const bool same_hi = level_signature(layer, x) == base;
    const double hi = probe_loss(layer, x, r, lambda);
    slot = keep - h;
    const bool same_lo = level_signature(layer, x) == base;
    const double lo = probe_loss(layer, x, r, lambda);
    slot = keep;
    if (!same_hi || !same_lo) {
      ++res.skipped;
      return;
    }
    analytic.push_back(expected);
    numeric.push_back((hi - lo) / (2 * h));
    ++res.checked;
  };
  for (std::size_t k = 0; k < layer.weight.size(); ++k) {
    probe(layer.weight[k], g.weight[k]);
  }
  for (std::size_t k = 0; k < x.size(); ++k) probe(x[k], g.input[k]);
  for (std::size_t k = 0; k < layer.bias.size(); ++k) {
    probe(layer.bias[k], g.bias[k]);
  }
  if (layer.quantized()) probe(layer.alpha, g.alpha);

  double diff = 0.0;
  double norm = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    norm += analytic[i] * analytic[i];
  }
  res.rel_error = std::sqrt(diff) / std::max(std::sqrt(norm), 1e-300);
  return res;
}

// max |a - b| / max |b|
inline double max_rel_error(const Tensor& a, const Tensor& b) {
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return scale == 0.0 ? diff : diff / scale;
}

}  // namespace shiftq::testing

#endif  // SHIFTQ_TESTS_LAYER_FIXTURES_H_
