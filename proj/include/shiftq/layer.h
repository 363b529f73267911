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

// Quantized dense and convolution layers.
//
// A quantized layer computes
//
//   y = alpha * (Qw(W) (*) Qa(x)) + bias
//
// where Qw and Qa are Gaussian-wrapped quantizers: weights are normalized
// per output unit with the current filter mean/std and mapped back with the
// frozen pretrained std, activations use running statistics. Layers with
// both quantizers disabled are plain full-precision layers (no alpha).

#ifndef SHIFTQ_LAYER_H_
#define SHIFTQ_LAYER_H_

#include <cstddef>
#include <span>
#include <vector>

#include "shiftq/bitkernel.h"
#include "shiftq/quantfn.h"
#include "shiftq/tensor.h"

namespace shiftq {

enum class LayerKind { kDense, kConv2D };

struct ConvShape {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t in_height = 1;
  std::size_t in_width = 1;

  std::size_t out_height() const {
    return (in_height + 2 * padding - kernel) / stride + 1;
  }
  std::size_t out_width() const {
    return (in_width + 2 * padding - kernel) / stride + 1;
  }
};

// Exponential moving average of the activation mean and std.
class RunningStats {
 public:
  explicit RunningStats(double momentum = 0.1) : momentum_(momentum) {}

  // The first observation initializes the averages directly.
  void observe(std::span<const double> values);
  void set(double mu, double sigma);
  void freeze() { frozen_ = true; }
  void unfreeze() { frozen_ = false; }

  double mu() const { return mu_; }
  double sigma() const { return sigma_; }
  double momentum() const { return momentum_; }
  bool frozen() const { return frozen_; }
  bool initialized() const { return initialized_; }

 private:
  double momentum_;
  double mu_ = 0.0;
  double sigma_ = 1.0;
  bool frozen_ = false;
  bool initialized_ = false;
};

struct QuantLayer {
  LayerKind kind = LayerKind::kDense;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  ConvShape conv;

  // Dense: [out, in]. Conv: [out_channels, in_channels, k, k].
  Tensor weight;
  std::vector<double> bias;

  QuantSpec weight_spec = QuantSpec::shift(2, 1.0);
  QuantSpec act_spec = QuantSpec::shift(2, 1.0);
  // Output std of the weight quantizer, one per unit. Fixed at the value of
  // the pretrained weights once quantization is enabled.
  std::vector<double> weight_sigma_out;
  RunningStats act_stats;
  double alpha = 1.0;

  bool quantize_weights = false;
  bool quantize_acts = false;
  bool act_grad_scale_exempt = false;

  static QuantLayer dense(std::size_t in, std::size_t out);
  static QuantLayer conv2d(const ConvShape& shape);

  bool quantized() const { return quantize_weights || quantize_acts; }
  // Output units: rows for dense, filters for conv.
  std::size_t units() const;
  std::size_t fan_in() const;
  std::size_t input_size() const;
  std::size_t output_size() const;
  std::vector<std::size_t> output_shape(std::size_t batch) const;

  // Records weight_sigma_out from the current weights.
  void freeze_weight_sigma();
};

// Per-unit (mu, sigma_in) of the current weights with the frozen sigma_out.
std::vector<GaussianStats> weight_stats(const QuantLayer& layer);
GaussianStats act_gaussian(const QuantLayer& layer);

// Intermediates kept by a forward pass for backward().
struct LayerCache {
  Tensor input;
  Tensor q_input;
  Tensor q_weight;
  Tensor pre_alpha;
  std::vector<GaussianStats> wstats;
  GaussianStats astats;
  double lambda = 1.0;
};

// lambda in (0, 1]. Updates the activation statistics unless frozen.
Tensor forward_train(QuantLayer& layer, const Tensor& x, double lambda,
                     LayerCache* cache = nullptr);

// lambda in [0, 1]; never touches the statistics.
Tensor forward_eval(const QuantLayer& layer, const Tensor& x, double lambda,
                    LayerCache* cache = nullptr);

// Level values only (lambda = 0).
Tensor forward_quantized(const QuantLayer& layer, const Tensor& x);

struct BitExactOptions {
  int word_width = 32;
  int m = 16;
};

// Folded output scale per unit: alpha times the 3 sigma factors of each
// quantized side, divided by 2^(2^s - 1) per quantized side and by 2^m when
// activations stay in full precision.
std::vector<double> fold_alpha(const QuantLayer& layer, int m = 16);

// A shift-quantized layer lowered to integer codes. Weights are encoded once;
// activations are encoded (or scaled by 2^m) per call.
struct BitExactLayer {
  LayerKind kind = LayerKind::kDense;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  ConvShape conv;
  int s_bits = 0;
  bool quantize_acts = false;
  int m = 16;
  PackedCodeVector weight_codes;
  std::vector<double> scale;
  std::vector<double> bias;
  GaussianStats act_stats;

  std::size_t units() const;
  std::size_t fan_in() const;
};

BitExactLayer compile_bitexact(const QuantLayer& layer, int m = 16);
Tensor run_bitexact(const BitExactLayer& layer, const Tensor& x,
                    int word_width = 32);
Tensor forward_bitexact(const QuantLayer& layer, const Tensor& x,
                        const BitExactOptions& options = {});

struct BackwardOptions {
  // When false every quantizer uses its raw slope lambda.
  bool apply_grad_scaling = true;
};

struct LayerGrads {
  Tensor weight;
  std::vector<double> bias;
  double alpha = 0.0;
  Tensor input;
};

LayerGrads backward(const QuantLayer& layer, const LayerCache& cache,
                    const Tensor& grad_out,
                    const BackwardOptions& options = {});

}  // namespace shiftq

#endif  // SHIFTQ_LAYER_H_
