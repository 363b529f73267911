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

#ifndef SHIFTQ_MODEL_H_
#define SHIFTQ_MODEL_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shiftq/layer.h"

namespace shiftq {

// A chain of layers with ReLU between consecutive layers (none after the
// last). Conv outputs are flattened implicitly when a dense layer follows.
struct Model {
  std::vector<std::size_t> input_shape;
  std::size_t classes = 0;
  std::vector<QuantLayer> layers;
};

Model make_dense_model(std::size_t inputs, std::span<const std::size_t> hidden,
                       std::size_t classes, std::uint64_t seed);

// conv 3x3 (channels -> 8), conv 3x3 stride 2 (8 -> 16), dense 64, dense out.
Model make_cnn_model(std::size_t channels, std::size_t height,
                     std::size_t width, std::size_t classes,
                     std::uint64_t seed);

// How the hidden layers are quantized. The first and last layer always stay
// in full precision.
struct QuantPlan {
  QuantMode mode = QuantMode::kShift;
  int bits = 2;
  bool quantize_weights = true;
  bool quantize_acts = true;
  bool grad_scale = true;
  // Position among the quantized layers whose activation quantizer skips
  // gradient scaling; unset disables the exemption.
  std::optional<std::size_t> exempt_quantized_index = 1;
};

// Sets specs and flags on the hidden layers, records the output sigma of the
// weight quantizers from the current weights and resets activation stats.
void enable_quantization(Model& model, const QuantPlan& plan);
void freeze_stats(Model& model);
std::vector<std::size_t> quantized_layers(const Model& model);

struct ModelCache {
  std::vector<LayerCache> layers;
  // Pre-activation outputs, for the ReLU masks.
  std::vector<Tensor> outputs;
};

Tensor forward_train(Model& model, const Tensor& x, double lambda,
                     ModelCache* cache = nullptr);
Tensor forward_eval(const Model& model, const Tensor& x, double lambda,
                    ModelCache* cache = nullptr);
// Quantized layers run through the integer kernels; the others in float.
Tensor forward_bitexact(const Model& model, const Tensor& x,
                        const BitExactOptions& options = {});

struct ModelGrads {
  std::vector<LayerGrads> layers;
};

ModelGrads backward(const Model& model, const ModelCache& cache,
                    const Tensor& grad_logits,
                    const BackwardOptions& options = {});

// JSON checkpoint holding shapes, weights, stats, alphas and specs.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

// Packed integer export of a quantized model (layout in the README).
void export_packed(const Model& model, const std::filesystem::path& path,
                   int m = 16);

struct PackedModel {
  std::uint32_t version = 0;
  std::vector<std::size_t> input_shape;
  std::size_t classes = 0;
  std::vector<BitExactLayer> quantized;
  std::vector<QuantLayer> full_precision;
  // For each layer in order: true if it lives in `quantized`.
  std::vector<bool> is_quantized;
};

PackedModel read_packed(const std::filesystem::path& path);
Tensor forward_packed(const PackedModel& model, const Tensor& x,
                      int word_width = 32);

}  // namespace shiftq

#endif  // SHIFTQ_MODEL_H_
