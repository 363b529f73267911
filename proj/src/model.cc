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

#include "shiftq/model.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace shiftq {
namespace {

using nlohmann::json;

void he_init(QuantLayer& layer, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(
      0.0, std::sqrt(2.0 / static_cast<double>(layer.fan_in())));
  for (double& w : layer.weight.values()) w = dist(rng);
}

Tensor relu(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor as_input(const Model& model, const Tensor& x) {
  std::vector<std::size_t> shape = {x.batch()};
  shape.insert(shape.end(), model.input_shape.begin(), model.input_shape.end());
  if (x.size() != shape_size(shape)) {
    throw std::invalid_argument("model input has the wrong sample size");
  }
  return x.reshaped(std::move(shape));
}

// --- checkpoint (JSON) ------------------------------------------------------

json spec_to_json(const QuantSpec& spec) {
  return {{"mode", spec.mode() == QuantMode::kShift ? "shift" : "uniform"},
          {"bits", spec.bits()},
          {"lambda", spec.lambda()},
          {"grad_scale", spec.grad_scale()}};
}

QuantSpec spec_from_json(const json& j) {
  const std::string mode = j.at("mode").get<std::string>();
  const int bits = j.at("bits").get<int>();
  const double lambda = j.at("lambda").get<double>();
  const bool scale = j.at("grad_scale").get<bool>();
  if (mode == "shift") return QuantSpec::shift(bits, lambda, scale);
  if (mode == "uniform") return QuantSpec::uniform(bits, lambda, scale);
  throw std::runtime_error("checkpoint: unknown quantization mode " + mode);
}

json layer_to_json(const QuantLayer& layer) {
  const ConvShape& c = layer.conv;
  return {
      {"kind", layer.kind == LayerKind::kDense ? "dense" : "conv2d"},
      {"in_features", layer.in_features},
      {"out_features", layer.out_features},
      {"conv",
       {{"in_channels", c.in_channels},
        {"out_channels", c.out_channels},
        {"kernel", c.kernel},
        {"stride", c.stride},
        {"padding", c.padding},
        {"in_height", c.in_height},
        {"in_width", c.in_width}}},
      {"weight_shape", layer.weight.shape()},
      {"weight", std::vector<double>(layer.weight.values().begin(),
                                     layer.weight.values().end())},
      {"bias", layer.bias},
      {"alpha", layer.alpha},
      {"quantize_weights", layer.quantize_weights},
      {"quantize_acts", layer.quantize_acts},
      {"act_grad_scale_exempt", layer.act_grad_scale_exempt},
      {"weight_spec", spec_to_json(layer.weight_spec)},
      {"act_spec", spec_to_json(layer.act_spec)},
      {"weight_sigma_out", layer.weight_sigma_out},
      {"act_stats",
       {{"mu", layer.act_stats.mu()},
        {"sigma", layer.act_stats.sigma()},
        {"momentum", layer.act_stats.momentum()},
        {"frozen", layer.act_stats.frozen()},
        {"initialized", layer.act_stats.initialized()}}},
  };
}

QuantLayer layer_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  QuantLayer layer;
  if (kind == "dense") {
    layer = QuantLayer::dense(j.at("in_features").get<std::size_t>(),
                              j.at("out_features").get<std::size_t>());
  } else if (kind == "conv2d") {
    const json& c = j.at("conv");
    ConvShape shape;
    shape.in_channels = c.at("in_channels").get<std::size_t>();
    shape.out_channels = c.at("out_channels").get<std::size_t>();
    shape.kernel = c.at("kernel").get<std::size_t>();
    shape.stride = c.at("stride").get<std::size_t>();
    shape.padding = c.at("padding").get<std::size_t>();
    shape.in_height = c.at("in_height").get<std::size_t>();
    shape.in_width = c.at("in_width").get<std::size_t>();
    layer = QuantLayer::conv2d(shape);
  } else {
    throw std::runtime_error("checkpoint: unknown layer kind " + kind);
  }
  layer.weight = Tensor(j.at("weight_shape").get<std::vector<std::size_t>>(),
                        j.at("weight").get<std::vector<double>>());
  if (layer.weight.size() != layer.units() * layer.fan_in()) {
    throw std::runtime_error("checkpoint: weight size mismatch");
  }
  layer.bias = j.at("bias").get<std::vector<double>>();
  if (layer.bias.size() != layer.units()) {
    throw std::runtime_error("checkpoint: bias size mismatch");
  }
  layer.alpha = j.at("alpha").get<double>();
  layer.quantize_weights = j.at("quantize_weights").get<bool>();
  layer.quantize_acts = j.at("quantize_acts").get<bool>();
  layer.act_grad_scale_exempt = j.at("act_grad_scale_exempt").get<bool>();
  layer.weight_spec = spec_from_json(j.at("weight_spec"));
  layer.act_spec = spec_from_json(j.at("act_spec"));
  layer.weight_sigma_out = j.at("weight_sigma_out").get<std::vector<double>>();
  const json& st = j.at("act_stats");
  layer.act_stats = RunningStats(st.at("momentum").get<double>());
  if (st.at("initialized").get<bool>()) {
    layer.act_stats.set(st.at("mu").get<double>(), st.at("sigma").get<double>());
  }
  if (st.at("frozen").get<bool>()) layer.act_stats.freeze();
  return layer;
}

// --- packed export (little-endian binary) -----------------------------------

constexpr char kPackedMagic[4] = {'S', 'H', 'Q', 'P'};
constexpr std::uint32_t kPackedVersion = 1;

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path)
      : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
  }
  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void size(std::size_t v) {
    if (v > 0xFFFFFFFFu) throw std::length_error("value exceeds 32 bits");
    u32(static_cast<std::uint32_t>(v));
  }
  void doubles(std::span<const double> v) {
    size(v.size());
    for (double d : v) f64(d);
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path)
      : in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot read " + path.string());
  }
  std::uint8_t u8() {
    const int c = in_.get();
    if (c == std::char_traits<char>::eof()) {
      throw std::runtime_error("packed model truncated");
    }
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{u8()} << (8 * i);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t{u8()} << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::vector<double> doubles() {
    std::vector<double> v(u32());
    for (double& d : v) d = f64();
    return v;
  }

 private:
  std::ifstream in_;
};

void write_geometry(Writer& w, LayerKind kind, std::size_t in, std::size_t out,
                    const ConvShape& c) {
  w.u8(kind == LayerKind::kDense ? 0 : 1);
  w.size(in);
  w.size(out);
  for (std::size_t v : {c.in_channels, c.out_channels, c.kernel, c.stride,
                        c.padding, c.in_height, c.in_width}) {
    w.size(v);
  }
}

}  // namespace

Model make_dense_model(std::size_t inputs, std::span<const std::size_t> hidden,
                       std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Model model;
  model.input_shape = {inputs};
  model.classes = classes;
  std::size_t width = inputs;
  for (std::size_t h : hidden) {
    model.layers.push_back(QuantLayer::dense(width, h));
    width = h;
  }
  model.layers.push_back(QuantLayer::dense(width, classes));
  for (QuantLayer& layer : model.layers) he_init(layer, rng);
  return model;
}

Model make_cnn_model(std::size_t channels, std::size_t height,
                     std::size_t width, std::size_t classes,
                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Model model;
  model.input_shape = {channels, height, width};
  model.classes = classes;

  ConvShape first{channels, 8, 3, 1, 1, height, width};
  model.layers.push_back(QuantLayer::conv2d(first));
  ConvShape second{8, 16, 3, 2, 1, first.out_height(), first.out_width()};
  model.layers.push_back(QuantLayer::conv2d(second));
  const std::size_t flat =
      second.out_channels * second.out_height() * second.out_width();
  model.layers.push_back(QuantLayer::dense(flat, 64));
  model.layers.push_back(QuantLayer::dense(64, classes));
  for (QuantLayer& layer : model.layers) he_init(layer, rng);
  return model;
}

void enable_quantization(Model& model, const QuantPlan& plan) {
  if (model.layers.size() < 3) {
    throw std::invalid_argument(
        "quantization needs at least one hidden layer between the "
        "full-precision first and last layers");
  }
  const auto make = [&](double lambda) {
    return plan.mode == QuantMode::kShift
               ? QuantSpec::shift(plan.bits, lambda, plan.grad_scale)
               : QuantSpec::uniform(plan.bits, lambda, plan.grad_scale);
  };
  std::size_t position = 0;
  for (std::size_t i = 1; i + 1 < model.layers.size(); ++i, ++position) {
    QuantLayer& layer = model.layers[i];
    layer.weight_spec = make(1.0);
    layer.act_spec = make(1.0);
    layer.quantize_weights = plan.quantize_weights;
    layer.quantize_acts = plan.quantize_acts;
    layer.act_grad_scale_exempt = plan.exempt_quantized_index.has_value() &&
                                  *plan.exempt_quantized_index == position;
    layer.freeze_weight_sigma();
    layer.act_stats = RunningStats();
    layer.alpha = 1.0;
  }
}

void freeze_stats(Model& model) {
  for (QuantLayer& layer : model.layers) layer.act_stats.freeze();
}

std::vector<std::size_t> quantized_layers(const Model& model) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (model.layers[i].quantized()) out.push_back(i);
  }
  return out;
}

Tensor forward_train(Model& model, const Tensor& x, double lambda,
                     ModelCache* cache) {
  if (cache != nullptr) {
    cache->layers.assign(model.layers.size(), {});
    cache->outputs.assign(model.layers.size(), {});
  }
  Tensor h = as_input(model, x);
  Tensor out;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    out = forward_train(model.layers[i], h, lambda,
                        cache ? &cache->layers[i] : nullptr);
    if (cache != nullptr) cache->outputs[i] = out;
    if (i + 1 < model.layers.size()) h = relu(out);
  }
  return out;
}

Tensor forward_eval(const Model& model, const Tensor& x, double lambda,
                    ModelCache* cache) {
  if (cache != nullptr) {
    cache->layers.assign(model.layers.size(), {});
    cache->outputs.assign(model.layers.size(), {});
  }
  Tensor h = as_input(model, x);
  Tensor out;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    out = forward_eval(model.layers[i], h, lambda,
                       cache ? &cache->layers[i] : nullptr);
    if (cache != nullptr) cache->outputs[i] = out;
    if (i + 1 < model.layers.size()) h = relu(out);
  }
  return out;
}

Tensor forward_bitexact(const Model& model, const Tensor& x,
                        const BitExactOptions& options) {
  Tensor h = as_input(model, x);
  Tensor out;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const QuantLayer& layer = model.layers[i];
    out = layer.quantized() ? forward_bitexact(layer, h, options)
                            : forward_eval(layer, h, 1.0);
    if (i + 1 < model.layers.size()) h = relu(out);
  }
  return out;
}

ModelGrads backward(const Model& model, const ModelCache& cache,
                    const Tensor& grad_logits, const BackwardOptions& options) {
  const std::size_t n = model.layers.size();
  if (cache.layers.size() != n) {
    throw std::invalid_argument("model cache does not match the model");
  }
  ModelGrads grads;
  grads.layers.resize(n);
  Tensor g = grad_logits;
  for (std::size_t i = n; i-- > 0;) {
    grads.layers[i] = backward(model.layers[i], cache.layers[i], g, options);
    if (i == 0) break;
    const Tensor& below = cache.outputs[i - 1];
    g = grads.layers[i].input.reshaped(below.shape());
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!(below[k] > 0.0)) g[k] = 0.0;
    }
  }
  return grads;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  json j;
  j["format"] = "shiftq-checkpoint";
  j["version"] = 1;
  j["input_shape"] = model.input_shape;
  j["classes"] = model.classes;
  j["layers"] = json::array();
  for (const QuantLayer& layer : model.layers) {
    j["layers"].push_back(layer_to_json(layer));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint missing: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint corrupt: " + std::string(e.what()));
  }
  if (j.value("format", "") != "shiftq-checkpoint") {
    throw std::runtime_error("not a shiftq checkpoint: " + path.string());
  }
  Model model;
  try {
    model.input_shape = j.at("input_shape").get<std::vector<std::size_t>>();
    model.classes = j.at("classes").get<std::size_t>();
    for (const json& layer : j.at("layers")) {
      model.layers.push_back(layer_from_json(layer));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint corrupt: " + std::string(e.what()));
  }
  return model;
}

void export_packed(const Model& model, const std::filesystem::path& path,
                   int m) {
  Writer w(path);
  for (char c : kPackedMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kPackedVersion);
  w.size(model.input_shape.size());
  for (std::size_t d : model.input_shape) w.size(d);
  w.size(model.classes);
  w.size(model.layers.size());
  for (const QuantLayer& layer : model.layers) {
    write_geometry(w, layer.kind, layer.in_features, layer.out_features,
                   layer.conv);
    w.u8(layer.quantized() ? 1 : 0);
    if (!layer.quantized()) {
      w.doubles(layer.weight.values());
      w.doubles(layer.bias);
      continue;
    }
    const BitExactLayer bx = compile_bitexact(layer, m);
    w.u8(static_cast<std::uint8_t>(bx.s_bits));
    w.u8(bx.quantize_acts ? 1 : 0);
    w.i32(bx.m);
    w.f64(bx.act_stats.mu);
    w.f64(bx.act_stats.sigma_in);
    w.f64(bx.act_stats.sigma_out);
    w.doubles(bx.scale);
    w.doubles(bx.bias);
    w.size(bx.weight_codes.size());
    w.size(bx.weight_codes.words().size());
    for (std::uint32_t word : bx.weight_codes.words()) w.u32(word);
  }
}

PackedModel read_packed(const std::filesystem::path& path) {
  Reader r(path);
  for (char c : kPackedMagic) {
    if (r.u8() != static_cast<std::uint8_t>(c)) {
      throw std::runtime_error("bad packed model magic");
    }
  }
  PackedModel model;
  model.version = r.u32();
  if (model.version != kPackedVersion) {
    throw std::runtime_error("unsupported packed model version");
  }
  model.input_shape.resize(r.u32());
  for (std::size_t& d : model.input_shape) d = r.u32();
  model.classes = r.u32();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const LayerKind kind = r.u8() == 0 ? LayerKind::kDense : LayerKind::kConv2D;
    const std::size_t in = r.u32();
    const std::size_t out = r.u32();
    ConvShape c;
    c.in_channels = r.u32();
    c.out_channels = r.u32();
    c.kernel = r.u32();
    c.stride = r.u32();
    c.padding = r.u32();
    c.in_height = r.u32();
    c.in_width = r.u32();
    const bool quantized = r.u8() != 0;
    model.is_quantized.push_back(quantized);
    if (!quantized) {
      QuantLayer layer = kind == LayerKind::kDense ? QuantLayer::dense(in, out)
                                                   : QuantLayer::conv2d(c);
      std::vector<double> weight = r.doubles();
      layer.weight = Tensor(layer.weight.shape(), std::move(weight));
      layer.bias = r.doubles();
      model.full_precision.push_back(std::move(layer));
      continue;
    }
    BitExactLayer bx;
    bx.kind = kind;
    bx.in_features = in;
    bx.out_features = out;
    bx.conv = c;
    bx.s_bits = r.u8();
    bx.quantize_acts = r.u8() != 0;
    bx.m = r.i32();
    bx.act_stats.mu = r.f64();
    bx.act_stats.sigma_in = r.f64();
    bx.act_stats.sigma_out = r.f64();
    bx.scale = r.doubles();
    bx.bias = r.doubles();
    const std::size_t length = r.u32();
    std::vector<std::uint32_t> words(r.u32());
    for (std::uint32_t& word : words) word = r.u32();
    bx.weight_codes = PackedCodeVector(bx.s_bits, length, std::move(words));
    model.quantized.push_back(std::move(bx));
  }
  return model;
}

Tensor forward_packed(const PackedModel& model, const Tensor& x,
                      int word_width) {
  std::vector<std::size_t> shape = {x.batch()};
  shape.insert(shape.end(), model.input_shape.begin(), model.input_shape.end());
  Tensor h = x.reshaped(std::move(shape));
  Tensor out;
  std::size_t q = 0;
  std::size_t f = 0;
  for (std::size_t i = 0; i < model.is_quantized.size(); ++i) {
    out = model.is_quantized[i]
              ? run_bitexact(model.quantized[q++], h, word_width)
              : forward_eval(model.full_precision[f++], h, 1.0);
    if (i + 1 < model.is_quantized.size()) {
      for (double& v : out.values()) {
        if (!(v > 0.0)) v = 0.0;
      }
      h = out;
    }
  }
  return out;
}

}  // namespace shiftq
