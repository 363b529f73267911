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

#include "shiftq/layer.h"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace shiftq {
namespace {

// Shape information shared by float and integer layers.
struct Geometry {
  LayerKind kind;
  std::size_t in_features;
  std::size_t out_features;
  ConvShape conv;

  std::size_t units() const {
    return kind == LayerKind::kDense ? out_features : conv.out_channels;
  }
  std::size_t fan_in() const {
    return kind == LayerKind::kDense
               ? in_features
               : conv.in_channels * conv.kernel * conv.kernel;
  }
  std::size_t input_size() const {
    return kind == LayerKind::kDense
               ? in_features
               : conv.in_channels * conv.in_height * conv.in_width;
  }
  std::size_t output_size() const {
    return kind == LayerKind::kDense
               ? out_features
               : conv.out_channels * conv.out_height() * conv.out_width();
  }
  std::size_t unit_of(std::size_t out_index) const {
    if (kind == LayerKind::kDense) return out_index % out_features;
    const std::size_t plane = conv.out_height() * conv.out_width();
    return (out_index / plane) % conv.out_channels;
  }
};

Geometry geometry_of(const QuantLayer& l) {
  return {l.kind, l.in_features, l.out_features, l.conv};
}

Geometry geometry_of(const BitExactLayer& l) {
  return {l.kind, l.in_features, l.out_features, l.conv};
}

// Visits every (output, weight, input) index triple, output-major, and calls
// done(output, unit) once all taps of an output have been visited. Taps that
// fall on zero padding are skipped.
template <typename Tap, typename Done>
void sweep(const Geometry& g, std::size_t batch, Tap&& tap, Done&& done) {
  if (g.kind == LayerKind::kDense) {
    const std::size_t in = g.in_features;
    const std::size_t out = g.out_features;
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t o = 0; o < out; ++o) {
        const std::size_t y = n * out + o;
        for (std::size_t i = 0; i < in; ++i) tap(y, o * in + i, n * in + i);
        done(y, o);
      }
    }
    return;
  }
  const ConvShape& c = g.conv;
  const std::size_t oh = c.out_height();
  const std::size_t ow = c.out_width();
  const std::size_t k = c.kernel;
  const auto ih = static_cast<std::ptrdiff_t>(c.in_height);
  const auto iw = static_cast<std::ptrdiff_t>(c.in_width);
  const auto pad = static_cast<std::ptrdiff_t>(c.padding);
  std::size_t y = 0;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < c.out_channels; ++o) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox, ++y) {
          for (std::size_t ch = 0; ch < c.in_channels; ++ch) {
            const std::size_t in_plane = (n * c.in_channels + ch) * c.in_height;
            const std::size_t w_base = (o * c.in_channels + ch) * k * k;
            for (std::size_t ky = 0; ky < k; ++ky) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(oy * c.stride + ky) - pad;
              if (iy < 0 || iy >= ih) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox * c.stride + kx) - pad;
                if (ix < 0 || ix >= iw) continue;
                tap(y, w_base + ky * k + kx,
                    (in_plane + static_cast<std::size_t>(iy)) * c.in_width +
                        static_cast<std::size_t>(ix));
              }
            }
          }
          done(y, o);
        }
      }
    }
  }
}

void check_input(const Geometry& g, const Tensor& x) {
  if (x.rank() == 0 || (x.batch() > 0 && x.sample_size() != g.input_size())) {
    throw std::invalid_argument("layer input has " +
                                std::to_string(x.sample_size()) +
                                " values per sample, expected " +
                                std::to_string(g.input_size()));
  }
}

void check_lambda(double lambda, bool allow_zero) {
  if (!(lambda >= 0.0 && lambda <= 1.0) || (!allow_zero && lambda == 0.0)) {
    throw std::invalid_argument("lambda out of range: " +
                                std::to_string(lambda));
  }
}

std::vector<std::size_t> output_shape_of(const Geometry& g,
                                         std::size_t batch) {
  if (g.kind == LayerKind::kDense) return {batch, g.out_features};
  return {batch, g.conv.out_channels, g.conv.out_height(), g.conv.out_width()};
}

Tensor forward_impl(const QuantLayer& layer, const Tensor& x, double lambda,
                    LayerCache* cache) {
  const Geometry g = geometry_of(layer);
  check_input(g, x);
  const std::size_t batch = x.batch();

  Tensor xq = x;
  GaussianStats astats;
  if (layer.quantize_acts) {
    astats = act_gaussian(layer);
    astats.validate();
    const QuantSpec spec = layer.act_spec.at_lambda(lambda);
    for (double& v : xq.values()) v = eval_gaussian(v, spec, astats);
  }

  Tensor wq = layer.weight;
  std::vector<GaussianStats> wstats;
  if (layer.quantize_weights) {
    wstats = weight_stats(layer);
    const QuantSpec spec = layer.weight_spec.at_lambda(lambda);
    const std::size_t fan = g.fan_in();
    for (std::size_t u = 0; u < g.units(); ++u) {
      wstats[u].validate();
      for (std::size_t j = 0; j < fan; ++j) {
        double& w = wq[u * fan + j];
        w = eval_gaussian(w, spec, wstats[u]);
      }
    }
  }

  Tensor pre(output_shape_of(g, batch));
  sweep(
      g, batch,
      [&](std::size_t y, std::size_t w, std::size_t i) {
        pre[y] += wq[w] * xq[i];
      },
      [](std::size_t, std::size_t) {});

  Tensor out = pre;
  const double scale = layer.quantized() ? layer.alpha : 1.0;
  for (std::size_t y = 0; y < out.size(); ++y) {
    out[y] = scale * out[y] + layer.bias[g.unit_of(y)];
  }
  out.assert_finite("layer forward");

  if (cache != nullptr) {
    cache->input = x;
    cache->q_input = std::move(xq);
    cache->q_weight = std::move(wq);
    cache->pre_alpha = std::move(pre);
    cache->wstats = std::move(wstats);
    cache->astats = astats;
    cache->lambda = lambda;
  }
  return out;
}

double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0
                   : std::accumulate(v.begin(), v.end(), 0.0) /
                         static_cast<double>(v.size());
}

// Population std.
double std_of(std::span<const double> v, double mean) {
  if (v.empty()) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace

void RunningStats::observe(std::span<const double> values) {
  if (frozen_ || values.empty()) return;
  const double batch_mu = mean_of(values);
  const double batch_sigma = std_of(values, batch_mu);
  if (!initialized_) {
    mu_ = batch_mu;
    sigma_ = batch_sigma;
    initialized_ = true;
    return;
  }
  mu_ = (1.0 - momentum_) * mu_ + momentum_ * batch_mu;
  sigma_ = (1.0 - momentum_) * sigma_ + momentum_ * batch_sigma;
}

void RunningStats::set(double mu, double sigma) {
  mu_ = mu;
  sigma_ = sigma;
  initialized_ = true;
}

QuantLayer QuantLayer::dense(std::size_t in, std::size_t out) {
  QuantLayer layer;
  layer.kind = LayerKind::kDense;
  layer.in_features = in;
  layer.out_features = out;
  layer.weight = Tensor({out, in});
  layer.bias.assign(out, 0.0);
  return layer;
}

QuantLayer QuantLayer::conv2d(const ConvShape& shape) {
  if (shape.kernel == 0 || shape.stride == 0 ||
      shape.in_height + 2 * shape.padding < shape.kernel ||
      shape.in_width + 2 * shape.padding < shape.kernel) {
    throw std::invalid_argument("invalid convolution geometry");
  }
  QuantLayer layer;
  layer.kind = LayerKind::kConv2D;
  layer.conv = shape;
  layer.in_features = shape.in_channels * shape.in_height * shape.in_width;
  layer.out_features =
      shape.out_channels * shape.out_height() * shape.out_width();
  layer.weight = Tensor(
      {shape.out_channels, shape.in_channels, shape.kernel, shape.kernel});
  layer.bias.assign(shape.out_channels, 0.0);
  return layer;
}

std::size_t QuantLayer::units() const { return geometry_of(*this).units(); }
std::size_t QuantLayer::fan_in() const { return geometry_of(*this).fan_in(); }
std::size_t QuantLayer::input_size() const {
  return geometry_of(*this).input_size();
}
std::size_t QuantLayer::output_size() const {
  return geometry_of(*this).output_size();
}
std::vector<std::size_t> QuantLayer::output_shape(std::size_t batch) const {
  return output_shape_of(geometry_of(*this), batch);
}

void QuantLayer::freeze_weight_sigma() {
  const std::size_t fan = fan_in();
  weight_sigma_out.resize(units());
  for (std::size_t u = 0; u < units(); ++u) {
    const auto row = weight.values().subspan(u * fan, fan);
    weight_sigma_out[u] = std_of(row, mean_of(row));
  }
}

std::size_t BitExactLayer::units() const { return geometry_of(*this).units(); }
std::size_t BitExactLayer::fan_in() const {
  return geometry_of(*this).fan_in();
}

std::vector<GaussianStats> weight_stats(const QuantLayer& layer) {
  if (layer.weight_sigma_out.size() != layer.units()) {
    throw std::logic_error(
        "weight output sigma not recorded; call freeze_weight_sigma()");
  }
  const std::size_t fan = layer.fan_in();
  std::vector<GaussianStats> stats(layer.units());
  for (std::size_t u = 0; u < stats.size(); ++u) {
    const auto row = layer.weight.values().subspan(u * fan, fan);
    stats[u].mu = mean_of(row);
    stats[u].sigma_in = std_of(row, stats[u].mu);
    stats[u].sigma_out = layer.weight_sigma_out[u];
  }
  return stats;
}

GaussianStats act_gaussian(const QuantLayer& layer) {
  return {layer.act_stats.mu(), layer.act_stats.sigma(),
          layer.act_stats.sigma()};
}

Tensor forward_train(QuantLayer& layer, const Tensor& x, double lambda,
                     LayerCache* cache) {
  check_lambda(lambda, /*allow_zero=*/false);
  if (layer.quantize_acts && !layer.act_stats.frozen()) {
    check_input(geometry_of(layer), x);
    layer.act_stats.observe(x.values());
  }
  return forward_impl(layer, x, lambda, cache);
}

Tensor forward_eval(const QuantLayer& layer, const Tensor& x, double lambda,
                    LayerCache* cache) {
  check_lambda(lambda, /*allow_zero=*/true);
  return forward_impl(layer, x, lambda, cache);
}

Tensor forward_quantized(const QuantLayer& layer, const Tensor& x) {
  return forward_impl(layer, x, 0.0, nullptr);
}

std::vector<double> fold_alpha(const QuantLayer& layer, int m) {
  if (!layer.quantize_weights ||
      layer.weight_spec.mode() != QuantMode::kShift) {
    throw std::invalid_argument(
        "fold_alpha requires shift-quantized weights");
  }
  if (layer.quantize_acts && layer.act_spec.mode() != QuantMode::kShift) {
    throw std::invalid_argument("fold_alpha requires shift-quantized acts");
  }
  const auto wstats = weight_stats(layer);
  double side = 1.0 / shift_scale(layer.weight_spec.bits());
  if (layer.quantize_acts) {
    side *= 3.0 * layer.act_stats.sigma() / shift_scale(layer.act_spec.bits());
  } else {
    side /= std::ldexp(1.0, m);
  }
  std::vector<double> folded(wstats.size());
  for (std::size_t u = 0; u < folded.size(); ++u) {
    folded[u] = layer.alpha * (3.0 * wstats[u].sigma_out) * side;
  }
  return folded;
}

BitExactLayer compile_bitexact(const QuantLayer& layer, int m) {
  if (!layer.quantize_weights ||
      layer.weight_spec.mode() != QuantMode::kShift) {
    throw std::invalid_argument("bit-exact mode needs shift-quantized weights");
  }
  exponent_bit_for(m);
  BitExactLayer out;
  out.kind = layer.kind;
  out.in_features = layer.in_features;
  out.out_features = layer.out_features;
  out.conv = layer.conv;
  out.s_bits = layer.weight_spec.bits();
  out.quantize_acts = layer.quantize_acts;
  out.m = m;
  if (layer.quantize_acts) {
    if (layer.act_spec.mode() != QuantMode::kShift ||
        layer.act_spec.bits() != out.s_bits) {
      throw std::invalid_argument(
          "bit-exact MAC needs equal shift bits on weights and activations");
    }
    if (!layer.act_stats.frozen()) {
      throw std::logic_error("activation statistics must be frozen");
    }
    out.act_stats = act_gaussian(layer);
    out.act_stats.validate();
  }

  const auto wstats = weight_stats(layer);
  const std::size_t fan = layer.fan_in();
  std::vector<ShiftCode> codes(layer.weight.size());
  for (std::size_t u = 0; u < wstats.size(); ++u) {
    wstats[u].validate();
    for (std::size_t j = 0; j < fan; ++j) {
      codes[u * fan + j] =
          encode_shift(normalize(layer.weight[u * fan + j], wstats[u]),
                       out.s_bits);
    }
  }
  out.weight_codes = pack_codes(codes, out.s_bits);
  out.scale = fold_alpha(layer, m);
  out.bias = layer.bias;
  return out;
}

Tensor run_bitexact(const BitExactLayer& layer, const Tensor& x,
                    int word_width) {
  const Geometry g = geometry_of(layer);
  check_input(g, x);
  std::vector<std::uint32_t> wcodes(layer.weight_codes.size());
  for (std::size_t i = 0; i < wcodes.size(); ++i) {
    wcodes[i] = layer.weight_codes.packed_at(i);
  }
  const int s = layer.s_bits;
  Tensor out(output_shape_of(g, x.batch()));

  if (layer.quantize_acts) {
    std::vector<std::uint32_t> xcodes(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      xcodes[i] = encode_shift(normalize(x[i], layer.act_stats), s).packed(s);
    }
    AccumulatorBank bank(s, word_width);
    sweep(
        g, x.batch(),
        [&](std::size_t, std::size_t w, std::size_t i) {
          bank.push_packed(wcodes[w], xcodes[i]);
        },
        [&](std::size_t y, std::size_t u) {
          out[y] = layer.scale[u] * static_cast<double>(bank.finalize()) +
                   layer.bias[u];
          bank.reset();
        });
    return out;
  }

  std::vector<float> xf(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xf[i] = static_cast<float>(x[i]);
  std::vector<float> acts;
  std::vector<ShiftCode> codes;
  acts.reserve(g.fan_in());
  codes.reserve(g.fan_in());
  sweep(
      g, x.batch(),
      [&](std::size_t, std::size_t w, std::size_t i) {
        acts.push_back(xf[i]);
        codes.push_back(ShiftCode::from_packed(wcodes[w], s));
      },
      [&](std::size_t y, std::size_t u) {
        out[y] = layer.scale[u] *
                     static_cast<double>(weight_only_dot(acts, codes, layer.m)) +
                 layer.bias[u];
        acts.clear();
        codes.clear();
      });
  return out;
}

Tensor forward_bitexact(const QuantLayer& layer, const Tensor& x,
                        const BitExactOptions& options) {
  return run_bitexact(compile_bitexact(layer, options.m), x,
                      options.word_width);
}

LayerGrads backward(const QuantLayer& layer, const LayerCache& cache,
                    const Tensor& grad_out, const BackwardOptions& options) {
  const double lambda = cache.lambda;
  if (!(lambda > 0.0)) {
    throw std::domain_error("backward requires lambda > 0");
  }
  const Geometry g = geometry_of(layer);
  if (grad_out.size() != cache.pre_alpha.size()) {
    throw std::invalid_argument("gradient shape does not match layer output");
  }

  LayerGrads grads;
  grads.bias.assign(g.units(), 0.0);
  for (std::size_t y = 0; y < grad_out.size(); ++y) {
    grads.bias[g.unit_of(y)] += grad_out[y];
  }

  Tensor scaled_out = grad_out;
  if (layer.quantized()) {
    for (std::size_t y = 0; y < grad_out.size(); ++y) {
      grads.alpha += grad_out[y] * cache.pre_alpha[y];
      scaled_out[y] *= layer.alpha;
    }
  }

  Tensor dwq(layer.weight.shape());
  Tensor dxq(cache.input.shape());
  sweep(
      g, cache.input.batch(),
      [&](std::size_t y, std::size_t w, std::size_t i) {
        dwq[w] += scaled_out[y] * cache.q_input[i];
        dxq[i] += scaled_out[y] * cache.q_weight[w];
      },
      [](std::size_t, std::size_t) {});

  if (layer.quantize_weights) {
    const bool scale = options.apply_grad_scaling &&
                       layer.weight_spec.grad_scale();
    const double slope = scale ? scaled_grad(lambda, lambda) : lambda;
    const std::size_t fan = g.fan_in();
    grads.weight = Tensor(layer.weight.shape());
    std::vector<double> h(fan);
    std::vector<double> z(fan);
    for (std::size_t u = 0; u < g.units(); ++u) {
      const GaussianStats& st = cache.wstats[u];
      // q = 3 sigma_out Q(v / 3), v = (w - mu) / sigma.
      double mean_h = 0.0;
      double mean_hz = 0.0;
      for (std::size_t j = 0; j < fan; ++j) {
        z[j] = (layer.weight[u * fan + j] - st.mu) / st.sigma_in;
        h[j] = dwq[u * fan + j] * st.sigma_out * slope;
        mean_h += h[j];
        mean_hz += h[j] * z[j];
      }
      mean_h /= static_cast<double>(fan);
      mean_hz /= static_cast<double>(fan);
      for (std::size_t j = 0; j < fan; ++j) {
        grads.weight[u * fan + j] =
            (h[j] - mean_h - z[j] * mean_hz) / st.sigma_in;
      }
    }
  } else {
    grads.weight = std::move(dwq);
  }

  if (layer.quantize_acts) {
    const bool scale = options.apply_grad_scaling &&
                       layer.act_spec.grad_scale() &&
                       !layer.act_grad_scale_exempt;
    const double slope = scale ? scaled_grad(lambda, lambda) : lambda;
    for (double& v : dxq.values()) v *= slope;
  }
  grads.input = std::move(dxq);
  return grads;
}

}  // namespace shiftq
