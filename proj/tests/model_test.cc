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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "layer_fixtures.h"
#include "shiftq/model.h"

namespace shiftq {
namespace {

namespace fs = std::filesystem;
using testing::random_tensor;

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() /
         ("shiftq_model_test_" + std::to_string(::getpid()) + "_" + name);
}

Model quantized_dense(std::uint64_t seed, QuantPlan plan = {}) {
  const std::vector<std::size_t> hidden = {7, 6, 5};
  Model m = make_dense_model(4, hidden, 3, seed);
  enable_quantization(m, plan);
  std::mt19937_64 rng(seed);
  forward_train(m, random_tensor({16, 4}, 1.0, rng), 1.0);
  freeze_stats(m);
  return m;
}

Model quantized_cnn(std::uint64_t seed, QuantPlan plan = {}) {
  Model m = make_cnn_model(1, 6, 6, 4, seed);
  enable_quantization(m, plan);
  std::mt19937_64 rng(seed);
  forward_train(m, random_tensor({8, 1, 6, 6}, 1.0, rng), 1.0);
  freeze_stats(m);
  return m;
}

TEST(ModelBuildTest, DenseAndCnnShapes) {
  const std::vector<std::size_t> hidden = {256, 128};
  const Model d = make_dense_model(784, hidden, 10, 1);
  ASSERT_EQ(d.layers.size(), 3u);
  EXPECT_EQ(d.layers[0].weight.shape(), (std::vector<std::size_t>{256, 784}));
  EXPECT_EQ(d.layers[2].out_features, 10u);
  EXPECT_TRUE(quantized_layers(d).empty());

  const Model c = make_cnn_model(1, 8, 8, 10, 1);
  ASSERT_EQ(c.layers.size(), 4u);
  EXPECT_EQ(c.layers[1].conv.stride, 2u);
  EXPECT_EQ(c.layers[2].in_features, 16u * 4 * 4);
  const Tensor y = forward_eval(c, Tensor({2, 1, 8, 8}), 1.0);
  EXPECT_EQ(y.shape(), (std::vector<std::size_t>{2, 10}));
}

TEST(ModelBuildTest, HeInitIsDeterministicWithExpectedScale) {
  const std::vector<std::size_t> hidden = {400};
  const Model a = make_dense_model(200, hidden, 2, 5);
  const Model b = make_dense_model(200, hidden, 2, 5);
  EXPECT_EQ(a.layers[0].weight, b.layers[0].weight);
  double ss = 0.0;
  for (double w : a.layers[0].weight.values()) ss += w * w;
  const double var = ss / static_cast<double>(a.layers[0].weight.size());
  EXPECT_NEAR(var, 2.0 / 200, 0.05 * 2.0 / 200);
}

TEST(ModelQuantTest, HiddenLayersOnlyWithExemption) {
  const Model m = quantized_dense(2);
  EXPECT_EQ(quantized_layers(m), (std::vector<std::size_t>{1, 2}));
  EXPECT_FALSE(m.layers[0].quantized());
  EXPECT_FALSE(m.layers[3].quantized());
  EXPECT_FALSE(m.layers[1].act_grad_scale_exempt);
  EXPECT_TRUE(m.layers[2].act_grad_scale_exempt);
  EXPECT_TRUE(m.layers[1].act_stats.frozen());

  QuantPlan none;
  none.exempt_quantized_index.reset();
  const Model n = quantized_dense(2, none);
  EXPECT_FALSE(n.layers[2].act_grad_scale_exempt);

  std::vector<std::size_t> one = {5};
  Model shallow = make_dense_model(4, one, 3, 1);
  EXPECT_THROW(enable_quantization(shallow, {}), std::invalid_argument);
}

TEST(ModelQuantTest, SigmaOutComesFromPretrainedWeights) {
  const std::vector<std::size_t> hidden = {7, 6, 5};
  Model m = make_dense_model(4, hidden, 3, 3);
  const QuantLayer before = m.layers[1];
  enable_quantization(m, {});
  QuantLayer probe = before;
  probe.freeze_weight_sigma();
  EXPECT_EQ(m.layers[1].weight_sigma_out, probe.weight_sigma_out);
}

TEST(ModelBackwardTest, FiniteDifferenceThroughTheStack) {
  QuantPlan plan;
  plan.grad_scale = false;
  for (int which = 0; which < 2; ++which) {
    Model m = which == 0 ? quantized_dense(4, plan) : quantized_cnn(4, plan);
    std::mt19937_64 rng(9);
    std::vector<std::size_t> shape = {2};
    shape.insert(shape.end(), m.input_shape.begin(), m.input_shape.end());
    Tensor x = random_tensor(shape, 1.0, rng);
    const double lambda = 0.125;
    ModelCache cache;
    const Tensor y = forward_eval(m, x, lambda, &cache);
    const Tensor r = random_tensor(y.shape(), 1.0, rng);
    const ModelGrads g = backward(m, cache, r);
    const auto loss = [&] {
      const Tensor out = forward_eval(m, x, lambda);
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += r[i] * out[i];
      return s;
    };
    const auto signature = [&] {
      ModelCache c;
      forward_eval(m, x, 0.0, &c);
      std::vector<double> sig;
      for (std::size_t l : quantized_layers(m)) {
        for (double v : c.layers[l].q_input.values()) sig.push_back(v);
        for (double v : c.layers[l].q_weight.values()) sig.push_back(v);
      }
      // ReLU kinks count as boundaries too.
      for (const Tensor& o : c.outputs) {
        for (double v : o.values()) sig.push_back(v > 0.0);
      }
      return sig;
    };
    const auto base = signature();
    const double h = 1e-6;
    double diff = 0.0;
    double norm = 0.0;
    std::size_t checked = 0;
    const auto probe = [&](double& slot, double expected) {
      const double keep = slot;
      slot = keep + h;
      const bool ok_hi = signature() == base;
      const double hi = loss();
      slot = keep - h;
      const bool ok_lo = signature() == base;
      const double lo = loss();
      slot = keep;
      if (!ok_hi || !ok_lo) return;
      const double num = (hi - lo) / (2 * h);
      diff += (num - expected) * (num - expected);
      norm += expected * expected;
      ++checked;
    };
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      for (std::size_t k = 0; k < m.layers[l].weight.size(); k += 3) {
        probe(m.layers[l].weight[k], g.layers[l].weight[k]);
      }
      probe(m.layers[l].bias[0], g.layers[l].bias[0]);
      if (m.layers[l].quantized()) probe(m.layers[l].alpha, g.layers[l].alpha);
    }
    for (std::size_t k = 0; k < x.size(); ++k) probe(x[k], g.layers[0].input[k]);
    EXPECT_GT(checked, 20u);
    EXPECT_LE(std::sqrt(diff / norm), 1e-4) << "model " << which;
  }
}

TEST(ModelForwardTest, BitExactMatchesQuantizedForward) {
  for (int which = 0; which < 2; ++which) {
    const Model m = which == 0 ? quantized_dense(5) : quantized_cnn(5);
    std::mt19937_64 rng(3);
    std::vector<std::size_t> shape = {4};
    shape.insert(shape.end(), m.input_shape.begin(), m.input_shape.end());
    const Tensor x = random_tensor(shape, 1.0, rng);
    const Tensor ref = forward_eval(m, x, 0.0);
    const Tensor bx = forward_bitexact(m, x);
    EXPECT_LE(testing::max_rel_error(bx, ref), 1e-6);
  }
}

TEST(ModelCheckpointTest, RoundTripIsExact) {
  const Model m = quantized_cnn(6);
  const fs::path p = temp_path("ckpt.json");
  save_checkpoint(m, p);
  const Model back = load_checkpoint(p);
  fs::remove(p);
  ASSERT_EQ(back.layers.size(), m.layers.size());
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const QuantLayer& a = m.layers[i];
    const QuantLayer& b = back.layers[i];
    EXPECT_EQ(a.weight, b.weight);
    EXPECT_EQ(a.bias, b.bias);
    EXPECT_EQ(a.alpha, b.alpha);
    EXPECT_EQ(a.weight_spec, b.weight_spec);
    EXPECT_EQ(a.act_spec, b.act_spec);
    EXPECT_EQ(a.weight_sigma_out, b.weight_sigma_out);
    EXPECT_EQ(a.act_stats.mu(), b.act_stats.mu());
    EXPECT_EQ(a.act_stats.sigma(), b.act_stats.sigma());
    EXPECT_EQ(a.act_stats.frozen(), b.act_stats.frozen());
    EXPECT_EQ(a.act_grad_scale_exempt, b.act_grad_scale_exempt);
  }
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({3, 1, 6, 6}, 1.0, rng);
  EXPECT_EQ(forward_eval(m, x, 0.25), forward_eval(back, x, 0.25));
}

TEST(ModelCheckpointTest, MissingOrCorruptFilesThrow) {
  EXPECT_THROW(load_checkpoint(temp_path("nope.json")), std::runtime_error);
  const fs::path p = temp_path("bad.json");
  std::ofstream(p) << "{\"format\": \"shiftq-checkpoint\", \"layers\": 3";
  EXPECT_THROW(load_checkpoint(p), std::runtime_error);
  fs::remove(p);
}

TEST(ModelPackedTest, ExportRoundTripMatchesBitExact) {
  for (bool acts : {true, false}) {
    QuantPlan plan;
    plan.quantize_acts = acts;
    const Model m = quantized_cnn(7, plan);
    const fs::path p = temp_path("model.shqp");
    export_packed(m, p, 16);
    const PackedModel pm = read_packed(p);
    fs::remove(p);
    EXPECT_EQ(pm.version, 1u);
    EXPECT_EQ(pm.is_quantized, (std::vector<bool>{false, true, true, false}));
    std::mt19937_64 rng(2);
    const Tensor x = random_tensor({3, 1, 6, 6}, 1.0, rng);
    EXPECT_EQ(forward_packed(pm, x), forward_bitexact(m, x));
    EXPECT_EQ(forward_packed(pm, x, 64), forward_bitexact(m, x, {64, 16}));
  }
}

TEST(ModelPackedTest, RejectsForeignFiles) {
  const fs::path p = temp_path("junk.shqp");
  std::ofstream(p) << "JUNKJUNK";
  EXPECT_THROW(read_packed(p), std::runtime_error);
  std::ofstream(p, std::ios::trunc) << "SHQP";
  EXPECT_THROW(read_packed(p), std::runtime_error);
  fs::remove(p);
}

}  // namespace
}  // namespace shiftq
