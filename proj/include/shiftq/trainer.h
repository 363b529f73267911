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

// Full-precision pretraining and quantized fine-tuning down a lambda ladder.

#ifndef SHIFTQ_TRAINER_H_
#define SHIFTQ_TRAINER_H_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "shiftq/dataset.h"
#include "shiftq/model.h"

namespace shiftq {

struct Stage {
  double lambda = 1.0;
  int epochs = 1;
  double learning_rate = 1e-2;

  friend bool operator==(const Stage&, const Stage&) = default;
};

struct Schedule {
  std::vector<Stage> stages;

  // 2^0 .. 2^-7 for 1,3,3,3,2,1,1,1 epochs; lr drops to 1e-3 at 2^-3.
  static Schedule default_ladder();
  // Lambdas strictly decreasing and positive, epochs >= 0, lr > 0.
  void validate() const;
  int total_epochs() const;

  friend bool operator==(const Schedule&, const Schedule&) = default;
};

struct GradMagnitude {
  std::string name;  // "L<layer>.w" or "L<layer>.a"
  double raw = 0.0;
  double scaled = 0.0;
};

struct MetricsRecord {
  double stage_lambda = 1.0;
  int epoch = 0;  // 1-based, counted across stages
  double loss = 0.0;
  double acc_lambda = 0.0;
  double acc_zero = 0.0;
  std::vector<GradMagnitude> grads;

  double gap() const { return acc_lambda - acc_zero; }
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(double lambda, int epoch, const std::string& detail = {});
  double lambda() const { return lambda_; }
  int epoch() const { return epoch_; }

 private:
  double lambda_;
  int epoch_;
};

struct SgdOptions {
  std::size_t batch_size = 64;
  double momentum = 0.9;
  std::uint64_t seed = 1;
};

struct PretrainOptions {
  SgdOptions sgd;
  int epochs = 20;
  double learning_rate = 0.05;
};

struct PretrainResult {
  Model model;
  double baseline_accuracy = 0.0;
  std::vector<MetricsRecord> records;
};

PretrainResult pretrain_full_precision(Model model, const Dataset& train,
                                       const Dataset& test,
                                       const PretrainOptions& options);

struct FinetuneOptions {
  SgdOptions sgd;
  QuantPlan plan;
  // Samples of the training set used for the per-epoch gradient report.
  std::size_t probe_size = 64;
};

struct FinetuneResult {
  Model model;
  std::vector<MetricsRecord> records;
};

// Applies options.plan to the model, then runs the schedule. Activation
// statistics are updated during the first stage only.
FinetuneResult finetune_quantized(Model model, const Schedule& schedule,
                                  const Dataset& train, const Dataset& test,
                                  const FinetuneOptions& options);

double eval_at_lambda(const Model& model, const Dataset& data, double lambda);
double eval_bitexact(const Model& model, const Dataset& data,
                     const BitExactOptions& options = {});

// Mean |grad| at every quantizer input (weights: the layer weights,
// activations: the layer input), without and with gradient scaling. The
// first layer's weight gradient is included as well.
std::vector<GradMagnitude> grad_magnitude_report(const Model& model,
                                                 const Tensor& x,
                                                 std::span<const int> labels,
                                                 double lambda);

// Softmax cross-entropy averaged over the batch; fills grad with d/dlogits.
double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels,
                             Tensor* grad);

struct GapCheck {
  double final_gap = 0.0;
  double tolerance = 0.02;
  bool ok = true;
  std::string message;
};

// Reports whether the network exploits lambda at the end of training.
GapCheck check_no_exploitation(const std::vector<MetricsRecord>& records,
                               double tolerance = 0.02);

}  // namespace shiftq

#endif  // SHIFTQ_TRAINER_H_
