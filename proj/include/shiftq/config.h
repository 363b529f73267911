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

// Experiment configuration: line-oriented "key = value" with [sections].

#ifndef SHIFTQ_CONFIG_H_
#define SHIFTQ_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "shiftq/dataset.h"
#include "shiftq/model.h"
#include "shiftq/trainer.h"

namespace shiftq {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Config {
  // [data]
  std::string source = "synthetic";  // synthetic | idx
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::size_t classes = 4;
  std::size_t dim = 16;
  std::size_t train_samples = 2000;
  std::size_t test_samples = 1000;
  double separation = 5.0;
  std::uint64_t data_seed = 1;

  // [model]
  std::string model = "dense";  // dense | cnn
  std::vector<std::size_t> hidden = {64, 32, 32};

  // [quant]
  QuantPlan plan;

  // [train]
  std::uint64_t seed = 1;
  std::size_t batch_size = 64;
  double momentum = 0.9;
  int pretrain_epochs = 20;
  double pretrain_lr = 0.05;

  // [schedule]
  Schedule schedule = Schedule::default_ladder();

  // [output]
  std::string out_dir = "out";
  int word_width = 32;
  int m = 16;

  // Throws ConfigError.
  void validate() const;
};

// Unknown sections or keys, malformed values and duplicates are errors.
Config parse_config(std::string_view text);
Config load_config(const std::filesystem::path& path);
std::string serialize_config(const Config& config);

// Both datasets described by the [data] section. Throws DataError.
struct DataSplit {
  Dataset train;
  Dataset test;
};
DataSplit load_data(const Config& config);
Model build_model(const Config& config, const Dataset& data);

}  // namespace shiftq

#endif  // SHIFTQ_CONFIG_H_
