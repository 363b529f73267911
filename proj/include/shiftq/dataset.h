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

// Datasets: IDX image/label files and Gaussian class blobs.

#ifndef SHIFTQ_DATASET_H_
#define SHIFTQ_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "shiftq/tensor.h"

namespace shiftq {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  std::vector<std::size_t> sample_shape;
  std::vector<double> features;  // row-major, one sample after another
  std::vector<int> labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::size_t sample_size() const;
  // [indices.size(), sample_shape...]
  Tensor batch(std::span<const std::size_t> indices) const;
};

struct IdxImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;
};

// Throw DataError: "dataset missing", "bad magic", "truncated".
IdxImages load_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path);
// Pixels scaled to [0, 1]; counts must agree.
Dataset load_idx(const std::filesystem::path& images,
                 const std::filesystem::path& labels);

void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path,
                      std::span<const std::uint8_t> labels);

struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t dim = 16;
  std::size_t samples = 1000;
  // Class c is centred on separation * e_c; blobs have unit std.
  double separation = 5.0;
};

Dataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace shiftq

#endif  // SHIFTQ_DATASET_H_
