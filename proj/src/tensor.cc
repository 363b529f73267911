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

#include "shiftq/tensor.h"

#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>

namespace shiftq {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw std::invalid_argument("tensor data size does not match its shape");
  }
}

std::size_t Tensor::sample_size() const {
  return batch() == 0 ? 0 : data_.size() / batch();
}

std::span<const double> Tensor::sample(std::size_t n) const {
  const std::size_t stride = sample_size();
  return std::span<const double>(data_).subspan(n * stride, stride);
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  return Tensor(std::move(shape), data_);
}

void Tensor::assert_finite([[maybe_unused]] const char* where) const {
#ifndef NDEBUG
  for (double v : data_) {
    if (!std::isfinite(v)) {
      throw std::domain_error(std::string("non-finite value in ") + where);
    }
  }
#endif
}

}  // namespace shiftq
