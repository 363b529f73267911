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

#include "shiftq/dataset.h"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <random>

namespace shiftq {
namespace {

constexpr std::uint32_t kLabelMagic = 0x00000801;
constexpr std::uint32_t kImageMagic = 0x00000803;

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("dataset missing: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at,
                   const std::filesystem::path& path) {
  if (b.size() < at + 4) throw DataError("truncated: " + path.string());
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) {
    out.put(static_cast<char>((v >> shift) & 0xFF));
  }
}

}  // namespace

std::size_t Dataset::sample_size() const { return shape_size(sample_shape); }

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  const std::size_t n = sample_size();
  std::vector<std::size_t> shape = {indices.size()};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  std::vector<double> data;
  data.reserve(indices.size() * n);
  for (std::size_t i : indices) {
    if (i >= size()) throw std::out_of_range("sample index out of range");
    const auto first = features.begin() + static_cast<std::ptrdiff_t>(i * n);
    data.insert(data.end(), first, first + static_cast<std::ptrdiff_t>(n));
  }
  return Tensor(std::move(shape), std::move(data));
}

IdxImages load_idx_images(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> b = read_all(path);
  if (be32(b, 0, path) != kImageMagic) {
    throw DataError("bad magic in image file: " + path.string());
  }
  IdxImages img;
  img.count = be32(b, 4, path);
  img.rows = be32(b, 8, path);
  img.cols = be32(b, 12, path);
  const std::size_t need = img.count * img.rows * img.cols;
  if (b.size() < 16 + need) throw DataError("truncated: " + path.string());
  img.pixels.assign(b.begin() + 16, b.begin() + 16 + static_cast<std::ptrdiff_t>(need));
  return img;
}

std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> b = read_all(path);
  if (be32(b, 0, path) != kLabelMagic) {
    throw DataError("bad magic in label file: " + path.string());
  }
  const std::size_t count = be32(b, 4, path);
  if (b.size() < 8 + count) throw DataError("truncated: " + path.string());
  return {b.begin() + 8, b.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

Dataset load_idx(const std::filesystem::path& images,
                 const std::filesystem::path& labels) {
  const IdxImages img = load_idx_images(images);
  const std::vector<std::uint8_t> lab = load_idx_labels(labels);
  if (img.count != lab.size()) {
    throw DataError("image/label count mismatch: " + std::to_string(img.count) +
                    " vs " + std::to_string(lab.size()));
  }
  Dataset ds;
  ds.sample_shape = {img.rows, img.cols};
  ds.features.reserve(img.pixels.size());
  for (std::uint8_t p : img.pixels) ds.features.push_back(p / 255.0);
  int max_label = -1;
  for (std::uint8_t l : lab) {
    ds.labels.push_back(l);
    max_label = std::max(max_label, int{l});
  }
  ds.classes = static_cast<std::size_t>(max_label + 1);
  return ds;
}

void write_idx_images(const std::filesystem::path& path,
                      const IdxImages& images) {
  if (images.pixels.size() != images.count * images.rows * images.cols) {
    throw std::invalid_argument("pixel count does not match the header");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  put_be32(out, kImageMagic);
  put_be32(out, static_cast<std::uint32_t>(images.count));
  put_be32(out, static_cast<std::uint32_t>(images.rows));
  put_be32(out, static_cast<std::uint32_t>(images.cols));
  out.write(reinterpret_cast<const char*>(images.pixels.data()),
            static_cast<std::streamsize>(images.pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path,
                      std::span<const std::uint8_t> labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  put_be32(out, kLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
}

Dataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.classes == 0) throw std::invalid_argument("need at least one class");
  if (spec.dim < spec.classes) {
    throw std::invalid_argument("synthetic dim must be >= classes");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset ds;
  ds.sample_shape = {spec.dim};
  ds.classes = spec.classes;
  ds.features.reserve(spec.samples * spec.dim);
  ds.labels.reserve(spec.samples);
  std::uniform_int_distribution<std::size_t> pick(0, spec.classes - 1);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const std::size_t c = pick(rng);
    for (std::size_t d = 0; d < spec.dim; ++d) {
      ds.features.push_back((d == c ? spec.separation : 0.0) + noise(rng));
    }
    ds.labels.push_back(static_cast<int>(c));
  }
  return ds;
}

}  // namespace shiftq
