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

#include "shiftq/config.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace shiftq {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::string num(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view s, const std::string& key) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("bad value for " + key + ": '" + std::string(s) + "'");
  }
  return v;
}

bool parse_bool(std::string_view s, const std::string& key) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("bad boolean for " + key + ": '" + std::string(s) + "'");
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string stages_text(const Schedule& s) {
  std::string out;
  for (std::size_t i = 0; i < s.stages.size(); ++i) {
    if (i > 0) out += ", ";
    out += num(s.stages[i].lambda) + ":" + std::to_string(s.stages[i].epochs) +
           ":" + num(s.stages[i].learning_rate);
  }
  return out;
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(Config&, std::string_view, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

#define SIZE_FIELD(sec, name, member)                                      \
  Field {                                                                  \
    sec, name,                                                             \
        [](Config& c, std::string_view v, const std::string& k) {          \
          c.member = parse_number<std::size_t>(v, k);                      \
        },                                                                 \
        [](const Config& c) { return std::to_string(c.member); }          \
  }
#define INT_FIELD(sec, name, member)                                       \
  Field {                                                                  \
    sec, name,                                                             \
        [](Config& c, std::string_view v, const std::string& k) {          \
          c.member = parse_number<int>(v, k);                              \
        },                                                                 \
        [](const Config& c) { return std::to_string(c.member); }          \
  }
#define U64_FIELD(sec, name, member)                                       \
  Field {                                                                  \
    sec, name,                                                             \
        [](Config& c, std::string_view v, const std::string& k) {          \
          c.member = parse_number<std::uint64_t>(v, k);                    \
        },                                                                 \
        [](const Config& c) { return std::to_string(c.member); }          \
  }
#define REAL_FIELD(sec, name, member)                                      \
  Field {                                                                  \
    sec, name,                                                             \
        [](Config& c, std::string_view v, const std::string& k) {          \
          c.member = parse_number<double>(v, k);                           \
        },                                                                 \
        [](const Config& c) { return num(c.member); }                     \
  }
#define TEXT_FIELD(sec, name, member)                                      \
  Field {                                                                  \
    sec, name,                                                             \
        [](Config& c, std::string_view v, const std::string&) {            \
          c.member = std::string(v);                                       \
        },                                                                 \
        [](const Config& c) { return c.member; }                          \
  }
#define BOOL_FIELD(sec, name, member)                                      \
  Field {                                                                  \
    sec, name,                                                             \
        [](Config& c, std::string_view v, const std::string& k) {          \
          c.member = parse_bool(v, k);                                     \
        },                                                                 \
        [](const Config& c) {                                              \
          return std::string(c.member ? "true" : "false");                 \
        }                                                                  \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      TEXT_FIELD("data", "source", source),
      TEXT_FIELD("data", "train_images", train_images),
      TEXT_FIELD("data", "train_labels", train_labels),
      TEXT_FIELD("data", "test_images", test_images),
      TEXT_FIELD("data", "test_labels", test_labels),
      SIZE_FIELD("data", "classes", classes),
      SIZE_FIELD("data", "dim", dim),
      SIZE_FIELD("data", "train_samples", train_samples),
      SIZE_FIELD("data", "test_samples", test_samples),
      REAL_FIELD("data", "separation", separation),
      U64_FIELD("data", "seed", data_seed),

      TEXT_FIELD("model", "kind", model),
      Field{"model", "hidden",
            [](Config& c, std::string_view v, const std::string& k) {
              c.hidden.clear();
              if (v.empty()) return;
              for (std::string_view part : split(v, ',')) {
                c.hidden.push_back(parse_number<std::size_t>(part, k));
              }
            },
            [](const Config& c) { return join_sizes(c.hidden); }},

      Field{"quant", "mode",
            [](Config& c, std::string_view v, const std::string& k) {
              if (v == "shift") {
                c.plan.mode = QuantMode::kShift;
              } else if (v == "uniform") {
                c.plan.mode = QuantMode::kUniform;
              } else {
                throw ConfigError("bad value for " + k + ": '" +
                                  std::string(v) + "'");
              }
            },
            [](const Config& c) {
              return std::string(c.plan.mode == QuantMode::kShift ? "shift"
                                                                  : "uniform");
            }},
      INT_FIELD("quant", "bits", plan.bits),
      BOOL_FIELD("quant", "weights", plan.quantize_weights),
      BOOL_FIELD("quant", "acts", plan.quantize_acts),
      BOOL_FIELD("quant", "grad_scale", plan.grad_scale),
      Field{"quant", "exempt",
            [](Config& c, std::string_view v, const std::string& k) {
              if (v == "none") {
                c.plan.exempt_quantized_index.reset();
              } else {
                c.plan.exempt_quantized_index = parse_number<std::size_t>(v, k);
              }
            },
            [](const Config& c) {
              return c.plan.exempt_quantized_index
                         ? std::to_string(*c.plan.exempt_quantized_index)
                         : std::string("none");
            }},

      U64_FIELD("train", "seed", seed),
      SIZE_FIELD("train", "batch_size", batch_size),
      REAL_FIELD("train", "momentum", momentum),
      INT_FIELD("train", "pretrain_epochs", pretrain_epochs),
      REAL_FIELD("train", "pretrain_lr", pretrain_lr),

      Field{"schedule", "stages",
            [](Config& c, std::string_view v, const std::string& k) {
              c.schedule.stages.clear();
              if (v.empty()) return;
              for (std::string_view part : split(v, ',')) {
                const auto bits = split(part, ':');
                if (bits.size() != 3) {
                  throw ConfigError("stage must be lambda:epochs:lr in " + k);
                }
                c.schedule.stages.push_back(
                    {parse_number<double>(bits[0], k),
                     parse_number<int>(bits[1], k),
                     parse_number<double>(bits[2], k)});
              }
            },
            [](const Config& c) { return stages_text(c.schedule); }},

      TEXT_FIELD("output", "dir", out_dir),
      INT_FIELD("output", "word_width", word_width),
      INT_FIELD("output", "m", m),
  };
  return table;
}

#undef SIZE_FIELD
#undef INT_FIELD
#undef U64_FIELD
#undef REAL_FIELD
#undef TEXT_FIELD
#undef BOOL_FIELD

}  // namespace

void Config::validate() const {
  if (source != "synthetic" && source != "idx") {
    throw ConfigError("data.source must be synthetic or idx");
  }
  if (source == "idx" && (train_images.empty() || train_labels.empty() ||
                          test_images.empty() || test_labels.empty())) {
    throw ConfigError("idx source needs all four file paths");
  }
  if (source == "synthetic") {
    if (classes < 2) throw ConfigError("data.classes must be >= 2");
    if (dim < classes) throw ConfigError("data.dim must be >= data.classes");
  }
  if (model != "dense" && model != "cnn") {
    throw ConfigError("model.kind must be dense or cnn");
  }
  if (model == "dense" && hidden.size() < 2) {
    throw ConfigError("model.hidden needs at least two layers");
  }
  for (std::size_t h : hidden) {
    if (h == 0) throw ConfigError("model.hidden sizes must be positive");
  }
  const int max_bits = plan.mode == QuantMode::kShift ? kMaxShiftBits : 30;
  const int min_bits = plan.mode == QuantMode::kShift ? 0 : 1;
  if (plan.bits < min_bits || plan.bits > max_bits) {
    throw ConfigError("quant.bits out of range");
  }
  if (!plan.quantize_weights && !plan.quantize_acts) {
    throw ConfigError("quant: at least one of weights/acts must be true");
  }
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("train.momentum must be in [0, 1)");
  }
  if (pretrain_epochs < 0) throw ConfigError("train.pretrain_epochs < 0");
  if (!(pretrain_lr > 0.0)) throw ConfigError("train.pretrain_lr must be > 0");
  try {
    schedule.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("schedule: ") + e.what());
  }
  if (word_width != 32 && word_width != 64) {
    throw ConfigError("output.word_width must be 32 or 64");
  }
  if (m != 8 && m != 16) throw ConfigError("output.m must be 8 or 16");
}

Config parse_config(std::string_view text) {
  Config config;
  std::set<std::string> seen;
  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const std::string_view raw =
        text.substr(start, end == std::string_view::npos ? end : end - start);
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "bad section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      bool known = false;
      for (const Field& f : fields()) known |= section == f.section;
      if (!known) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside a section");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const std::string full = section + "." + key;
    const Field* field = nullptr;
    for (const Field& f : fields()) {
      if (section == f.section && key == f.key) field = &f;
    }
    if (field == nullptr) throw ConfigError(where + "unknown key " + full);
    if (!seen.insert(full).second) throw ConfigError(where + "duplicate key " + full);
    field->set(config, value, full);
  }
  config.validate();
  return config;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const Config& config) {
  std::string out;
  std::string section;
  for (const Field& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out += '\n';
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(config) + "\n";
  }
  return out;
}

DataSplit load_data(const Config& config) {
  DataSplit split;
  if (config.source == "idx") {
    split.train = load_idx(config.train_images, config.train_labels);
    split.test = load_idx(config.test_images, config.test_labels);
    split.test.classes = split.train.classes =
        std::max(split.train.classes, split.test.classes);
    return split;
  }
  SyntheticSpec spec;
  spec.classes = config.classes;
  spec.dim = config.dim;
  spec.separation = config.separation;
  spec.samples = config.train_samples;
  split.train = gen_synthetic(spec, config.data_seed);
  spec.samples = config.test_samples;
  split.test = gen_synthetic(spec, config.data_seed ^ 0x9E3779B97F4A7C15ull);
  return split;
}

Model build_model(const Config& config, const Dataset& data) {
  if (config.model == "cnn") {
    const auto& s = data.sample_shape;
    if (s.size() == 2) return make_cnn_model(1, s[0], s[1], data.classes, config.seed);
    if (s.size() == 3) return make_cnn_model(s[0], s[1], s[2], data.classes, config.seed);
    throw DataError("cnn model needs image-shaped samples");
  }
  return make_dense_model(data.sample_size(), config.hidden, data.classes,
                          config.seed);
}

}  // namespace shiftq
