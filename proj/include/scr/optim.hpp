// Copyright 2026 The SCR Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <map>
#include <string>

#include "json.hpp"
#include "scr/grad.hpp"

namespace scr {

using grad::Gradients;
using grad::Tensor;

/// Named trainable arrays with first/second moment accumulators for the adaptive-moment update.
struct ParamStore {
  std::map<std::string, Tensor> values;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
  std::size_t step = 0;

  void add(const std::string& name, Tensor value) {
    first_moment[name] = Tensor(value.rows, value.cols, 0.0);
    second_moment[name] = Tensor(value.rows, value.cols, 0.0);
    values[name] = std::move(value);
  }

  const Tensor& at(const std::string& name) const { return values.at(name); }
  Tensor& at(const std::string& name) { return values.at(name); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : values) n += v.size();
    return n;
  }

  friend bool operator==(const ParamStore&, const ParamStore&) = default;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected adaptive-moment update. Parameters missing from `grads` are left alone.
inline void adam_step(ParamStore& params, const Gradients& grads, const AdamConfig& cfg) {
  ++params.step;
  const double t = static_cast<double>(params.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, value] : params.values) {
    const auto it = grads.find(name);
    if (it == grads.end()) continue;
    const Tensor& g = it->second;
    if (g.rows != value.rows || g.cols != value.cols) throw ShapeError("adam_step: gradient shape for " + name);
    Tensor& m = params.first_moment.at(name);
    Tensor& v = params.second_moment.at(name);
    for (std::size_t i = 0; i < value.data.size(); ++i) {
      m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g.data[i];
      v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g.data[i] * g.data[i];
      const double mhat = m.data[i] / c1;
      const double vhat = v.data[i] / c2;
      value.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

/// Plain gradient descent.
inline void sgd_step(ParamStore& params, const Gradients& grads, double lr) {
  ++params.step;
  for (auto& [name, value] : params.values) {
    const auto it = grads.find(name);
    if (it == grads.end()) continue;
    if (it->second.rows != value.rows || it->second.cols != value.cols) {
      throw ShapeError("sgd_step: gradient shape for " + name);
    }
    for (std::size_t i = 0; i < value.data.size(); ++i) value.data[i] -= lr * it->second.data[i];
  }
}

inline nlohmann::json tensor_to_json(const Tensor& t) {
  auto rows = nlohmann::json::array();
  for (std::size_t r = 0; r < t.rows; ++r) {
    auto row = nlohmann::json::array();
    for (std::size_t c = 0; c < t.cols; ++c) row.push_back(t(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) throw ValidationError("tensor must be a nested array");
  Tensor t(j.size(), j[0].size());
  for (std::size_t r = 0; r < t.rows; ++r) {
    if (j[r].size() != t.cols) throw ValidationError("tensor rows have different lengths");
    for (std::size_t c = 0; c < t.cols; ++c) t(r, c) = j[r][c].get<double>();
  }
  return t;
}

/// {name: nested arrays}; optimizer moments are not part of the checkpoint.
inline nlohmann::json to_json(const ParamStore& params) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, v] : params.values) j[name] = tensor_to_json(v);
  return j;
}

inline ParamStore params_from_json(const nlohmann::json& j) {
  ParamStore ps;
  for (const auto& [name, v] : j.items()) ps.add(name, tensor_from_json(v));
  return ps;
}

}  // namespace scr
