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

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "scr/common.hpp"
#include "scr/exact_metrics.hpp"

namespace scr {

/// Shortest round-trip-safe text for a double: 17 significant digits, '.' separator.
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// x,y,value rows for every ordered state pair.
inline void write_metric_csv(std::ostream& os, const Matrix& values) {
  os << "x,y,value\n";
  for (std::size_t x = 0; x < values.rows; ++x)
    for (std::size_t y = 0; y < values.cols; ++y) os << x << ',' << y << ',' << format_real(values(x, y)) << '\n';
}

/// k,x,y,value rows for every remaining-step count.
inline void write_chrono_csv(std::ostream& os, const ChronoMetricTable& table) {
  os << "k,x,y,value\n";
  for (std::size_t k = 0; k < table.values.size(); ++k) {
    const Matrix& v = table.values[k];
    for (std::size_t x = 0; x < v.rows; ++x)
      for (std::size_t y = 0; y < v.cols; ++y) os << k << ',' << x << ',' << y << ',' << format_real(v(x, y)) << '\n';
  }
}

inline nlohmann::json to_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows; ++r) {
    auto row = nlohmann::json::array();
    for (std::size_t c = 0; c < m.cols; ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json to_json(const MetricTable& t) {
  return {{"values", to_json(t.values)},
          {"iterations", t.iterations},
          {"residual", t.residual},
          {"residuals", t.residuals}};
}

inline MetricTable metric_table_from_json(const nlohmann::json& j) {
  MetricTable t;
  const auto& rows = j.at("values");
  const std::size_t n = rows.size();
  t.values = Matrix(n, n);
  for (std::size_t x = 0; x < n; ++x) {
    if (rows[x].size() != n) throw ValidationError("metric table must be square");
    for (std::size_t y = 0; y < n; ++y) t.values(x, y) = rows[x][y].get<double>();
  }
  t.iterations = j.value("iterations", std::size_t{0});
  t.residual = j.value("residual", 0.0);
  t.residuals = j.value("residuals", std::vector<double>{});
  return t;
}

/// Parses the x,y,value layout written by write_metric_csv.
inline Matrix read_metric_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "x,y,value") throw ValidationError("metric csv: missing x,y,value header");
  std::vector<std::tuple<std::size_t, std::size_t, double>> cells;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b, c;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c)) {
      throw ValidationError("metric csv: malformed row '" + line + "'");
    }
    const std::size_t x = std::stoul(a), y = std::stoul(b);
    cells.emplace_back(x, y, std::stod(c));
    n = std::max({n, x + 1, y + 1});
  }
  if (cells.size() != n * n) throw ValidationError("metric csv: expected every ordered pair exactly once");
  Matrix m(n, n);
  for (const auto& [x, y, v] : cells) m(x, y) = v;
  return m;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw Error("failed writing " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace scr
