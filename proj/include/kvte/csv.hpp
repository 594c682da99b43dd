/*
 * Copyright 2026 The kvte Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Tabular dataset files.
//
// Format: UTF-8, comma separated, one header row naming every column, '.' as
// decimal point, no quoting, no thousands separators. A schema assigns each
// column a role (covariate, treatment, outcome, conditioning). Categorical
// covariates are one-hot encoded with one indicator column "name=level" per
// declared level, in declared order.
#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "kvte/dataset.hpp"
#include "kvte/error.hpp"

namespace kvte {

struct CsvSchema {
  std::string treatment = "a";
  std::string outcome = "y";
  // Empty: every column not used for another role, in file order.
  std::vector<std::string> covariates;
  std::vector<std::string> conditioning;
  // Column name -> declared levels.
  std::map<std::string, std::vector<std::string>> categorical;
  double outcome_bound = 1e6;

  static CsvSchema from_json(const nlohmann::json& j) {
    CsvSchema s;
    s.treatment = j.value("treatment", s.treatment);
    s.outcome = j.value("outcome", s.outcome);
    s.covariates = j.value("covariates", s.covariates);
    s.conditioning = j.value("conditioning", s.conditioning);
    if (j.contains("categorical")) {
      s.categorical = j.at("categorical").get<std::map<std::string, std::vector<std::string>>>();
    }
    s.outcome_bound = j.value("outcome_bound", s.outcome_bound);
    return s;
  }

  nlohmann::json to_json() const {
    return {{"treatment", treatment},   {"outcome", outcome},
            {"covariates", covariates}, {"conditioning", conditioning},
            {"categorical", categorical}, {"outcome_bound", outcome_bound}};
  }
};

// Schema that reads back exactly what write_csv produces for `data`.
inline CsvSchema schema_for(const Dataset& data) {
  CsvSchema s;
  s.treatment = data.a_name;
  s.outcome = data.y_name;
  s.covariates = data.x_names;
  s.conditioning = data.v_names;
  s.outcome_bound = data.outcome_bound;
  return s;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline bool parse_double(std::string_view text, double& value) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  return ec == std::errc() && ptr == text.data() + text.size();
}

inline std::string format_double(double value) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

inline std::string cell_location(std::size_t data_row, const std::string& column) {
  return "row " + std::to_string(data_row) + ", column '" + column + "'";
}

}  // namespace detail

// Parses CSV text; `source` names the input in error messages. Rows are
// numbered from 1 after the header.
inline Dataset parse_csv(std::istream& in, const CsvSchema& schema,
                         const std::string& source = "<csv>") {
  std::string header_line;
  if (!std::getline(in, header_line)) throw InputError(source + ": empty file");
  if (header_line.size() >= 3 && header_line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    header_line.erase(0, 3);
  }
  std::vector<std::string> header;
  for (auto cell : detail::split_line(header_line)) header.emplace_back(cell);
  std::map<std::string, std::size_t> position;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c].empty()) throw InputError(source + ": empty column name at position " + std::to_string(c));
    if (!position.emplace(header[c], c).second) {
      throw InputError(source + ": duplicate column '" + header[c] + "'");
    }
  }
  const auto locate = [&](const std::string& name) {
    const auto it = position.find(name);
    if (it == position.end()) throw InputError(source + ": missing column '" + name + "'");
    return it->second;
  };
  const std::size_t a_col = locate(schema.treatment);
  const std::size_t y_col = locate(schema.outcome);
  std::vector<std::size_t> v_cols;
  for (const auto& name : schema.conditioning) v_cols.push_back(locate(name));
  for (const auto& [name, levels] : schema.categorical) {
    locate(name);
    if (levels.empty()) throw InputError(source + ": categorical column '" + name + "' has no levels");
  }

  std::vector<std::string> covariates = schema.covariates;
  if (covariates.empty()) {
    std::set<std::string> used{schema.treatment, schema.outcome};
    used.insert(schema.conditioning.begin(), schema.conditioning.end());
    for (const auto& name : header) {
      if (!used.count(name)) covariates.push_back(name);
    }
  }
  // Output covariate layout: numeric columns map to one slot, categorical
  // columns to one slot per level.
  struct Slot {
    std::size_t column;
    const std::vector<std::string>* levels;
  };
  std::vector<Slot> slots;
  std::vector<std::string> x_names;
  for (const auto& name : covariates) {
    const std::size_t c = locate(name);
    const auto cat = schema.categorical.find(name);
    if (cat == schema.categorical.end()) {
      slots.push_back({c, nullptr});
      x_names.push_back(name);
    } else {
      slots.push_back({c, &cat->second});
      for (const auto& level : cat->second) x_names.push_back(name + "=" + level);
    }
  }

  std::vector<double> xs;
  std::vector<double> vs;
  std::vector<int> as;
  std::vector<double> ys;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split_line(line);
    if (cells.size() != header.size()) {
      throw InputError(source + ": row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " cells, header has " +
                       std::to_string(header.size()));
    }
    const auto number = [&](std::size_t c) {
      double value = 0.0;
      if (!detail::parse_double(cells[c], value) || !std::isfinite(value)) {
        throw InputError(source + ": non-numeric or non-finite value '" + std::string(cells[c]) +
                         "' at " + detail::cell_location(row, header[c]));
      }
      return value;
    };
    for (const auto& slot : slots) {
      if (slot.levels == nullptr) {
        xs.push_back(number(slot.column));
        continue;
      }
      const std::string_view cell = cells[slot.column];
      bool matched = false;
      for (const auto& level : *slot.levels) {
        const bool hit = cell == level;
        matched = matched || hit;
        xs.push_back(hit ? 1.0 : 0.0);
      }
      if (!matched) {
        throw InputError(source + ": undeclared level '" + std::string(cell) + "' at " +
                         detail::cell_location(row, header[slot.column]));
      }
    }
    for (std::size_t c : v_cols) vs.push_back(number(c));
    const double a = number(a_col);
    if (a != 0.0 && a != 1.0) {
      throw InputError(source + ": treatment must be 0 or 1, got '" + std::string(cells[a_col]) +
                       "' at " + detail::cell_location(row, header[a_col]));
    }
    as.push_back(static_cast<int>(a));
    const double y = number(y_col);
    if (std::abs(y) > schema.outcome_bound) {
      throw InputError(source + ": outcome exceeds bound at " +
                       detail::cell_location(row, header[y_col]));
    }
    ys.push_back(y);
  }

  Dataset data;
  const Index n = static_cast<Index>(row);
  const Index d = static_cast<Index>(x_names.size());
  data.x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      xs.data(), n, d);
  data.a = Eigen::Map<const Eigen::VectorXi>(as.data(), n);
  data.y = Eigen::Map<const Eigen::VectorXd>(ys.data(), n);
  if (!v_cols.empty()) {
    data.v = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        vs.data(), n, static_cast<Index>(v_cols.size()));
    data.v_names = schema.conditioning;
  }
  data.x_names = std::move(x_names);
  data.a_name = schema.treatment;
  data.y_name = schema.outcome;
  data.outcome_bound = schema.outcome_bound;
  data.validate();
  return data;
}

inline Dataset ingest_csv(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return parse_csv(in, schema, path);
}

inline void write_csv(const Dataset& data, std::ostream& out) {
  data.validate();
  std::vector<std::string> x_names = data.x_names;
  if (static_cast<Index>(x_names.size()) != data.dim()) {
    x_names.clear();
    for (Index c = 0; c < data.dim(); ++c) x_names.push_back("x" + std::to_string(c + 1));
  }
  std::vector<std::string> v_names = data.v_names;
  if (data.v && static_cast<Index>(v_names.size()) != data.v->cols()) {
    v_names.clear();
    for (Index c = 0; c < data.v->cols(); ++c) v_names.push_back("v" + std::to_string(c + 1));
  }
  std::string header;
  for (const auto& name : x_names) header += name + ",";
  for (const auto& name : v_names) header += name + ",";
  out << header << data.a_name << "," << data.y_name << "\n";
  for (Index i = 0; i < data.n(); ++i) {
    std::string line;
    for (Index c = 0; c < data.dim(); ++c) line += detail::format_double(data.x(i, c)) + ",";
    if (data.v) {
      for (Index c = 0; c < data.v->cols(); ++c) line += detail::format_double((*data.v)(i, c)) + ",";
    }
    line += std::to_string(data.a(i)) + "," + detail::format_double(data.y(i));
    out << line << "\n";
  }
}

inline void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_csv(data, out);
  if (!out) throw IoError("failed writing '" + path + "'");
}

struct NormalizedDataset {
  Dataset data;
  // Original outcomes = normalized outcomes * scale.
  double scale = 1.0;
};

// Divides y by its divide-by-n standard deviation.
inline NormalizedDataset normalize_outcomes(const Dataset& data) {
  if (data.n() < 2) throw InputError("normalize_outcomes: need at least 2 rows");
  const double sd = std::sqrt(population_variance(data.y));
  if (!(sd > 0.0)) throw InputError("normalize_outcomes: outcome is constant");
  NormalizedDataset out{data, sd};
  out.data.y = data.y / sd;
  out.data.outcome_bound = data.outcome_bound / std::min(sd, 1.0);
  return out;
}

}  // namespace kvte
