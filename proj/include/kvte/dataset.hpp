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
#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kvte/error.hpp"

namespace kvte {

using Index = Eigen::Index;

// Observational sample: covariates x (n x d), binary treatment a, outcome y,
// and optional conditioning variables v (n x d_v) that are not covariates.
struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXi a;
  Eigen::VectorXd y;
  std::optional<Eigen::MatrixXd> v;
  double outcome_bound = 1e6;

  // Column names; filled in when known (ingestion, simulation).
  std::vector<std::string> x_names;
  std::vector<std::string> v_names;
  std::string a_name = "a";
  std::string y_name = "y";

  Index n() const { return y.size(); }
  Index dim() const { return x.cols(); }
  Index count_arm(int arm) const { return (a.array() == arm).count(); }

  std::vector<Index> arm_rows(int arm) const {
    std::vector<Index> rows;
    for (Index i = 0; i < a.size(); ++i) {
      if (a(i) == arm) rows.push_back(i);
    }
    return rows;
  }

  // Throws InputError on shape, binarity, finiteness or bound violations.
  void validate() const {
    const Index rows = y.size();
    if (x.rows() != rows || a.size() != rows) {
      throw InputError("dataset: x, a and y must have the same number of rows");
    }
    if (v && v->rows() != rows) throw InputError("dataset: v must have one row per observation");
    if (!(outcome_bound > 0.0)) throw InputError("dataset: outcome bound must be positive");
    for (Index i = 0; i < rows; ++i) {
      if (a(i) != 0 && a(i) != 1) {
        throw InputError("dataset: treatment at row " + std::to_string(i) + " is not 0/1");
      }
      if (!std::isfinite(y(i)) || std::abs(y(i)) > outcome_bound) {
        throw InputError("dataset: outcome at row " + std::to_string(i) +
                         " is non-finite or exceeds the outcome bound");
      }
    }
    if (!x.allFinite()) throw InputError("dataset: covariates contain non-finite values");
    if (v && !v->allFinite()) throw InputError("dataset: conditioning values are non-finite");
  }

  // Both arms must hold at least `min_per_arm` rows.
  void require_arms(Index min_per_arm) const {
    const Index n1 = count_arm(1);
    const Index n0 = n() - n1;
    if (n0 < min_per_arm || n1 < min_per_arm) {
      throw InputError("dataset: each arm needs at least " + std::to_string(min_per_arm) +
                       " rows (have n0=" + std::to_string(n0) + ", n1=" + std::to_string(n1) +
                       ")");
    }
  }

  Dataset subset(std::span<const Index> rows) const {
    Dataset out;
    const Index m = static_cast<Index>(rows.size());
    out.x.resize(m, x.cols());
    out.a.resize(m);
    out.y.resize(m);
    if (v) out.v = Eigen::MatrixXd(m, v->cols());
    for (Index r = 0; r < m; ++r) {
      const Index i = rows[static_cast<std::size_t>(r)];
      out.x.row(r) = x.row(i);
      out.a(r) = a(i);
      out.y(r) = y(i);
      if (v) out.v->row(r) = v->row(i);
    }
    out.outcome_bound = outcome_bound;
    out.x_names = x_names;
    out.v_names = v_names;
    out.a_name = a_name;
    out.y_name = y_name;
    return out;
  }

  bool operator==(const Dataset& other) const {
    const auto same = [](const auto& p, const auto& q) {
      return p.rows() == q.rows() && p.cols() == q.cols() && p == q;
    };
    const bool v_equal = v.has_value() == other.v.has_value() && (!v || same(*v, *other.v));
    return same(x, other.x) && same(a, other.a) && same(y, other.y) && v_equal &&
           x_names == other.x_names && v_names == other.v_names && a_name == other.a_name &&
           y_name == other.y_name;
  }
};

// Gathers the listed rows, in order.
inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, std::span<const Index> rows) {
  Eigen::MatrixXd out(static_cast<Index>(rows.size()), m.cols());
  for (Index r = 0; r < out.rows(); ++r) out.row(r) = m.row(rows[static_cast<std::size_t>(r)]);
  return out;
}

inline Eigen::VectorXd take_rows(const Eigen::VectorXd& v, std::span<const Index> rows) {
  Eigen::VectorXd out(static_cast<Index>(rows.size()));
  for (Index r = 0; r < out.size(); ++r) out(r) = v(rows[static_cast<std::size_t>(r)]);
  return out;
}

// Divide-by-n variance.
inline double population_variance(const Eigen::Ref<const Eigen::VectorXd>& values) {
  if (values.size() == 0) throw InputError("variance of an empty sample");
  const double mean = values.mean();
  return (values.array() - mean).square().mean();
}

}  // namespace kvte
