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

// Shared fixtures and brute-force oracles. Oracles here avoid the library's
// solvers: they refit from scratch with explicit LU inverses.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "kvte/kvte.hpp"

namespace kvte::testing {

inline Eigen::MatrixXd random_matrix(Index rows, Index cols, std::uint64_t seed,
                                     double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

inline Eigen::VectorXd random_vector(Index n, std::uint64_t seed, double scale = 1.0) {
  return random_matrix(n, 1, seed, scale).col(0);
}

// Gaussian kernel matrix written out entry by entry.
inline Eigen::MatrixXd naive_gaussian_gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                           double sigma) {
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < b.rows(); ++j) {
      k(i, j) = std::exp(-(a.row(i) - b.row(j)).squaredNorm() / (2.0 * sigma * sigma));
    }
  }
  return k;
}

inline Eigen::MatrixXd drop_row(const Eigen::MatrixXd& m, Index skip) {
  Eigen::MatrixXd out(m.rows() - 1, m.cols());
  for (Index i = 0, r = 0; i < m.rows(); ++i) {
    if (i != skip) out.row(r++) = m.row(i);
  }
  return out;
}

inline Eigen::VectorXd drop_entry(const Eigen::VectorXd& v, Index skip) {
  return drop_row(Eigen::MatrixXd(v), skip).col(0);
}

// Held-out residuals of ridge regression by n explicit refits. The refit on
// n - 1 rows keeps the absolute diagonal shift n * lambda of the full fit.
inline Eigen::VectorXd refit_loo_residuals(const Eigen::MatrixXd& inputs,
                                           const Eigen::VectorXd& targets, double lambda,
                                           double sigma) {
  const Index n = inputs.rows();
  const double shift = static_cast<double>(n) * lambda;
  Eigen::VectorXd residuals(n);
  for (Index i = 0; i < n; ++i) {
    const Eigen::MatrixXd x = drop_row(inputs, i);
    const Eigen::VectorXd y = drop_entry(targets, i);
    Eigen::MatrixXd system = naive_gaussian_gram(x, x, sigma);
    system.diagonal().array() += shift;
    const Eigen::VectorXd alpha = system.fullPivLu().inverse() * y;
    const Eigen::MatrixXd query = inputs.row(i);
    const double prediction = (naive_gaussian_gram(query, x, sigma) * alpha)(0);
    residuals(i) = targets(i) - prediction;
  }
  return residuals;
}

// Embedding LOO error by explicit refits with the same absolute shift.
inline double refit_cme_loo(const Eigen::MatrixXd& v, const Eigen::MatrixXd& x, double sigma_v,
                            double sigma_x, double lambda) {
  const Index n = v.rows();
  const double shift = static_cast<double>(n) * lambda;
  const Eigen::MatrixXd kx = naive_gaussian_gram(x, x, sigma_x);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Eigen::MatrixXd vv = drop_row(v, i);
    Eigen::MatrixXd system = naive_gaussian_gram(vv, vv, sigma_v);
    system.diagonal().array() += shift;
    const Eigen::MatrixXd query = v.row(i);
    const Eigen::VectorXd w =
        system.fullPivLu().inverse() * naive_gaussian_gram(vv, query, sigma_v).col(0);
    Eigen::VectorXd cross(n - 1);
    Eigen::MatrixXd block(n - 1, n - 1);
    for (Index a = 0, ra = 0; a < n; ++a) {
      if (a == i) continue;
      cross(ra) = kx(a, i);
      for (Index b = 0, rb = 0; b < n; ++b) {
        if (b == i) continue;
        block(ra, rb++) = kx(a, b);
      }
      ++ra;
    }
    total += kx(i, i) - 2.0 * w.dot(cross) + w.dot(block * w);
  }
  return total;
}

inline double relative_difference(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

// Geometric midpoint of a sorted log grid with an even number of points.
inline double grid_median(const std::vector<double>& grid) {
  const std::size_t m = grid.size() / 2;
  return grid.size() % 2 == 1 ? grid[m] : std::sqrt(grid[m - 1] * grid[m]);
}

// Small confounded dataset from the synthetic generator.
inline Dataset small_synthetic(Index n, Index d, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.n = n;
  cfg.d = d;
  cfg.seed = seed;
  return gen_synthetic(cfg).data;
}

}  // namespace kvte::testing
