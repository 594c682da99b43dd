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

// Kernel ridge regression
//   f(x) = k(x)^T (K + n lambda I)^{-1} y
// with closed-form leave-one-out error for choosing lambda.
#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "kvte/error.hpp"
#include "kvte/kernel.hpp"
#include "kvte/linalg.hpp"

namespace kvte {

// `count` logarithmically spaced points in [lo, hi].
inline std::vector<double> log_grid(double lo, double hi, int count) {
  if (!(lo > 0.0 && hi >= lo) || count < 1) throw InputError("log_grid: invalid range");
  std::vector<double> grid(static_cast<std::size_t>(count));
  if (count == 1) {
    grid[0] = lo;
    return grid;
  }
  const double a = std::log10(lo);
  const double step = (std::log10(hi) - a) / (count - 1);
  for (int i = 0; i < count; ++i) grid[static_cast<std::size_t>(i)] = std::pow(10.0, a + step * i);
  grid.back() = hi;
  return grid;
}

// 20 points spanning [1e-6, 10].
inline std::vector<double> default_lambda_grid() { return log_grid(1e-6, 10.0, 20); }

class KrrModel {
 public:
  KrrModel(Eigen::MatrixXd train_inputs, Eigen::VectorXd dual_weights, double lambda,
           KernelSpec kernel)
      : train_inputs_(std::move(train_inputs)),
        dual_weights_(std::move(dual_weights)),
        lambda_(lambda),
        kernel_(std::move(kernel)) {
    if (!(lambda_ > 0.0)) throw InputError("KrrModel: lambda must be positive");
    if (dual_weights_.size() != train_inputs_.rows()) {
      throw InputError("KrrModel: one dual weight per training row required");
    }
  }

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != train_inputs_.cols()) throw InputError("predict: dimension mismatch");
    detail::require_finite(x, "predict input");
    const Eigen::MatrixXd row = x.transpose();
    return (detail::gram_unchecked(kernel_, row, train_inputs_, false) * dual_weights_)(0);
  }

  Eigen::VectorXd predict_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows) const {
    if (rows.cols() != train_inputs_.cols()) throw InputError("predict: dimension mismatch");
    return gram_matrix(kernel_, rows, train_inputs_) * dual_weights_;
  }

  // Predictions from a precomputed cross Gram matrix k(rows, train_inputs).
  Eigen::VectorXd predict_from_gram(const Eigen::Ref<const Eigen::MatrixXd>& cross_gram) const {
    if (cross_gram.cols() != dual_weights_.size()) {
      throw InputError("predict_from_gram: column count must equal training size");
    }
    return cross_gram * dual_weights_;
  }

  const Eigen::MatrixXd& train_inputs() const { return train_inputs_; }
  const Eigen::VectorXd& dual_weights() const { return dual_weights_; }
  double lambda() const { return lambda_; }
  const KernelSpec& kernel() const { return kernel_; }

 private:
  Eigen::MatrixXd train_inputs_;
  Eigen::VectorXd dual_weights_;
  double lambda_;
  KernelSpec kernel_;
};

namespace detail {

inline void check_krr_args(Index rows, const Eigen::VectorXd& targets, double lambda) {
  if (rows < 1 || rows != targets.size()) {
    throw InputError("krr: need one target per input row and at least one row");
  }
  if (!(std::isfinite(lambda) && lambda > 0.0)) throw InputError("krr: lambda must be positive");
  if (!targets.allFinite()) throw InputError("krr: targets contain non-finite values");
}

inline Eigen::MatrixXd regularized(const Eigen::MatrixXd& gram, double lambda) {
  Eigen::MatrixXd system = gram;
  system.diagonal().array() += static_cast<double>(gram.rows()) * lambda;
  return system;
}

}  // namespace detail

// Fit from a precomputed Gram matrix of `inputs` under `kernel`.
inline KrrModel fit_krr_with_gram(Eigen::MatrixXd inputs, const Eigen::MatrixXd& gram,
                                  const Eigen::VectorXd& targets, double lambda,
                                  KernelSpec kernel) {
  detail::check_krr_args(inputs.rows(), targets, lambda);
  const Eigen::MatrixXd system = detail::regularized(gram, lambda);
  const auto llt = linalg::cholesky(system);
  Eigen::VectorXd alpha = llt.solve(targets);
  // Two rounds of iterative refinement keep the residual near machine level
  // even for tiny lambda.
  for (int round = 0; round < 2; ++round) {
    const Eigen::VectorXd residual = targets - system * alpha;
    alpha += llt.solve(residual);
  }
  if (!alpha.allFinite()) throw NumericError("fit_krr: non-finite dual weights");
  return KrrModel(std::move(inputs), std::move(alpha), lambda, std::move(kernel));
}

inline KrrModel fit_krr(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                        double lambda, const KernelSpec& kernel) {
  detail::check_krr_args(inputs.rows(), targets, lambda);
  return fit_krr_with_gram(inputs, gram_matrix(kernel, inputs), targets, lambda, kernel);
}

// Mean squared leave-one-out residual. For ridge the held-out residual is
// (y_i - yhat_i) / (1 - H_ii) with H = K (K + n lambda I)^{-1}, which reduces
// to alpha_i / [(K + n lambda I)^{-1}]_ii.
inline double loo_error(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                        double lambda, const KernelSpec& kernel) {
  detail::check_krr_args(inputs.rows(), targets, lambda);
  if (inputs.rows() < 2) throw InputError("loo_error needs at least 2 rows");
  const Eigen::MatrixXd system = detail::regularized(gram_matrix(kernel, inputs), lambda);
  const auto llt = linalg::cholesky(system);
  const Eigen::VectorXd alpha = llt.solve(targets);
  const Eigen::MatrixXd inverse =
      llt.solve(Eigen::MatrixXd::Identity(system.rows(), system.cols()));
  const double shift = static_cast<double>(inputs.rows()) * lambda;
  double total = 0.0;
  for (Index i = 0; i < alpha.size(); ++i) {
    const double d = inverse(i, i);
    if (shift * d <= 1e-12) throw NumericError("loo_error: leverage numerically equal to 1");
    const double r = alpha(i) / d;
    total += r * r;
  }
  const double err = total / static_cast<double>(alpha.size());
  if (!std::isfinite(err)) throw NumericError("loo_error: non-finite result");
  return err;
}

struct LambdaSelection {
  double lambda = 0.0;
  double loo_error = 0.0;
  // One entry per grid point; NaN where the evaluation failed numerically.
  std::vector<double> errors;
};

namespace detail {

// Argmin over the grid, ties toward the larger lambda.
template <typename ErrorFn>
LambdaSelection select_on_grid(std::span<const double> grid, ErrorFn&& error_at) {
  if (grid.empty()) throw InputError("lambda grid is empty");
  for (double l : grid) {
    if (!(std::isfinite(l) && l > 0.0)) throw InputError("lambda grid entries must be positive");
  }
  LambdaSelection best;
  best.loo_error = std::numeric_limits<double>::infinity();
  bool found = false;
  for (double l : grid) {
    double err = std::numeric_limits<double>::quiet_NaN();
    try {
      err = error_at(l);
    } catch (const NumericError&) {
    }
    best.errors.push_back(err);
    if (std::isnan(err)) continue;
    if (!found || err < best.loo_error || (err == best.loo_error && l > best.lambda)) {
      best.lambda = l;
      best.loo_error = err;
      found = true;
    }
  }
  if (!found) throw NumericError("every lambda on the grid failed numerically");
  return best;
}

}  // namespace detail

// Closed-form LOO evaluated for many lambdas and targets from a single
// eigendecomposition K = Q diag(e) Q^T.
class LooPath {
 public:
  explicit LooPath(const Eigen::MatrixXd& gram)
      : eig_(linalg::symmetric_eigen(gram)),
        squared_vectors_(eig_.vectors.cwiseAbs2()),
        n_(gram.rows()) {
    if (n_ < 2) throw InputError("LooPath needs at least 2 rows");
  }

  double error(const Eigen::VectorXd& targets, double lambda) const {
    if (targets.size() != n_) throw InputError("LooPath: target length mismatch");
    const double shift = static_cast<double>(n_) * lambda;
    const Eigen::ArrayXd denom = eig_.values.array() + shift;
    if ((denom <= 0.0).any()) throw NumericError("LooPath: system not positive definite");
    const Eigen::VectorXd inv = denom.inverse().matrix();
    const Eigen::VectorXd coords = eig_.vectors.transpose() * targets;
    const Eigen::VectorXd alpha = eig_.vectors * inv.cwiseProduct(coords);
    const Eigen::VectorXd inverse_diag = squared_vectors_ * inv;
    if ((shift * inverse_diag.array() <= 1e-12).any()) {
      throw NumericError("LooPath: leverage numerically equal to 1");
    }
    const double err = (alpha.array() / inverse_diag.array()).square().mean();
    if (!std::isfinite(err)) throw NumericError("LooPath: non-finite result");
    return err;
  }

  LambdaSelection select(const Eigen::VectorXd& targets, std::span<const double> grid) const {
    return detail::select_on_grid(grid, [&](double l) { return error(targets, l); });
  }

  Index size() const { return n_; }

 private:
  linalg::SymmetricEigen eig_;
  Eigen::MatrixXd squared_vectors_;
  Index n_;
};

// Grid value minimizing loo_error; ties go to the larger lambda.
inline double select_lambda(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                            const KernelSpec& kernel, std::span<const double> grid) {
  if (grid.size() == 1) {
    detail::select_on_grid(grid, [](double) { return 0.0; });
    return grid[0];
  }
  detail::check_krr_args(inputs.rows(), targets, grid.empty() ? 1.0 : grid[0]);
  const LooPath path(gram_matrix(kernel, inputs));
  return path.select(targets, grid).lambda;
}

}  // namespace kvte
