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

// Conditional mean embedding of X given V, represented by ridge weights
//   w(v) = (K_V + n lambda_V I)^{-1} k_V(v),
// so that E[h(X) | V = v] ~= sum_i w_i(v) h(x_i) for h in the RKHS of X.
#pragma once

#include <cmath>
#include <span>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "kvte/error.hpp"
#include "kvte/kernel.hpp"
#include "kvte/krr.hpp"
#include "kvte/linalg.hpp"

namespace kvte {

class CmeModel {
 public:
  CmeModel(Eigen::MatrixXd train_v, double lambda_v, KernelSpec kernel_v)
      : train_v_(std::move(train_v)), lambda_v_(lambda_v), kernel_v_(std::move(kernel_v)) {
    if (!(std::isfinite(lambda_v_) && lambda_v_ > 0.0)) {
      throw InputError("CmeModel: lambda_v must be positive");
    }
    if (train_v_.rows() < 1) throw InputError("CmeModel: needs at least one row");
    Eigen::MatrixXd system = gram_matrix(kernel_v_, train_v_);
    system.diagonal().array() += static_cast<double>(train_v_.rows()) * lambda_v_;
    factor_ = linalg::cholesky(system);
  }

  // Raw ridge weights; they may be negative and need not sum to one.
  Eigen::VectorXd weights(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    if (v.size() != train_v_.cols()) throw InputError("cme_weights: dimension mismatch");
    detail::require_finite(v, "cme_weights query");
    const Eigen::MatrixXd query = v.transpose();
    const Eigen::VectorXd kv = detail::gram_unchecked(kernel_v_, train_v_, query, false).col(0);
    return factor_.solve(kv);
  }

  // Column j holds the weights for query row j.
  Eigen::MatrixXd weights_rows(const Eigen::Ref<const Eigen::MatrixXd>& queries) const {
    if (queries.cols() != train_v_.cols()) throw InputError("cme_weights: dimension mismatch");
    return factor_.solve(gram_matrix(kernel_v_, train_v_, queries));
  }

  // (K_V + n lambda_V I) rebuilt from the stored factor.
  Eigen::MatrixXd reconstructed_system() const {
    const Eigen::MatrixXd l = factor_.matrixL();
    return l * l.transpose();
  }

  const Eigen::MatrixXd& train_v() const { return train_v_; }
  double lambda_v() const { return lambda_v_; }
  const KernelSpec& kernel_v() const { return kernel_v_; }
  Index size() const { return train_v_.rows(); }

 private:
  Eigen::MatrixXd train_v_;
  double lambda_v_;
  KernelSpec kernel_v_;
  Eigen::LLT<Eigen::MatrixXd> factor_;
};

inline CmeModel fit_cme(const Eigen::MatrixXd& v_rows, double lambda_v, const KernelSpec& kernel_v) {
  return CmeModel(v_rows, lambda_v, kernel_v);
}

inline Eigen::VectorXd cme_weights(const CmeModel& model,
                                   const Eigen::Ref<const Eigen::VectorXd>& v) {
  return model.weights(v);
}

// Leave-one-out error of the embedding regression phi(x) on v, measured in
// the RKHS norm of X:
//   sum_i |phi(x_i) - sum_j H_ij phi(x_j)|^2 / (1 - H_ii)^2,
//   H = K_V (K_V + n lambda_V I)^{-1}.
// Dense reference path; see CmeLooPath for the grid search.
inline double cme_loo_error(const Eigen::MatrixXd& v_rows, const Eigen::MatrixXd& x_rows,
                            const KernelSpec& kernel_v, const KernelSpec& kernel_x,
                            double lambda_v) {
  const Index n = v_rows.rows();
  if (n < 2 || x_rows.rows() != n) throw InputError("cme_loo_error: need n >= 2 paired rows");
  if (!(lambda_v > 0.0)) throw InputError("cme_loo_error: lambda_v must be positive");
  const Eigen::MatrixXd kv = gram_matrix(kernel_v, v_rows);
  const Eigen::MatrixXd kx = gram_matrix(kernel_x, x_rows);
  Eigen::MatrixXd system = kv;
  system.diagonal().array() += static_cast<double>(n) * lambda_v;
  const auto llt = linalg::cholesky(system);
  const Eigen::MatrixXd hat = llt.solve(kv).transpose();  // K_V symmetric
  const Eigen::MatrixXd hk = hat * kx;
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double one_minus_h = 1.0 - hat(i, i);
    if (one_minus_h <= 1e-12) throw NumericError("cme_loo_error: leverage numerically equal to 1");
    const double num = kx(i, i) - 2.0 * hk(i, i) + hk.row(i).dot(hat.row(i));
    total += num / (one_minus_h * one_minus_h);
  }
  if (!std::isfinite(total)) throw NumericError("cme_loo_error: non-finite result");
  return total;
}

// The same criterion for many lambdas. K_V is represented on its numerical
// range (pivoted Cholesky truncated at 1e-12 on the residual diagonal), so
// each grid point costs O(n r^2) for numerical rank r.
class CmeLooPath {
 public:
  CmeLooPath(const Eigen::MatrixXd& v_rows, const Eigen::MatrixXd& x_rows,
             const KernelSpec& kernel_v, const KernelSpec& kernel_x)
      : n_(v_rows.rows()) {
    if (n_ < 2 || x_rows.rows() != n_) throw InputError("CmeLooPath: need n >= 2 paired rows");
    const linalg::SymmetricEigen eig =
        linalg::range_eigen(gram_matrix(kernel_v, v_rows), kRangeTolerance);
    values_ = eig.values;
    basis_ = eig.vectors;
    squared_basis_ = basis_.cwiseAbs2();
    outside_range_ = (1.0 - squared_basis_.rowwise().sum().array()).cwiseMax(0.0).matrix();
    const Eigen::MatrixXd kx = gram_matrix(kernel_x, x_rows);
    kx_diag_ = kx.diagonal();
    projected_ = basis_.transpose() * kx;  // r x n
    compressed_ = projected_ * basis_;      // r x r
  }

  double error(double lambda_v) const {
    if (!(lambda_v > 0.0)) throw InputError("CmeLooPath: lambda_v must be positive");
    const double shift = static_cast<double>(n_) * lambda_v;
    const Eigen::ArrayXd denom = values_.array() + shift;
    const Eigen::VectorXd shrink = (values_.array() / denom).matrix();
    const Eigen::VectorXd keep = (shift / denom).matrix();
    const Eigen::VectorXd one_minus_h = squared_basis_ * keep + outside_range_;
    if ((one_minus_h.array() <= 1e-12).any()) {
      throw NumericError("CmeLooPath: leverage numerically equal to 1");
    }
    const Eigen::MatrixXd scaled = basis_ * shrink.asDiagonal();  // U D
    const Eigen::VectorXd hk_diag = scaled.cwiseProduct(projected_.transpose()).rowwise().sum();
    const Eigen::VectorXd hkh_diag =
        (scaled * compressed_).cwiseProduct(scaled).rowwise().sum();
    const Eigen::ArrayXd num = kx_diag_.array() - 2.0 * hk_diag.array() + hkh_diag.array();
    const double total = (num / one_minus_h.array().square()).sum();
    if (!std::isfinite(total)) throw NumericError("CmeLooPath: non-finite result");
    return total;
  }

  LambdaSelection select(std::span<const double> grid) const {
    return detail::select_on_grid(grid, [&](double l) { return error(l); });
  }

  Index rank() const { return basis_.cols(); }

  static constexpr double kRangeTolerance = 1e-12;

 private:
  Index n_;
  Eigen::VectorXd values_;
  Eigen::MatrixXd basis_;
  Eigen::MatrixXd squared_basis_;
  Eigen::VectorXd outside_range_;
  Eigen::VectorXd kx_diag_;
  Eigen::MatrixXd projected_;
  Eigen::MatrixXd compressed_;
};

// Grid value minimizing the embedding LOO error; ties go to the larger lambda.
inline double select_lambda_v(const Eigen::MatrixXd& v_rows, const Eigen::MatrixXd& x_rows,
                              const KernelSpec& kernel_v, const KernelSpec& kernel_x,
                              std::span<const double> grid) {
  if (grid.size() == 1) {
    detail::select_on_grid(grid, [](double) { return 0.0; });
    return grid[0];
  }
  return CmeLooPath(v_rows, x_rows, kernel_v, kernel_x).select(grid).lambda;
}

}  // namespace kvte
