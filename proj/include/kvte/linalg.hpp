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

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SVD>
#include <lapacke.h>

#include "kvte/error.hpp"

namespace kvte::linalg {

using Index = Eigen::Index;

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // orthonormal columns
};

// Full eigendecomposition of a symmetric matrix (LAPACK divide and conquer).
inline SymmetricEigen symmetric_eigen(Eigen::MatrixXd m) {
  if (m.rows() != m.cols()) throw InputError("symmetric_eigen: matrix is not square");
  if (!m.allFinite()) throw NumericError("symmetric_eigen: non-finite matrix entries");
  SymmetricEigen out;
  out.values.resize(m.rows());
  if (m.rows() == 0) return out;
  const lapack_int n = static_cast<lapack_int>(m.rows());
  const lapack_int info =
      LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n, m.data(), n, out.values.data());
  if (info != 0) {
    throw NumericError("dsyevd failed with info = " + std::to_string(info));
  }
  out.vectors = std::move(m);
  return out;
}

// Cholesky factorization of a symmetric positive-definite matrix. No jitter
// is added; failure surfaces as NumericError.
inline Eigen::LLT<Eigen::MatrixXd> cholesky(const Eigen::MatrixXd& m) {
  if (!m.allFinite()) throw NumericError("cholesky: non-finite matrix entries");
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NumericError("cholesky: matrix is not positive definite");
  }
  return llt;
}

// Greedy diagonal-pivoted Cholesky: returns G (n x r) with m ~= G G^T, stopping
// once every residual diagonal entry is <= tolerance or r == n.
inline Eigen::MatrixXd pivoted_cholesky(const Eigen::MatrixXd& m, double tolerance) {
  const Index n = m.rows();
  Eigen::VectorXd residual = m.diagonal();
  Eigen::MatrixXd factor(n, std::min<Index>(n, 64));
  Index rank = 0;
  while (rank < n) {
    Index pivot = 0;
    const double largest = residual.maxCoeff(&pivot);
    if (!(largest > tolerance)) break;
    if (rank == factor.cols()) factor.conservativeResize(n, std::min<Index>(n, 2 * factor.cols()));
    Eigen::VectorXd column = m.col(pivot);
    if (rank > 0) {
      column.noalias() -= factor.leftCols(rank) * factor.row(pivot).head(rank).transpose();
    }
    column /= std::sqrt(largest);
    factor.col(rank) = column;
    residual -= column.cwiseAbs2();
    residual(pivot) = 0.0;
    ++rank;
  }
  return factor.leftCols(rank);
}

// Eigenpairs of m restricted to its numerical range: values (descending) and
// orthonormal vectors U (n x r) with m ~= U diag(values) U^T. The residual is
// bounded entrywise by `tolerance` on the diagonal.
inline SymmetricEigen range_eigen(const Eigen::MatrixXd& m, double tolerance) {
  const Eigen::MatrixXd g = pivoted_cholesky(m, tolerance);
  SymmetricEigen out;
  if (g.cols() == 0) {
    out.vectors.resize(m.rows(), 0);
    return out;
  }
  if (2 * g.cols() > m.rows()) {
    SymmetricEigen full = symmetric_eigen(m);
    out.values = full.values.reverse();
    out.vectors = full.vectors.rowwise().reverse();
    return out;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(g, Eigen::ComputeThinU);
  out.values = svd.singularValues().cwiseAbs2();
  out.vectors = svd.matrixU();
  return out;
}

}  // namespace kvte::linalg
