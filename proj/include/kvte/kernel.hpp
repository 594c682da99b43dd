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

// Positive-definite kernels on real vectors: the Gaussian kernel
//   k(x, x') = exp(-|x - x'|^2 / (2 sigma^2))
// and products of kernels acting on disjoint column blocks. Gram matrices
// are built with observations as rows.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kvte/error.hpp"

namespace kvte {

using Index = Eigen::Index;

struct KernelPart;

class KernelSpec {
 public:
  enum class Family { kGaussian, kCompositeProduct };

  // Throws InputError unless bandwidth is finite and positive.
  static KernelSpec Gaussian(double bandwidth);
  // Parts must have non-empty, pairwise-disjoint column sets whose union is
  // {0, ..., D-1}; D becomes the kernel's input dimension. Column indices of
  // a nested part kernel are relative to the part's own columns.
  static KernelSpec CompositeProduct(std::vector<KernelPart> parts);

  Family family() const { return family_; }
  double bandwidth() const { return bandwidth_; }
  const std::vector<KernelPart>& parts() const { return parts_; }

  // Fixed input dimension for composite kernels; Gaussian kernels accept any.
  std::optional<Index> input_dim() const;
  // Every Gaussian bandwidth in depth-first part order.
  std::vector<double> bandwidths() const;
  std::string describe() const;

 private:
  KernelSpec() = default;

  Family family_ = Family::kGaussian;
  double bandwidth_ = 1.0;
  std::vector<KernelPart> parts_;
};

struct KernelPart {
  std::vector<Index> columns;
  KernelSpec kernel;
};

namespace detail {

inline void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m,
                           const char* what) {
  if (!m.allFinite()) {
    throw InputError(std::string(what) + " contains non-finite entries");
  }
}

inline void check_dim(const KernelSpec& spec, Index dim) {
  if (const auto d = spec.input_dim(); d && *d != dim) {
    throw InputError("kernel expects dimension " + std::to_string(*d) +
                     ", got " + std::to_string(dim));
  }
}

inline Eigen::MatrixXd take_columns(const Eigen::Ref<const Eigen::MatrixXd>& rows,
                                    const std::vector<Index>& columns) {
  Eigen::MatrixXd out(rows.rows(), static_cast<Index>(columns.size()));
  for (Index c = 0; c < out.cols(); ++c) out.col(c) = rows.col(columns[c]);
  return out;
}

// Pairwise squared Euclidean distances between rows of a and rows of b.
// Differences are formed explicitly so identical rows give exactly zero.
inline Eigen::MatrixXd squared_distances(const Eigen::Ref<const Eigen::MatrixXd>& a,
                                         const Eigen::Ref<const Eigen::MatrixXd>& b,
                                         bool symmetric) {
  const Eigen::MatrixXd at = a.transpose();
  const Eigen::MatrixXd bt = symmetric ? Eigen::MatrixXd() : Eigen::MatrixXd(b.transpose());
  const Eigen::MatrixXd& rhs = symmetric ? at : bt;
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Index j = 0; j < out.cols(); ++j) {
    const Index first = symmetric ? j : 0;
    for (Index i = first; i < out.rows(); ++i) {
      out(i, j) = (at.col(i) - rhs.col(j)).squaredNorm();
    }
  }
  if (symmetric) {
    for (Index j = 0; j < out.cols(); ++j) {
      for (Index i = 0; i < j; ++i) out(i, j) = out(j, i);
    }
  }
  return out;
}

inline double eval_unchecked(const KernelSpec& spec, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& xp);

inline Eigen::MatrixXd gram_unchecked(const KernelSpec& spec,
                                      const Eigen::Ref<const Eigen::MatrixXd>& a,
                                      const Eigen::Ref<const Eigen::MatrixXd>& b,
                                      bool symmetric);

}  // namespace detail

inline KernelSpec KernelSpec::Gaussian(double bandwidth) {
  if (!(std::isfinite(bandwidth) && bandwidth > 0.0)) {
    throw InputError("Gaussian bandwidth must be finite and positive");
  }
  KernelSpec spec;
  spec.family_ = Family::kGaussian;
  spec.bandwidth_ = bandwidth;
  return spec;
}

inline KernelSpec KernelSpec::CompositeProduct(std::vector<KernelPart> parts) {
  if (parts.empty()) throw InputError("composite kernel needs at least one part");
  Index total = 0;
  for (const auto& part : parts) {
    if (part.columns.empty()) throw InputError("composite kernel part has no columns");
    detail::check_dim(part.kernel, static_cast<Index>(part.columns.size()));
    total += static_cast<Index>(part.columns.size());
  }
  std::vector<char> seen(static_cast<std::size_t>(total), 0);
  for (const auto& part : parts) {
    for (Index c : part.columns) {
      if (c < 0 || c >= total) {
        throw InputError("composite kernel columns must cover 0.." + std::to_string(total - 1));
      }
      if (seen[static_cast<std::size_t>(c)]) {
        throw InputError("composite kernel parts overlap on column " + std::to_string(c));
      }
      seen[static_cast<std::size_t>(c)] = 1;
    }
  }
  KernelSpec spec;
  spec.family_ = Family::kCompositeProduct;
  spec.parts_ = std::move(parts);
  return spec;
}

inline std::optional<Index> KernelSpec::input_dim() const {
  if (family_ == Family::kGaussian) return std::nullopt;
  Index total = 0;
  for (const auto& part : parts_) total += static_cast<Index>(part.columns.size());
  return total;
}

inline std::vector<double> KernelSpec::bandwidths() const {
  if (family_ == Family::kGaussian) return {bandwidth_};
  std::vector<double> out;
  for (const auto& part : parts_) {
    const auto inner = part.kernel.bandwidths();
    out.insert(out.end(), inner.begin(), inner.end());
  }
  return out;
}

inline std::string KernelSpec::describe() const {
  if (family_ == Family::kGaussian) return "gaussian(" + std::to_string(bandwidth_) + ")";
  std::string out = "product[";
  for (std::size_t p = 0; p < parts_.size(); ++p) {
    if (p) out += " * ";
    out += parts_[p].kernel.describe() + "@" + std::to_string(parts_[p].columns.size()) + "cols";
  }
  return out + "]";
}

namespace detail {

inline double eval_unchecked(const KernelSpec& spec, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& xp) {
  if (spec.family() == KernelSpec::Family::kGaussian) {
    const double s = spec.bandwidth();
    return std::exp(-(x - xp).squaredNorm() / (2.0 * s * s));
  }
  double value = 1.0;
  for (const auto& part : spec.parts()) {
    Eigen::VectorXd u(static_cast<Index>(part.columns.size()));
    Eigen::VectorXd v(u.size());
    for (Index c = 0; c < u.size(); ++c) {
      u(c) = x(part.columns[c]);
      v(c) = xp(part.columns[c]);
    }
    value *= eval_unchecked(part.kernel, u, v);
  }
  return value;
}

inline Eigen::MatrixXd gram_unchecked(const KernelSpec& spec,
                                      const Eigen::Ref<const Eigen::MatrixXd>& a,
                                      const Eigen::Ref<const Eigen::MatrixXd>& b,
                                      bool symmetric) {
  if (spec.family() == KernelSpec::Family::kGaussian) {
    const double s = spec.bandwidth();
    return (-squared_distances(a, b, symmetric) / (2.0 * s * s)).array().exp().matrix();
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Ones(a.rows(), b.rows());
  for (const auto& part : spec.parts()) {
    const Eigen::MatrixXd pa = take_columns(a, part.columns);
    const Eigen::MatrixXd pb = symmetric ? pa : take_columns(b, part.columns);
    out.array() *= gram_unchecked(part.kernel, pa, pb, symmetric).array();
  }
  return out;
}

}  // namespace detail

// Kernel value k(x, x'), in (0, 1].
inline double eval_kernel(const KernelSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                          const Eigen::Ref<const Eigen::VectorXd>& xp) {
  if (x.size() != xp.size()) throw InputError("kernel arguments differ in dimension");
  detail::check_dim(spec, x.size());
  detail::require_finite(x, "kernel argument");
  detail::require_finite(xp, "kernel argument");
  return detail::eval_unchecked(spec, x, xp);
}

// Cross Gram matrix with entry (i, j) = k(rows_a[i], rows_b[j]).
inline Eigen::MatrixXd gram_matrix(const KernelSpec& spec,
                                   const Eigen::Ref<const Eigen::MatrixXd>& rows_a,
                                   const Eigen::Ref<const Eigen::MatrixXd>& rows_b) {
  if (rows_a.cols() != rows_b.cols()) throw InputError("gram_matrix: column counts differ");
  detail::check_dim(spec, rows_a.cols());
  detail::require_finite(rows_a, "gram_matrix rows");
  detail::require_finite(rows_b, "gram_matrix rows");
  const bool same = rows_a.data() == rows_b.data() && rows_a.rows() == rows_b.rows() &&
                    rows_a.outerStride() == rows_b.outerStride();
  return detail::gram_unchecked(spec, rows_a, rows_b, same);
}

// Symmetric Gram matrix of a single row set; exactly symmetric, unit diagonal.
inline Eigen::MatrixXd gram_matrix(const KernelSpec& spec,
                                   const Eigen::Ref<const Eigen::MatrixXd>& rows) {
  detail::check_dim(spec, rows.cols());
  detail::require_finite(rows, "gram_matrix rows");
  return detail::gram_unchecked(spec, rows, rows, true);
}

// Median of the pairwise Euclidean distances between rows (midpoint of the
// two central values for an even count). Falls back to the smallest positive
// distance when the median is zero, and to 1 when all rows coincide.
inline double median_heuristic(const Eigen::Ref<const Eigen::MatrixXd>& rows) {
  const Index n = rows.rows();
  if (n < 2) throw InputError("median_heuristic needs at least 2 rows");
  detail::require_finite(rows, "median_heuristic rows");
  const Eigen::MatrixXd t = rows.transpose();
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2);
  for (Index j = 1; j < n; ++j) {
    for (Index i = 0; i < j; ++i) dist.push_back((t.col(i) - t.col(j)).norm());
  }
  const std::size_t m = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(m), dist.end());
  double median = dist[m];
  if (dist.size() % 2 == 0) {
    const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(m));
    median = 0.5 * (lower + median);
  }
  if (median > 0.0) return median;
  double smallest = 0.0;
  for (double d : dist) {
    if (d > 0.0 && (smallest == 0.0 || d < smallest)) smallest = d;
  }
  return smallest > 0.0 ? smallest : 1.0;
}

inline KernelSpec gaussian_median_kernel(const Eigen::Ref<const Eigen::MatrixXd>& rows) {
  return KernelSpec::Gaussian(median_heuristic(rows));
}

}  // namespace kvte
