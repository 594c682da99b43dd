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

// Comparison estimators for the variance of the treatment effect.
//   naive         Var(Y | A=1) + Var(Y | A=0), ignoring confounding and
//                 treating the potential outcomes as uncorrelated.
//   cate variance Var(tau(X)) from a kernel T-learner; misses the exogenous
//                 part of the effect variance.
//   matching      impute the missing potential outcome of every unit by the
//                 mean outcome of its k nearest opposite-arm units, then take
//                 the variance of the per-unit effects.
// All variances divide by n.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "kvte/dataset.hpp"
#include "kvte/error.hpp"
#include "kvte/estimators.hpp"
#include "kvte/kernel.hpp"

namespace kvte {

inline double naive_vte(const Dataset& data) {
  data.validate();
  data.require_arms(1);
  const auto treated = data.arm_rows(1);
  const auto control = data.arm_rows(0);
  return population_variance(take_rows(data.y, treated)) +
         population_variance(take_rows(data.y, control));
}

// Var_i[f1(x_i) - f0(x_i)] over the listed rows (all rows when empty).
inline double cate_variance_baseline(const Dataset& data, const NuisanceModels& models,
                                     std::span<const Index> rows = {}) {
  const Eigen::MatrixXd points = rows.empty() ? data.x : take_rows(data.x, rows);
  if (points.rows() == 0) throw InputError("cate_variance_baseline: no rows");
  const NuisancePredictions p = predict_nuisances(models, points);
  detail::require_finite_predictions(p);
  return weighted_decomposition(p, uniform_weights(points.rows())).cate_variance;
}

// Per-column mean and divide-by-n standard deviation; constant columns keep
// scale 1 so they contribute nothing after centering.
struct ColumnScaling {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static ColumnScaling fit(const Eigen::MatrixXd& x) {
    ColumnScaling s;
    s.mean = x.colwise().mean();
    s.scale = ((x.rowwise() - s.mean).array().square().colwise().mean()).sqrt().matrix();
    for (Index c = 0; c < s.scale.size(); ++c) {
      if (!(s.scale(c) > 0.0)) s.scale(c) = 1.0;
    }
    return s;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    return ((x.rowwise() - mean).array().rowwise() / scale.array()).matrix();
  }
};

// ---------------------------------------------------------------------------
// Propensity model: l2-regularized logistic regression on standardized
// covariates, fit by damped Newton steps. The objective is the mean log loss
// plus (ridge / 2) |beta|^2 with the intercept unpenalized.

struct PropensityOptions {
  double ridge = 1e-4;
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;
};

class ConvergenceError : public NumericError {
 public:
  ConvergenceError(const std::string& what, int iterations, double gradient_norm)
      : NumericError(what), iterations_(iterations), gradient_norm_(gradient_norm) {}
  int iterations() const { return iterations_; }
  double gradient_norm() const { return gradient_norm_; }

 private:
  int iterations_;
  double gradient_norm_;
};

class PropensityModel {
 public:
  PropensityModel(Eigen::VectorXd coefficients, ColumnScaling scaling, double ridge,
                  int iterations, double gradient_norm)
      : coefficients_(std::move(coefficients)),
        scaling_(std::move(scaling)),
        ridge_(ridge),
        iterations_(iterations),
        gradient_norm_(gradient_norm) {}

  // P(A = 1 | x) for each row, clamped into the open interval (0, 1).
  Eigen::VectorXd scores(const Eigen::MatrixXd& x) const {
    if (x.cols() != coefficients_.size() - 1) throw InputError("propensity: dimension mismatch");
    const Eigen::VectorXd eta =
        (scaling_.apply(x) * coefficients_.tail(coefficients_.size() - 1)).array() +
        coefficients_(0);
    return eta.unaryExpr([](double t) { return clamp_open(sigmoid(t)); });
  }

  double score(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return scores(Eigen::MatrixXd(x.transpose()))(0);
  }

  // Intercept first, then one coefficient per standardized covariate.
  const Eigen::VectorXd& coefficients() const { return coefficients_; }
  double ridge() const { return ridge_; }
  int iterations() const { return iterations_; }
  double gradient_norm() const { return gradient_norm_; }

  static double sigmoid(double t) {
    return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
  }

 private:
  static double clamp_open(double p) {
    constexpr double kEps = 1e-15;
    return std::clamp(p, kEps, 1.0 - kEps);
  }

  Eigen::VectorXd coefficients_;
  ColumnScaling scaling_;
  double ridge_;
  int iterations_;
  double gradient_norm_;
};

inline PropensityModel fit_propensity(const Dataset& data, const PropensityOptions& options = {}) {
  data.validate();
  data.require_arms(1);
  const Index n = data.n();
  const Index d = data.dim();
  ColumnScaling scaling = ColumnScaling::fit(data.x);
  Eigen::MatrixXd design(n, d + 1);
  design.col(0).setOnes();
  design.rightCols(d) = scaling.apply(data.x);
  const Eigen::VectorXd target = data.a.cast<double>();
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(d + 1, options.ridge);
  penalty(0) = 0.0;

  const auto objective = [&](const Eigen::VectorXd& w) {
    const Eigen::VectorXd eta = design * w;
    double loss = 0.0;
    for (Index i = 0; i < n; ++i) {
      // log(1 + e^eta) - a * eta, evaluated stably.
      const double t = eta(i);
      loss += (t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t))) - target(i) * t;
    }
    return loss / static_cast<double>(n) + 0.5 * w.cwiseProduct(penalty).dot(w);
  };

  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
  double current = objective(w);
  double grad_norm = 0.0;
  for (int iter = 0; iter <= options.max_iterations; ++iter) {
    const Eigen::VectorXd p = (design * w).unaryExpr(&PropensityModel::sigmoid);
    const Eigen::VectorXd grad =
        design.transpose() * (p - target) / static_cast<double>(n) + penalty.cwiseProduct(w);
    grad_norm = grad.norm();
    if (grad_norm <= options.gradient_tolerance) {
      return PropensityModel(std::move(w), std::move(scaling), options.ridge, iter, grad_norm);
    }
    if (iter == options.max_iterations) break;
    const Eigen::VectorXd curvature = p.cwiseProduct((1.0 - p.array()).matrix());
    Eigen::MatrixXd hessian = design.transpose() * curvature.asDiagonal() * design;
    hessian /= static_cast<double>(n);
    hessian.diagonal() += penalty;
    // A tiny intercept shift keeps the Hessian invertible when every score
    // saturates; it does not move the optimum.
    hessian(0, 0) += 1e-12;
    const Eigen::VectorXd step = hessian.ldlt().solve(grad);
    double t = 1.0;
    Eigen::VectorXd trial = w - step;
    double next = objective(trial);
    // Below this predicted decrease the objective cannot resolve the step, so
    // the full Newton step is taken.
    const double resolvable = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(current);
    const bool in_quadratic_region = 0.5 * grad.dot(step) <= resolvable;
    while (!in_quadratic_region && next > current && t > 1e-10) {
      t *= 0.5;
      trial = w - t * step;
      next = objective(trial);
    }
    w = std::move(trial);
    current = next;
  }
  throw ConvergenceError("fit_propensity: no convergence after " +
                             std::to_string(options.max_iterations) +
                             " iterations (gradient norm " + std::to_string(grad_norm) + ")",
                         options.max_iterations, grad_norm);
}

// ---------------------------------------------------------------------------
// k-nearest-neighbour matching.

enum class MatchMetric { kEuclideanStandardized, kPropensityScore };

struct MatchConfig {
  int k = 5;
  MatchMetric metric = MatchMetric::kEuclideanStandardized;
};

namespace detail {

// Positions of the k smallest distances; ties go to the
// lower candidate index.
inline std::vector<Index> k_smallest(const Eigen::Ref<const Eigen::VectorXd>& distances, int k) {
  std::vector<Index> order(static_cast<std::size_t>(distances.size()));
  std::iota(order.begin(), order.end(), Index{0});
  const auto less = [&](Index p, Index q) {
    return distances(p) < distances(q) || (distances(p) == distances(q) && p < q);
  };
  std::partial_sort(order.begin(), order.begin() + k, order.end(), less);
  order.resize(static_cast<std::size_t>(k));
  return order;
}

}  // namespace detail

// Per-unit effects y^(1) - y^(0): observed outcome for the unit's own arm,
// k-NN mean of the opposite arm for the other.
inline Eigen::VectorXd matched_effects(const Dataset& data, const MatchConfig& cfg,
                                       const PropensityModel* propensity = nullptr) {
  data.validate();
  const auto control = data.arm_rows(0);
  const auto treated = data.arm_rows(1);
  const Index smaller = static_cast<Index>(std::min(control.size(), treated.size()));
  if (cfg.k < 1 || cfg.k > smaller) {
    throw InputError("match: k must be in [1, " + std::to_string(smaller) + "]");
  }
  Eigen::MatrixXd coords;
  if (cfg.metric == MatchMetric::kPropensityScore) {
    if (propensity == nullptr) throw InputError("match: propensity metric needs a model");
    coords = propensity->scores(data.x);
  } else {
    coords = ColumnScaling::fit(data.x).apply(data.x);
  }
  // Squared distances order neighbours the same way as distances.
  const Eigen::MatrixXd dist = detail::squared_distances(take_rows(coords, treated),
                                                         take_rows(coords, control), false);
  Eigen::VectorXd effects(data.n());
  for (Index t = 0; t < dist.rows(); ++t) {
    double sum = 0.0;
    for (Index j : detail::k_smallest(dist.row(t).transpose(), cfg.k)) {
      sum += data.y(control[static_cast<std::size_t>(j)]);
    }
    const Index i = treated[static_cast<std::size_t>(t)];
    effects(i) = data.y(i) - sum / cfg.k;
  }
  for (Index c = 0; c < dist.cols(); ++c) {
    double sum = 0.0;
    for (Index j : detail::k_smallest(dist.col(c), cfg.k)) {
      sum += data.y(treated[static_cast<std::size_t>(j)]);
    }
    const Index i = control[static_cast<std::size_t>(c)];
    effects(i) = sum / cfg.k - data.y(i);
  }
  return effects;
}

inline double match_vte(const Dataset& data, const MatchConfig& cfg,
                        const PropensityModel* propensity = nullptr) {
  return population_variance(matched_effects(data, cfg, propensity));
}

}  // namespace kvte
