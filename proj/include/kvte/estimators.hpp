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

// Plug-in estimators for the variance of the treatment effect.
//
// With f_a(x) = E[Y | A=a, X=x] and g_a(x) = E[Y^2 | A=a, X=x], and potential
// outcomes uncorrelated given X,
//
//   VTE = E[g_1 + g_0 - 2 f_1 f_0] - E[f_1 - f_0]^2.
//
// Each nuisance is a kernel ridge regression fit on one treatment arm. The
// marginal estimator averages over all n rows with weight 1/n; the
// conditional estimator replaces those weights with conditional mean
// embedding weights w_i(v). The estimate splits exactly into
//
//   cate_variance = Var_w[f_1 - f_0]                  (explained by X)
//   exogenous     = E_w[(g_1 - f_1^2) + (g_0 - f_0^2)] (residual spread)
//
// Neither term is clipped, so small samples can produce negative values.
#pragma once

#include <algorithm>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "kvte/cme.hpp"
#include "kvte/dataset.hpp"
#include "kvte/error.hpp"
#include "kvte/kernel.hpp"
#include "kvte/krr.hpp"

namespace kvte {

struct LambdaPolicy {
  std::vector<double> grid = default_lambda_grid();
  // When set, every nuisance model uses this value and no LOO search is run.
  std::optional<double> fixed;
};

struct NuisanceModels {
  KrrModel f0;
  KrrModel f1;
  KrrModel g0;
  KrrModel g1;
  KernelSpec kernel;
  std::vector<Index> control_rows;
  std::vector<Index> treated_rows;
};

struct NuisancePredictions {
  Eigen::VectorXd f0;
  Eigen::VectorXd f1;
  Eigen::VectorXd g0;
  Eigen::VectorXd g1;
};

struct VteDecomposition {
  double cate_variance = 0.0;
  double exogenous = 0.0;
};

struct NuisanceLambdas {
  double f0 = 0.0;
  double g0 = 0.0;
  double f1 = 0.0;
  double g1 = 0.0;
};

struct EstimateReport {
  double estimate = 0.0;
  VteDecomposition decomposition;
  NuisanceLambdas lambdas;
  std::optional<double> lambda_v;
  std::vector<double> bandwidths;
  Index n = 0;
  Index n0 = 0;
  Index n1 = 0;
  // Set when the estimate is below zero; the value is still reported as is.
  bool negative_estimate = false;
};

namespace detail {

struct ArmFit {
  KrrModel f;
  KrrModel g;
};

inline ArmFit fit_arm(const Dataset& data, const std::vector<Index>& rows,
                      const KernelSpec& kernel, const LambdaPolicy& policy) {
  Eigen::MatrixXd inputs = take_rows(data.x, rows);
  const Eigen::VectorXd y = take_rows(data.y, rows);
  const Eigen::VectorXd y2 = y.cwiseAbs2();
  const Eigen::MatrixXd gram = gram_matrix(kernel, inputs);
  double lambda_f = 0.0;
  double lambda_g = 0.0;
  if (policy.fixed) {
    lambda_f = lambda_g = *policy.fixed;
  } else {
    const LooPath path(gram);
    lambda_f = path.select(y, policy.grid).lambda;
    lambda_g = path.select(y2, policy.grid).lambda;
  }
  KrrModel f = fit_krr_with_gram(inputs, gram, y, lambda_f, kernel);
  KrrModel g = fit_krr_with_gram(std::move(inputs), gram, y2, lambda_g, kernel);
  return {std::move(f), std::move(g)};
}

inline void require_finite_predictions(const NuisancePredictions& p) {
  if (!(p.f0.allFinite() && p.f1.allFinite() && p.g0.allFinite() && p.g1.allFinite())) {
    throw NumericError("nuisance predictions contain non-finite values");
  }
}

}  // namespace detail

// Fits f_a on y and g_a on y^2 within each arm. With the default policy each
// of the four models gets its own LOO-selected lambda.
inline NuisanceModels fit_nuisances(const Dataset& data, const KernelSpec& kernel,
                                    const LambdaPolicy& policy = {}) {
  data.validate();
  data.require_arms(2);
  auto control_rows = data.arm_rows(0);
  auto treated_rows = data.arm_rows(1);
  auto control = detail::fit_arm(data, control_rows, kernel, policy);
  auto treated = detail::fit_arm(data, treated_rows, kernel, policy);
  return NuisanceModels{std::move(control.f), std::move(treated.f), std::move(control.g),
                        std::move(treated.g), kernel, std::move(control_rows),
                        std::move(treated_rows)};
}

// Gaussian kernel on all covariates with the median-heuristic bandwidth.
inline KernelSpec default_kernel(const Dataset& data) { return gaussian_median_kernel(data.x); }

// All four nuisances evaluated at `rows`; one cross Gram matrix per arm.
inline NuisancePredictions predict_nuisances(const NuisanceModels& models,
                                             const Eigen::MatrixXd& rows) {
  NuisancePredictions out;
  const Eigen::MatrixXd k0 = gram_matrix(models.kernel, rows, models.f0.train_inputs());
  out.f0 = models.f0.predict_from_gram(k0);
  out.g0 = models.g0.predict_from_gram(k0);
  const Eigen::MatrixXd k1 = gram_matrix(models.kernel, rows, models.f1.train_inputs());
  out.f1 = models.f1.predict_from_gram(k1);
  out.g1 = models.g1.predict_from_gram(k1);
  return out;
}

inline Eigen::VectorXd uniform_weights(Index n) {
  return Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
}

// sum_i w_i (g1 + g0 - 2 f1 f0)_i - (sum_i w_i (f1 - f0)_i)^2
inline double weighted_vte(const NuisancePredictions& p, const Eigen::VectorXd& w) {
  const Index n = w.size();
  if (p.f0.size() != n || p.f1.size() != n || p.g0.size() != n || p.g1.size() != n) {
    throw InputError("weighted_vte: prediction and weight lengths differ");
  }
  const Eigen::ArrayXd second = p.g1.array() + p.g0.array() - 2.0 * p.f1.array() * p.f0.array();
  const Eigen::VectorXd tau = p.f1 - p.f0;
  const double mean_tau = w.dot(tau);
  return w.dot(second.matrix()) - mean_tau * mean_tau;
}

inline VteDecomposition weighted_decomposition(const NuisancePredictions& p,
                                               const Eigen::VectorXd& w) {
  const Eigen::VectorXd tau = p.f1 - p.f0;
  const double mean_tau = w.dot(tau);
  const Eigen::ArrayXd residual =
      (p.g1.array() - p.f1.array().square()) + (p.g0.array() - p.f0.array().square());
  return {w.dot(tau.cwiseAbs2()) - mean_tau * mean_tau, w.dot(residual.matrix())};
}

namespace detail {

inline EstimateReport make_report(const Dataset& data, const NuisanceModels& models,
                                  const NuisancePredictions& p, const Eigen::VectorXd& w) {
  require_finite_predictions(p);
  EstimateReport report;
  report.estimate = weighted_vte(p, w);
  report.decomposition = weighted_decomposition(p, w);
  report.lambdas = {models.f0.lambda(), models.g0.lambda(), models.f1.lambda(),
                    models.g1.lambda()};
  report.bandwidths = models.kernel.bandwidths();
  report.n = data.n();
  report.n0 = static_cast<Index>(models.control_rows.size());
  report.n1 = static_cast<Index>(models.treated_rows.size());
  report.negative_estimate = report.estimate < 0.0;
  if (!std::isfinite(report.estimate)) throw NumericError("estimate is non-finite");
  return report;
}

}  // namespace detail

// Marginal VTE: equal weights 1/n over every row of `data`, both arms.
inline EstimateReport estimate_vte(const Dataset& data, const NuisanceModels& models) {
  const NuisancePredictions p = predict_nuisances(models, data.x);
  return detail::make_report(data, models, p, uniform_weights(data.n()));
}

// CVTE with caller-supplied embedding weights over the rows of `data`.
inline EstimateReport estimate_cvte(const Dataset& data, const NuisanceModels& models,
                                    const Eigen::VectorXd& weights) {
  if (weights.size() != data.n()) throw InputError("estimate_cvte: one weight per row required");
  if (!weights.allFinite()) throw NumericError("estimate_cvte: non-finite weights");
  const NuisancePredictions p = predict_nuisances(models, data.x);
  return detail::make_report(data, models, p, weights);
}

// CVTE for a conditioning variable V stored outside the covariates. The
// embedding must have been fit on data.v.
inline EstimateReport estimate_cvte(const Dataset& data, const NuisanceModels& models,
                                    const CmeModel& cme, const Eigen::VectorXd& v) {
  if (!data.v) throw InputError("estimate_cvte: dataset has no conditioning columns");
  if (cme.size() != data.n() || cme.train_v().cols() != data.v->cols()) {
    throw InputError("estimate_cvte: embedding was not fit on this dataset's v columns");
  }
  EstimateReport report = estimate_cvte(data, models, cme.weights(v));
  report.lambda_v = cme.lambda_v();
  const auto vb = cme.kernel_v().bandwidths();
  report.bandwidths.insert(report.bandwidths.end(), vb.begin(), vb.end());
  return report;
}

inline VteDecomposition vte_decomposition(const NuisanceModels& models, const Dataset& data) {
  const NuisancePredictions p = predict_nuisances(models, data.x);
  detail::require_finite_predictions(p);
  return weighted_decomposition(p, uniform_weights(data.n()));
}

// ---------------------------------------------------------------------------
// CVTE when V is a strict subset of the covariate columns. Nuisances use the
// product kernel k_rest(x_rest, x_rest') * k_V(v, v') and are evaluated with
// their V block clamped to the query value; the embedding regresses the
// remaining columns on V.

struct SubsetCvteOptions {
  LambdaPolicy lambda_policy;
  std::vector<double> lambda_v_grid = default_lambda_grid();
  std::optional<double> lambda_v;
  // Median heuristic on the respective columns when unset.
  std::optional<double> bandwidth_rest;
  std::optional<double> bandwidth_v;
};

struct SubsetCvteModel {
  std::vector<Index> v_columns;
  std::vector<Index> rest_columns;
  NuisanceModels nuisances;
  CmeModel cme;
};

inline SubsetCvteModel fit_cvte_subset(const Dataset& data, std::vector<Index> v_columns,
                                       const SubsetCvteOptions& options = {}) {
  data.validate();
  const Index d = data.dim();
  std::sort(v_columns.begin(), v_columns.end());
  if (v_columns.empty()) throw InputError("cvte subset: no conditioning columns given");
  if (std::adjacent_find(v_columns.begin(), v_columns.end()) != v_columns.end()) {
    throw InputError("cvte subset: duplicate conditioning column");
  }
  if (v_columns.front() < 0 || v_columns.back() >= d) {
    throw InputError("cvte subset: conditioning column out of range");
  }
  if (static_cast<Index>(v_columns.size()) == d) {
    throw InputError("cvte subset: conditioning columns must leave at least one covariate");
  }
  std::vector<Index> rest_columns;
  for (Index c = 0, k = 0; c < d; ++c) {
    if (k < static_cast<Index>(v_columns.size()) && v_columns[static_cast<std::size_t>(k)] == c) {
      ++k;
    } else {
      rest_columns.push_back(c);
    }
  }
  const Eigen::MatrixXd x_rest = detail::take_columns(data.x, rest_columns);
  const Eigen::MatrixXd x_v = detail::take_columns(data.x, v_columns);
  const KernelSpec kernel_rest =
      KernelSpec::Gaussian(options.bandwidth_rest.value_or(median_heuristic(x_rest)));
  const KernelSpec kernel_v =
      KernelSpec::Gaussian(options.bandwidth_v.value_or(median_heuristic(x_v)));
  const KernelSpec composite = KernelSpec::CompositeProduct(
      {KernelPart{rest_columns, kernel_rest}, KernelPart{v_columns, kernel_v}});

  NuisanceModels nuisances = fit_nuisances(data, composite, options.lambda_policy);
  const double lambda_v = options.lambda_v ? *options.lambda_v
                                           : select_lambda_v(x_v, x_rest, kernel_v, kernel_rest,
                                                             options.lambda_v_grid);
  CmeModel cme(x_v, lambda_v, kernel_v);
  return SubsetCvteModel{std::move(v_columns), std::move(rest_columns), std::move(nuisances),
                         std::move(cme)};
}

// Covariate rows with their V block overwritten by the query value.
inline Eigen::MatrixXd clamp_columns(const Eigen::MatrixXd& x, const std::vector<Index>& columns,
                                     const Eigen::VectorXd& value) {
  Eigen::MatrixXd out = x;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out.col(columns[c]).setConstant(value(static_cast<Index>(c)));
  }
  return out;
}

inline EstimateReport estimate_cvte_subset(const SubsetCvteModel& model, const Dataset& data,
                                           const Eigen::VectorXd& v) {
  if (v.size() != static_cast<Index>(model.v_columns.size())) {
    throw InputError("cvte subset: query has wrong dimension");
  }
  if (model.cme.size() != data.n()) throw InputError("cvte subset: model fit on other data");
  const Eigen::VectorXd w = model.cme.weights(v);
  const Eigen::MatrixXd clamped = clamp_columns(data.x, model.v_columns, v);
  const NuisancePredictions p = predict_nuisances(model.nuisances, clamped);
  EstimateReport report = detail::make_report(data, model.nuisances, p, w);
  report.lambda_v = model.cme.lambda_v();
  return report;
}

inline EstimateReport estimate_cvte_subset(const Dataset& data, std::vector<Index> v_columns,
                                           const Eigen::VectorXd& v,
                                           const SubsetCvteOptions& options = {}) {
  const SubsetCvteModel model = fit_cvte_subset(data, std::move(v_columns), options);
  return estimate_cvte_subset(model, data, v);
}

}  // namespace kvte
