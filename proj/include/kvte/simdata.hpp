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

// Synthetic confounded data with known effect variance.
//
//   X ~ N(0, S),  S tridiagonal: 1 on the diagonal, rho next to it
//   A ~ Bernoulli(Phi(beta^T X)),  beta_i = 1 / (i + 1)^2  (i = 1..d)
//   Y(0) = beta^T X + e0,  Y(1) = beta^T X + X_1 + e1,  Y = Y(A)
//
// e0 and e1 are N(0, noise_sd^2), independent by default. The target value
// is the identified quantity
//   VTE = Var(X_1) + 2 noise_sd^2,    CVTE(X_2 = c) = Var(X_1 | X_2) + 2 noise_sd^2,
// which equals Var(Y(1) - Y(0)) when the noises are independent.
//
// Streams come from std::mt19937_64 seeded with the configured seed; samples
// are reproducible within one build, not across standard libraries.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "kvte/dataset.hpp"
#include "kvte/error.hpp"

namespace kvte {

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

enum class NoiseCoupling { kIndependent, kShared };

struct SynthConfig {
  Index n = 500;
  Index d = 100;
  double rho = 0.5;
  double noise_sd = 1.0;
  std::uint64_t seed = 0;
  NoiseCoupling coupling = NoiseCoupling::kIndependent;
  // Coefficient of X_1 in Y(1); 0 removes the covariate-driven effect.
  double effect_scale = 1.0;

  // Cholesky factor of the covariate covariance; InputError when the
  // configuration is invalid or the covariance is not positive definite.
  Eigen::MatrixXd covariance_factor() const {
    if (n < 1 || d < 1) throw InputError("synth: n and d must be positive");
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) {
      throw InputError("synth: noise_sd must be finite and non-negative");
    }
    if (!std::isfinite(rho) || !std::isfinite(effect_scale)) {
      throw InputError("synth: rho and effect_scale must be finite");
    }
    Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(d, d);
    for (Index i = 0; i + 1 < d; ++i) cov(i, i + 1) = cov(i + 1, i) = rho;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw InputError("synth: covariance with rho=" + std::to_string(rho) + ", d=" +
                       std::to_string(d) + " is not positive definite");
    }
    return llt.matrixL();
  }

  Eigen::VectorXd beta() const {
    Eigen::VectorXd b(d);
    for (Index i = 0; i < d; ++i) b(i) = 1.0 / std::pow(static_cast<double>(i + 2), 2.0);
    return b;
  }
};

struct PotentialOutcomes {
  Eigen::VectorXd y0;
  Eigen::VectorXd y1;
};

struct SyntheticSample {
  Dataset data;
  PotentialOutcomes potential;
};

inline std::vector<std::string> covariate_names(Index d) {
  std::vector<std::string> names;
  for (Index i = 1; i <= d; ++i) names.push_back("x" + std::to_string(i));
  return names;
}

inline SyntheticSample gen_synthetic(const SynthConfig& cfg) {
  const Eigen::MatrixXd factor = cfg.covariance_factor();
  const Eigen::VectorXd beta = cfg.beta();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  SyntheticSample out;
  Dataset& data = out.data;
  data.x.resize(cfg.n, cfg.d);
  data.a.resize(cfg.n);
  data.y.resize(cfg.n);
  out.potential.y0.resize(cfg.n);
  out.potential.y1.resize(cfg.n);
  Eigen::VectorXd z(cfg.d);
  for (Index i = 0; i < cfg.n; ++i) {
    for (Index j = 0; j < cfg.d; ++j) z(j) = normal(rng);
    const Eigen::VectorXd x = factor * z;
    data.x.row(i) = x.transpose();
    const double index = beta.dot(x);
    const double u = uniform(rng);
    const double e0 = cfg.noise_sd * normal(rng);
    const double e1_draw = cfg.noise_sd * normal(rng);
    const double e1 = cfg.coupling == NoiseCoupling::kShared ? e0 : e1_draw;
    const int a = u < standard_normal_cdf(index) ? 1 : 0;
    out.potential.y0(i) = index + e0;
    out.potential.y1(i) = index + cfg.effect_scale * x(0) + e1;
    data.a(i) = a;
    data.y(i) = a == 1 ? out.potential.y1(i) : out.potential.y0(i);
  }
  data.x_names = covariate_names(cfg.d);
  return out;
}

enum class OracleMethod { kClosedForm, kMonteCarlo };

struct OracleValue {
  double value = 0.0;
  OracleMethod method = OracleMethod::kClosedForm;
  std::optional<Index> mc_samples;
  std::optional<double> mc_stderr;
};

inline OracleValue true_vte(const SynthConfig& cfg) {
  cfg.covariance_factor();
  const double s2 = cfg.noise_sd * cfg.noise_sd;
  return {cfg.effect_scale * cfg.effect_scale + 2.0 * s2, OracleMethod::kClosedForm, {}, {}};
}

// Conditioning on covariate `column` (0-based; 1 is X_2) at value c. For
// jointly Gaussian X the value does not depend on c:
// Var(X_1 | X_j) = 1 - S_1j^2, which is 1 - rho^2 for X_2, 0 for X_1 itself and
// 1 for every other column.
inline OracleValue true_cvte(const SynthConfig& cfg, double c, Index column = 1) {
  cfg.covariance_factor();
  if (column < 0 || column >= cfg.d) throw InputError("true_cvte: conditioning column out of range");
  if (!std::isfinite(c)) throw InputError("true_cvte: condition value must be finite");
  const double cov = column == 0 ? 1.0 : (column == 1 ? cfg.rho : 0.0);
  const double s2 = cfg.noise_sd * cfg.noise_sd;
  const double eff2 = cfg.effect_scale * cfg.effect_scale;
  return {eff2 * (1.0 - cov * cov) + 2.0 * s2, OracleMethod::kClosedForm, {}, {}};
}

namespace detail {

// Variance of the sample and the standard error of that variance estimate.
struct VarianceAccumulator {
  double mean = 0.0;
  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;
  Index count = 0;

  void add(double x) {
    const Index n1 = count;
    ++count;
    const double n = static_cast<double>(count);
    const double delta = x - mean;
    const double delta_n = delta / n;
    const double delta_n2 = delta_n * delta_n;
    const double term1 = delta * delta_n * static_cast<double>(n1);
    mean += delta_n;
    m4 += term1 * delta_n2 * (n * n - 3 * n + 3) + 6 * delta_n2 * m2 - 4 * delta_n * m3;
    m3 += term1 * delta_n * (n - 2) - 3 * delta_n * m2;
    m2 += term1;
  }

  OracleValue oracle() const {
    const double n = static_cast<double>(count);
    const double var = m2 / n;
    const double kurt = m4 / n;
    return {var, OracleMethod::kMonteCarlo, count, std::sqrt(std::max(0.0, kurt - var * var) / n)};
  }
};

}  // namespace detail

// Var(Y(1) - Y(0)) by simulation with independent noises.
inline OracleValue true_vte_monte_carlo(const SynthConfig& cfg, Index samples = 1000000,
                                        std::uint64_t seed = 12345) {
  cfg.covariance_factor();
  if (samples < 2) throw InputError("monte carlo needs at least 2 samples");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  detail::VarianceAccumulator acc;
  for (Index s = 0; s < samples; ++s) {
    const double x1 = normal(rng);  // Var(X_1) = 1
    const double e0 = cfg.noise_sd * normal(rng);
    const double e1 = cfg.noise_sd * normal(rng);
    acc.add(cfg.effect_scale * x1 + e1 - e0);
  }
  return acc.oracle();
}

// Var(Y(1) - Y(0) | |X_2 - c| <= halfwidth) by simulation. X_2 is drawn
// exactly from its law on the band (uniform proposal, density-ratio accept),
// then X_1 | X_2 ~ N(rho X_2, 1 - rho^2).
inline OracleValue true_cvte_monte_carlo(const SynthConfig& cfg, double c,
                                         Index samples = 1000000, double halfwidth = 0.01,
                                         std::uint64_t seed = 12345) {
  cfg.covariance_factor();
  if (cfg.d < 2) throw InputError("true_cvte_monte_carlo: needs d >= 2");
  if (samples < 2 || !(halfwidth > 0.0)) throw InputError("monte carlo: invalid settings");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> band(c - halfwidth, c + halfwidth);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double peak = std::abs(c) <= halfwidth ? 0.0 : std::min(std::abs(c - halfwidth),
                                                                std::abs(c + halfwidth));
  const double log_max = -0.5 * peak * peak;
  const double cond_sd = std::sqrt(1.0 - cfg.rho * cfg.rho);
  detail::VarianceAccumulator acc;
  while (acc.count < samples) {
    const double x2 = band(rng);
    if (std::log(uniform(rng)) > -0.5 * x2 * x2 - log_max) continue;
    const double x1 = cfg.rho * x2 + cond_sd * normal(rng);
    const double e0 = cfg.noise_sd * normal(rng);
    const double e1 = cfg.noise_sd * normal(rng);
    acc.add(cfg.effect_scale * x1 + e1 - e0);
  }
  return acc.oracle();
}

// Two processes with identical observational law but different effect
// variance: X ~ N(0, 1), A ~ Bernoulli(1/2), Y(0) ~ N(0, 1), and either
// Y(1) = Y(0) (effect variance 0) or Y(1) = -Y(0) (effect variance 4).
struct NonidentifiablePair {
  Dataset same_effect;
  Dataset opposite_effect;
  PotentialOutcomes same_potential;
  PotentialOutcomes opposite_potential;
  double oracle_vte_same = 0.0;
  double oracle_vte_opposite = 4.0;
};

inline NonidentifiablePair gen_nonidentifiable_pair(Index n, std::uint64_t seed) {
  if (n < 2) throw InputError("gen_nonidentifiable_pair: n must be at least 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  Dataset base;
  base.x.resize(n, 1);
  base.a.resize(n);
  base.y.resize(n);
  base.x_names = {"x1"};
  Eigen::VectorXd y0(n);
  for (Index i = 0; i < n; ++i) {
    base.x(i, 0) = normal(rng);
    base.a(i) = coin(rng) ? 1 : 0;
    y0(i) = normal(rng);
  }
  NonidentifiablePair pair;
  pair.same_effect = base;
  pair.opposite_effect = base;
  pair.same_potential = {y0, y0};
  pair.opposite_potential = {y0, -y0};
  for (Index i = 0; i < n; ++i) {
    pair.same_effect.y(i) = y0(i);
    pair.opposite_effect.y(i) = base.a(i) == 1 ? -y0(i) : y0(i);
  }
  return pair;
}

}  // namespace kvte
