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

#include <cmath>

#include <gtest/gtest.h>

#include "kvte/kvte.hpp"

namespace kvte {
namespace {

TEST(Synthetic, SameSeedSameData) {
  SynthConfig cfg;
  cfg.n = 50;
  cfg.seed = 9;
  const auto a = gen_synthetic(cfg);
  const auto b = gen_synthetic(cfg);
  EXPECT_TRUE(a.data == b.data);
  EXPECT_EQ(a.potential.y0, b.potential.y0);
  EXPECT_EQ(a.potential.y1, b.potential.y1);
  cfg.seed = 10;
  EXPECT_FALSE(gen_synthetic(cfg).data == a.data);
}

TEST(Synthetic, ShapesNamesAndObservedOutcomes) {
  SynthConfig cfg;
  cfg.n = 200;
  const auto s = gen_synthetic(cfg);
  EXPECT_EQ(s.data.x.rows(), 200);
  EXPECT_EQ(s.data.x.cols(), 100);
  EXPECT_EQ(s.data.x_names.front(), "x1");
  EXPECT_EQ(s.data.x_names.back(), "x100");
  for (Index i = 0; i < cfg.n; ++i) {
    const double expected = s.data.a(i) == 1 ? s.potential.y1(i) : s.potential.y0(i);
    EXPECT_EQ(s.data.y(i), expected);
  }
  EXPECT_NO_THROW(s.data.validate());
}

TEST(Synthetic, BetaCoefficients) {
  const Eigen::VectorXd beta = SynthConfig{}.beta();
  EXPECT_EQ(beta(0), 0.25);
  EXPECT_DOUBLE_EQ(beta(1), 1.0 / 9.0);
  EXPECT_DOUBLE_EQ(beta(99), 1.0 / (101.0 * 101.0));
}

TEST(Synthetic, PotentialOutcomeStructure) {
  SynthConfig cfg;
  cfg.n = 300;
  cfg.noise_sd = 0.0;
  const auto s = gen_synthetic(cfg);
  const Eigen::VectorXd diff = s.potential.y1 - s.potential.y0;
  EXPECT_LE((diff - s.data.x.col(0)).cwiseAbs().maxCoeff(), 1e-12);
  const Eigen::VectorXd index = s.data.x * cfg.beta();
  EXPECT_LE((s.potential.y0 - index).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Synthetic, LargeSampleMoments) {
  SynthConfig cfg;
  cfg.n = 100000;
  cfg.d = 10;
  const auto s = gen_synthetic(cfg);
  const Eigen::MatrixXd centered = s.data.x.rowwise() - s.data.x.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(cfg.n);
  for (Index j = 0; j < cfg.d; ++j) EXPECT_NEAR(cov(j, j), 1.0, 0.02);
  for (Index j = 0; j + 1 < cfg.d; ++j) EXPECT_NEAR(cov(j, j + 1), 0.5, 0.02);
  EXPECT_NEAR(cov(0, 2), 0.0, 0.02);
  EXPECT_NEAR(s.data.a.cast<double>().mean(), 0.5, 0.02);
  // Y(0) residual variance equals the noise variance.
  const Eigen::VectorXd resid = s.potential.y0 - s.data.x * cfg.beta();
  EXPECT_NEAR(population_variance(resid), 1.0, 0.02);
}

TEST(Synthetic, ConfoundedAssignment) {
  SynthConfig cfg;
  cfg.n = 20000;
  cfg.d = 5;
  const auto s = gen_synthetic(cfg);
  const Eigen::VectorXd index = s.data.x * cfg.beta();
  double treated = 0.0;
  double control = 0.0;
  for (Index i = 0; i < cfg.n; ++i) (s.data.a(i) == 1 ? treated : control) += index(i);
  const double n1 = s.data.a.cast<double>().sum();
  EXPECT_GT(treated / n1, control / (static_cast<double>(cfg.n) - n1));
}

TEST(Synthetic, RejectsInvalidConfigurations) {
  SynthConfig cfg;
  cfg.rho = 0.6;
  EXPECT_THROW(gen_synthetic(cfg), InputError);
  cfg.rho = 0.5;
  cfg.n = 0;
  EXPECT_THROW(gen_synthetic(cfg), InputError);
  cfg.n = 10;
  cfg.noise_sd = -1.0;
  EXPECT_THROW(gen_synthetic(cfg), InputError);
}

TEST(Oracles, ClosedFormValues) {
  SynthConfig cfg;
  EXPECT_DOUBLE_EQ(true_vte(cfg).value, 3.0);
  EXPECT_DOUBLE_EQ(true_cvte(cfg, 0.0).value, 2.75);
  EXPECT_DOUBLE_EQ(true_cvte(cfg, -1.3).value, 2.75);
  EXPECT_DOUBLE_EQ(true_cvte(cfg, 0.0, 0).value, 2.0);
  EXPECT_DOUBLE_EQ(true_cvte(cfg, 0.0, 5).value, 3.0);
  cfg.noise_sd = 0.0;
  EXPECT_DOUBLE_EQ(true_vte(cfg).value, 1.0);
  EXPECT_DOUBLE_EQ(true_cvte(cfg, 0.0).value, 0.75);
  cfg.effect_scale = 0.0;
  EXPECT_EQ(true_vte(cfg).value, 0.0);
  EXPECT_THROW(true_cvte(cfg, 0.0, 100), InputError);
  cfg.rho = 0.6;
  EXPECT_THROW(true_vte(cfg), InputError);
}

TEST(Oracles, MonteCarloAgreesWithClosedForm) {
  const SynthConfig cfg;
  const OracleValue vte = true_vte_monte_carlo(cfg);
  EXPECT_EQ(vte.method, OracleMethod::kMonteCarlo);
  ASSERT_TRUE(vte.mc_stderr.has_value());
  EXPECT_LE(*vte.mc_stderr, 0.01);
  EXPECT_LE(std::abs(vte.value - 3.0), 3.0 * *vte.mc_stderr);

  for (double c : {0.0, 1.0}) {
    const OracleValue cvte = true_cvte_monte_carlo(cfg, c);
    ASSERT_TRUE(cvte.mc_stderr.has_value());
    EXPECT_LE(*cvte.mc_stderr, 0.01);
    EXPECT_LE(std::abs(cvte.value - 2.75), 3.0 * *cvte.mc_stderr) << c;
  }
}

TEST(Oracles, NoiseCouplingChangesEffectVariance) {
  SynthConfig cfg;
  cfg.n = 100000;
  cfg.d = 3;
  const auto independent = gen_synthetic(cfg);
  cfg.coupling = NoiseCoupling::kShared;
  const auto shared = gen_synthetic(cfg);
  const auto effect_var = [](const SyntheticSample& s) {
    return population_variance(s.potential.y1 - s.potential.y0);
  };
  EXPECT_NEAR(effect_var(independent), 3.0, 0.06);
  EXPECT_NEAR(effect_var(shared), 1.0, 0.03);

  // Noise covariance between arms: zero when independent, noise variance when shared.
  const auto noise_cov = [&](const SyntheticSample& s) {
    const Eigen::VectorXd index = s.data.x * cfg.beta();
    const Eigen::VectorXd e0 = s.potential.y0 - index;
    const Eigen::VectorXd e1 = s.potential.y1 - index - s.data.x.col(0);
    return ((e0.array() - e0.mean()) * (e1.array() - e1.mean())).mean();
  };
  EXPECT_NEAR(noise_cov(independent), 0.0, 0.02);
  EXPECT_NEAR(noise_cov(shared), 1.0, 0.02);
}

TEST(StandardNormalCdf, KnownValues) {
  EXPECT_DOUBLE_EQ(standard_normal_cdf(0.0), 0.5);
  EXPECT_NEAR(standard_normal_cdf(1.959963984540054), 0.975, 1e-14);
  EXPECT_NEAR(standard_normal_cdf(-1.0), 0.15865525393145707, 1e-15);
  EXPECT_NEAR(standard_normal_cdf(-8.0), 6.22096057427178e-16, 1e-28);
}

TEST(NonidentifiablePair, SharesObservationalLaw) {
  const auto pair = gen_nonidentifiable_pair(100000, 1);
  EXPECT_EQ(pair.same_effect.x, pair.opposite_effect.x);
  EXPECT_EQ(pair.same_effect.a, pair.opposite_effect.a);
  for (int arm : {0, 1}) {
    const auto rows = pair.same_effect.arm_rows(arm);
    const Eigen::VectorXd ys = take_rows(pair.same_effect.y, rows);
    const Eigen::VectorXd yo = take_rows(pair.opposite_effect.y, rows);
    EXPECT_NEAR(ys.mean(), yo.mean(), 0.05);
    EXPECT_NEAR(population_variance(ys), population_variance(yo), 0.05);
    EXPECT_NEAR(ys.mean(), 0.0, 0.05);
    EXPECT_NEAR(population_variance(yo), 1.0, 0.05);
  }
  EXPECT_NEAR(population_variance(pair.same_potential.y1 - pair.same_potential.y0), 0.0, 1e-15);
  EXPECT_NEAR(population_variance(pair.opposite_potential.y1 - pair.opposite_potential.y0), 4.0,
              0.1);
  EXPECT_EQ(pair.oracle_vte_same, 0.0);
  EXPECT_EQ(pair.oracle_vte_opposite, 4.0);
  EXPECT_THROW(gen_nonidentifiable_pair(1, 0), InputError);
}

}  // namespace
}  // namespace kvte
