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
// Acceptance checks. Prints one PASS or FAIL line per criterion and exits
// non-zero when any criterion fails.
//
//   kvte_acceptance --group statistical|algebraic|all [--out DIR]
//
// The statistical group runs the repeated-simulation grids (criteria 1-8);
// the algebraic group runs the exact identities and the data-file checks
// (criteria 9-13).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "../unit/support.hpp"
#include "kvte/kvte.hpp"

#ifndef KVTE_DATA_DIR
#define KVTE_DATA_DIR "data"
#endif

namespace {

using kvte::Index;
using namespace kvte;

int failures = 0;

void verdict(int id, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), pattern, args...);
  return buf;
}

void note(const std::string& text) {
  std::printf("  %s\n", text.c_str());
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// Statistical group.

RunConfig grid_config() {
  RunConfig cfg;
  cfg.sizes = {500, 5000};
  cfg.reps = 20;
  cfg.seed = 0;
  cfg.d = 100;
  cfg.k = 5;
  return cfg;
}

BenchmarkResult run_grid(const RunConfig& cfg, const std::string& out_dir, const std::string& tag) {
  const auto start = std::chrono::steady_clock::now();
  BenchmarkResult result = run_benchmark(cfg);
  note(fmt("%s grid finished in %.0f s", tag.c_str(), seconds_since(start)));
  if (!out_dir.empty()) {
    emit_report(result, ReportFormat::kJson, out_dir + "/acceptance_" + tag + ".json");
    emit_report(result, ReportFormat::kCsv, out_dir + "/acceptance_" + tag + ".csv");
  }
  for (const auto& cell : result.cells) {
    note(fmt("%-5s %-12s n=%-5lld MAE %.3f (%.3f)  mean %.3f  sd-of-mean %.3f  included %d",
             tag.c_str(), method_name(cell.method).c_str(), static_cast<long long>(cell.n),
             cell.summary.mae, cell.summary.se, cell.summary.mean_estimate,
             cell.summary.se_estimate, cell.summary.included));
  }
  return result;
}

bool complete(const CellResult& cell) { return cell.summary.excluded == 0; }

void statistical(const std::string& out_dir) {
  const RunConfig vte_cfg = grid_config();
  const BenchmarkResult vte = run_grid(vte_cfg, out_dir, "vte");
  const auto& proposed = vte.cell(Method::kProposed, 5000);
  const auto& naive = vte.cell(Method::kNaive, 5000);
  const auto& euclid = vte.cell(Method::kMatchEuclid, 5000);
  const auto& psm = vte.cell(Method::kMatchPsm, 5000);
  const auto& cate = vte.cell(Method::kCateVar, 5000);

  verdict(1, complete(proposed) && proposed.summary.mae <= 0.5,
          fmt("VTE proposed n=5000: MAE %.3f (need <= 0.5), truth %.2f", proposed.summary.mae,
              vte.truth));
  verdict(2, complete(naive) && naive.summary.mae >= 3.2 && naive.summary.mae <= 4.5,
          fmt("VTE naive n=5000: MAE %.3f (need in [3.2, 4.5]), mean estimate %.3f",
              naive.summary.mae, naive.summary.mean_estimate));
  verdict(3,
          complete(euclid) && euclid.summary.mean_estimate > 3.0 &&
              euclid.summary.mae < naive.summary.mae,
          fmt("VTE Euclidean matching n=5000: mean estimate %.3f (need > 3.0), MAE %.3f "
              "(need < naive %.3f)",
              euclid.summary.mean_estimate, euclid.summary.mae, naive.summary.mae));
  verdict(4, complete(psm) && psm.summary.mae <= 0.8,
          fmt("VTE PSM n=5000: MAE %.3f (need <= 0.8)", psm.summary.mae));
  verdict(5, complete(cate) && cate.summary.mae >= 1.3 && cate.summary.mae <= 2.8,
          fmt("VTE CATE variance n=5000: MAE %.3f (need in [1.3, 2.8])", cate.summary.mae));

  RunConfig cvte_cfg = grid_config();
  cvte_cfg.estimand = Estimand::kCvte;
  cvte_cfg.condition = Condition{"x2", 0.0};
  cvte_cfg.subset_tolerance = 0.1;
  const BenchmarkResult cvte = run_grid(cvte_cfg, out_dir, "cvte");
  const auto& cp = cvte.cell(Method::kProposed, 5000);
  const auto& ce = cvte.cell(Method::kMatchEuclid, 5000);
  const auto& cs = cvte.cell(Method::kMatchPsm, 5000);
  verdict(6,
          complete(cp) && complete(ce) && complete(cs) && cp.summary.mae <= 0.5 &&
              ce.summary.se_estimate > cp.summary.se_estimate &&
              cs.summary.se_estimate > cp.summary.se_estimate,
          fmt("CVTE x2=0 proposed n=5000: MAE %.3f (need <= 0.5), truth %.2f; SE of estimates "
              "proposed %.3f < Euclidean %.3f and PSM %.3f",
              cp.summary.mae, cvte.truth, cp.summary.se_estimate, ce.summary.se_estimate,
              cs.summary.se_estimate));

  const auto& v_small = vte.cell(Method::kProposed, 500);
  const auto& c_small = cvte.cell(Method::kProposed, 500);
  verdict(7,
          complete(v_small) && complete(c_small) && proposed.summary.mae < v_small.summary.mae &&
              cp.summary.mae < c_small.summary.mae,
          fmt("proposed MAE falls with n: VTE %.3f -> %.3f, CVTE %.3f -> %.3f (n=500 -> 5000)",
              v_small.summary.mae, proposed.summary.mae, c_small.summary.mae, cp.summary.mae));

  const auto pair = gen_nonidentifiable_pair(5000, 0);
  double est[2];
  const Dataset* cases[2] = {&pair.same_effect, &pair.opposite_effect};
  for (int c = 0; c < 2; ++c) {
    const NuisanceModels models = fit_nuisances(*cases[c], default_kernel(*cases[c]));
    est[c] = estimate_vte(*cases[c], models).estimate;
  }
  const auto in_band = [](double v) { return v >= 1.8 && v <= 2.2; };
  verdict(8, in_band(est[0]) && in_band(est[1]),
          fmt("nonidentifiable pair n=5000: estimates %.3f (oracle %.0f) and %.3f (oracle %.0f), "
              "need both in [1.8, 2.2]",
              est[0], pair.oracle_vte_same, est[1], pair.oracle_vte_opposite));
}

// ---------------------------------------------------------------------------
// Algebraic group.

Dataset random_instance(int i) {
  return kvte::testing::small_synthetic(30 + 20 * (i % 5), 1 + i % 4,
                                        1000 + static_cast<std::uint64_t>(i));
}

void identity_check() {
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Dataset data = random_instance(i);
    const NuisanceModels models = fit_nuisances(data, default_kernel(data));
    const double total = estimate_vte(data, models).estimate;
    const VteDecomposition d = vte_decomposition(models, data);
    worst = std::max(worst, kvte::testing::relative_difference(total, d.cate_variance + d.exogenous));
  }
  verdict(9, worst <= 1e-10,
          fmt("estimate = cate_variance + exogenous on 100 fitted instances: worst relative "
              "difference %.2e (need <= 1e-10)",
              worst));
}

void loo_check() {
  const auto grid = default_lambda_grid();
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Index n = 10 + 2 * i;
    const Eigen::MatrixXd x = kvte::testing::random_matrix(n, 1 + i % 3, 2000 + i);
    const Eigen::VectorXd y = kvte::testing::random_vector(n, 3000 + i);
    const double sigma = median_heuristic(x);
    const double lambda = grid[static_cast<std::size_t>(i) % grid.size()];
    const double oracle =
        kvte::testing::refit_loo_residuals(x, y, lambda, sigma).squaredNorm() / static_cast<double>(n);
    const KernelSpec kernel = KernelSpec::Gaussian(sigma);
    const double closed = loo_error(x, y, lambda, kernel);
    const double path = LooPath(gram_matrix(kernel, x)).error(y, lambda);
    worst = std::max({worst, kvte::testing::relative_difference(closed, oracle),
                      kvte::testing::relative_difference(path, oracle)});
  }
  verdict(10, worst <= 1e-8,
          fmt("closed-form LOO vs explicit refits on 20 instances (n <= 48): worst relative "
              "difference %.2e (need <= 1e-8)",
              worst));
}

void uniform_weight_check() {
  int equal = 0;
  for (int i = 0; i < 10; ++i) {
    const Dataset data = random_instance(200 + i);
    const NuisanceModels models = fit_nuisances(data, default_kernel(data));
    const double vte = estimate_vte(data, models).estimate;
    const double cvte = estimate_cvte(data, models, uniform_weights(data.n())).estimate;
    if (vte == cvte) ++equal;
  }
  verdict(11, equal == 10,
          fmt("uniform-weight CVTE equals VTE bit for bit on %d of 10 instances", equal));
}

void property_suites() {
  int psd_ok = 0;
  int interp_ok = 0;
  int residual_ok = 0;
  for (int i = 0; i < 100; ++i) {
    const Index n = 5 + i % 50;
    const Index d = 1 + i % 5;
    const Eigen::MatrixXd x = kvte::testing::random_matrix(n, d, 4000 + i);
    const double sigma = 0.3 + 0.027 * i;
    const Eigen::MatrixXd k = gram_matrix(KernelSpec::Gaussian(sigma), x);
    const Eigen::MatrixXd oracle = kvte::testing::naive_gaussian_gram(x, x, sigma);
    const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k, Eigen::EigenvaluesOnly)
                               .eigenvalues()
                               .minCoeff();
    const bool psd = k == k.transpose() && (k.diagonal().array() == 1.0).all() &&
                     (k - oracle).cwiseAbs().maxCoeff() <= 1e-14 &&
                     min_eig >= -1e-12 * static_cast<double>(n);
    if (psd) ++psd_ok;

    // Perturbed 1-D lattice in 2-D: well separated, so a tiny ridge interpolates.
    const Index m = 8 + i % 10;
    Eigen::MatrixXd lattice = kvte::testing::random_matrix(m, 2, 5000 + i, 0.05);
    for (Index r = 0; r < m; ++r) lattice(r, 0) += static_cast<double>(r);
    const Eigen::VectorXd target = kvte::testing::random_vector(m, 6000 + i);
    const KrrModel interp = fit_krr(lattice, target, 1e-10, KernelSpec::Gaussian(0.5));
    if ((interp.predict_rows(lattice) - target).cwiseAbs().maxCoeff() <= 1e-4) ++interp_ok;

    const Eigen::VectorXd y = kvte::testing::random_vector(n, 7000 + i);
    const double lambda = default_lambda_grid()[static_cast<std::size_t>(i % 20)];
    const KrrModel model = fit_krr(x, y, lambda, KernelSpec::Gaussian(sigma));
    Eigen::MatrixXd system = oracle;
    system.diagonal().array() += static_cast<double>(n) * lambda;
    if ((system * model.dual_weights() - y).norm() <= 1e-10 * std::max(1.0, y.norm())) {
      ++residual_ok;
    }
  }
  verdict(12, psd_ok == 100 && interp_ok == 100 && residual_ok == 100,
          fmt("property suites on 100 instances each: Gram symmetric/PSD/exact %d, "
              "interpolation %d, ridge system residual %d",
              psd_ok, interp_ok, residual_ok));
}

void data_file_check() {
  const std::string csv_path = std::string(KVTE_DATA_DIR) + "/ihdp_like_747x25.csv";
  const std::string schema_path = std::string(KVTE_DATA_DIR) + "/ihdp_like_747x25.schema.json";
  try {
    std::ifstream schema_in(schema_path);
    if (!schema_in) throw IoError("cannot open " + schema_path);
    const CsvSchema schema = CsvSchema::from_json(nlohmann::json::parse(schema_in));
    std::ifstream raw(csv_path);
    std::string header;
    std::getline(raw, header);
    const Index raw_covariates = static_cast<Index>(std::count(header.begin(), header.end(), ',')) - 1;

    const Dataset data = ingest_csv(csv_path, schema);
    std::ostringstream first;
    write_csv(data, first);
    std::istringstream first_in(first.str());
    const Dataset back = parse_csv(first_in, schema_for(data));
    std::ostringstream second;
    write_csv(back, second);
    const bool round_trip = back == data && second.str() == first.str();

    const NormalizedDataset norm = normalize_outcomes(data);
    const double var_err = std::abs(population_variance(norm.data.y) - 1.0);
    const double recon_err = (norm.data.y * norm.scale - data.y).cwiseAbs().maxCoeff() /
                             data.y.cwiseAbs().maxCoeff();
    verdict(13,
            data.n() == 747 && raw_covariates == 25 && round_trip && var_err <= 1e-12 &&
                recon_err <= 1e-12,
            fmt("bundled file: %lld rows, %lld covariate columns (%lld after one-hot), round trip "
                "%s, |var - 1| %.1e, rescale error %.1e (need <= 1e-12)",
                static_cast<long long>(data.n()), static_cast<long long>(raw_covariates),
                static_cast<long long>(data.dim()), round_trip ? "exact" : "MISMATCH", var_err,
                recon_err));
  } catch (const std::exception& e) {
    verdict(13, false, std::string("bundled file check raised: ") + e.what());
  }
}

void algebraic() {
  identity_check();
  loo_check();
  uniform_weight_check();
  property_suites();
  data_file_check();
}

}  // namespace

int main(int argc, char** argv) {
  std::string group = "all";
  std::string out_dir;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--group" && i + 1 < argc) {
      group = argv[++i];
    } else if (arg == "--out" && i + 1 < argc) {
      out_dir = argv[++i];
    } else {
      std::fprintf(stderr, "usage: kvte_acceptance [--group statistical|algebraic|all] [--out DIR]\n");
      return 2;
    }
  }
  if (group != "all" && group != "statistical" && group != "algebraic") {
    std::fprintf(stderr, "unknown group '%s'\n", group.c_str());
    return 2;
  }
  try {
    if (group != "statistical") algebraic();
    if (group != "algebraic") statistical(out_dir);
  } catch (const std::exception& e) {
    std::printf("FAIL: acceptance run aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
