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

// kvte: simulate data, estimate effect variances, run benchmark grids and
// reformat benchmark results.
//
//   kvte simulate  --n 500 --seed 1 --out sample.csv
//   kvte estimate  --data sample.csv --methods proposed,naive
//   kvte estimate  --data sample.csv --estimand cvte --condition x2=0
//   kvte benchmark --sizes 500,5000 --reps 20 --out results/
//   kvte report    --input results/results.json --format csv
//
// Exit codes: 0 success, 1 unexpected failure, 2 invalid input, 3 numerical
// failure, 4 file I/O failure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "kvte/kvte.hpp"

namespace {

using nlohmann::json;

// Flags shared by estimate and benchmark. Values only override the resolved
// configuration when given on the command line.
struct RunFlags {
  std::string config_path;
  Eigen::Index n = 0;
  Eigen::Index d = 0;
  std::uint64_t seed = 0;
  int reps = 0;
  std::vector<Eigen::Index> sizes;
  std::vector<std::string> methods;
  std::string estimand;
  std::string condition;
  double subset_tolerance = 0.0;
  int k = 0;
  double rho = 0.0;
  double noise_sd = 0.0;
  std::string out;

  CLI::Option* n_opt = nullptr;
  CLI::Option* d_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* reps_opt = nullptr;
  CLI::Option* sizes_opt = nullptr;
  CLI::Option* methods_opt = nullptr;
  CLI::Option* estimand_opt = nullptr;
  CLI::Option* condition_opt = nullptr;
  CLI::Option* tolerance_opt = nullptr;
  CLI::Option* k_opt = nullptr;
  CLI::Option* rho_opt = nullptr;
  CLI::Option* noise_opt = nullptr;
  CLI::Option* out_opt = nullptr;

  void add_common(CLI::App* app) {
    app->add_option("--config", config_path, "JSON run configuration; flags override it")
        ->check(CLI::ExistingFile);
    d_opt = app->add_option("--d", d, "Covariate dimension of simulated data");
    seed_opt = app->add_option("--seed", seed, "Base seed; repetition r uses seed + r");
    methods_opt = app->add_option("--methods", methods,
                                  "Comma-separated: proposed,naive,cate_var,match_euclid,match_psm")
                      ->delimiter(',');
    estimand_opt = app->add_option("--estimand", estimand, "vte or cvte");
    condition_opt = app->add_option("--condition", condition, "Conditioning for cvte, e.g. x2=0");
    tolerance_opt = app->add_option("--subset-tolerance", subset_tolerance,
                                    "Half-width of the band the cvte baselines use");
    k_opt = app->add_option("--k", k, "Neighbours per unit for the matching baselines");
    rho_opt = app->add_option("--rho", rho, "Adjacent covariate correlation of simulated data");
    noise_opt = app->add_option("--noise-sd", noise_sd, "Outcome noise sd of simulated data");
  }

  kvte::RunConfig resolve(kvte::RunConfig cfg) const {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw kvte::IoError("cannot open '" + config_path + "'");
      json j;
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw kvte::InputError("config '" + config_path + "': " + e.what());
      }
      cfg.merge_json(j);
    }
    if (d_opt && d_opt->count()) cfg.d = d;
    if (seed_opt && seed_opt->count()) cfg.seed = seed;
    if (reps_opt && reps_opt->count()) cfg.reps = reps;
    if (sizes_opt && sizes_opt->count()) cfg.sizes = sizes;
    if (n_opt && n_opt->count()) cfg.sizes = {n};
    if (methods_opt && methods_opt->count()) {
      cfg.methods.clear();
      for (const auto& m : methods) cfg.methods.push_back(kvte::parse_method(m));
    }
    if (estimand_opt && estimand_opt->count()) cfg.estimand = kvte::parse_estimand(estimand);
    if (condition_opt && condition_opt->count()) cfg.condition = kvte::parse_condition(condition);
    if (tolerance_opt && tolerance_opt->count()) cfg.subset_tolerance = subset_tolerance;
    if (k_opt && k_opt->count()) cfg.k = k;
    if (rho_opt && rho_opt->count()) cfg.rho = rho;
    if (noise_opt && noise_opt->count()) cfg.noise_sd = noise_sd;
    if (out_opt && out_opt->count()) cfg.out = out;
    if (cfg.estimand == kvte::Estimand::kVte) cfg.condition.reset();
    return cfg;
  }
};

void write_json(const std::string& path, const json& j) {
  kvte::write_text_file(path, j.dump(2) + "\n");
}

json report_json(const kvte::EstimateReport& r) {
  json j;
  j["estimate"] = r.estimate;
  j["decomposition"] = {{"cate_variance", r.decomposition.cate_variance},
                        {"exogenous", r.decomposition.exogenous}};
  j["lambdas"] = {{"f0", r.lambdas.f0}, {"g0", r.lambdas.g0}, {"f1", r.lambdas.f1},
                  {"g1", r.lambdas.g1}};
  j["lambda_v"] = r.lambda_v ? json(*r.lambda_v) : json(nullptr);
  j["bandwidths"] = r.bandwidths;
  j["n"] = r.n;
  j["n0"] = r.n0;
  j["n1"] = r.n1;
  j["negative_estimate"] = r.negative_estimate;
  return j;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  kvte::SynthConfig synth;
  std::string out;
};

int run_simulate(const SimulateArgs& args) {
  const kvte::SyntheticSample sample = kvte::gen_synthetic(args.synth);
  kvte::write_csv(sample.data, args.out);
  json meta;
  meta["n"] = args.synth.n;
  meta["d"] = args.synth.d;
  meta["seed"] = args.synth.seed;
  meta["rho"] = args.synth.rho;
  meta["noise_sd"] = args.synth.noise_sd;
  meta["true_vte"] = kvte::true_vte(args.synth).value;
  if (args.synth.d >= 2) meta["true_cvte_x2"] = kvte::true_cvte(args.synth, 0.0).value;
  write_json(args.out + ".config.json", meta);
  std::cout << "wrote " << sample.data.n() << " rows to " << args.out << "\n";
  return 0;
}

struct EstimateArgs {
  RunFlags flags;
  std::string data_path;
  std::string schema_path;
  bool normalize = false;
};

int run_estimate(const EstimateArgs& args) {
  kvte::RunConfig defaults;
  defaults.methods = {kvte::Method::kProposed};
  const kvte::RunConfig cfg = args.flags.resolve(defaults);
  if ((cfg.estimand == kvte::Estimand::kCvte) != cfg.condition.has_value()) {
    throw kvte::InputError("--condition is required with --estimand cvte");
  }

  json out;
  out["config"] = cfg.to_json();
  kvte::Dataset data;
  std::optional<double> truth;
  if (!args.data_path.empty()) {
    kvte::CsvSchema schema;
    if (!args.schema_path.empty()) {
      std::ifstream in(args.schema_path);
      if (!in) throw kvte::IoError("cannot open '" + args.schema_path + "'");
      try {
        schema = kvte::CsvSchema::from_json(json::parse(in));
      } catch (const json::exception& e) {
        throw kvte::InputError("schema '" + args.schema_path + "': " + e.what());
      }
      out["schema"] = schema.to_json();
    }
    data = kvte::ingest_csv(args.data_path, schema);
    out["data"] = args.data_path;
  } else {
    const kvte::SynthConfig synth = cfg.synth(cfg.sizes.front(), 0);
    data = kvte::gen_synthetic(synth).data;
    truth = cfg.condition ? kvte::true_cvte(synth, cfg.condition->value, cfg.condition_column()).value
                          : kvte::true_vte(synth).value;
    out["data"] = "simulated";
    out["truth"] = *truth;
  }
  if (args.normalize) {
    auto normalized = kvte::normalize_outcomes(data);
    data = std::move(normalized.data);
    out["outcome_scale"] = normalized.scale;
  }
  out["n"] = data.n();
  out["d"] = data.dim();

  // Where the condition lives: a covariate column (product-kernel path) or a
  // dedicated conditioning column (embedding over v).
  std::optional<Eigen::Index> x_column;
  std::optional<Eigen::Index> v_column;
  if (cfg.condition) {
    const auto& names = data.x_names;
    const bool in_x = std::find(names.begin(), names.end(), cfg.condition->column) != names.end();
    if (in_x) {
      x_column = kvte::resolve_column(names, cfg.condition->column);
    } else if (data.v) {
      v_column = kvte::resolve_column(data.v_names, cfg.condition->column);
    } else {
      throw kvte::InputError("condition column '" + cfg.condition->column + "' not found");
    }
  }

  out["results"] = json::array();
  kvte::LambdaPolicy policy;
  policy.grid = cfg.lambda_grid;
  kvte::RunConfig baseline_cfg = cfg;
  baseline_cfg.methods.clear();
  for (kvte::Method m : cfg.methods) {
    if (m != kvte::Method::kProposed) baseline_cfg.methods.push_back(m);
  }
  for (kvte::Method m : cfg.methods) {
    if (m != kvte::Method::kProposed) continue;
    json r;
    r["method"] = "proposed";
    try {
      kvte::EstimateReport report;
      const Eigen::VectorXd value =
          Eigen::VectorXd::Constant(1, cfg.condition ? cfg.condition->value : 0.0);
      if (!cfg.condition) {
        const auto models = kvte::fit_nuisances(data, kvte::default_kernel(data), policy);
        report = kvte::estimate_vte(data, models);
      } else if (x_column) {
        kvte::SubsetCvteOptions options;
        options.lambda_policy = policy;
        options.lambda_v_grid = cfg.lambda_v_grid;
        report = kvte::estimate_cvte_subset(data, {*x_column}, value, options);
      } else {
        const Eigen::MatrixXd v = data.v->col(*v_column);
        const auto kernel_x = kvte::default_kernel(data);
        const auto kernel_v = kvte::gaussian_median_kernel(v);
        const auto models = kvte::fit_nuisances(data, kernel_x, policy);
        const double lambda_v =
            kvte::select_lambda_v(v, data.x, kernel_v, kernel_x, cfg.lambda_v_grid);
        kvte::Dataset single = data;
        single.v = v;
        single.v_names = {cfg.condition->column};
        const kvte::CmeModel cme(v, lambda_v, kernel_v);
        report = kvte::estimate_cvte(single, models, cme, value);
      }
      r.update(report_json(report));
      if (truth) r["abs_error"] = std::abs(report.estimate - *truth);
    } catch (const kvte::InputError&) {
      throw;
    } catch (const std::exception& e) {
      r["estimate"] = nullptr;
      r["error"] = e.what();
    }
    out["results"].push_back(r);
  }
  if (!baseline_cfg.methods.empty()) {
    if (v_column) {
      throw kvte::InputError("baselines need the condition on a covariate column");
    }
    const auto outcomes = kvte::run_methods(baseline_cfg, data, x_column);
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      json r;
      r["method"] = kvte::method_name(baseline_cfg.methods[i]);
      r["estimate"] = outcomes[i].estimate ? json(*outcomes[i].estimate) : json(nullptr);
      r["rows_used"] = outcomes[i].rows_used;
      if (truth && outcomes[i].estimate) r["abs_error"] = std::abs(*outcomes[i].estimate - *truth);
      if (!outcomes[i].error.empty()) r["error"] = outcomes[i].error;
      out["results"].push_back(r);
    }
  }
  const std::string text = out.dump(2) + "\n";
  if (!cfg.out.empty()) kvte::write_text_file(cfg.out, text);
  std::cout << text;
  return 0;
}

struct BenchmarkArgs {
  RunFlags flags;
};

int run_benchmark_cmd(const BenchmarkArgs& args) {
  kvte::RunConfig cfg = args.flags.resolve({});
  if (cfg.out.empty()) cfg.out = "kvte_benchmark";
  cfg.validate();
  std::filesystem::create_directories(cfg.out);
  const std::filesystem::path dir(cfg.out);
  write_json((dir / "config.json").string(), cfg.to_json());
  const kvte::BenchmarkResult result = kvte::run_benchmark(cfg);
  kvte::emit_report(result, kvte::ReportFormat::kJson, (dir / "results.json").string());
  kvte::emit_report(result, kvte::ReportFormat::kCsv, (dir / "table.csv").string());
  kvte::emit_report(result, kvte::ReportFormat::kPlotData, (dir / "plotdata.json").string());
  std::cout << "truth " << result.truth << "\n" << kvte::render_csv(result);
  for (const auto& cell : result.cells) {
    if (cell.summary.excluded > 0) {
      std::cerr << kvte::method_name(cell.method) << " n=" << cell.n << ": "
                << cell.summary.excluded << " failed repetition(s) excluded\n";
    }
  }
  return 0;
}

struct ReportArgs {
  std::string input;
  std::string format = "csv";
  std::string out;
};

int run_report(const ReportArgs& args) {
  std::ifstream in(args.input);
  if (!in) throw kvte::IoError("cannot open '" + args.input + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw kvte::InputError("'" + args.input + "': " + e.what());
  }
  const auto result = kvte::BenchmarkResult::from_json(j);
  const auto format = kvte::parse_report_format(args.format);
  if (args.out.empty()) {
    std::cout << kvte::render_report(result, format);
  } else {
    kvte::emit_report(result, format, args.out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel estimators for the variance of treatment effects"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Write a synthetic dataset as CSV");
  simulate->add_option("--n", sim.synth.n, "Rows")->capture_default_str();
  simulate->add_option("--d", sim.synth.d, "Covariates")->capture_default_str();
  simulate->add_option("--seed", sim.synth.seed, "Seed")->capture_default_str();
  simulate->add_option("--rho", sim.synth.rho, "Adjacent covariate correlation")
      ->capture_default_str();
  simulate->add_option("--noise-sd", sim.synth.noise_sd, "Outcome noise sd")->capture_default_str();
  simulate->add_option("--out", sim.out, "Output CSV path")->required();

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "Estimate on one dataset");
  est.flags.add_common(estimate);
  estimate->add_option("--data", est.data_path, "Input CSV; simulated data when omitted")
      ->check(CLI::ExistingFile);
  estimate->add_option("--schema", est.schema_path, "JSON column-role schema for --data")
      ->check(CLI::ExistingFile);
  estimate->add_flag("--normalize", est.normalize, "Rescale outcomes to unit variance");
  est.flags.n_opt = estimate->add_option("--n", est.flags.n, "Rows of simulated data");
  est.flags.out_opt = estimate->add_option("--out", est.flags.out, "Write the result JSON here");

  BenchmarkArgs bench;
  auto* benchmark = app.add_subcommand("benchmark", "Run a repeated-simulation grid");
  bench.flags.add_common(benchmark);
  bench.flags.n_opt = benchmark->add_option("--n", bench.flags.n, "Single sample size");
  bench.flags.sizes_opt =
      benchmark->add_option("--sizes", bench.flags.sizes, "Comma-separated sample sizes")
          ->delimiter(',');
  bench.flags.reps_opt = benchmark->add_option("--reps", bench.flags.reps, "Repetitions");
  bench.flags.out_opt = benchmark->add_option("--out", bench.flags.out, "Output directory");

  ReportArgs rep;
  auto* report = app.add_subcommand("report", "Reformat a benchmark results.json");
  report->add_option("--input", rep.input, "results.json from benchmark")
      ->required()
      ->check(CLI::ExistingFile);
  report->add_option("--format", rep.format, "json, csv or plotdata")->capture_default_str();
  report->add_option("--out", rep.out, "Output path; stdout when omitted");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return run_simulate(sim);
    if (estimate->parsed()) return run_estimate(est);
    if (benchmark->parsed()) return run_benchmark_cmd(bench);
    if (report->parsed()) return run_report(rep);
  } catch (const kvte::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const kvte::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const kvte::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
