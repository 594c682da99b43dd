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

// Repeated-simulation benchmark over methods and sample sizes.
//
// Repetition r of every size draws its sample with seed + r. For the
// conditional estimand the proposed estimator conditions exactly on
// x_j = c, while naive and matching run on the rows with |x_j - c| <= tol;
// the CATE-variance baseline trains on all rows and averages over that band.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "kvte/baselines.hpp"
#include "kvte/csv.hpp"
#include "kvte/dataset.hpp"
#include "kvte/error.hpp"
#include "kvte/estimators.hpp"
#include "kvte/krr.hpp"
#include "kvte/simdata.hpp"

namespace kvte {

enum class Method { kProposed, kNaive, kCateVar, kMatchEuclid, kMatchPsm };

inline const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods{Method::kProposed, Method::kNaive, Method::kCateVar,
                                           Method::kMatchEuclid, Method::kMatchPsm};
  return methods;
}

inline std::string method_name(Method m) {
  switch (m) {
    case Method::kProposed: return "proposed";
    case Method::kNaive: return "naive";
    case Method::kCateVar: return "cate_var";
    case Method::kMatchEuclid: return "match_euclid";
    case Method::kMatchPsm: return "match_psm";
  }
  return "unknown";
}

inline Method parse_method(std::string_view name) {
  for (Method m : all_methods()) {
    if (method_name(m) == name) return m;
  }
  throw InputError("unknown method '" + std::string(name) +
                   "' (expected proposed, naive, cate_var, match_euclid or match_psm)");
}

enum class Estimand { kVte, kCvte };

inline std::string estimand_name(Estimand e) { return e == Estimand::kVte ? "vte" : "cvte"; }

inline Estimand parse_estimand(std::string_view name) {
  if (name == "vte") return Estimand::kVte;
  if (name == "cvte") return Estimand::kCvte;
  throw InputError("unknown estimand '" + std::string(name) + "' (expected vte or cvte)");
}

// "name=value", e.g. "x2=0".
struct Condition {
  std::string column;
  double value = 0.0;

  std::string text() const { return column + "=" + detail::format_double(value); }
  bool operator==(const Condition&) const = default;
};

inline Condition parse_condition(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) {
    throw InputError("condition '" + std::string(text) + "' must look like name=value");
  }
  Condition c;
  c.column = std::string(detail::trim(text.substr(0, eq)));
  const std::string_view value = detail::trim(text.substr(eq + 1));
  if (c.column.empty() || !detail::parse_double(value, c.value) || !std::isfinite(c.value)) {
    throw InputError("condition '" + std::string(text) + "' must look like name=value");
  }
  return c;
}

// Position of `name` in `names`; InputError when absent.
inline Index resolve_column(const std::vector<std::string>& names, const std::string& name) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<Index>(i);
  }
  throw InputError("unknown column '" + name + "'");
}

struct RunConfig {
  std::vector<Method> methods = all_methods();
  std::vector<Index> sizes{500};
  int reps = 20;
  std::uint64_t seed = 0;
  Index d = 100;
  double rho = 0.5;
  double noise_sd = 1.0;
  Estimand estimand = Estimand::kVte;
  std::optional<Condition> condition;
  double subset_tolerance = 0.1;
  int k = 5;
  std::vector<double> lambda_grid = default_lambda_grid();
  std::vector<double> lambda_v_grid = default_lambda_grid();
  std::string out;

  SynthConfig synth(Index n, int rep) const {
    SynthConfig cfg;
    cfg.n = n;
    cfg.d = d;
    cfg.rho = rho;
    cfg.noise_sd = noise_sd;
    cfg.seed = seed + static_cast<std::uint64_t>(rep);
    return cfg;
  }

  // Covariate index the condition refers to (synthetic names x1..xd).
  Index condition_column() const {
    if (!condition) throw InputError("run config: no condition set");
    return resolve_column(covariate_names(d), condition->column);
  }

  void validate() const {
    if (methods.empty()) throw InputError("run config: no methods");
    if (sizes.empty()) throw InputError("run config: no sizes");
    for (Index n : sizes) {
      if (n < 4) throw InputError("run config: every size must be at least 4");
    }
    if (reps < 1) throw InputError("run config: reps must be at least 1");
    if (d < 1) throw InputError("run config: d must be positive");
    if (k < 1) throw InputError("run config: k must be positive");
    if (!(subset_tolerance > 0.0) || !std::isfinite(subset_tolerance)) {
      throw InputError("run config: subset tolerance must be positive");
    }
    for (const auto* grid : {&lambda_grid, &lambda_v_grid}) {
      if (grid->empty()) throw InputError("run config: empty lambda grid");
      for (double l : *grid) {
        if (!(l > 0.0) || !std::isfinite(l)) throw InputError("run config: lambdas must be positive");
      }
    }
    if ((estimand == Estimand::kCvte) != condition.has_value()) {
      throw InputError("run config: a condition is required for cvte and only for cvte");
    }
    if (condition) condition_column();
    synth(sizes.front(), 0).covariance_factor();
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["methods"] = nlohmann::json::array();
    for (Method m : methods) j["methods"].push_back(method_name(m));
    j["sizes"] = sizes;
    j["reps"] = reps;
    j["seed"] = seed;
    j["d"] = d;
    j["rho"] = rho;
    j["noise_sd"] = noise_sd;
    j["estimand"] = estimand_name(estimand);
    j["condition"] = condition ? nlohmann::json(condition->text()) : nlohmann::json(nullptr);
    j["subset_tolerance"] = subset_tolerance;
    j["k"] = k;
    j["lambda_grid"] = lambda_grid;
    j["lambda_v_grid"] = lambda_v_grid;
    j["out"] = out;
    return j;
  }

  // Missing keys keep their current values.
  void merge_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InputError("run config: JSON root must be an object");
    try {
      if (j.contains("methods")) {
        methods.clear();
        for (const auto& m : j.at("methods")) methods.push_back(parse_method(m.get<std::string>()));
      }
      if (j.contains("sizes")) sizes = j.at("sizes").get<std::vector<Index>>();
      if (j.contains("reps")) reps = j.at("reps").get<int>();
      if (j.contains("seed")) seed = j.at("seed").get<std::uint64_t>();
      if (j.contains("d")) d = j.at("d").get<Index>();
      if (j.contains("rho")) rho = j.at("rho").get<double>();
      if (j.contains("noise_sd")) noise_sd = j.at("noise_sd").get<double>();
      if (j.contains("estimand")) estimand = parse_estimand(j.at("estimand").get<std::string>());
      if (j.contains("condition")) {
        const auto& c = j.at("condition");
        condition = c.is_null() ? std::nullopt
                                : std::optional<Condition>(parse_condition(c.get<std::string>()));
      }
      if (j.contains("subset_tolerance")) subset_tolerance = j.at("subset_tolerance").get<double>();
      if (j.contains("k")) k = j.at("k").get<int>();
      if (j.contains("lambda_grid")) lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
      if (j.contains("lambda_v_grid")) {
        lambda_v_grid = j.at("lambda_v_grid").get<std::vector<double>>();
      }
      if (j.contains("out")) out = j.at("out").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("run config: ") + e.what());
    }
  }

  static RunConfig from_json(const nlohmann::json& j) {
    RunConfig cfg;
    cfg.merge_json(j);
    return cfg;
  }

  bool operator==(const RunConfig&) const = default;
};

struct RepetitionRecord {
  int rep = 0;
  std::uint64_t seed = 0;
  std::optional<double> estimate;
  double truth = 0.0;
  std::optional<double> abs_error;
  // Rows the method used (the band size for subset baselines).
  Index rows_used = 0;
  double seconds = 0.0;
  std::string error;

  bool operator==(const RepetitionRecord&) const = default;
};

struct CellSummary {
  double mae = 0.0;
  // Sample standard deviation of the absolute errors over sqrt(count).
  double se = 0.0;
  double mean_estimate = 0.0;
  double se_estimate = 0.0;
  int included = 0;
  int excluded = 0;

  bool operator==(const CellSummary&) const = default;
};

struct CellResult {
  Method method = Method::kProposed;
  Index n = 0;
  std::vector<RepetitionRecord> reps;
  CellSummary summary;

  bool operator==(const CellResult&) const = default;
};

namespace detail {

// Mean and sample standard deviation / sqrt(count); zero spread for a
// single value.
inline std::pair<double, double> mean_and_se(const std::vector<double>& values) {
  if (values.empty()) return {std::nan(""), std::nan("")};
  const double count = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= count;
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (count - 1.0)) / std::sqrt(count)};
}

}  // namespace detail

inline CellSummary summarize(const std::vector<RepetitionRecord>& reps) {
  std::vector<double> errors;
  std::vector<double> estimates;
  for (const auto& r : reps) {
    if (r.estimate && r.abs_error) {
      estimates.push_back(*r.estimate);
      errors.push_back(*r.abs_error);
    }
  }
  CellSummary s;
  std::tie(s.mae, s.se) = detail::mean_and_se(errors);
  std::tie(s.mean_estimate, s.se_estimate) = detail::mean_and_se(estimates);
  s.included = static_cast<int>(errors.size());
  s.excluded = static_cast<int>(reps.size()) - s.included;
  return s;
}

struct BenchmarkResult {
  RunConfig config;
  double truth = 0.0;
  std::vector<CellResult> cells;

  const CellResult& cell(Method method, Index n) const {
    for (const auto& c : cells) {
      if (c.method == method && c.n == n) return c;
    }
    throw InputError("benchmark result has no cell for " + method_name(method) + " at n=" +
                     std::to_string(n));
  }

  bool operator==(const BenchmarkResult&) const = default;

  nlohmann::json to_json() const {
    const auto opt = [](const std::optional<double>& v) {
      return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    const auto num = [](double v) {
      return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
    };
    nlohmann::json j;
    j["config"] = config.to_json();
    j["truth"] = truth;
    j["cells"] = nlohmann::json::array();
    for (const auto& c : cells) {
      nlohmann::json cj;
      cj["method"] = method_name(c.method);
      cj["n"] = c.n;
      cj["summary"] = {{"mae", num(c.summary.mae)},
                       {"se", num(c.summary.se)},
                       {"mean_estimate", num(c.summary.mean_estimate)},
                       {"se_estimate", num(c.summary.se_estimate)},
                       {"included", c.summary.included},
                       {"excluded", c.summary.excluded}};
      cj["reps"] = nlohmann::json::array();
      for (const auto& r : c.reps) {
        cj["reps"].push_back({{"rep", r.rep},
                              {"seed", r.seed},
                              {"estimate", opt(r.estimate)},
                              {"truth", r.truth},
                              {"abs_error", opt(r.abs_error)},
                              {"rows_used", r.rows_used},
                              {"seconds", r.seconds},
                              {"error", r.error}});
      }
      j["cells"].push_back(std::move(cj));
    }
    return j;
  }

  static BenchmarkResult from_json(const nlohmann::json& j) {
    const auto opt = [](const nlohmann::json& v) {
      return v.is_null() ? std::optional<double>() : std::optional<double>(v.get<double>());
    };
    const auto num = [](const nlohmann::json& v) {
      return v.is_null() ? std::nan("") : v.get<double>();
    };
    try {
      BenchmarkResult r;
      r.config = RunConfig::from_json(j.at("config"));
      r.truth = j.at("truth").get<double>();
      for (const auto& cj : j.at("cells")) {
        CellResult c;
        c.method = parse_method(cj.at("method").get<std::string>());
        c.n = cj.at("n").get<Index>();
        const auto& s = cj.at("summary");
        c.summary = {num(s.at("mae")),           num(s.at("se")),
                     num(s.at("mean_estimate")), num(s.at("se_estimate")),
                     s.at("included").get<int>(), s.at("excluded").get<int>()};
        for (const auto& rj : cj.at("reps")) {
          RepetitionRecord rec;
          rec.rep = rj.at("rep").get<int>();
          rec.seed = rj.at("seed").get<std::uint64_t>();
          rec.estimate = opt(rj.at("estimate"));
          rec.truth = rj.at("truth").get<double>();
          rec.abs_error = opt(rj.at("abs_error"));
          rec.rows_used = rj.at("rows_used").get<Index>();
          rec.seconds = rj.at("seconds").get<double>();
          rec.error = rj.at("error").get<std::string>();
          c.reps.push_back(std::move(rec));
        }
        r.cells.push_back(std::move(c));
      }
      return r;
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("benchmark result: ") + e.what());
    }
  }
};

struct MethodOutcome {
  std::optional<double> estimate;
  // Rows the method used (the band size for subset baselines).
  Index rows_used = 0;
  double seconds = 0.0;
  std::string error;
};

namespace detail {

template <typename Fn>
MethodOutcome timed(Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  MethodOutcome out;
  try {
    auto [value, rows] = fn();
    out.estimate = value;
    out.rows_used = rows;
    if (!std::isfinite(value)) {
      out.estimate.reset();
      out.error = "non-finite estimate";
    }
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace detail

// Every configured method on one dataset, in configuration order. For the
// conditional estimand `condition_column` is the covariate the condition
// refers to. Failures are captured per method.
inline std::vector<MethodOutcome> run_methods(const RunConfig& cfg, const Dataset& data,
                                              std::optional<Index> condition_column = {}) {
  using Result = std::pair<double, Index>;
  const Index n = data.n();
  LambdaPolicy policy;
  policy.grid = cfg.lambda_grid;
  MatchConfig euclid{cfg.k, MatchMetric::kEuclideanStandardized};
  MatchConfig psm{cfg.k, MatchMetric::kPropensityScore};

  // Shared fits are computed once, lazily, and their time is charged to
  // every method that uses them.
  std::optional<MethodOutcome> shared_failure;
  double shared_seconds = 0.0;
  std::optional<NuisanceModels> nuisances;
  std::optional<SubsetCvteModel> subset_model;
  const auto shared = [&](auto&& fit) -> bool {
    if (nuisances || subset_model) return true;
    if (shared_failure) return false;
    const auto start = std::chrono::steady_clock::now();
    try {
      fit();
    } catch (const std::exception& e) {
      shared_failure = MethodOutcome{std::nullopt, 0, 0.0, e.what()};
    }
    shared_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return !shared_failure;
  };

  std::vector<MethodOutcome> outcomes;
  if (cfg.estimand == Estimand::kVte) {
    const auto fit = [&] { nuisances = fit_nuisances(data, default_kernel(data), policy); };
    for (Method m : cfg.methods) {
      MethodOutcome o;
      switch (m) {
        case Method::kProposed:
        case Method::kCateVar:
          if (!shared(fit)) {
            o = *shared_failure;
            break;
          }
          o = detail::timed([&] {
            return m == Method::kProposed
                       ? Result{estimate_vte(data, *nuisances).estimate, n}
                       : Result{cate_variance_baseline(data, *nuisances), n};
          });
          o.seconds += shared_seconds;
          break;
        case Method::kNaive:
          o = detail::timed([&] { return Result{naive_vte(data), n}; });
          break;
        case Method::kMatchEuclid:
          o = detail::timed([&] { return Result{match_vte(data, euclid), n}; });
          break;
        case Method::kMatchPsm:
          o = detail::timed([&] {
            const PropensityModel model = fit_propensity(data);
            return Result{match_vte(data, psm, &model), n};
          });
          break;
      }
      outcomes.push_back(std::move(o));
    }
    return outcomes;
  }

  if (!cfg.condition || !condition_column) {
    throw InputError("conditional estimand needs a condition column");
  }
  const Index column = *condition_column;
  if (column < 0 || column >= data.dim()) throw InputError("condition column out of range");
  const double c = cfg.condition->value;
  std::vector<Index> band;
  for (Index i = 0; i < n; ++i) {
    if (std::abs(data.x(i, column) - c) <= cfg.subset_tolerance) band.push_back(i);
  }
  const Index band_size = static_cast<Index>(band.size());
  const Dataset subset = data.subset(band);
  const auto fit = [&] {
    SubsetCvteOptions options;
    options.lambda_policy = policy;
    options.lambda_v_grid = cfg.lambda_v_grid;
    subset_model = fit_cvte_subset(data, {column}, options);
  };
  for (Method m : cfg.methods) {
    MethodOutcome o;
    switch (m) {
      case Method::kProposed:
      case Method::kCateVar:
        if (!shared(fit)) {
          o = *shared_failure;
          break;
        }
        o = detail::timed([&] {
          if (m == Method::kProposed) {
            const Eigen::VectorXd v = Eigen::VectorXd::Constant(1, c);
            return Result{estimate_cvte_subset(*subset_model, data, v).estimate, n};
          }
          if (band.empty()) throw InputError("no rows within the subset tolerance");
          return Result{cate_variance_baseline(data, subset_model->nuisances, band), band_size};
        });
        o.seconds += shared_seconds;
        break;
      case Method::kNaive:
        o = detail::timed([&] { return Result{naive_vte(subset), band_size}; });
        break;
      case Method::kMatchEuclid:
        o = detail::timed([&] { return Result{match_vte(subset, euclid), band_size}; });
        break;
      case Method::kMatchPsm:
        o = detail::timed([&] {
          const PropensityModel model = fit_propensity(data);
          return Result{match_vte(subset, psm, &model), band_size};
        });
        break;
    }
    outcomes.push_back(std::move(o));
  }
  return outcomes;
}

// Cells are ordered by size, then by method in configuration order.
inline BenchmarkResult run_benchmark(const RunConfig& cfg) {
  cfg.validate();
  BenchmarkResult result;
  result.config = cfg;
  const SynthConfig base = cfg.synth(cfg.sizes.front(), 0);
  result.truth = cfg.estimand == Estimand::kVte
                     ? true_vte(base).value
                     : true_cvte(base, cfg.condition->value, cfg.condition_column()).value;
  std::optional<Index> column;
  if (cfg.condition) column = cfg.condition_column();
  for (Index n : cfg.sizes) {
    std::vector<CellResult> row;
    for (Method m : cfg.methods) row.push_back(CellResult{m, n, {}, {}});
    for (int r = 0; r < cfg.reps; ++r) {
      const SynthConfig synth = cfg.synth(n, r);
      const Dataset data = gen_synthetic(synth).data;
      const auto outcomes = run_methods(cfg, data, column);
      for (std::size_t i = 0; i < outcomes.size(); ++i) {
        RepetitionRecord rec;
        rec.rep = r;
        rec.seed = synth.seed;
        rec.truth = result.truth;
        rec.estimate = outcomes[i].estimate;
        if (rec.estimate) rec.abs_error = std::abs(*rec.estimate - result.truth);
        rec.rows_used = outcomes[i].rows_used;
        rec.seconds = outcomes[i].seconds;
        rec.error = outcomes[i].error;
        row[i].reps.push_back(std::move(rec));
      }
    }
    for (auto& cell : row) {
      cell.summary = summarize(cell.reps);
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reports.

enum class ReportFormat { kJson, kCsv, kPlotData };

inline ReportFormat parse_report_format(std::string_view name) {
  if (name == "json") return ReportFormat::kJson;
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "plotdata") return ReportFormat::kPlotData;
  throw InputError("unknown report format '" + std::string(name) +
                   "' (expected json, csv or plotdata)");
}

// "mean (se)" with two decimals.
inline std::string format_cell(double mean, double se) {
  if (!std::isfinite(mean)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f (%.2f)", mean, se);
  return buf;
}

// One row per method; one "MAE (SE)" column per size followed by the raw
// summary numbers.
inline std::string render_csv(const BenchmarkResult& result) {
  const auto& sizes = result.config.sizes;
  std::string out = "method";
  for (Index n : sizes) out += ",n=" + std::to_string(n);
  for (Index n : sizes) {
    const std::string s = std::to_string(n);
    out += ",mae_" + s + ",se_" + s + ",mean_estimate_" + s + ",se_estimate_" + s +
           ",included_" + s + ",excluded_" + s;
  }
  out += "\n";
  const auto raw = [](double v) { return std::isfinite(v) ? detail::format_double(v) : "NA"; };
  for (Method m : result.config.methods) {
    std::string line = method_name(m);
    for (Index n : sizes) {
      const auto& s = result.cell(m, n).summary;
      line += "," + format_cell(s.mae, s.se);
    }
    for (Index n : sizes) {
      const auto& s = result.cell(m, n).summary;
      line += "," + raw(s.mae) + "," + raw(s.se) + "," + raw(s.mean_estimate) + "," +
              raw(s.se_estimate) + "," + std::to_string(s.included) + "," +
              std::to_string(s.excluded);
    }
    out += line + "\n";
  }
  return out;
}

// Estimate vectors per (method, size) and the true value, for box plots.
inline nlohmann::json plot_data(const BenchmarkResult& result) {
  nlohmann::json j;
  j["truth"] = result.truth;
  j["estimand"] = estimand_name(result.config.estimand);
  if (result.config.condition) j["condition"] = result.config.condition->text();
  j["series"] = nlohmann::json::array();
  for (const auto& c : result.cells) {
    std::vector<double> estimates;
    for (const auto& r : c.reps) {
      if (r.estimate) estimates.push_back(*r.estimate);
    }
    j["series"].push_back({{"method", method_name(c.method)}, {"n", c.n}, {"estimates", estimates}});
  }
  return j;
}

inline std::string render_report(const BenchmarkResult& result, ReportFormat format) {
  switch (format) {
    case ReportFormat::kJson: return result.to_json().dump(2) + "\n";
    case ReportFormat::kCsv: return render_csv(result);
    case ReportFormat::kPlotData: return plot_data(result).dump(2) + "\n";
  }
  return {};
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline void emit_report(const BenchmarkResult& result, ReportFormat format,
                        const std::string& path) {
  write_text_file(path, render_report(result, format));
}

}  // namespace kvte
