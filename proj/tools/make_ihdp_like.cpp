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

// Writes the bundled 747-row stand-in dataset and its schema.
//
// 25 covariate columns in the usual shape of infant-development study data:
// six continuous measurements (c1..c6), eighteen binary indicators
// (b1..b18) and one categorical site code with levels s1, s2, s3. Treatment
// follows a logistic model in a few covariates; the outcome carries a
// heterogeneous effect plus noise.
//
//   make_ihdp_like <out.csv> <out.schema.json> [seed]

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: make_ihdp_like <out.csv> <out.schema.json> [seed]\n";
    return 2;
  }
  const std::uint64_t seed = argc > 3 ? std::strtoull(argv[3], nullptr, 10) : 747;
  constexpr int kRows = 747;
  constexpr int kContinuous = 6;
  constexpr int kBinary = 18;
  const std::vector<std::string> sites{"s1", "s2", "s3"};

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  std::ofstream csv(argv[1]);
  if (!csv) {
    std::cerr << "cannot write " << argv[1] << "\n";
    return 4;
  }
  for (int j = 1; j <= kContinuous; ++j) csv << "c" << j << ",";
  for (int j = 1; j <= kBinary; ++j) csv << "b" << j << ",";
  csv << "site,a,y\n";
  for (int i = 0; i < kRows; ++i) {
    std::vector<double> c(kContinuous);
    for (auto& v : c) v = normal(rng);
    std::vector<int> b(kBinary);
    for (int j = 0; j < kBinary; ++j) {
      const double p = 0.2 + 0.6 * j / (kBinary - 1.0);
      b[j] = uniform(rng) < p ? 1 : 0;
    }
    const int site = static_cast<int>(uniform(rng) * 3.0) % 3;
    const double logit = 0.4 * c[0] - 0.3 * c[1] + 0.5 * b[0] - 0.4 * b[1] + 0.2 * site - 0.6;
    const int a = uniform(rng) < 1.0 / (1.0 + std::exp(-logit)) ? 1 : 0;
    const double base = 2.0 + 0.8 * c[0] + 0.5 * c[2] * c[2] - 0.6 * b[2] + 0.3 * site;
    const double effect = 4.0 + 1.5 * c[1] + 0.8 * b[3] - 0.5 * site;
    const double y = base + a * effect + normal(rng);
    // Rounded like typical study exports.
    const auto round4 = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f", v);
      return std::string(buf);
    };
    for (double v : c) csv << round4(v) << ",";
    for (int v : b) csv << v << ",";
    csv << sites[static_cast<std::size_t>(site)] << "," << a << "," << round4(y) << "\n";
  }

  nlohmann::json schema;
  schema["treatment"] = "a";
  schema["outcome"] = "y";
  schema["categorical"] = {{"site", sites}};
  std::ofstream out(argv[2]);
  if (!out) {
    std::cerr << "cannot write " << argv[2] << "\n";
    return 4;
  }
  out << schema.dump(2) << "\n";
  return 0;
}
