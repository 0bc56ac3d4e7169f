/*
 * Copyright 2026 The AID-MAE Authors.
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

#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "aidmae/pipeline.hpp"

namespace aidmae {

/// Desk-scale stand-in for a clinical cohort. Latent Gaussian factors drive
/// clusters of correlated lab-like features; optional hourly vital and
/// vasopressor channels exercise the full grid layout.
struct SynthConfig {
  std::size_t n_samples = 5000;
  std::size_t n_labs = 20;
  bool lab_reference = false;
  std::size_t n_factors = 5;
  double loading = 0.95;       // feature-factor loading; within-cluster correlation is loading^2
  double global_share = 0.3;   // variance share of the common factor in every cluster factor
  std::vector<double> missing_rates;  // per lab; empty = evenly spread over [0.07, 0.88]
  std::size_t n_vitals = 0;
  double vital_missing = 0.3;
  std::size_t n_vasopressors = 0;
  double vaso_presence = 0.3;
  double label_noise = 0.5;
  double label_threshold = 0.5;
  double test_fraction = 0.2;
  double val_fraction = 0.2;
  std::uint64_t seed = 7;

  static SynthConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Missing rate assigned to each lab feature.
std::vector<double> synth_missing_rates(const SynthConfig& config);

/// Population correlation between lab features j and k (before winsorization).
double synth_correlation(const SynthConfig& config, std::size_t j, std::size_t k);

/// Generates, splits and normalizes a dataset. Bit-identical for equal configs.
Dataset synth_generate(const SynthConfig& config);

}  // namespace aidmae
