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
#include <string>
#include <vector>

#include "aidmae/logistic.hpp"
#include "aidmae/metrics.hpp"
#include "aidmae/model.hpp"
#include "aidmae/pipeline.hpp"
#include "aidmae/trainer.hpp"

namespace aidmae {

using FeatureMatrix = std::vector<std::vector<double>>;

/// CLS encoder outputs for rows, with every recorded slot visible.
FeatureMatrix cls_embeddings(const Model& model, const Dataset& ds, std::span<const std::size_t> rows,
                             std::size_t batch_size = 256);

/// Per-slot median of recorded values over `rows` (0 where never recorded).
std::vector<double> slot_medians(const Dataset& ds, std::span<const std::size_t> rows);

/// Grid values with missing slots replaced by the given medians.
FeatureMatrix median_imputed(const Dataset& ds, std::span<const std::size_t> rows, std::span<const double> medians);

// ---- linear probing ---------------------------------------------------------------

struct ProbeConfig {
  std::vector<double> fractions{1.0, 5.0, 10.0, 50.0, 100.0};  // percent of training rows
  std::vector<std::uint64_t> seeds{2020, 2021, 2022, 2023, 2024};
  double C = 1.0;
  Task task = Task::kMortality;
};

struct ProbeData {
  FeatureMatrix train_x;
  std::vector<double> train_y;
  FeatureMatrix test_x;
  std::vector<double> test_y;
};

/// Labeled first-day rows of the train and test splits as probe inputs.
ProbeData probe_data_cls(const Model& model, const Dataset& ds, Task task);
ProbeData probe_data_raw(const Dataset& ds, Task task);

struct ProbeRow {
  std::string method;
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  double auroc = 0.0;
  double auprc = 0.0;
  bool converged = false;
};

/// Label-stratified subset: ceil(fraction% of each class), at least one per class.
std::vector<std::size_t> stratified_subsample(std::span<const double> y, double fraction_pct, std::uint64_t seed);

std::vector<ProbeRow> linear_probe(const std::string& method, const ProbeData& data, const ProbeConfig& config);

struct ProbeSummary {
  std::string method;
  double fraction = 0.0;
  MeanSd auroc;
  MeanSd auprc;
  std::size_t runs = 0;
  bool all_converged = true;
};

std::vector<ProbeSummary> summarize_probe(std::span<const ProbeRow> rows);

// ---- reconstruction -------------------------------------------------------------

struct FeatureReconstruction {
  std::size_t feature = 0;
  std::string name;
  std::size_t n = 0;
  double value_range = 0.0;
  RegressionMetrics metrics;
  bool skipped = false;
  std::string note;
};

/// Hides one recorded measurement at a time and scores its reconstruction,
/// per feature, on normalized values. Labs use their current-day slot,
/// hourly channels their latest recorded slot of the day.
std::vector<FeatureReconstruction> single_value_reconstruction(const Model& model, const Dataset& ds,
                                                               std::span<const std::size_t> rows,
                                                               std::size_t batch_size = 256);

struct SweepRow {
  std::string mode;  // "random" or "panel"
  double ratio = 0.0;
  std::string panel;
  std::size_t n_scored = 0;
  std::size_t samples_skipped = 0;
  double value_range = 0.0;
  RegressionMetrics metrics;
  bool defined = false;
};

/// Hides each recorded slot with probability `ratio` and scores the
/// reconstruction of every recorded slot.
std::vector<SweepRow> imputation_sweep_random(const Model& model, const Dataset& ds, std::span<const std::size_t> rows,
                                              std::span<const double> ratios, std::uint64_t seed,
                                              std::size_t batch_size = 256);

/// Hides every recorded slot of a feature group and scores those slots.
std::vector<SweepRow> imputation_sweep_panel(const Model& model, const Dataset& ds, std::span<const std::size_t> rows,
                                             std::span<const std::string> panels, std::size_t batch_size = 256);

// ---- ablation -------------------------------------------------------------------

struct AblationCell {
  std::string variant = "full";
  double a = 0.0;
  double b = 0.25;
};

struct AblationRow {
  AblationCell cell;
  std::size_t grid_length = 0;
  double final_val_loss = 0.0;
  double probe_fraction = 0.0;
  MeanSd probe_auroc;
  MeanSd probe_auprc;
  double recon_r2 = 0.0;
  std::string params_hash;
};

/// Pretrains one model per cell (variant x masking policy) and scores it by
/// linear probing and random-masking reconstruction on the test split.
std::vector<AblationRow> run_ablation(const Dataset& ds, const ModelConfig& model_config,
                                      const PretrainConfig& pretrain, std::span<const AblationCell> cells,
                                      const ProbeConfig& probe, double recon_ratio, std::uint64_t model_seed);

/// Hex FNV-1a over the model's parameter bytes.
std::string params_hash(const Model& model);

}  // namespace aidmae
