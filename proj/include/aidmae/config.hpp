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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aidmae/evaluate.hpp"
#include "aidmae/model.hpp"
#include "aidmae/pipeline.hpp"
#include "aidmae/synth.hpp"
#include "aidmae/trainer.hpp"

namespace aidmae {

/// Throws ConfigError naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where);

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

struct DataSection {
  std::string events;    // event CSV
  std::string labels;    // optional label CSV
  std::string registry;  // registry JSON
  std::string time_format = "epoch_minutes";
  std::optional<double> cut_time;  // minutes; default puts the latest 20% of admissions in test
  double val_fraction = 0.2;
  std::string variant = "full";
  SynthConfig synth;
};

struct EvalSection {
  ProbeConfig probe;
  std::vector<double> ratios{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  std::vector<std::string> panels;
  std::size_t batch_size = 256;
};

struct AblationSection {
  std::vector<std::pair<double, double>> grid{{0.0, 0.25}};  // (a, b)
  std::vector<std::string> variants{"full"};
  double recon_ratio = 0.25;
};

/// Whole-run configuration. Every section is optional in the file; missing
/// keys keep their defaults, unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 7;
  std::string output_dir;
  DataSection data;
  ModelConfig model;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  EvalSection eval;
  AblationSection ablation;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  nlohmann::json to_json() const;
};

/// Default output root: $AIDMAE_OUTPUT_DIR, else "runs".
std::string default_output_dir();

}  // namespace aidmae
