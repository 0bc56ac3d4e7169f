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
#include <string>
#include <vector>

#include <json.hpp>

#include "aidmae/model.hpp"
#include "aidmae/optim.hpp"

namespace aidmae {

/// Contents of a checkpoint file: model configuration, every parameter
/// array by name, optional optimizer moments, an optional snapshot of the
/// best parameters, and free-form metadata (cursor, seed, provenance).
struct CheckpointData {
  ModelConfig config;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<std::vector<double>> values;
  bool has_optimizer = false;
  std::uint64_t opt_step = 0;
  std::vector<std::vector<double>> m, v;
  std::vector<std::vector<double>> best;  // empty when not stored
  nlohmann::json meta;
};

void save_checkpoint(const std::string& path, const Model& model, const AdamW* opt, const nlohmann::json& meta,
                     const std::vector<std::vector<double>>& best = {});
CheckpointData read_checkpoint(const std::string& path);

/// Copies stored parameters into a model with the same layout. With
/// `use_best` the best-parameter snapshot is loaded instead (when present).
void load_params(Model& model, const CheckpointData& ck, bool use_best = false);
Model model_from_checkpoint(const CheckpointData& ck, bool use_best = false);

}  // namespace aidmae
