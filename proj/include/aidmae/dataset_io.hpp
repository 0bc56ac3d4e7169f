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

#include <filesystem>

#include <json.hpp>

#include "aidmae/pipeline.hpp"

namespace aidmae {

inline constexpr const char* kDatasetFile = "dataset.bin";
inline constexpr const char* kRegistryFile = "registry.json";

/// Writes dataset.bin (columnar), registry.json (with fitted stats) and a
/// manifest that echoes `provenance`. Returns the manifest.
nlohmann::json write_dataset(const Dataset& ds, const std::filesystem::path& dir, nlohmann::json provenance);

/// Loads a processed dataset after verifying its manifest.
Dataset read_dataset(const std::filesystem::path& dir);

/// Content hash of a dataset directory as recorded in its manifest.
std::string dataset_hash(const std::filesystem::path& dir);

}  // namespace aidmae
