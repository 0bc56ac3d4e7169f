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
#include <filesystem>
#include <string>

#include <json.hpp>

namespace aidmae {

inline constexpr const char* kPipelineVersion = "1.0.0";
inline constexpr const char* kManifestFile = "manifest.json";

std::string hex64(std::uint64_t v);
std::uint64_t hash_file(const std::filesystem::path& path);

/// Writes `<dir>/manifest.json`: the given body plus kind, pipeline version
/// and a content hash for every listed output file (relative to dir).
nlohmann::json write_manifest(const std::filesystem::path& dir, const std::string& kind, nlohmann::json body,
                              const std::vector<std::string>& files);

/// Reads and validates a manifest: it must exist, have the expected kind, and
/// every recorded file hash must match the file on disk. Throws DataError.
nlohmann::json read_manifest(const std::filesystem::path& dir, const std::string& expected_kind);

}  // namespace aidmae
