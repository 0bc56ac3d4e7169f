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

#include "aidmae/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <vector>

#include "aidmae/errors.hpp"
#include "aidmae/rng.hpp"

namespace aidmae {

namespace fs = std::filesystem;
using nlohmann::json;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t hash_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "' for hashing");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::vector<unsigned char> buf(1 << 16);
  while (in) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    const auto n = static_cast<std::size_t>(in.gcount());
    h = fnv1a(std::span<const unsigned char>(buf.data(), n), h);
  }
  return h;
}

json write_manifest(const fs::path& dir, const std::string& kind, json body, const std::vector<std::string>& files) {
  body["kind"] = kind;
  body["pipeline_version"] = kPipelineVersion;
  json hashes = json::object();
  for (const auto& f : files) hashes[f] = hex64(hash_file(dir / f));
  body["files"] = hashes;
  std::ofstream out(dir / kManifestFile);
  if (!out) throw DataError("cannot write manifest in '" + dir.string() + "'");
  out << body.dump(2) << '\n';
  return body;
}

json read_manifest(const fs::path& dir, const std::string& expected_kind) {
  const fs::path p = dir / kManifestFile;
  std::ifstream in(p);
  if (!in) throw DataError("missing manifest '" + p.string() + "' (run the producing command first)");
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw DataError("unreadable manifest '" + p.string() + "': " + e.what());
  }
  if (m.value("kind", "") != expected_kind) {
    throw DataError("manifest '" + p.string() + "' has kind '" + m.value("kind", "") + "', expected '" +
                    expected_kind + "'");
  }
  if (m.contains("files")) {
    for (const auto& [f, h] : m.at("files").items()) {
      if (!fs::exists(dir / f)) throw DataError("file '" + (dir / f).string() + "' listed in manifest is missing");
      if (hex64(hash_file(dir / f)) != h.get<std::string>()) {
        throw DataError("file '" + (dir / f).string() + "' does not match the hash recorded in its manifest");
      }
    }
  }
  return m;
}

}  // namespace aidmae
