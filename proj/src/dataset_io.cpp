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

#include "aidmae/dataset_io.hpp"

#include <fstream>

#include "aidmae/errors.hpp"
#include "aidmae/manifest.hpp"
#include "binio.hpp"

namespace aidmae {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'A', 'I', 'D', 'M', 'A', 'E', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

json write_dataset(const Dataset& ds, const fs::path& dir, json provenance) {
  fs::create_directories(dir);
  const std::size_t N = ds.samples.size(), L = ds.grid_length();
  {
    std::ofstream out(dir / kDatasetFile, std::ios::binary);
    if (!out) throw DataError("cannot write '" + (dir / kDatasetFile).string() + "'");
    out.write(kMagic, sizeof kMagic);
    binio::put(out, kVersion);
    binio::put<std::uint64_t>(out, N);
    binio::put<std::uint64_t>(out, L);
    binio::put<std::uint8_t>(out, ds.normalized ? 1 : 0);
    binio::put_string(out, ds.variant);
    for (const auto& s : ds.samples) binio::put_string(out, s.subject_id);
    for (const auto& s : ds.samples) binio::put_string(out, s.stay_id);
    std::vector<std::int32_t> day(N);
    std::vector<double> admit(N);
    std::vector<std::int8_t> labels(N * kTaskCount), split(N);
    std::vector<double> x(N * L), t(N * L);
    std::vector<std::uint8_t> m(N * L);
    for (std::size_t i = 0; i < N; ++i) {
      const auto& s = ds.samples[i];
      if (s.x.size() != L || s.t.size() != L || s.m.size() != L) {
        throw ContractError("write_dataset: sample " + std::to_string(i) + " does not match the grid length");
      }
      day[i] = s.day_index;
      admit[i] = s.admit_time;
      for (std::size_t k = 0; k < kTaskCount; ++k) labels[i * kTaskCount + k] = s.labels[k];
      split[i] = static_cast<std::int8_t>(s.split);
      std::copy(s.x.begin(), s.x.end(), x.begin() + static_cast<std::ptrdiff_t>(i * L));
      std::copy(s.t.begin(), s.t.end(), t.begin() + static_cast<std::ptrdiff_t>(i * L));
      std::copy(s.m.begin(), s.m.end(), m.begin() + static_cast<std::ptrdiff_t>(i * L));
    }
    binio::put_vector(out, day);
    binio::put_vector(out, admit);
    binio::put_vector(out, labels);
    binio::put_vector(out, split);
    binio::put_vector(out, x);
    binio::put_vector(out, t);
    binio::put_vector(out, m);
  }
  {
    std::ofstream out(dir / kRegistryFile);
    out << ds.registry.to_json(true).dump(2) << '\n';
  }
  provenance["n_samples"] = N;
  provenance["grid_length"] = L;
  provenance["variant"] = ds.variant;
  provenance["normalized"] = ds.normalized;
  provenance["registry_layout_hash"] = hex64(ds.registry.layout_hash());
  json counts = json::object();
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest, Split::kUnassigned})
    counts[to_string(s)] = ds.indices(s).size();
  provenance["split_counts"] = counts;
  return write_manifest(dir, "dataset", std::move(provenance), {kDatasetFile, kRegistryFile});
}

Dataset read_dataset(const fs::path& dir) {
  read_manifest(dir, "dataset");
  Dataset ds;
  ds.registry = FeatureRegistry::load((dir / kRegistryFile).string());
  std::ifstream in(dir / kDatasetFile, std::ios::binary);
  if (!in) throw DataError("cannot open '" + (dir / kDatasetFile).string() + "'");
  char magic[8];
  if (!in.read(magic, sizeof magic) || !std::equal(magic, magic + 8, kMagic)) {
    throw DataError("'" + (dir / kDatasetFile).string() + "' is not a dataset container");
  }
  if (binio::get<std::uint32_t>(in) != kVersion) throw DataError("unsupported dataset container version");
  const auto N = binio::get<std::uint64_t>(in);
  const auto L = binio::get<std::uint64_t>(in);
  ds.normalized = binio::get<std::uint8_t>(in) != 0;
  ds.variant = binio::get_string(in);
  if (L != ds.registry.grid_length()) throw DataError("dataset grid length disagrees with its registry");
  ds.samples.resize(N);
  for (auto& s : ds.samples) s.subject_id = binio::get_string(in);
  for (auto& s : ds.samples) s.stay_id = binio::get_string(in);
  const auto day = binio::get_vector<std::int32_t>(in);
  const auto admit = binio::get_vector<double>(in);
  const auto labels = binio::get_vector<std::int8_t>(in);
  const auto split = binio::get_vector<std::int8_t>(in);
  const auto x = binio::get_vector<double>(in);
  const auto t = binio::get_vector<double>(in);
  const auto m = binio::get_vector<std::uint8_t>(in);
  if (day.size() != N || admit.size() != N || labels.size() != N * kTaskCount || split.size() != N ||
      x.size() != N * L || t.size() != N * L || m.size() != N * L) {
    throw DataError("dataset container columns have inconsistent lengths");
  }
  for (std::size_t i = 0; i < N; ++i) {
    auto& s = ds.samples[i];
    s.day_index = day[i];
    s.admit_time = admit[i];
    for (std::size_t k = 0; k < kTaskCount; ++k) s.labels[k] = labels[i * kTaskCount + k];
    s.split = static_cast<Split>(split[i]);
    s.x.assign(x.begin() + static_cast<std::ptrdiff_t>(i * L), x.begin() + static_cast<std::ptrdiff_t>((i + 1) * L));
    s.t.assign(t.begin() + static_cast<std::ptrdiff_t>(i * L), t.begin() + static_cast<std::ptrdiff_t>((i + 1) * L));
    s.m.assign(m.begin() + static_cast<std::ptrdiff_t>(i * L), m.begin() + static_cast<std::ptrdiff_t>((i + 1) * L));
  }
  return ds;
}

std::string dataset_hash(const fs::path& dir) {
  const json m = read_manifest(dir, "dataset");
  return m.at("files").at(kDatasetFile).get<std::string>();
}

}  // namespace aidmae
