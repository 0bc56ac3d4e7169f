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

#include "aidmae/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "aidmae/config.hpp"
#include "aidmae/errors.hpp"
#include "aidmae/rng.hpp"
#include "binio.hpp"

namespace aidmae {

namespace {

constexpr char kMagic[8] = {'A', 'I', 'D', 'M', 'A', 'E', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const AdamW* opt, const nlohmann::json& meta,
                     const std::vector<std::vector<double>>& best) {
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, sizeof kMagic);
  binio::put(out, kVersion);
  binio::put_string(out, model_config_to_json(model.config()).dump());
  binio::put_string(out, meta.dump());
  const auto params = model.parameters();
  binio::put<std::uint64_t>(out, params.size());
  for (const auto& p : params) {
    binio::put_string(out, p.name);
    binio::put_vector(out, std::vector<std::uint64_t>(p.tensor.shape().begin(), p.tensor.shape().end()));
    binio::put_vector(out, std::vector<double>(p.tensor.data().begin(), p.tensor.data().end()));
  }
  binio::put<std::uint8_t>(out, opt ? 1 : 0);
  if (opt) {
    if (opt->size() != params.size()) throw ContractError("checkpoint: optimizer does not cover every parameter");
    binio::put<std::uint64_t>(out, opt->steps());
    for (std::size_t i = 0; i < opt->size(); ++i) {
      binio::put_vector(out, opt->first_moment(i));
      binio::put_vector(out, opt->second_moment(i));
    }
  }
  binio::put<std::uint64_t>(out, best.size());
  for (const auto& b : best) binio::put_vector(out, b);
  std::string bytes = out.str();
  const std::uint64_t h = fnv1a(bytes);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write checkpoint '" + path + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  binio::put(f, h);
  if (!f) throw DataError("failed writing checkpoint '" + path + "'");
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("missing checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof kMagic + 12) throw DataError("checkpoint '" + path + "' is truncated");
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  bytes.resize(bytes.size() - 8);
  if (fnv1a(bytes) != stored) throw DataError("checkpoint '" + path + "' failed its integrity check");

  std::istringstream in(bytes, std::ios::binary);
  char magic[8];
  in.read(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw DataError("'" + path + "' is not a checkpoint");
  if (binio::get<std::uint32_t>(in) != kVersion) throw DataError("unsupported checkpoint version");
  CheckpointData ck;
  try {
    ck.config = model_config_from_json(nlohmann::json::parse(binio::get_string(in)));
    ck.meta = nlohmann::json::parse(binio::get_string(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint metadata is corrupt: ") + e.what());
  }
  const auto n = binio::get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    ck.names.push_back(binio::get_string(in));
    auto dims = binio::get_vector<std::uint64_t>(in);
    ck.shapes.emplace_back(dims.begin(), dims.end());
    ck.values.push_back(binio::get_vector<double>(in));
    if (ck.values.back().size() != shape_numel(ck.shapes.back()))
      throw DataError("checkpoint parameter '" + ck.names.back() + "' has inconsistent size");
  }
  ck.has_optimizer = binio::get<std::uint8_t>(in) != 0;
  if (ck.has_optimizer) {
    ck.opt_step = binio::get<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < n; ++i) {
      ck.m.push_back(binio::get_vector<double>(in));
      ck.v.push_back(binio::get_vector<double>(in));
    }
  }
  const auto nb = binio::get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < nb; ++i) ck.best.push_back(binio::get_vector<double>(in));
  return ck;
}

void load_params(Model& model, const CheckpointData& ck, bool use_best) {
  auto params = model.parameters();
  if (model.config().grid_length != ck.config.grid_length)
    throw DataError("checkpoint grid length " + std::to_string(ck.config.grid_length) + " does not match the model (" +
                    std::to_string(model.config().grid_length) + ")");
  if (params.size() != ck.names.size()) throw DataError("checkpoint does not match the model layout");
  const auto& src = (use_best && !ck.best.empty()) ? ck.best : ck.values;
  if (src.size() != params.size()) throw DataError("checkpoint best-parameter snapshot is incomplete");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != ck.names[i] || params[i].tensor.shape() != ck.shapes[i])
      throw DataError("checkpoint parameter '" + ck.names[i] + "' does not match the model");
    auto dst = params[i].tensor.data();
    std::copy(src[i].begin(), src[i].end(), dst.begin());
  }
}

Model model_from_checkpoint(const CheckpointData& ck, bool use_best) {
  Model model(ck.config, 0);
  load_params(model, ck, use_best);
  return model;
}

}  // namespace aidmae
