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

#include "aidmae/registry.hpp"

#include <fstream>
#include <set>

#include "aidmae/errors.hpp"
#include "aidmae/rng.hpp"

namespace aidmae {

using nlohmann::json;

const char* to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::kLab:
      return "lab";
    case FeatureKind::kVital:
      return "vital";
    case FeatureKind::kVasopressor:
      return "vasopressor";
    case FeatureKind::kNeEquivalent:
      return "ne_equivalent";
  }
  return "?";
}

FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "lab") return FeatureKind::kLab;
  if (s == "vital") return FeatureKind::kVital;
  if (s == "vasopressor") return FeatureKind::kVasopressor;
  if (s == "ne_equivalent") return FeatureKind::kNeEquivalent;
  throw ConfigError("registry: unknown feature kind '" + s + "'");
}

FeatureRegistry::FeatureRegistry(std::vector<Feature> features, bool hourly)
    : features_(std::move(features)), hourly_(hourly) {
  rebuild();
}

void FeatureRegistry::set_hourly(bool h) {
  hourly_ = h;
  rebuild();
}

void FeatureRegistry::rebuild() {
  slots_.clear();
  item_index_.clear();
  std::set<std::string> names;
  static const std::set<std::string> kRoles = {"ne", "epi", "dop", "phen", "vas"};
  for (std::size_t f = 0; f < features_.size(); ++f) {
    const Feature& ft = features_[f];
    if (ft.name.empty() || !names.insert(ft.name).second) {
      throw ConfigError("registry: feature names must be unique and non-empty ('" + ft.name + "')");
    }
    for (const auto& [item, conv] : ft.items) {
      if (!conv.empty() && conv != "f_to_c") throw ConfigError("registry: unknown conversion '" + conv + "'");
      if (!item_index_.emplace(item, f).second) {
        throw ConfigError("registry: item '" + item + "' mapped to more than one feature");
      }
    }
    for (const auto& [item, role] : ft.components) {
      if (ft.kind != FeatureKind::kNeEquivalent) {
        throw ConfigError("registry: only ne_equivalent features may list components ('" + ft.name + "')");
      }
      if (!kRoles.count(role)) throw ConfigError("registry: unknown NE-equivalent role '" + role + "'");
    }
    if (ft.kind == FeatureKind::kLab) {
      slots_.push_back({f, SlotRole::kValue, -1});
      if (ft.reference) slots_.push_back({f, SlotRole::kReference, -1});
    } else if (hourly_) {
      for (int h = 0; h < 24; ++h) slots_.push_back({f, SlotRole::kHour, h});
    } else {
      slots_.push_back({f, SlotRole::kDaily, -1});
    }
  }
}

std::optional<std::size_t> FeatureRegistry::find(const std::string& name) const {
  for (std::size_t f = 0; f < features_.size(); ++f)
    if (features_[f].name == name) return f;
  return std::nullopt;
}

std::vector<std::size_t> FeatureRegistry::slots_of(std::size_t f) const {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < slots_.size(); ++s)
    if (slots_[s].feature == f) out.push_back(s);
  return out;
}

std::vector<std::size_t> FeatureRegistry::slot_features() const {
  std::vector<std::size_t> out(slots_.size());
  for (std::size_t s = 0; s < slots_.size(); ++s) out[s] = slots_[s].feature;
  return out;
}

std::string FeatureRegistry::slot_name(std::size_t slot) const {
  const Slot& s = slots_.at(slot);
  const std::string& n = features_[s.feature].name;
  switch (s.role) {
    case SlotRole::kValue:
      return n;
    case SlotRole::kReference:
      return n + "@ref";
    case SlotRole::kHour:
      return n + "@h" + std::to_string(s.hour);
    case SlotRole::kDaily:
      return n + "@day";
  }
  return n;
}

std::optional<std::size_t> FeatureRegistry::feature_for_item(const std::string& item) const {
  auto it = item_index_.find(item);
  if (it == item_index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::pair<std::size_t, std::string>> FeatureRegistry::components_for_item(const std::string& item) const {
  std::vector<std::pair<std::size_t, std::string>> out;
  for (std::size_t f = 0; f < features_.size(); ++f) {
    auto it = features_[f].components.find(item);
    if (it != features_[f].components.end()) out.emplace_back(f, it->second);
  }
  return out;
}

namespace {

const std::set<std::string> kFeatureKeys = {"name", "kind", "unit", "group", "items", "reference", "components", "stats"};
const std::set<std::string> kRegistryKeys = {"version", "hourly", "features"};

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

}  // namespace

FeatureRegistry FeatureRegistry::from_json(const json& j) {
  try {
    if (!j.is_object()) throw ConfigError("registry: expected a JSON object");
    reject_unknown(j, kRegistryKeys, "registry");
    std::vector<Feature> feats;
    for (const json& fj : j.at("features")) {
      reject_unknown(fj, kFeatureKeys, "registry feature");
      Feature f;
      f.name = fj.at("name").get<std::string>();
      f.kind = feature_kind_from_string(fj.at("kind").get<std::string>());
      f.unit = fj.value("unit", "");
      f.group = fj.value("group", "");
      f.reference = fj.value("reference", f.kind == FeatureKind::kLab);
      if (fj.contains("items")) {
        for (const json& it : fj.at("items")) {
          if (it.is_string()) {
            f.items[it.get<std::string>()] = "";
          } else {
            f.items[it.at("id").get<std::string>()] = it.value("convert", "");
          }
        }
      }
      if (fj.contains("components")) {
        for (const auto& [item, role] : fj.at("components").items()) f.components[item] = role.get<std::string>();
      }
      if (fj.contains("stats")) {
        const json& s = fj.at("stats");
        f.stats.fitted = true;
        f.stats.constant = s.at("constant").get<bool>();
        f.stats.n_obs = s.at("n_obs").get<std::size_t>();
        f.stats.p05 = s.at("p05").get<double>();
        f.stats.p95 = s.at("p95").get<double>();
        f.stats.min = s.at("min").get<double>();
        f.stats.max = s.at("max").get<double>();
      }
      feats.push_back(std::move(f));
    }
    return FeatureRegistry(std::move(feats), j.value("hourly", true));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("registry: ") + e.what());
  }
}

FeatureRegistry FeatureRegistry::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open registry file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("registry '" + path + "': " + e.what());
  }
  return from_json(j);
}

json FeatureRegistry::to_json(bool with_stats) const {
  json feats = json::array();
  for (const Feature& f : features_) {
    json fj;
    fj["name"] = f.name;
    fj["kind"] = to_string(f.kind);
    if (!f.unit.empty()) fj["unit"] = f.unit;
    if (!f.group.empty()) fj["group"] = f.group;
    if (f.kind == FeatureKind::kLab) fj["reference"] = f.reference;
    if (!f.items.empty()) {
      json items = json::array();
      for (const auto& [id, conv] : f.items) {
        if (conv.empty()) {
          items.push_back(id);
        } else {
          items.push_back({{"id", id}, {"convert", conv}});
        }
      }
      fj["items"] = items;
    }
    if (!f.components.empty()) fj["components"] = f.components;
    if (with_stats && f.stats.fitted) {
      fj["stats"] = {{"constant", f.stats.constant}, {"n_obs", f.stats.n_obs}, {"p05", f.stats.p05},
                     {"p95", f.stats.p95},           {"min", f.stats.min},     {"max", f.stats.max}};
    }
    feats.push_back(std::move(fj));
  }
  return {{"version", 1}, {"hourly", hourly_}, {"features", feats}};
}

std::uint64_t FeatureRegistry::layout_hash() const { return fnv1a(to_json(false).dump()); }

}  // namespace aidmae
