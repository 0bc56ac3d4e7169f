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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace aidmae {

enum class FeatureKind { kLab, kVital, kVasopressor, kNeEquivalent };

const char* to_string(FeatureKind k);
FeatureKind feature_kind_from_string(const std::string& s);

/// Winsorization and min-max statistics fitted on the training split.
struct NormStats {
  bool fitted = false;
  bool constant = false;  // fewer than two distinct observations
  std::size_t n_obs = 0;
  double p05 = 0.0;
  double p95 = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct Feature {
  std::string name;
  FeatureKind kind = FeatureKind::kLab;
  std::string unit;
  std::string group;  // panel name used by panel imputation
  // Source item ids mapped onto this feature, with an optional unit conversion.
  std::map<std::string, std::string> items;  // item id -> conversion ("" or "f_to_c")
  bool reference = true;                     // labs only: add a prior-day reference slot
  // NE-equivalent only: item id -> role in {ne, epi, dop, phen, vas}.
  std::map<std::string, std::string> components;
  NormStats stats;

  bool hourly_kind() const { return kind != FeatureKind::kLab; }
};

enum class SlotRole { kValue, kReference, kHour, kDaily };

struct Slot {
  std::size_t feature = 0;
  SlotRole role = SlotRole::kValue;
  int hour = -1;  // 0..23 for kHour
};

/// Ordered feature catalogue. The order fixes the grid layout: labs take a
/// value slot and an optional reference slot, hourly kinds take 24 slots
/// (or a single daily slot when `hourly` is false).
class FeatureRegistry {
 public:
  FeatureRegistry() = default;
  explicit FeatureRegistry(std::vector<Feature> features, bool hourly = true);

  static FeatureRegistry from_json(const nlohmann::json& j);
  static FeatureRegistry load(const std::string& path);
  nlohmann::json to_json(bool with_stats = true) const;
  // Hash of the layout (features, kinds, items), independent of fitted stats.
  std::uint64_t layout_hash() const;

  const std::vector<Feature>& features() const { return features_; }
  std::vector<Feature>& features() { return features_; }
  const Feature& feature(std::size_t i) const { return features_.at(i); }
  std::size_t feature_count() const { return features_.size(); }
  std::optional<std::size_t> find(const std::string& name) const;

  bool hourly() const { return hourly_; }
  void set_hourly(bool h);

  const std::vector<Slot>& slots() const { return slots_; }
  std::size_t grid_length() const { return slots_.size(); }
  // Slot indices belonging to feature f.
  std::vector<std::size_t> slots_of(std::size_t f) const;
  std::string slot_name(std::size_t slot) const;
  // Feature index for every slot.
  std::vector<std::size_t> slot_features() const;

  // Item id lookup: the feature fed directly by the item (if any).
  std::optional<std::size_t> feature_for_item(const std::string& item) const;
  // Every NE-equivalent feature that lists the item as a component, with its role.
  std::vector<std::pair<std::size_t, std::string>> components_for_item(const std::string& item) const;

 private:
  void rebuild();

  std::vector<Feature> features_;
  bool hourly_ = true;
  std::vector<Slot> slots_;
  std::map<std::string, std::size_t> item_index_;
};

}  // namespace aidmae
