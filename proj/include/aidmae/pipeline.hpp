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

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aidmae/masking.hpp"
#include "aidmae/model.hpp"
#include "aidmae/registry.hpp"

namespace aidmae {

/// One clinical measurement. Times are minutes on the source clock; day
/// boundaries fall on multiples of 1440. Interval drugs carry an end time.
struct EventRecord {
  std::string subject_id;
  std::string stay_id;
  std::string feature_id;
  double time = 0.0;
  double value = 0.0;
  std::optional<double> end_time;
};

enum class TimeFormat { kEpochMinutes, kIso8601 };

double parse_time(const std::string& text, TimeFormat format);

/// Reads `subject_id,stay_id,feature_id,time,value[,end_time]`.
std::vector<EventRecord> read_event_csv(const std::string& path, TimeFormat format);

enum class Task : std::size_t { kMortality = 0, kLos72 = 1, kAki = 2 };
constexpr std::size_t kTaskCount = 3;
const char* to_string(Task t);
Task task_from_string(const std::string& s);

enum class Split : std::int8_t { kUnassigned = -1, kTrain = 0, kVal = 1, kTest = 2 };
const char* to_string(Split s);

/// One patient-day on the fixed grid. Missing slots hold x = t = 0.
struct TokenArray {
  std::vector<double> x;
  std::vector<double> t;
  std::vector<std::uint8_t> m;
  std::string subject_id;
  std::string stay_id;
  std::int32_t day_index = 0;   // days since the stay's first calendar day
  double admit_time = 0.0;      // stay start, minutes
  std::array<std::int8_t, kTaskCount> labels{-1, -1, -1};
  Split split = Split::kUnassigned;

  SampleView view() const { return {x, t}; }
  IntrinsicMask mask() const { return intrinsic_mask_from_bits(m); }
};

struct Dataset {
  FeatureRegistry registry;
  std::vector<TokenArray> samples;
  bool normalized = false;
  std::string variant = "full";

  std::size_t grid_length() const { return registry.grid_length(); }
  std::vector<std::size_t> indices(Split s) const;
};

// ---- formulas -------------------------------------------------------------------

/// NE + Epi + Dop/150 + Phen/10 + 2.5 Vas. Unrecorded drugs count as zero
/// when at least one is recorded; all unrecorded gives nullopt.
std::optional<double> ne_equivalent(std::optional<double> ne, std::optional<double> epi, std::optional<double> dop,
                                    std::optional<double> phen, std::optional<double> vas);

/// Linear-interpolation empirical quantile of sorted data.
double quantile_sorted(std::span<const double> sorted, double q);

struct WinsorStats {
  double p05 = 0.0;
  double p95 = 0.0;
  bool degenerate = false;  // fewer than two observations
};

WinsorStats winsorize_fit(std::span<const double> values);
double winsorize_apply(const WinsorStats& s, double v);

double minmax_apply(const NormStats& s, double v);
double minmax_invert(const NormStats& s, double v);

/// Hours between `time` and the end of `day` (midnight), rounded to 0.1 h.
double hours_before_midnight(double time_minutes, std::int64_t day);

// ---- grid construction ----------------------------------------------------------

struct GridDiagnostics {
  std::size_t events_unknown_item = 0;
  std::size_t events_quarantined = 0;
  std::size_t vasopressor_overlaps = 0;
  std::size_t days_without_labs = 0;
  std::size_t rows_emitted = 0;
  std::size_t subjects_spanning_cut = 0;
};

/// Daily rows for one stay with raw (unnormalized) values.
std::vector<TokenArray> build_daily_grid(std::span<const EventRecord> stay_events, const FeatureRegistry& registry,
                                         GridDiagnostics* diag = nullptr);

/// Groups events by stay and builds every stay's rows.
Dataset build_dataset(std::span<const EventRecord> events, const FeatureRegistry& registry,
                      GridDiagnostics* diag = nullptr);

/// Reads `stay_id,<task>...` with 0/1/empty cells and attaches labels.
void attach_labels_csv(Dataset& ds, const std::string& path);

// ---- splits and normalization ---------------------------------------------------

struct SplitReport {
  std::size_t train_subjects = 0;
  std::size_t val_subjects = 0;
  std::size_t test_subjects = 0;
  std::size_t spanning_subjects = 0;
  std::vector<std::string> warnings;
};

/// Stays admitted before `cut_time` go to train/val (val = `val_fraction` of
/// those subjects), later ones to test. Every subject lands in one split; a
/// subject with stays on both sides of the cut goes to the earlier side.
SplitReport split_dataset(Dataset& ds, double cut_time, double val_fraction, std::uint64_t seed);

/// Fits winsorization then min-max statistics per feature on training rows.
void fit_normalization(Dataset& ds);
/// Maps recorded values into [0, 1] with the registry's fitted stats.
void apply_normalization(Dataset& ds);

// ---- variants -------------------------------------------------------------------

enum class InputVariant { kFull, kZeroFillVasopressor, kNo24h };
InputVariant input_variant_from_string(const std::string& s);
const char* to_string(InputVariant v);

/// Returns a transformed copy: zero-filled vasopressor slots, or hourly
/// channels collapsed to one daily last-value slot.
Dataset input_variant(const Dataset& ds, InputVariant variant);

/// One sample per stay restricted to the first calendar day, for downstream tasks.
std::vector<std::size_t> first_day_indices(const Dataset& ds, Split split);

/// Per-feature fraction of missing slots over the given rows.
std::vector<double> feature_missing_rates(const Dataset& ds, std::span<const std::size_t> rows);

}  // namespace aidmae
