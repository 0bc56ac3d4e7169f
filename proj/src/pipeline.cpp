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

#include "aidmae/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "aidmae/errors.hpp"
#include "aidmae/rng.hpp"

namespace aidmae {

namespace {

constexpr double kMinutesPerDay = 1440.0;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw DataError("cannot parse " + what + " '" + s + "'");
  }
  if (pos != s.size()) throw DataError("trailing characters in " + what + " '" + s + "'");
  return v;
}

double round_tenth(double h) { return std::round(h * 10.0) / 10.0; }

std::int64_t day_of(double minutes) { return static_cast<std::int64_t>(std::floor(minutes / kMinutesPerDay)); }

}  // namespace

double parse_time(const std::string& text, TimeFormat format) {
  if (format == TimeFormat::kEpochMinutes) return parse_number(text, "time");
  int y = 0, mo = 0, d = 0, hh = 0, mi = 0;
  double ss = 0.0;
  char sep = 0;
  // YYYY-MM-DDTHH:MM[:SS] or with a space separator.
  const int n = std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%lf", &y, &mo, &d, &sep, &hh, &mi, &ss);
  if (n < 3 || (n > 3 && n < 6) || (n >= 4 && sep != 'T' && sep != ' ')) {
    throw DataError("cannot parse ISO-8601 time '" + text + "'");
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw DataError("invalid calendar date '" + text + "'");
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<double>(days) * kMinutesPerDay + hh * 60.0 + mi + ss / 60.0;
}

std::vector<EventRecord> read_event_csv(const std::string& path, TimeFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open event file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("event file '" + path + "' is empty");
  const auto header = split_csv_line(line);
  const std::vector<std::string> expected = {"subject_id", "stay_id", "feature_id", "time", "value"};
  if (header.size() < 5 || !std::equal(expected.begin(), expected.end(), header.begin()) ||
      (header.size() == 6 && header[5] != "end_time") || header.size() > 6) {
    throw DataError("event file '" + path + "': header must be subject_id,stay_id,feature_id,time,value[,end_time]");
  }
  std::vector<EventRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("event file '" + path + "' line " + std::to_string(lineno) + ": expected " +
                      std::to_string(header.size()) + " fields");
    }
    EventRecord e;
    e.subject_id = cells[0];
    e.stay_id = cells[1];
    e.feature_id = cells[2];
    e.time = parse_time(cells[3], format);
    e.value = parse_number(cells[4], "value");
    if (header.size() == 6 && !cells[5].empty()) e.end_time = parse_time(cells[5], format);
    out.push_back(std::move(e));
  }
  return out;
}

const char* to_string(Task t) {
  switch (t) {
    case Task::kMortality:
      return "mortality";
    case Task::kLos72:
      return "los72";
    case Task::kAki:
      return "aki";
  }
  return "?";
}

Task task_from_string(const std::string& s) {
  if (s == "mortality") return Task::kMortality;
  if (s == "los72") return Task::kLos72;
  if (s == "aki") return Task::kAki;
  throw ConfigError("unknown task '" + s + "' (expected mortality, los72 or aki)");
}

const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
    case Split::kUnassigned:
      return "unassigned";
  }
  return "?";
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == s) out.push_back(i);
  return out;
}

// ---- formulas -------------------------------------------------------------------

std::optional<double> ne_equivalent(std::optional<double> ne, std::optional<double> epi, std::optional<double> dop,
                                    std::optional<double> phen, std::optional<double> vas) {
  if (!ne && !epi && !dop && !phen && !vas) return std::nullopt;
  for (const auto& v : {ne, epi, dop, phen, vas}) {
    if (v && *v < 0.0) throw DataError("ne_equivalent: negative dose " + std::to_string(*v));
  }
  return ne.value_or(0.0) + epi.value_or(0.0) + dop.value_or(0.0) / 150.0 + phen.value_or(0.0) / 10.0 +
         2.5 * vas.value_or(0.0);
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ContractError("quantile of empty data");
  if (sorted.size() == 1) return sorted[0];
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

WinsorStats winsorize_fit(std::span<const double> values) {
  WinsorStats s;
  if (values.empty()) {
    s.degenerate = true;
    return s;
  }
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  s.degenerate = v.size() < 2;
  s.p05 = quantile_sorted(v, 0.05);
  s.p95 = quantile_sorted(v, 0.95);
  return s;
}

double winsorize_apply(const WinsorStats& s, double v) { return std::clamp(v, s.p05, s.p95); }

double minmax_apply(const NormStats& s, double v) {
  if (s.constant || s.max <= s.min) return 0.0;
  return (v - s.min) / (s.max - s.min);
}

double minmax_invert(const NormStats& s, double v) {
  if (s.constant || s.max <= s.min) return s.min;
  return s.min + v * (s.max - s.min);
}

double hours_before_midnight(double time_minutes, std::int64_t day) {
  const double midnight = static_cast<double>(day + 1) * kMinutesPerDay;
  return round_tenth((midnight - time_minutes) / 60.0);
}

// ---- grid construction ----------------------------------------------------------

namespace {

struct Obs {
  double time;
  double value;
};

struct Interval {
  double start;
  double end;
  double rate;
};

// Last observation with time in [lo, hi).
const Obs* last_in(const std::vector<Obs>& obs, double lo, double hi) {
  auto it = std::lower_bound(obs.begin(), obs.end(), hi, [](const Obs& o, double t) { return o.time < t; });
  if (it == obs.begin()) return nullptr;
  --it;
  return it->time >= lo ? &*it : nullptr;
}

// Rate of the latest-starting interval overlapping [lo, hi).
std::optional<double> rate_in(const std::vector<Interval>& iv, double lo, double hi) {
  std::optional<double> r;
  for (const Interval& x : iv) {
    if (x.start >= hi) break;
    if (x.end > lo) r = x.rate;
  }
  return r;
}

}  // namespace

std::vector<TokenArray> build_daily_grid(std::span<const EventRecord> stay_events, const FeatureRegistry& registry,
                                         GridDiagnostics* diag) {
  GridDiagnostics local;
  GridDiagnostics& dg = diag ? *diag : local;
  if (!registry.hourly()) throw ConfigError("build_daily_grid: registry must use the hourly layout");
  const std::size_t F = registry.feature_count();
  std::vector<std::vector<Obs>> point_obs(F);
  std::map<std::string, std::vector<Interval>> drug;
  double first = std::numeric_limits<double>::infinity();
  double last = -std::numeric_limits<double>::infinity();

  for (const EventRecord& e : stay_events) {
    const auto feat = registry.feature_for_item(e.feature_id);
    const auto comps = registry.components_for_item(e.feature_id);
    if (!feat && comps.empty()) {
      ++dg.events_unknown_item;
      continue;
    }
    if (!std::isfinite(e.value) || !std::isfinite(e.time) || e.time < 0.0) {
      ++dg.events_quarantined;
      continue;
    }
    const bool is_drug = !comps.empty() || (feat && (registry.feature(*feat).kind == FeatureKind::kVasopressor ||
                                                     registry.feature(*feat).kind == FeatureKind::kNeEquivalent));
    if (is_drug) {
      if (e.value < 0.0 || (e.end_time && *e.end_time < e.time)) {
        ++dg.events_quarantined;
        continue;
      }
      const double end = e.end_time ? *e.end_time : e.time + 1e-6;
      drug[e.feature_id].push_back({e.time, end, e.value});
      first = std::min(first, e.time);
      last = std::max(last, end - 1e-9);
      continue;
    }
    double v = e.value;
    const Feature& ft = registry.feature(*feat);
    if (ft.items.at(e.feature_id) == "f_to_c") v = (v - 32.0) * 5.0 / 9.0;
    point_obs[*feat].push_back({e.time, v});
    first = std::min(first, e.time);
    last = std::max(last, e.time);
  }
  if (!std::isfinite(first)) return {};

  for (auto& o : point_obs)
    std::stable_sort(o.begin(), o.end(), [](const Obs& a, const Obs& b) { return a.time < b.time; });
  for (auto& [item, iv] : drug) {
    std::stable_sort(iv.begin(), iv.end(), [](const Interval& a, const Interval& b) { return a.start < b.start; });
    for (std::size_t i = 1; i < iv.size(); ++i)
      if (iv[i].start < iv[i - 1].end) ++dg.vasopressor_overlaps;
  }

  const auto& slots = registry.slots();
  const std::size_t L = slots.size();
  const std::int64_t d_first = day_of(first), d_last = day_of(last);
  const std::string& subject = stay_events.front().subject_id;
  const std::string& stay = stay_events.front().stay_id;
  std::vector<TokenArray> rows;

  for (std::int64_t D = d_first; D <= d_last; ++D) {
    const double d0 = static_cast<double>(D) * kMinutesPerDay;
    const double d1 = d0 + kMinutesPerDay;
    TokenArray row;
    row.x.assign(L, 0.0);
    row.t.assign(L, 0.0);
    row.m.assign(L, 0);
    bool has_lab = false;
    auto put = [&](std::size_t s, double value, double hours) {
      row.x[s] = value;
      row.t[s] = hours;
      row.m[s] = 1;
    };
    for (std::size_t s = 0; s < L; ++s) {
      const Slot& sl = slots[s];
      const Feature& ft = registry.feature(sl.feature);
      switch (sl.role) {
        case SlotRole::kValue:
          if (const Obs* o = last_in(point_obs[sl.feature], d0, d1)) {
            put(s, o->value, hours_before_midnight(o->time, D));
            has_lab = true;
          }
          break;
        case SlotRole::kReference:
          if (const Obs* o = last_in(point_obs[sl.feature], -std::numeric_limits<double>::infinity(), d0)) {
            put(s, o->value, hours_before_midnight(o->time, D));
          }
          break;
        case SlotRole::kHour: {
          const double h0 = d0 + 60.0 * sl.hour, h1 = h0 + 60.0;
          const double mid_hours = round_tenth((d1 - (h0 + 30.0)) / 60.0);
          if (ft.kind == FeatureKind::kVital) {
            if (const Obs* o = last_in(point_obs[sl.feature], h0, h1)) put(s, o->value, hours_before_midnight(o->time, D));
          } else if (ft.kind == FeatureKind::kVasopressor) {
            std::optional<double> r;
            for (const auto& [item, conv] : ft.items) {
              auto it = drug.find(item);
              if (it == drug.end()) continue;
              if (auto v = rate_in(it->second, h0, h1)) r = v;
            }
            if (r) put(s, *r, mid_hours);
          } else {
            std::map<std::string, std::optional<double>> by_role;
            for (const auto& [item, role] : ft.components) {
              auto it = drug.find(item);
              if (it == drug.end()) continue;
              if (auto v = rate_in(it->second, h0, h1)) by_role[role] = *v;
            }
            auto ne = ne_equivalent(by_role["ne"], by_role["epi"], by_role["dop"], by_role["phen"], by_role["vas"]);
            if (ne) put(s, *ne, mid_hours);
          }
          break;
        }
        case SlotRole::kDaily:
          break;
      }
    }
    if (!has_lab) {
      ++dg.days_without_labs;
      continue;
    }
    row.subject_id = subject;
    row.stay_id = stay;
    row.day_index = static_cast<std::int32_t>(D - d_first);
    row.admit_time = first;
    rows.push_back(std::move(row));
    ++dg.rows_emitted;
  }
  return rows;
}

Dataset build_dataset(std::span<const EventRecord> events, const FeatureRegistry& registry, GridDiagnostics* diag) {
  std::map<std::string, std::vector<EventRecord>> by_stay;
  std::map<std::string, std::string> stay_subject;
  for (const EventRecord& e : events) {
    auto [it, inserted] = stay_subject.emplace(e.stay_id, e.subject_id);
    if (!inserted && it->second != e.subject_id) {
      throw DataError("stay '" + e.stay_id + "' appears under subjects '" + it->second + "' and '" + e.subject_id + "'");
    }
    by_stay[e.stay_id].push_back(e);
  }
  Dataset ds;
  ds.registry = registry;
  for (auto& [stay, evs] : by_stay) {
    auto rows = build_daily_grid(evs, registry, diag);
    for (auto& r : rows) ds.samples.push_back(std::move(r));
  }
  return ds;
}

void attach_labels_csv(Dataset& ds, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("label file '" + path + "' is empty");
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "stay_id") throw DataError("label file '" + path + "': first column must be stay_id");
  std::vector<Task> cols;
  for (std::size_t c = 1; c < header.size(); ++c) {
    try {
      cols.push_back(task_from_string(header[c]));
    } catch (const ConfigError&) {
      throw DataError("label file '" + path + "': unknown task column '" + header[c] + "'");
    }
  }
  std::map<std::string, std::array<std::int8_t, kTaskCount>> labels;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw DataError("label file '" + path + "': ragged row");
    std::array<std::int8_t, kTaskCount> l{-1, -1, -1};
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const std::string& v = cells[c + 1];
      if (v.empty()) continue;
      if (v != "0" && v != "1") throw DataError("label file '" + path + "': labels must be 0, 1 or empty");
      l[static_cast<std::size_t>(cols[c])] = static_cast<std::int8_t>(v == "1");
    }
    labels[cells[0]] = l;
  }
  for (auto& s : ds.samples) {
    auto it = labels.find(s.stay_id);
    if (it != labels.end()) s.labels = it->second;
  }
}

// ---- splits and normalization ---------------------------------------------------

SplitReport split_dataset(Dataset& ds, double cut_time, double val_fraction, std::uint64_t seed) {
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw ConfigError("split: val_fraction must lie in [0, 1)");
  struct SubjectInfo {
    bool before = false;
    bool after = false;
  };
  std::map<std::string, SubjectInfo> subjects;
  for (const auto& s : ds.samples) {
    auto& info = subjects[s.subject_id];
    (s.admit_time < cut_time ? info.before : info.after) = true;
  }
  SplitReport rep;
  std::vector<std::string> early;
  std::set<std::string> test;
  for (const auto& [id, info] : subjects) {
    if (info.before) {
      early.push_back(id);
      if (info.after) {
        ++rep.spanning_subjects;
        rep.warnings.push_back("subject " + id + " spans the cut; assigned to the earlier side");
      }
    } else {
      test.insert(id);
    }
  }
  Rng rng(seed, 0x73706c6974ULL);
  rng.shuffle(early);
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(early.size())));
  std::set<std::string> val(early.begin(), early.begin() + static_cast<std::ptrdiff_t>(n_val));
  for (auto& s : ds.samples) {
    if (test.count(s.subject_id)) {
      s.split = Split::kTest;
    } else if (val.count(s.subject_id)) {
      s.split = Split::kVal;
    } else {
      s.split = Split::kTrain;
    }
  }
  rep.test_subjects = test.size();
  rep.val_subjects = val.size();
  rep.train_subjects = early.size() - val.size();
  if (test.empty()) rep.warnings.push_back("all subjects precede the cut; test split is empty");
  return rep;
}

void fit_normalization(Dataset& ds) {
  if (ds.normalized) throw ContractError("fit_normalization: dataset is already normalized");
  const auto train = ds.indices(Split::kTrain);
  const auto slot_feat = ds.registry.slot_features();
  std::vector<std::vector<double>> values(ds.registry.feature_count());
  for (std::size_t i : train) {
    const auto& s = ds.samples[i];
    for (std::size_t k = 0; k < slot_feat.size(); ++k)
      if (s.m[k]) values[slot_feat[k]].push_back(s.x[k]);
  }
  for (std::size_t f = 0; f < values.size(); ++f) {
    NormStats& st = ds.registry.features()[f].stats;
    const WinsorStats w = winsorize_fit(values[f]);
    st = NormStats{};
    st.fitted = true;
    st.n_obs = values[f].size();
    st.p05 = w.p05;
    st.p95 = w.p95;
    if (values[f].empty()) {
      st.constant = true;
      continue;
    }
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : values[f]) {
      const double c = winsorize_apply(w, v);
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    st.min = lo;
    st.max = hi;
    st.constant = w.degenerate || !(hi > lo);
  }
}

void apply_normalization(Dataset& ds) {
  if (ds.normalized) throw ContractError("apply_normalization: dataset is already normalized");
  const auto slot_feat = ds.registry.slot_features();
  for (const auto& f : ds.registry.features())
    if (!f.stats.fitted) throw ContractError("apply_normalization: feature '" + f.name + "' has no fitted stats");
  for (auto& s : ds.samples) {
    for (std::size_t k = 0; k < slot_feat.size(); ++k) {
      if (!s.m[k]) continue;
      const NormStats& st = ds.registry.feature(slot_feat[k]).stats;
      s.x[k] = minmax_apply(st, winsorize_apply({st.p05, st.p95, st.constant}, s.x[k]));
    }
  }
  ds.normalized = true;
}

// ---- variants -------------------------------------------------------------------

InputVariant input_variant_from_string(const std::string& s) {
  if (s == "full") return InputVariant::kFull;
  if (s == "zero_fill_vasopressor") return InputVariant::kZeroFillVasopressor;
  if (s == "no_24h") return InputVariant::kNo24h;
  throw ConfigError("unknown input variant '" + s + "' (expected full, zero_fill_vasopressor or no_24h)");
}

const char* to_string(InputVariant v) {
  switch (v) {
    case InputVariant::kFull:
      return "full";
    case InputVariant::kZeroFillVasopressor:
      return "zero_fill_vasopressor";
    case InputVariant::kNo24h:
      return "no_24h";
  }
  return "?";
}

Dataset input_variant(const Dataset& ds, InputVariant variant) {
  Dataset out = ds;
  if (variant == InputVariant::kFull) return out;
  if (ds.variant != "full") throw ConfigError("input_variant: dataset is already a '" + ds.variant + "' variant");
  out.variant = to_string(variant);
  const auto& slots = ds.registry.slots();
  if (variant == InputVariant::kZeroFillVasopressor) {
    for (auto& s : out.samples) {
      for (std::size_t k = 0; k < slots.size(); ++k) {
        const FeatureKind kind = ds.registry.feature(slots[k].feature).kind;
        if (s.m[k] || (kind != FeatureKind::kVasopressor && kind != FeatureKind::kNeEquivalent)) continue;
        s.m[k] = 1;
        s.x[k] = 0.0;
        s.t[k] = slots[k].role == SlotRole::kHour ? 23.5 - slots[k].hour : 12.0;
      }
    }
    return out;
  }
  if (!ds.registry.hourly()) throw ConfigError("input_variant: registry already uses daily slots");
  out.registry.set_hourly(false);
  const auto& new_slots = out.registry.slots();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& src = ds.samples[i];
    auto& dst = out.samples[i];
    dst.x.assign(new_slots.size(), 0.0);
    dst.t.assign(new_slots.size(), 0.0);
    dst.m.assign(new_slots.size(), 0);
    std::size_t k_src = 0;
    for (std::size_t k = 0; k < new_slots.size(); ++k) {
      const Slot& ns = new_slots[k];
      if (ns.role != SlotRole::kDaily) {
        // Lab slots keep their relative order in both layouts.
        while (slots[k_src].feature != ns.feature || slots[k_src].role != ns.role) ++k_src;
        dst.x[k] = src.x[k_src];
        dst.t[k] = src.t[k_src];
        dst.m[k] = src.m[k_src];
        ++k_src;
        continue;
      }
      // Last observed hour of the day.
      for (std::size_t s = 0; s < slots.size(); ++s) {
        if (slots[s].feature != ns.feature || !src.m[s]) continue;
        dst.x[k] = src.x[s];
        dst.t[k] = src.t[s];
        dst.m[k] = 1;
      }
      while (k_src < slots.size() && slots[k_src].feature == ns.feature) ++k_src;
    }
  }
  return out;
}

std::vector<std::size_t> first_day_indices(const Dataset& ds, Split split) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    if (ds.samples[i].split == split && ds.samples[i].day_index == 0) out.push_back(i);
  return out;
}

std::vector<double> feature_missing_rates(const Dataset& ds, std::span<const std::size_t> rows) {
  const auto slot_feat = ds.registry.slot_features();
  std::vector<double> missing(ds.registry.feature_count(), 0.0), total(ds.registry.feature_count(), 0.0);
  for (std::size_t i : rows) {
    const auto& s = ds.samples[i];
    for (std::size_t k = 0; k < slot_feat.size(); ++k) {
      total[slot_feat[k]] += 1.0;
      if (!s.m[k]) missing[slot_feat[k]] += 1.0;
    }
  }
  std::vector<double> rate(missing.size(), 1.0);
  for (std::size_t f = 0; f < rate.size(); ++f)
    if (total[f] > 0.0) rate[f] = missing[f] / total[f];
  return rate;
}

}  // namespace aidmae
