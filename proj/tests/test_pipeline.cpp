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


#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <vector>

#include "aidmae/errors.hpp"
#include "aidmae/pipeline.hpp"
#include "aidmae/rng.hpp"
#include "aidmae/synth.hpp"
#include "oracles.hpp"

using namespace aidmae;
using nlohmann::json;

namespace {

constexpr double kDay = 1440.0;

FeatureRegistry icu_registry(bool reference = true) {
  const json j = {
      {"features",
       {{{"name", "sodium"}, {"kind", "lab"}, {"group", "chem"}, {"reference", reference}, {"items", {"50983"}}},
        {{"name", "creatinine"}, {"kind", "lab"}, {"group", "renal"}, {"reference", reference}, {"items", {"50912"}}},
        {{"name", "heart_rate"}, {"kind", "vital"}, {"items", {"220045"}}},
        {{"name", "temperature"}, {"kind", "vital"}, {"items", {{{"id", "223761"}, {"convert", "f_to_c"}}}}},
        {{"name", "vasopressin"}, {"kind", "vasopressor"}, {"items", {"222315"}}},
        {{"name", "ne_equivalent"},
         {"kind", "ne_equivalent"},
         {"components", {{"221906", "ne"}, {"221289", "epi"}, {"221662", "dop"}, {"221749", "phen"}, {"222315", "vas"}}}}}}};
  return FeatureRegistry::from_json(j);
}

EventRecord ev(const std::string& subject, const std::string& item, double minutes, double value,
               std::optional<double> end = std::nullopt, const std::string& stay = "") {
  return {subject, stay.empty() ? subject + "-1" : stay, item, minutes, value, end};
}

std::size_t slot(const FeatureRegistry& r, const std::string& name, std::size_t k = 0) {
  return r.slots_of(*r.find(name)).at(k);
}

}  // namespace

TEST_CASE("norepinephrine-equivalent dose") {
  CHECK(*ne_equivalent(0.0, 0.0, 0.0, 0.0, 0.0) == 0.0);
  CHECK(*ne_equivalent(0.1, 0.05, 15.0, 2.0, 0.04) == doctest::Approx(0.55).epsilon(1e-15));
  CHECK(*ne_equivalent(std::nullopt, std::nullopt, std::nullopt, std::nullopt, 0.02) ==
        doctest::Approx(0.05).epsilon(1e-15));
  CHECK_FALSE(ne_equivalent(std::nullopt, std::nullopt, std::nullopt, std::nullopt, std::nullopt).has_value());
  CHECK_THROWS_AS(ne_equivalent(-0.1, std::nullopt, std::nullopt, std::nullopt, std::nullopt), DataError);

  // Linearity by superposition on random doses.
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    double a[5], b[5];
    for (int k = 0; k < 5; ++k) {
      a[k] = rng.uniform(0.0, 20.0);
      b[k] = rng.uniform(0.0, 20.0);
    }
    const double fa = *ne_equivalent(a[0], a[1], a[2], a[3], a[4]);
    const double fb = *ne_equivalent(b[0], b[1], b[2], b[3], b[4]);
    const double fab = *ne_equivalent(a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3], a[4] + b[4]);
    CHECK(std::abs(fab - fa - fb) < 1e-12);
  }
}

TEST_CASE("winsorization quantiles") {
  std::vector<double> v;
  for (int i = 100; i >= 1; --i) v.push_back(i);
  const WinsorStats s = winsorize_fit(v);
  CHECK(s.p05 == doctest::Approx(5.95).epsilon(1e-14));
  CHECK(s.p95 == doctest::Approx(95.05).epsilon(1e-14));
  CHECK(s.p05 == oracle::interp_quantile(v, 0.05));
  CHECK(s.p95 == oracle::interp_quantile(v, 0.95));
  CHECK(winsorize_apply(s, 100.0) == s.p95);
  CHECK(winsorize_apply(s, 1.0) == s.p05);
  CHECK(winsorize_apply(s, 42.0) == 42.0);

  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> r(2 + rng.below(200));
    for (double& x : r) x = rng.normal();
    const WinsorStats w = winsorize_fit(r);
    CHECK(std::abs(w.p05 - oracle::interp_quantile(r, 0.05)) < 1e-14);
    CHECK(std::abs(w.p95 - oracle::interp_quantile(r, 0.95)) < 1e-14);
  }

  const std::vector<double> same(7, 3.25);
  const WinsorStats c = winsorize_fit(same);
  CHECK(c.p05 == 3.25);
  CHECK(c.p95 == 3.25);
  CHECK(winsorize_apply(c, -100.0) == 3.25);
  const std::vector<double> one = {2.0};
  CHECK(winsorize_fit(one).degenerate);
}

TEST_CASE("min-max scaling") {
  NormStats s;
  s.fitted = true;
  s.min = 2.0;
  s.max = 10.0;
  CHECK(minmax_apply(s, 2.0) == 0.0);
  CHECK(minmax_apply(s, 10.0) == 1.0);
  CHECK(minmax_apply(s, 6.0) == 0.5);
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.uniform(2.0, 10.0);
    CHECK(std::abs(minmax_invert(s, minmax_apply(s, v)) - v) < 1e-12);
  }
  s.constant = true;
  CHECK(minmax_apply(s, 7.0) == 0.0);
}

TEST_CASE("timestamps count hours before midnight") {
  CHECK(hours_before_midnight(21 * 60.0, 0) == 3.0);
  CHECK(hours_before_midnight(kDay + 20 * 60.0 + 30.0, 2) == 27.5);
  CHECK(hours_before_midnight(kDay + 23 * 60.0 + 57.0, 1) == 0.1);
}

TEST_CASE("daily grid construction") {
  const FeatureRegistry reg = icu_registry();
  const double d1 = kDay;  // day 1 starts here
  std::vector<EventRecord> events = {
      ev("p1", "50983", 20 * 60.0 + 30.0, 141.0),       // day 0, 20:30
      ev("p1", "50983", d1 + 21 * 60.0, 138.0),         // day 1, 21:00
      ev("p1", "50983", d1 + 8 * 60.0, 135.0),          // day 1, earlier result
      ev("p1", "220045", d1 + 5 * 60.0 + 10.0, 90.0),   // hour 5
      ev("p1", "220045", d1 + 5 * 60.0 + 50.0, 95.0),   // hour 5, later
      ev("p1", "223761", d1 + 6 * 60.0, 98.6),          // Fahrenheit
      ev("p1", "221662", d1 + 2 * 60.0 + 10.0, 15.0, d1 + 4 * 60.0 + 40.0),  // dopamine 02:10-04:40
      ev("p1", "222315", d1 + 2 * 60.0 + 10.0, 0.04, d1 + 4 * 60.0 + 40.0),  // vasopressin
      ev("p1", "220045", 2 * d1 + 10 * 60.0, 80.0),     // day 2: vitals only
      ev("p1", "999999", d1, 1.0),                      // unknown item
  };
  GridDiagnostics diag;
  const auto rows = build_daily_grid(events, reg, &diag);
  REQUIRE(rows.size() == 2);
  CHECK(diag.days_without_labs == 1);
  CHECK(diag.events_unknown_item == 1);
  CHECK(rows[0].day_index == 0);
  CHECK(rows[1].day_index == 1);
  CHECK(rows[0].admit_time == 20 * 60.0 + 30.0);

  const auto& r0 = rows[0];
  const std::size_t na = slot(reg, "sodium"), na_ref = slot(reg, "sodium", 1);
  CHECK(r0.m[na] == 1);
  CHECK(r0.x[na] == 141.0);
  CHECK(r0.t[na] == 3.5);
  CHECK(r0.m[na_ref] == 0);

  const auto& r = rows[1];
  CHECK(r.x[na] == 138.0);
  CHECK(r.t[na] == 3.0);
  CHECK(r.m[na_ref] == 1);
  CHECK(r.x[na_ref] == 141.0);
  CHECK(r.t[na_ref] == 27.5);
  CHECK(r.m[slot(reg, "creatinine")] == 0);

  const std::size_t hr5 = slot(reg, "heart_rate", 5);
  CHECK(r.x[hr5] == 95.0);
  CHECK(r.t[hr5] == doctest::Approx(18.2).epsilon(1e-15));
  CHECK(r.m[slot(reg, "heart_rate", 4)] == 0);
  CHECK(r.x[slot(reg, "temperature", 6)] == doctest::Approx(37.0).epsilon(1e-14));

  for (const char* name : {"vasopressin", "ne_equivalent"}) {
    for (int h = 0; h < 24; ++h) {
      const std::size_t s = slot(reg, name, static_cast<std::size_t>(h));
      const bool on = h >= 2 && h <= 4;
      CHECK(r.m[s] == on);
      if (on) CHECK(r.t[s] == 24.0 - h - 0.5);
    }
  }
  CHECK(r.t[slot(reg, "ne_equivalent", 3)] == 20.5);
  CHECK(r.x[slot(reg, "ne_equivalent", 3)] == doctest::Approx(15.0 / 150.0 + 2.5 * 0.04).epsilon(1e-15));
  CHECK(r.x[slot(reg, "vasopressin", 3)] == 0.04);

  // Same events in another order build identical rows.
  std::vector<EventRecord> shuffled(events.rbegin(), events.rend());
  const auto again = build_daily_grid(shuffled, reg);
  REQUIRE(again.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(again[i].x == rows[i].x);
    CHECK(again[i].t == rows[i].t);
    CHECK(again[i].m == rows[i].m);
  }

  SUBCASE("a day with only a reference value is discarded") {
    const std::vector<EventRecord> e = {ev("p2", "50983", 60.0, 140.0), ev("p2", "220045", d1 + 60.0, 70.0)};
    CHECK(build_daily_grid(e, reg).size() == 1);
  }
  SUBCASE("negative doses are quarantined") {
    std::vector<EventRecord> e = {ev("p3", "50983", 60.0, 140.0), ev("p3", "221906", 120.0, -1.0, 180.0)};
    GridDiagnostics dq;
    const auto out = build_daily_grid(e, reg, &dq);
    CHECK(dq.events_quarantined == 1);
    CHECK(out[0].m[slot(reg, "ne_equivalent", 2)] == 0);
  }
}

TEST_CASE("event files with ISO timestamps") {
  const auto path = std::filesystem::temp_directory_path() / "aidmae_events_test.csv";
  {
    std::ofstream out(path);
    out << "subject_id,stay_id,feature_id,time,value,end_time\n"
        << "s1,a,50983,2150-03-01T21:00,138,\n"
        << "s1,a,221906,2150-03-01 02:10:00,0.1,2150-03-01T04:40\n";
  }
  const auto events = read_event_csv(path.string(), TimeFormat::kIso8601);
  REQUIRE(events.size() == 2);
  CHECK(std::fmod(events[0].time, kDay) == 21 * 60.0);
  CHECK(!events[0].end_time.has_value());
  CHECK(*events[1].end_time - events[1].time == 150.0);
  CHECK_THROWS_AS(parse_time("2150-13-01", TimeFormat::kIso8601), DataError);
  CHECK_THROWS_AS(read_event_csv("/nonexistent/events.csv", TimeFormat::kEpochMinutes), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("subject-disjoint splits on adversarial inputs") {
  const FeatureRegistry reg = icu_registry(false);
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<EventRecord> events;
    const int subjects = 5 + static_cast<int>(rng.below(40));
    for (int s = 0; s < subjects; ++s) {
      const std::string sid = "s" + std::to_string(s);
      const int stays = 1 + static_cast<int>(rng.below(4));
      for (int k = 0; k < stays; ++k) {
        // Stays straddle the cut at day 50 on purpose.
        const double start = std::floor(rng.uniform(40.0, 60.0)) * kDay + rng.uniform(0.0, 600.0);
        const std::string stay = sid + "-" + std::to_string(k);
        for (int d = 0; d < 1 + static_cast<int>(rng.below(3)); ++d)
          events.push_back(ev(sid, "50983", start + d * kDay, 140.0 + d, std::nullopt, stay));
      }
    }
    Dataset ds = build_dataset(events, reg);
    const SplitReport rep = split_dataset(ds, 50 * kDay, 0.2, static_cast<std::uint64_t>(trial));
    std::map<std::string, std::set<Split>> seen;
    std::map<std::string, bool> any_before;
    for (const auto& s : ds.samples) {
      seen[s.subject_id].insert(s.split);
      any_before[s.subject_id] = any_before[s.subject_id] || s.admit_time < 50 * kDay;
    }
    for (const auto& [sid, splits] : seen) {
      CHECK(splits.size() == 1);
      CHECK(*splits.begin() != Split::kUnassigned);
      CHECK((*splits.begin() == Split::kTest) == !any_before[sid]);
    }
    CHECK(rep.train_subjects + rep.val_subjects + rep.test_subjects == seen.size());
  }

  // Everything before the cut: empty test split and a warning.
  std::vector<EventRecord> early = {ev("a", "50983", 10.0, 1.0), ev("b", "50983", 20.0, 2.0)};
  Dataset ds = build_dataset(early, reg);
  const SplitReport rep = split_dataset(ds, 1e9, 0.2, 1);
  CHECK(rep.test_subjects == 0);
  CHECK_FALSE(rep.warnings.empty());
}

TEST_CASE("normalization statistics come from the training split only") {
  const FeatureRegistry reg = icu_registry(false);
  Rng rng(12);
  std::vector<EventRecord> events;
  for (int s = 0; s < 60; ++s) {
    const std::string sid = "s" + std::to_string(s);
    events.push_back(ev(sid, "50983", s * kDay + 60.0, rng.uniform(120.0, 160.0)));
    events.push_back(ev(sid, "50912", s * kDay + 90.0, rng.uniform(0.5, 4.0)));
  }
  Dataset ds = build_dataset(events, reg);
  split_dataset(ds, 45 * kDay, 0.2, 3);
  Dataset corrupted = ds;
  for (auto& s : corrupted.samples)
    if (s.split != Split::kTrain)
      for (double& x : s.x) x = 1e6;
  fit_normalization(ds);
  fit_normalization(corrupted);
  CHECK(ds.registry.to_json() == corrupted.registry.to_json());

  // Stats agree with an independent fit over training values.
  std::vector<double> train_na;
  for (const auto& s : ds.samples)
    if (s.split == Split::kTrain) train_na.push_back(s.x[0]);
  const auto& st = ds.registry.feature(0).stats;
  CHECK(st.p05 == doctest::Approx(oracle::interp_quantile(train_na, 0.05)).epsilon(1e-14));
  CHECK(st.max == doctest::Approx(oracle::interp_quantile(train_na, 0.95)).epsilon(1e-14));

  const auto fitted = ds.registry.to_json();
  apply_normalization(ds);
  CHECK(ds.registry.to_json() == fitted);
  for (const auto& s : ds.samples)
    for (std::size_t k = 0; k < s.x.size(); ++k)
      if (s.m[k]) {
        CHECK(s.x[k] >= 0.0);
        CHECK(s.x[k] <= 1.0);
        CHECK(std::isfinite(s.t[k]));
      }
  CHECK_THROWS_AS(apply_normalization(ds), ContractError);
}

TEST_CASE("synthetic generator") {
  SynthConfig c;
  c.n_samples = 50000;
  c.n_labs = 4;
  c.missing_rates = {0.07, 0.88, 0.0, 0.0};
  const Dataset ds = synth_generate(c);
  std::vector<std::size_t> all(ds.samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const auto rates = feature_missing_rates(ds, all);
  CHECK(std::abs(rates[0] - 0.07) < 0.01);
  CHECK(std::abs(rates[1] - 0.88) < 0.01);
  CHECK(rates[2] == 0.0);
  for (const auto& s : ds.samples) CHECK(s.m[2] == 1);

  SynthConfig small;
  small.n_samples = 300;
  small.n_vitals = 1;
  small.n_vasopressors = 1;
  const Dataset a = synth_generate(small), b = synth_generate(small);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].x == b.samples[i].x);
    CHECK(a.samples[i].t == b.samples[i].t);
    CHECK(a.samples[i].m == b.samples[i].m);
    CHECK(a.samples[i].labels == b.samples[i].labels);
    CHECK(a.samples[i].split == b.samples[i].split);
  }
  small.seed = 8;
  CHECK(synth_generate(small).samples[0].x != a.samples[0].x);

  // Same-cluster features are strongly correlated, as declared.
  CHECK(synth_correlation(small, 0, 5) == doctest::Approx(0.95 * 0.95));
  CHECK(synth_correlation(small, 0, 1) == doctest::Approx(0.95 * 0.95 * 0.3));
  CHECK_THROWS_AS(SynthConfig::from_json(json{{"n_sample", 5}}), ConfigError);
}

TEST_CASE("input variants") {
  SynthConfig c;
  c.n_samples = 200;
  c.n_labs = 3;
  c.n_vitals = 2;
  c.n_vasopressors = 5;
  c.vaso_presence = 0.0;
  const Dataset ds = synth_generate(c);
  const std::size_t L = ds.grid_length();
  CHECK(L == 3 + 24 * 7);

  const Dataset full = input_variant(ds, InputVariant::kFull);
  CHECK(full.samples[0].x == ds.samples[0].x);

  const Dataset zf = input_variant(ds, InputVariant::kZeroFillVasopressor);
  const auto& slots = ds.registry.slots();
  std::size_t filled = 0;
  for (std::size_t k = 0; k < L; ++k) {
    if (ds.registry.feature(slots[k].feature).kind != FeatureKind::kVasopressor) {
      CHECK(zf.samples[0].m[k] == ds.samples[0].m[k]);
      continue;
    }
    CHECK(ds.samples[0].m[k] == 0);
    CHECK(zf.samples[0].m[k] == 1);
    CHECK(zf.samples[0].x[k] == 0.0);
    ++filled;
  }
  CHECK(filled == 120);

  const Dataset no24 = input_variant(ds, InputVariant::kNo24h);
  CHECK(no24.grid_length() == 3 + 7);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& src = ds.samples[i];
    const auto& dst = no24.samples[i];
    for (std::size_t k = 0; k < 3; ++k) CHECK(dst.x[k] == src.x[k]);
    // Daily vital slot holds the latest observed hour.
    for (std::size_t v = 0; v < 2; ++v) {
      const auto hours = ds.registry.slots_of(3 + v);
      std::optional<std::size_t> last;
      for (std::size_t s : hours)
        if (src.m[s]) last = s;
      CHECK(dst.m[3 + v] == last.has_value());
      if (last) CHECK(dst.x[3 + v] == src.x[*last]);
    }
  }
  CHECK_THROWS_AS(input_variant_from_string("half"), ConfigError);
}
