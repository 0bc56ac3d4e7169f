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

#include "aidmae/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "aidmae/errors.hpp"
#include "aidmae/rng.hpp"

namespace aidmae {

using nlohmann::json;

SynthConfig SynthConfig::from_json(const json& j) {
  static const std::set<std::string> keys = {
      "n_samples",  "n_labs",         "lab_reference", "n_factors",   "loading",         "global_share",
      "missing_rates", "n_vitals",    "vital_missing", "n_vasopressors", "vaso_presence", "label_noise",
      "label_threshold", "test_fraction", "val_fraction", "seed"};
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) throw ConfigError("synth: unknown key '" + k + "'");
  SynthConfig c;
  try {
    c.n_samples = j.value("n_samples", c.n_samples);
    c.n_labs = j.value("n_labs", c.n_labs);
    c.lab_reference = j.value("lab_reference", c.lab_reference);
    c.n_factors = j.value("n_factors", c.n_factors);
    c.loading = j.value("loading", c.loading);
    c.global_share = j.value("global_share", c.global_share);
    c.missing_rates = j.value("missing_rates", c.missing_rates);
    c.n_vitals = j.value("n_vitals", c.n_vitals);
    c.vital_missing = j.value("vital_missing", c.vital_missing);
    c.n_vasopressors = j.value("n_vasopressors", c.n_vasopressors);
    c.vaso_presence = j.value("vaso_presence", c.vaso_presence);
    c.label_noise = j.value("label_noise", c.label_noise);
    c.label_threshold = j.value("label_threshold", c.label_threshold);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }
  return c;
}

json SynthConfig::to_json() const {
  return {{"n_samples", n_samples},       {"n_labs", n_labs},
          {"lab_reference", lab_reference}, {"n_factors", n_factors},
          {"loading", loading},           {"global_share", global_share},
          {"missing_rates", missing_rates}, {"n_vitals", n_vitals},
          {"vital_missing", vital_missing}, {"n_vasopressors", n_vasopressors},
          {"vaso_presence", vaso_presence}, {"label_noise", label_noise},
          {"label_threshold", label_threshold}, {"test_fraction", test_fraction},
          {"val_fraction", val_fraction}, {"seed", seed}};
}

std::vector<double> synth_missing_rates(const SynthConfig& c) {
  if (!c.missing_rates.empty()) {
    if (c.missing_rates.size() != c.n_labs) throw ConfigError("synth: missing_rates needs one entry per lab");
    return c.missing_rates;
  }
  std::vector<double> r(c.n_labs);
  for (std::size_t j = 0; j < c.n_labs; ++j) {
    r[j] = c.n_labs == 1 ? 0.07 : 0.07 + (0.88 - 0.07) * static_cast<double>(j) / static_cast<double>(c.n_labs - 1);
  }
  return r;
}

double synth_correlation(const SynthConfig& c, std::size_t j, std::size_t k) {
  if (j == k) return 1.0;
  const double l2 = c.loading * c.loading;
  return (j % c.n_factors == k % c.n_factors) ? l2 : l2 * c.global_share;
}

namespace {

void validate(const SynthConfig& c) {
  if (c.n_samples == 0 || c.n_labs == 0) throw ConfigError("synth: need at least one sample and one lab");
  if (c.n_factors == 0) throw ConfigError("synth: n_factors must be positive");
  if (!(c.loading >= 0.0 && c.loading <= 1.0)) throw ConfigError("synth: loading must lie in [0, 1]");
  if (!(c.global_share >= 0.0 && c.global_share <= 1.0)) throw ConfigError("synth: global_share must lie in [0, 1]");
  for (double r : synth_missing_rates(c))
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("synth: missing rates must lie in [0, 1)");
  if (!(c.vital_missing >= 0.0 && c.vital_missing < 1.0)) throw ConfigError("synth: vital_missing must lie in [0, 1)");
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) throw ConfigError("synth: test_fraction must lie in (0, 1)");
}

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%02zu", prefix, i);
  return buf;
}

double round_tenth(double h) { return std::round(h * 10.0) / 10.0; }

}  // namespace

Dataset synth_generate(const SynthConfig& c) {
  validate(c);
  const auto rates = synth_missing_rates(c);
  std::vector<Feature> feats;
  for (std::size_t j = 0; j < c.n_labs; ++j) {
    Feature f;
    f.name = numbered("lab", j);
    f.kind = FeatureKind::kLab;
    f.group = numbered("panel", j % c.n_factors);
    f.reference = c.lab_reference;
    feats.push_back(f);
  }
  for (std::size_t v = 0; v < c.n_vitals; ++v) {
    Feature f;
    f.name = numbered("vital", v);
    f.kind = FeatureKind::kVital;
    f.group = "vitals";
    feats.push_back(f);
  }
  for (std::size_t v = 0; v < c.n_vasopressors; ++v) {
    Feature f;
    f.name = numbered("vaso", v);
    f.kind = FeatureKind::kVasopressor;
    f.group = "vasopressors";
    feats.push_back(f);
  }
  Dataset ds;
  ds.registry = FeatureRegistry(std::move(feats), true);
  const auto& slots = ds.registry.slots();
  const std::size_t L = slots.size();

  const Rng root(c.seed, 0x73796e7468ULL);
  // Per-lab units: offset and scale, so normalization has work to do.
  std::vector<double> offset(c.n_labs), unit(c.n_labs);
  {
    Rng r = root.fork(0);
    for (std::size_t j = 0; j < c.n_labs; ++j) {
      offset[j] = r.uniform(5.0, 150.0);
      unit[j] = r.uniform(1.0, 20.0);
    }
  }
  const double idio = std::sqrt(std::max(0.0, 1.0 - c.loading * c.loading));
  const double sg = std::sqrt(c.global_share), su = std::sqrt(1.0 - c.global_share);
  constexpr double kHorizon = 1.0e6;

  ds.samples.resize(c.n_samples);
  for (std::size_t i = 0; i < c.n_samples; ++i) {
    Rng r = root.fork(1, i);
    TokenArray& s = ds.samples[i];
    s.x.assign(L, 0.0);
    s.t.assign(L, 0.0);
    s.m.assign(L, 0);
    char id[32];
    std::snprintf(id, sizeof id, "S%06zu", i);
    s.subject_id = id;
    s.stay_id = id;
    s.day_index = 0;
    s.admit_time = r.uniform() * kHorizon;

    const double g = r.normal();
    std::vector<double> factor(c.n_factors);
    for (double& f : factor) f = sg * g + su * r.normal();

    const double y0 = factor[0] + c.label_noise * r.normal();
    s.labels[static_cast<std::size_t>(Task::kMortality)] = static_cast<std::int8_t>(y0 > c.label_threshold);
    if (c.n_factors > 1) {
      const double y1 = factor[1] + c.label_noise * r.normal();
      s.labels[static_cast<std::size_t>(Task::kLos72)] = static_cast<std::int8_t>(y1 > 0.0);
    }
    const bool vaso_on = r.bernoulli(std::clamp(c.vaso_presence * (1.0 + 0.5 * factor[c.n_factors > 1 ? 1 : 0]), 0.0, 1.0));
    const auto vaso_start = static_cast<int>(r.below(20));
    const auto vaso_len = 1 + static_cast<int>(r.below(static_cast<std::uint64_t>(24 - vaso_start)));

    for (std::size_t k = 0; k < L; ++k) {
      const Slot& sl = slots[k];
      const std::size_t f = sl.feature;
      if (f < c.n_labs) {
        const double z = c.loading * factor[f % c.n_factors] + idio * r.normal();
        const bool observed = !r.bernoulli(rates[f]);
        const double hours = round_tenth(r.uniform(0.0, 24.0)) + (sl.role == SlotRole::kReference ? 24.0 : 0.0);
        if (observed) {
          s.x[k] = offset[f] + unit[f] * (sl.role == SlotRole::kReference ? 0.8 * z + 0.6 * r.normal() : z);
          s.t[k] = hours;
          s.m[k] = 1;
        }
      } else if (f < c.n_labs + c.n_vitals) {
        const std::size_t v = f - c.n_labs;
        const double z = c.loading * factor[v % c.n_factors] + 0.2 * std::sin(sl.hour * 0.2618) + idio * r.normal();
        const double within = r.uniform();
        if (!r.bernoulli(c.vital_missing)) {
          s.x[k] = 80.0 + 10.0 * z;
          s.t[k] = round_tenth(24.0 - sl.hour - within);
          s.m[k] = 1;
        }
      } else {
        const std::size_t v = f - c.n_labs - c.n_vitals;
        const double rate = 0.05 * (1.0 + static_cast<double>(v)) * std::exp(0.3 * factor[c.n_factors > 1 ? 1 : 0]);
        if (vaso_on && sl.hour >= vaso_start && sl.hour < vaso_start + vaso_len) {
          s.x[k] = rate;
          s.t[k] = 23.5 - sl.hour;
          s.m[k] = 1;
        }
      }
    }
    // Every row carries at least one lab, like the real pipeline's output.
    bool any_lab = false;
    for (std::size_t k = 0; k < L && !any_lab; ++k) any_lab = slots[k].feature < c.n_labs && s.m[k];
    if (!any_lab) {
      const double z = c.loading * factor[0] + idio * r.normal();
      s.x[0] = offset[0] + unit[0] * z;
      s.t[0] = round_tenth(r.uniform(0.0, 24.0));
      s.m[0] = 1;
    }
  }
  split_dataset(ds, (1.0 - c.test_fraction) * kHorizon, c.val_fraction, c.seed);
  fit_normalization(ds);
  apply_normalization(ds);
  return ds;
}

}  // namespace aidmae
