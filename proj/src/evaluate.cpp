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

#include "aidmae/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "aidmae/errors.hpp"
#include "aidmae/manifest.hpp"
#include "aidmae/rng.hpp"

namespace aidmae {

FeatureMatrix cls_embeddings(const Model& model, const Dataset& ds, std::span<const std::size_t> rows,
                             std::size_t batch_size) {
  FeatureMatrix out;
  out.reserve(rows.size());
  const std::size_t d = model.config().d_embed;
  for (std::size_t start = 0; start < rows.size(); start += batch_size) {
    const std::size_t end = std::min(rows.size(), start + batch_size);
    std::vector<SampleView> views;
    std::vector<std::vector<std::size_t>> kept;
    for (std::size_t i = start; i < end; ++i) {
      const TokenArray& s = ds.samples[rows[i]];
      views.push_back(s.view());
      kept.push_back(keep_all(s.mask()).kept);
    }
    Tape tape;
    PaddedBatch batch = build_padded_batch(kept);
    Tensor h = model.encode(tape, model.embed_batch(tape, batch, views), batch);
    Tensor cls = model.cls_embedding(tape, h, batch);
    auto data = cls.data();
    for (std::size_t b = 0; b < views.size(); ++b) out.emplace_back(data.begin() + b * d, data.begin() + (b + 1) * d);
  }
  return out;
}

std::vector<double> slot_medians(const Dataset& ds, std::span<const std::size_t> rows) {
  const std::size_t L = ds.grid_length();
  std::vector<double> med(L, 0.0);
  std::vector<double> vals;
  for (std::size_t k = 0; k < L; ++k) {
    vals.clear();
    for (std::size_t i : rows)
      if (ds.samples[i].m[k]) vals.push_back(ds.samples[i].x[k]);
    if (vals.empty()) continue;
    std::sort(vals.begin(), vals.end());
    med[k] = quantile_sorted(vals, 0.5);
  }
  return med;
}

FeatureMatrix median_imputed(const Dataset& ds, std::span<const std::size_t> rows, std::span<const double> medians) {
  FeatureMatrix out;
  out.reserve(rows.size());
  for (std::size_t i : rows) {
    const TokenArray& s = ds.samples[i];
    std::vector<double> v(s.x.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = s.m[k] ? s.x[k] : medians[k];
    out.push_back(std::move(v));
  }
  return out;
}

// ---- probing ----------------------------------------------------------------------

namespace {

std::vector<double> task_labels(const Dataset& ds, std::span<const std::size_t> rows, Task task) {
  std::vector<double> y;
  for (std::size_t i : rows) y.push_back(ds.samples[i].labels[static_cast<std::size_t>(task)]);
  return y;
}

}  // namespace

ProbeData probe_data_cls(const Model& model, const Dataset& ds, Task task) {
  const auto train = labeled_rows(ds, Split::kTrain, task);
  const auto test = labeled_rows(ds, Split::kTest, task);
  return {cls_embeddings(model, ds, train), task_labels(ds, train, task), cls_embeddings(model, ds, test),
          task_labels(ds, test, task)};
}

ProbeData probe_data_raw(const Dataset& ds, Task task) {
  const auto train = labeled_rows(ds, Split::kTrain, task);
  const auto test = labeled_rows(ds, Split::kTest, task);
  const auto med = slot_medians(ds, train);
  return {median_imputed(ds, train, med), task_labels(ds, train, task), median_imputed(ds, test, med),
          task_labels(ds, test, task)};
}

std::vector<std::size_t> stratified_subsample(std::span<const double> y, double fraction_pct, std::uint64_t seed) {
  if (!(fraction_pct > 0.0 && fraction_pct <= 100.0)) throw ConfigError("probe fractions must lie in (0, 100]");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] > 0.5 ? pos : neg).push_back(i);
  Rng rng = Rng(seed, 0x70726f6265ULL).fork(static_cast<std::uint64_t>(std::llround(fraction_pct * 1000.0)));
  std::vector<std::size_t> out;
  for (auto* cls : {&neg, &pos}) {
    rng.shuffle(*cls);
    std::size_t take = static_cast<std::size_t>(std::ceil(fraction_pct / 100.0 * static_cast<double>(cls->size()) - 1e-9));
    take = std::clamp<std::size_t>(take, cls->empty() ? 0 : 1, cls->size());
    out.insert(out.end(), cls->begin(), cls->begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ProbeRow> linear_probe(const std::string& method, const ProbeData& data, const ProbeConfig& cfg) {
  if (data.train_x.empty() || data.test_x.empty()) throw DataError("linear probe needs labeled train and test rows");
  std::vector<ProbeRow> out;
  for (double frac : cfg.fractions) {
    for (std::uint64_t seed : cfg.seeds) {
      const auto pick = stratified_subsample(data.train_y, frac, seed);
      FeatureMatrix X;
      std::vector<double> y;
      for (std::size_t i : pick) {
        X.push_back(data.train_x[i]);
        y.push_back(data.train_y[i]);
      }
      LogisticConfig lc;
      lc.C = cfg.C;
      const LogisticModel lm = fit_logistic(X, y, lc);
      std::vector<double> scores;
      scores.reserve(data.test_x.size());
      for (const auto& x : data.test_x) scores.push_back(lm.logit(x));
      ProbeRow r;
      r.method = method;
      r.fraction = frac;
      r.seed = seed;
      r.n_train = pick.size();
      r.auroc = auroc(scores, data.test_y);
      r.auprc = auprc(scores, data.test_y);
      r.converged = lm.converged;
      out.push_back(r);
    }
  }
  return out;
}

std::vector<ProbeSummary> summarize_probe(std::span<const ProbeRow> rows) {
  std::vector<ProbeSummary> out;
  std::map<std::pair<std::string, double>, std::vector<const ProbeRow*>> groups;
  std::vector<std::pair<std::string, double>> order;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.method, r.fraction);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  for (const auto& key : order) {
    std::vector<double> a, p;
    ProbeSummary s;
    s.method = key.first;
    s.fraction = key.second;
    for (const ProbeRow* r : groups[key]) {
      a.push_back(r->auroc);
      p.push_back(r->auprc);
      s.all_converged = s.all_converged && r->converged;
    }
    s.auroc = mean_sd(a);
    s.auprc = mean_sd(p);
    s.runs = a.size();
    out.push_back(s);
  }
  return out;
}

// ---- reconstruction ---------------------------------------------------------------

namespace {

struct ReconJob {
  std::size_t row;
  MaskPlan plan;
  std::vector<std::size_t> scored;
};

// Runs every job and returns, per job, the reconstructed values at its scored slots.
std::vector<std::vector<double>> run_jobs(const Model& model, const Dataset& ds, const std::vector<ReconJob>& jobs,
                                          std::size_t batch_size) {
  std::vector<std::vector<double>> out(jobs.size());
  const std::size_t L = ds.grid_length();
  for (std::size_t start = 0; start < jobs.size(); start += batch_size) {
    const std::size_t end = std::min(jobs.size(), start + batch_size);
    std::vector<SampleView> views;
    std::vector<MaskPlan> plans;
    for (std::size_t j = start; j < end; ++j) {
      views.push_back(ds.samples[jobs[j].row].view());
      plans.push_back(jobs[j].plan);
    }
    Tape tape;
    auto pass = forward_reconstruct(tape, model, views, plans);
    auto x_hat = pass.x_hat.data();
    for (std::size_t j = start; j < end; ++j) {
      for (std::size_t k : jobs[j].scored) out[j].push_back(x_hat[(j - start) * L + k]);
    }
  }
  return out;
}

// Range of the scored truth: p95 - p05, falling back to max - min.
double value_range_of(std::vector<double> truth) {
  if (truth.empty()) return 0.0;
  std::sort(truth.begin(), truth.end());
  double r = quantile_sorted(truth, 0.95) - quantile_sorted(truth, 0.05);
  if (!(r > 0.0)) r = truth.back() - truth.front();
  return r;
}

SweepRow score_pooled(SweepRow row, const std::vector<double>& pred, const std::vector<double>& truth) {
  row.n_scored = truth.size();
  row.value_range = value_range_of(truth);
  try {
    row.metrics = regression_metrics(pred, truth, row.value_range);
    row.defined = true;
  } catch (const UndefinedMetricError&) {
    row.defined = false;
  }
  return row;
}

}  // namespace

std::vector<FeatureReconstruction> single_value_reconstruction(const Model& model, const Dataset& ds,
                                                               std::span<const std::size_t> rows,
                                                               std::size_t batch_size) {
  const auto& reg = ds.registry;
  const auto& slots = reg.slots();
  std::vector<std::vector<std::size_t>> candidate(reg.feature_count());
  for (std::size_t k = 0; k < slots.size(); ++k) {
    if (slots[k].role == SlotRole::kReference) continue;
    candidate[slots[k].feature].push_back(k);
  }
  std::vector<ReconJob> jobs;
  std::vector<std::size_t> job_feature;
  std::vector<std::size_t> alone(reg.feature_count(), 0);
  for (std::size_t i : rows) {
    const TokenArray& s = ds.samples[i];
    const IntrinsicMask mask = s.mask();
    for (std::size_t f = 0; f < reg.feature_count(); ++f) {
      // Latest recorded slot of the feature (labs have exactly one candidate).
      std::size_t pick = slots.size();
      for (std::size_t k : candidate[f])
        if (s.m[k]) pick = k;
      if (pick == slots.size()) continue;
      if (mask.recorded.size() < 2) {
        ++alone[f];
        continue;
      }
      const std::size_t hide[1] = {pick};
      jobs.push_back({i, plan_hiding(mask, hide), {pick}});
      job_feature.push_back(f);
    }
  }
  const auto preds = run_jobs(model, ds, jobs, batch_size);
  std::vector<std::vector<double>> pred(reg.feature_count()), truth(reg.feature_count());
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    pred[job_feature[j]].push_back(preds[j][0]);
    truth[job_feature[j]].push_back(ds.samples[jobs[j].row].x[jobs[j].scored[0]]);
  }
  std::vector<FeatureReconstruction> out;
  for (std::size_t f = 0; f < reg.feature_count(); ++f) {
    FeatureReconstruction r;
    r.feature = f;
    r.name = reg.feature(f).name;
    r.n = truth[f].size();
    if (truth[f].empty()) {
      r.skipped = true;
      r.note = "never observed";
    } else {
      r.value_range = value_range_of(truth[f]);
      try {
        r.metrics = regression_metrics(pred[f], truth[f], r.value_range);
      } catch (const UndefinedMetricError& e) {
        r.skipped = true;
        r.note = e.what();
      }
    }
    if (alone[f] > 0) {
      if (!r.note.empty()) r.note += "; ";
      r.note += std::to_string(alone[f]) + " samples skipped (only recorded value)";
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SweepRow> imputation_sweep_random(const Model& model, const Dataset& ds, std::span<const std::size_t> rows,
                                              std::span<const double> ratios, std::uint64_t seed,
                                              std::size_t batch_size) {
  std::vector<SweepRow> out;
  for (std::size_t r = 0; r < ratios.size(); ++r) {
    const double ratio = ratios[r];
    if (!(ratio >= 0.0 && ratio < 1.0)) throw ConfigError("sweep ratios must lie in [0, 1)");
    SweepRow row;
    row.mode = "random";
    row.ratio = ratio;
    std::vector<ReconJob> jobs;
    const Rng base(seed, 0x7377656570ULL);
    for (std::size_t i : rows) {
      const TokenArray& s = ds.samples[i];
      const IntrinsicMask mask = s.mask();
      if (mask.recorded.empty()) continue;
      Rng rng = base.fork(static_cast<std::uint64_t>(std::llround(ratio * 1e6)), i);
      std::vector<std::size_t> hide;
      for (std::size_t k : mask.recorded)
        if (rng.bernoulli(ratio)) hide.push_back(k);
      if (hide.size() == mask.recorded.size()) {
        ++row.samples_skipped;
        continue;
      }
      jobs.push_back({i, plan_hiding(mask, hide), mask.recorded});
    }
    const auto preds = run_jobs(model, ds, jobs, batch_size);
    std::vector<double> pred, truth;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      for (std::size_t q = 0; q < jobs[j].scored.size(); ++q) {
        pred.push_back(preds[j][q]);
        truth.push_back(ds.samples[jobs[j].row].x[jobs[j].scored[q]]);
      }
    }
    out.push_back(score_pooled(row, pred, truth));
  }
  return out;
}

std::vector<SweepRow> imputation_sweep_panel(const Model& model, const Dataset& ds, std::span<const std::size_t> rows,
                                             std::span<const std::string> panels, std::size_t batch_size) {
  const auto& reg = ds.registry;
  const auto slot_feat = reg.slot_features();
  std::vector<SweepRow> out;
  for (const std::string& panel : panels) {
    std::vector<std::uint8_t> in_panel(slot_feat.size(), 0);
    bool any = false;
    for (std::size_t k = 0; k < slot_feat.size(); ++k) {
      in_panel[k] = reg.feature(slot_feat[k]).group == panel;
      any = any || in_panel[k];
    }
    if (!any) throw ConfigError("unknown panel '" + panel + "' (no registry feature has this group)");
    SweepRow row;
    row.mode = "panel";
    row.panel = panel;
    std::vector<ReconJob> jobs;
    for (std::size_t i : rows) {
      const TokenArray& s = ds.samples[i];
      const IntrinsicMask mask = s.mask();
      std::vector<std::size_t> hide;
      for (std::size_t k : mask.recorded)
        if (in_panel[k]) hide.push_back(k);
      if (hide.empty()) continue;
      if (hide.size() == mask.recorded.size()) {
        ++row.samples_skipped;
        continue;
      }
      jobs.push_back({i, plan_hiding(mask, hide), hide});
    }
    const auto preds = run_jobs(model, ds, jobs, batch_size);
    std::vector<double> pred, truth;
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      for (std::size_t q = 0; q < jobs[j].scored.size(); ++q) {
        pred.push_back(preds[j][q]);
        truth.push_back(ds.samples[jobs[j].row].x[jobs[j].scored[q]]);
      }
    }
    out.push_back(score_pooled(row, pred, truth));
  }
  return out;
}

// ---- ablation ---------------------------------------------------------------------

std::string params_hash(const Model& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : model.parameters()) {
    auto d = p.tensor.data();
    h = fnv1a(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(d.data()), d.size_bytes()), h);
  }
  return hex64(h);
}

std::vector<AblationRow> run_ablation(const Dataset& ds, const ModelConfig& model_config,
                                      const PretrainConfig& pretrain, std::span<const AblationCell> cells,
                                      const ProbeConfig& probe, double recon_ratio, std::uint64_t model_seed) {
  if (probe.fractions.empty()) throw ConfigError("ablation needs at least one probe fraction");
  std::vector<AblationRow> out;
  std::map<std::string, Dataset> variants;
  for (const auto& cell : cells) {
    if (!variants.count(cell.variant))
      variants.emplace(cell.variant, input_variant(ds, input_variant_from_string(cell.variant)));
    const Dataset& vds = variants.at(cell.variant);
    ModelConfig mc = model_config;
    mc.grid_length = vds.grid_length();
    Model model(mc, model_seed);
    PretrainConfig pc = pretrain;
    pc.policy = {cell.a, cell.b};
    PretrainSession session(model, vds, pc);
    session.run();
    if (!session.best_params().empty()) restore_params(model, session.best_params());

    AblationRow row;
    row.cell = cell;
    row.grid_length = mc.grid_length;
    const auto& last = session.log().back();
    row.final_val_loss = last.has_val ? last.val.total : last.train.total;
    ProbeConfig one = probe;
    one.fractions = {probe.fractions.front()};
    row.probe_fraction = one.fractions.front();
    const auto probe_rows = linear_probe("aidmae", probe_data_cls(model, vds, probe.task), one);
    const auto summary = summarize_probe(probe_rows);
    row.probe_auroc = summary.front().auroc;
    row.probe_auprc = summary.front().auprc;
    const auto test = vds.indices(Split::kTest);
    const double ratios[1] = {recon_ratio};
    const auto sweep = imputation_sweep_random(model, vds, test, ratios, pc.seed);
    row.recon_r2 = sweep.front().defined ? sweep.front().metrics.r2 : std::nan("");
    row.params_hash = params_hash(model);
    out.push_back(row);
  }
  return out;
}

}  // namespace aidmae
