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

#include "aidmae/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "aidmae/checkpoint.hpp"
#include "aidmae/config.hpp"
#include "aidmae/dataset_io.hpp"
#include "aidmae/errors.hpp"
#include "aidmae/evaluate.hpp"
#include "aidmae/manifest.hpp"
#include "aidmae/synth.hpp"
#include "aidmae/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace aidmae {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::ofstream open_csv(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write '" + path.string() + "'");
  return f;
}

// Options shared by most subcommands; each flag overrides the config file.
struct Common {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "Output directory (default: config output_dir, else $AIDMAE_OUTPUT_DIR or ./runs)");
  c.seed_opt = app->add_option("--seed", c.seed, "Random seed");
}

RunConfig resolve(const Common& c) {
  RunConfig rc = c.config.empty() ? RunConfig::from_json(json::object()) : RunConfig::load(c.config);
  if (c.seed_opt && c.seed_opt->count()) {
    rc.seed = c.seed;
    rc.pretrain.seed = c.seed;
    rc.finetune.seed = c.seed;
    rc.data.synth.seed = c.seed;
  }
  return rc;
}

fs::path output_dir(const Common& c, const RunConfig& rc, const char* command) {
  fs::path p = !c.out.empty() ? fs::path(c.out)
               : !rc.output_dir.empty() ? fs::path(rc.output_dir) / command
                                        : fs::path(default_output_dir()) / command;
  fs::create_directories(p);
  return p;
}

// A pretraining run directory must match the dataset it is evaluated on.
Model load_pretrained(const std::string& dir, const fs::path& data_dir, bool verify_data = true) {
  const json manifest = read_manifest(dir, "pretrain");
  if (verify_data && manifest.at("dataset_hash").get<std::string>() != dataset_hash(data_dir)) {
    throw DataError("pretraining run '" + dir + "' was produced from a different dataset than '" +
                    data_dir.string() + "'");
  }
  const auto ck = read_checkpoint((fs::path(dir) / "model.ckpt").string());
  return model_from_checkpoint(ck, true);
}

void write_log_csv(const fs::path& path, const std::vector<EpochLog>& log) {
  auto f = open_csv(path);
  f << "epoch,split,lr,unmasked_term,masked_term,total\n";
  for (const auto& e : log) {
    f << e.epoch << ",train," << num(e.lr) << "," << num(e.train.unmasked_term) << "," << num(e.train.masked_term)
      << "," << num(e.train.total) << "\n";
    if (e.has_val) {
      f << e.epoch << ",val," << num(e.lr) << "," << num(e.val.unmasked_term) << "," << num(e.val.masked_term) << ","
        << num(e.val.total) << "\n";
    }
  }
}

Dataset apply_variant(Dataset ds, const std::string& variant) {
  const InputVariant v = input_variant_from_string(variant);
  if (v == InputVariant::kFull) return ds;
  return input_variant(ds, v);
}

// ---- subcommand bodies ------------------------------------------------------------

struct SynthArgs {
  Common c;
  std::size_t samples = 0;
  std::string variant;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  RunConfig rc = resolve(a.c);
  if (a.samples) rc.data.synth.n_samples = a.samples;
  if (!a.variant.empty()) rc.data.variant = a.variant;
  Dataset ds = apply_variant(synth_generate(rc.data.synth), rc.data.variant);
  const fs::path dir = output_dir(a.c, rc, "synth");
  json prov = {{"command", "synth"}, {"config", rc.to_json()}};
  write_dataset(ds, dir, prov);
  out << "wrote " << ds.samples.size() << " samples (L=" << ds.grid_length() << ") to " << dir.string() << "\n";
  out << "dataset_hash " << dataset_hash(dir) << "\n";
  return kExitOk;
}

struct PreprocessArgs {
  Common c;
  std::string events, labels, registry, time_format, variant;
  std::optional<double> cut;
};

int cmd_preprocess(const PreprocessArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig rc = resolve(a.c);
  if (!a.events.empty()) rc.data.events = a.events;
  if (!a.labels.empty()) rc.data.labels = a.labels;
  if (!a.registry.empty()) rc.data.registry = a.registry;
  if (!a.time_format.empty()) rc.data.time_format = a.time_format;
  if (!a.variant.empty()) rc.data.variant = a.variant;
  if (a.cut) rc.data.cut_time = a.cut;
  if (rc.data.events.empty()) throw ConfigError("preprocess needs an event CSV (--events or data.events)");
  if (rc.data.registry.empty()) throw ConfigError("preprocess needs a feature registry (--registry or data.registry)");
  TimeFormat tf;
  if (rc.data.time_format == "epoch_minutes") tf = TimeFormat::kEpochMinutes;
  else if (rc.data.time_format == "iso8601") tf = TimeFormat::kIso8601;
  else throw ConfigError("time_format must be 'epoch_minutes' or 'iso8601'");

  const FeatureRegistry registry = FeatureRegistry::load(rc.data.registry);
  const auto events = read_event_csv(rc.data.events, tf);
  GridDiagnostics diag;
  Dataset ds = build_dataset(events, registry, &diag);
  if (ds.samples.empty()) throw DataError("no rows with laboratory measurements were produced");
  if (!rc.data.labels.empty()) attach_labels_csv(ds, rc.data.labels);
  double cut;
  if (rc.data.cut_time) {
    cut = *rc.data.cut_time;
  } else {
    std::map<std::string, double> admit;
    for (const auto& s : ds.samples) admit.emplace(s.stay_id, s.admit_time);
    std::vector<double> t;
    for (const auto& [k, v] : admit) t.push_back(v);
    std::sort(t.begin(), t.end());
    cut = quantile_sorted(t, 0.8);
  }
  const SplitReport split = split_dataset(ds, cut, rc.data.val_fraction, rc.seed);
  for (const auto& w : split.warnings) err << "warning: " << w << "\n";
  fit_normalization(ds);
  apply_normalization(ds);
  ds = apply_variant(std::move(ds), rc.data.variant);

  const fs::path dir = output_dir(a.c, rc, "preprocess");
  json prov = {{"command", "preprocess"},
               {"config", rc.to_json()},
               {"events_hash", hex64(hash_file(rc.data.events))},
               {"cut_time", cut},
               {"diagnostics",
                {{"events_unknown_item", diag.events_unknown_item},
                 {"events_quarantined", diag.events_quarantined},
                 {"vasopressor_overlaps", diag.vasopressor_overlaps},
                 {"days_without_labs", diag.days_without_labs},
                 {"rows_emitted", diag.rows_emitted}}},
               {"split",
                {{"train_subjects", split.train_subjects},
                 {"val_subjects", split.val_subjects},
                 {"test_subjects", split.test_subjects},
                 {"spanning_subjects", split.spanning_subjects}}}};
  write_dataset(ds, dir, prov);
  out << "wrote " << ds.samples.size() << " rows (L=" << ds.grid_length() << ") to " << dir.string() << "\n";
  out << "dataset_hash " << dataset_hash(dir) << "\n";
  return kExitOk;
}

struct PretrainArgs {
  Common c;
  std::string data, resume;
  std::optional<double> epochs, warmup, a, b, lr;
  std::optional<std::size_t> batch_size;
};

int cmd_pretrain(const PretrainArgs& args, std::ostream& out) {
  RunConfig rc = resolve(args.c);
  if (args.epochs) rc.pretrain.schedule.max_epochs = *args.epochs;
  if (args.warmup) rc.pretrain.schedule.warmup_epochs = *args.warmup;
  if (args.a) rc.pretrain.policy.a = *args.a;
  if (args.b) rc.pretrain.policy.b = *args.b;
  if (args.lr) rc.pretrain.schedule.base_lr = *args.lr;
  if (args.batch_size) rc.pretrain.batch_size = *args.batch_size;
  const Dataset ds = read_dataset(args.data);
  rc.model.grid_length = ds.grid_length();
  Model model(rc.model, rc.seed);
  PretrainSession session(model, ds, rc.pretrain);
  if (!args.resume.empty()) session.resume(args.resume);
  const fs::path dir = output_dir(args.c, rc, "pretrain");
  session.run([&](const EpochLog& e) {
    out << "epoch " << e.epoch << " lr " << num(e.lr) << " train " << num(e.train.total);
    if (e.has_val) out << " val " << num(e.val.total);
    out << "\n";
    session.save((dir / "model.ckpt").string());
  });
  session.save((dir / "model.ckpt").string());
  write_log_csv(dir / "train_log.csv", session.log());
  json body = {{"command", "pretrain"},
               {"config", rc.to_json()},
               {"dataset_hash", dataset_hash(args.data)},
               {"best_epoch", session.cursor().best_epoch},
               {"best_loss", session.cursor().best_loss},
               {"skipped_steps", session.cursor().skipped_steps},
               {"slot_weights_mean",
                std::accumulate(session.slot_weights().begin(), session.slot_weights().end(), 0.0) /
                    static_cast<double>(session.slot_weights().size())},
               {"p_miss_estimate", "per feature on the training split, once per run"}};
  write_manifest(dir, "pretrain", body, {"model.ckpt", "train_log.csv"});
  out << "best epoch " << session.cursor().best_epoch << " loss " << num(session.cursor().best_loss) << "\n";
  return kExitOk;
}

struct FinetuneArgs {
  Common c;
  std::string data, pretrained, task;
  std::optional<std::size_t> epochs;
};

int cmd_finetune(const FinetuneArgs& args, std::ostream& out) {
  RunConfig rc = resolve(args.c);
  if (!args.task.empty()) rc.finetune.task = task_from_string(args.task);
  if (args.epochs) rc.finetune.max_epochs = *args.epochs;
  const Dataset ds = read_dataset(args.data);
  Model model = [&] {
    if (!args.pretrained.empty()) return load_pretrained(args.pretrained, args.data);
    ModelConfig mc = rc.model;
    mc.grid_length = ds.grid_length();
    return Model(mc, rc.seed);
  }();
  model.reset_head(rc.seed);
  const FinetuneResult r = finetune(model, ds, rc.finetune);
  const fs::path dir = output_dir(args.c, rc, "finetune");
  save_checkpoint((dir / "model.ckpt").string(), model, nullptr, {{"kind", "finetune"}});
  {
    auto f = open_csv(dir / "finetune_log.csv");
    f << "epoch,train_loss,val_auroc\n";
    for (const auto& e : r.log) f << e.epoch << "," << num(e.train_loss) << "," << num(e.val_auroc) << "\n";
  }
  json metrics = {{"task", to_string(rc.finetune.task)},
                  {"best_epoch", r.best_epoch},
                  {"best_val_auroc", r.best_val_auroc},
                  {"epochs_run", r.epochs_run},
                  {"stopped_early", r.stopped_early},
                  {"test_auroc", std::isnan(r.test_auroc) ? json() : json(r.test_auroc)},
                  {"test_auprc", std::isnan(r.test_auprc) ? json() : json(r.test_auprc)},
                  {"train_accuracy", r.train_accuracy}};
  std::ofstream(dir / "metrics.json") << metrics.dump(2) << "\n";
  write_manifest(dir, "finetune",
                 {{"command", "finetune"},
                  {"config", rc.to_json()},
                  {"dataset_hash", dataset_hash(args.data)},
                  {"pretrained", args.pretrained},
                  {"metrics", metrics}},
                 {"model.ckpt", "finetune_log.csv", "metrics.json"});
  out << "test AUROC " << num(r.test_auroc) << " AUPRC " << num(r.test_auprc) << " (best epoch " << r.best_epoch
      << ")\n";
  return kExitOk;
}

struct ProbeArgs {
  Common c;
  std::string data, pretrained, task;
  std::vector<double> fractions;
  std::vector<std::uint64_t> seeds;
  bool baselines = false;
};

int cmd_probe(const ProbeArgs& args, std::ostream& out) {
  RunConfig rc = resolve(args.c);
  ProbeConfig pc = rc.eval.probe;
  if (!args.fractions.empty()) pc.fractions = args.fractions;
  if (!args.seeds.empty()) pc.seeds = args.seeds;
  if (!args.task.empty()) pc.task = task_from_string(args.task);
  const Dataset ds = read_dataset(args.data);
  const Model model = load_pretrained(args.pretrained, args.data);
  std::vector<ProbeRow> rows = linear_probe("aidmae", probe_data_cls(model, ds, pc.task), pc);
  if (args.baselines) {
    const Model random(model.config(), rc.seed);
    auto r1 = linear_probe("random_weights", probe_data_cls(random, ds, pc.task), pc);
    auto r2 = linear_probe("raw_median", probe_data_raw(ds, pc.task), pc);
    rows.insert(rows.end(), r1.begin(), r1.end());
    rows.insert(rows.end(), r2.begin(), r2.end());
  }
  const fs::path dir = output_dir(args.c, rc, "probe");
  {
    auto f = open_csv(dir / "probe.csv");
    f << "method,task,fraction,seed,n_train,auroc,auprc,converged\n";
    for (const auto& r : rows) {
      f << r.method << "," << to_string(pc.task) << "," << num(r.fraction) << "," << r.seed << "," << r.n_train << ","
        << num(r.auroc) << "," << num(r.auprc) << "," << (r.converged ? 1 : 0) << "\n";
    }
  }
  const auto summary = summarize_probe(rows);
  {
    auto f = open_csv(dir / "probe_summary.csv");
    f << "method,task,fraction,runs,auroc_mean,auroc_sd,auprc_mean,auprc_sd,all_converged\n";
    for (const auto& s : summary) {
      f << s.method << "," << to_string(pc.task) << "," << num(s.fraction) << "," << s.runs << "," << num(s.auroc.mean)
        << "," << num(s.auroc.sd) << "," << num(s.auprc.mean) << "," << num(s.auprc.sd) << ","
        << (s.all_converged ? 1 : 0) << "\n";
      out << s.method << " " << num(s.fraction) << "%: AUROC " << num(s.auroc.mean) << " +/- " << num(s.auroc.sd)
          << "\n";
    }
  }
  write_manifest(dir, "probe",
                 {{"command", "probe"}, {"config", rc.to_json()}, {"dataset_hash", dataset_hash(args.data)},
                  {"pretrained", args.pretrained}},
                 {"probe.csv", "probe_summary.csv"});
  return kExitOk;
}

std::vector<std::size_t> rows_of_split(const Dataset& ds, const std::string& split) {
  if (split == "train") return ds.indices(Split::kTrain);
  if (split == "val") return ds.indices(Split::kVal);
  if (split == "test") return ds.indices(Split::kTest);
  if (split == "all") {
    std::vector<std::size_t> r(ds.samples.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = i;
    return r;
  }
  throw ConfigError("split must be one of train, val, test, all");
}

struct EvalArgs {
  Common c;
  std::string data, pretrained, split = "test", mode = "random";
  std::vector<double> ratios;
  std::vector<std::string> panels;
};

int cmd_reconstruct(const EvalArgs& args, std::ostream& out) {
  RunConfig rc = resolve(args.c);
  const Dataset ds = read_dataset(args.data);
  const Model model = load_pretrained(args.pretrained, args.data);
  const auto rows = rows_of_split(ds, args.split);
  const auto res = single_value_reconstruction(model, ds, rows, rc.eval.batch_size);
  const fs::path dir = output_dir(args.c, rc, "reconstruct");
  auto f = open_csv(dir / "reconstruction.csv");
  f << "feature,n,value_range,nrmse,nmae,r2,skipped,note\n";
  for (const auto& r : res) {
    f << r.name << "," << r.n << "," << num(r.value_range) << "," << num(r.metrics.nrmse) << ","
      << num(r.metrics.nmae) << "," << num(r.metrics.r2) << "," << (r.skipped ? 1 : 0) << ",\"" << r.note << "\"\n";
    if (!r.skipped) out << r.name << ": R2 " << num(r.metrics.r2) << " NRMSE " << num(r.metrics.nrmse) << "\n";
  }
  f.close();
  write_manifest(dir, "reconstruct",
                 {{"command", "reconstruct"}, {"split", args.split}, {"dataset_hash", dataset_hash(args.data)},
                  {"pretrained", args.pretrained}, {"space", "normalized"}},
                 {"reconstruction.csv"});
  return kExitOk;
}

int cmd_sweep(const EvalArgs& args, std::ostream& out) {
  RunConfig rc = resolve(args.c);
  const Dataset ds = read_dataset(args.data);
  const Model model = load_pretrained(args.pretrained, args.data);
  const auto rows = rows_of_split(ds, args.split);
  std::vector<SweepRow> res;
  if (args.mode == "random") {
    const auto ratios = args.ratios.empty() ? rc.eval.ratios : args.ratios;
    res = imputation_sweep_random(model, ds, rows, ratios, rc.seed, rc.eval.batch_size);
  } else if (args.mode == "panel") {
    auto panels = args.panels.empty() ? rc.eval.panels : args.panels;
    if (panels.empty()) {
      std::set<std::string> groups;
      for (const auto& f : ds.registry.features())
        if (!f.group.empty()) groups.insert(f.group);
      panels.assign(groups.begin(), groups.end());
    }
    res = imputation_sweep_panel(model, ds, rows, panels, rc.eval.batch_size);
  } else {
    throw ConfigError("sweep mode must be 'random' or 'panel'");
  }
  const fs::path dir = output_dir(args.c, rc, "sweep");
  auto f = open_csv(dir / "sweep.csv");
  f << "mode,ratio,panel,n_scored,samples_skipped,value_range,nrmse,nmae,r2\n";
  for (const auto& r : res) {
    f << r.mode << "," << num(r.ratio) << "," << r.panel << "," << r.n_scored << "," << r.samples_skipped << ","
      << num(r.value_range) << "," << (r.defined ? num(r.metrics.nrmse) : "") << ","
      << (r.defined ? num(r.metrics.nmae) : "") << "," << (r.defined ? num(r.metrics.r2) : "") << "\n";
    out << r.mode << " " << (r.mode == "panel" ? r.panel : num(r.ratio)) << ": R2 "
        << (r.defined ? num(r.metrics.r2) : "undefined") << "\n";
  }
  f.close();
  write_manifest(dir, "sweep",
                 {{"command", "sweep"}, {"mode", args.mode}, {"split", args.split},
                  {"dataset_hash", dataset_hash(args.data)}, {"pretrained", args.pretrained}},
                 {"sweep.csv"});
  return kExitOk;
}

int cmd_embed(const EvalArgs& args, std::ostream& out) {
  RunConfig rc = resolve(args.c);
  const Dataset ds = read_dataset(args.data);
  const Model model = load_pretrained(args.pretrained, args.data);
  const auto rows = rows_of_split(ds, args.split);
  const auto emb = cls_embeddings(model, ds, rows, rc.eval.batch_size);
  const fs::path dir = output_dir(args.c, rc, "embed");
  auto f = open_csv(dir / "embeddings.csv");
  f << "subject_id,stay_id,day_index,split";
  for (std::size_t k = 0; k < model.config().d_embed; ++k) f << ",e" << k;
  f << "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = ds.samples[rows[i]];
    f << s.subject_id << "," << s.stay_id << "," << s.day_index << "," << to_string(s.split);
    for (double v : emb[i]) f << "," << num(v);
    f << "\n";
  }
  f.close();
  write_manifest(dir, "embed",
                 {{"command", "embed"}, {"split", args.split}, {"dataset_hash", dataset_hash(args.data)},
                  {"pretrained", args.pretrained}},
                 {"embeddings.csv"});
  out << "wrote " << rows.size() << " embeddings to " << (dir / "embeddings.csv").string() << "\n";
  return kExitOk;
}

struct AblateArgs {
  Common c;
  std::string data;
  std::optional<double> epochs;
};

int cmd_ablate(const AblateArgs& args, std::ostream& out) {
  RunConfig rc = resolve(args.c);
  if (args.epochs) rc.pretrain.schedule.max_epochs = *args.epochs;
  const Dataset ds = args.data.empty() ? synth_generate(rc.data.synth) : read_dataset(args.data);
  std::vector<AblationCell> cells;
  for (const auto& v : rc.ablation.variants)
    for (const auto& [a, b] : rc.ablation.grid) cells.push_back({v, a, b});
  const auto rows = run_ablation(ds, rc.model, rc.pretrain, cells, rc.eval.probe, rc.ablation.recon_ratio, rc.seed);
  const fs::path dir = output_dir(args.c, rc, "ablate");
  auto f = open_csv(dir / "ablation.csv");
  f << "variant,a,b,grid_length,final_val_loss,probe_fraction,auroc_mean,auroc_sd,auprc_mean,auprc_sd,recon_r2,"
       "params_hash\n";
  for (const auto& r : rows) {
    f << r.cell.variant << "," << num(r.cell.a) << "," << num(r.cell.b) << "," << r.grid_length << ","
      << num(r.final_val_loss) << "," << num(r.probe_fraction) << "," << num(r.probe_auroc.mean) << ","
      << num(r.probe_auroc.sd) << "," << num(r.probe_auprc.mean) << "," << num(r.probe_auprc.sd) << ","
      << num(r.recon_r2) << "," << r.params_hash << "\n";
    out << r.cell.variant << " a=" << num(r.cell.a) << " b=" << num(r.cell.b) << ": AUROC "
        << num(r.probe_auroc.mean) << " R2 " << num(r.recon_r2) << "\n";
  }
  f.close();
  write_manifest(dir, "ablate",
                 {{"command", "ablate"}, {"config", rc.to_json()},
                  {"dataset_hash", args.data.empty() ? std::string("synthetic") : dataset_hash(args.data)}},
                 {"ablation.csv"});
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"AID-MAE: dual-masked autoencoder for incomplete clinical time series", "aidmae"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_common(s, synth.c);
  s->add_option("--samples", synth.samples, "Number of samples (overrides data.synth.n_samples)");
  s->add_option("--variant", synth.variant, "Input variant: full, zero_fill_vasopressor, no_24h");

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "Build a processed dataset from event and label CSVs");
  add_common(p, pre.c);
  p->add_option("--events", pre.events, "Event CSV: subject_id,stay_id,feature_id,time,value[,end_time]");
  p->add_option("--labels", pre.labels, "Label CSV: stay_id,mortality,los72,aki");
  p->add_option("--registry", pre.registry, "Feature registry JSON");
  p->add_option("--time-format", pre.time_format, "epoch_minutes or iso8601");
  p->add_option("--cut", pre.cut, "Admission time (minutes) separating train/val from test");
  p->add_option("--variant", pre.variant, "Input variant: full, zero_fill_vasopressor, no_24h");

  PretrainArgs pt;
  auto* t = app.add_subcommand("pretrain", "Masked-autoencoder pretraining");
  add_common(t, pt.c);
  t->add_option("--data", pt.data, "Processed dataset directory")->required();
  t->add_option("--epochs", pt.epochs, "Maximum epochs");
  t->add_option("--warmup", pt.warmup, "Warmup epochs");
  t->add_option("--lr", pt.lr, "Base learning rate");
  t->add_option("--batch-size", pt.batch_size, "Batch size");
  t->add_option("--a", pt.a, "Masking direction a");
  t->add_option("--b", pt.b, "Masking offset b");
  t->add_option("--resume", pt.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);

  FinetuneArgs ft;
  auto* f = app.add_subcommand("finetune", "Supervised fine-tuning with early stopping");
  add_common(f, ft.c);
  f->add_option("--data", ft.data, "Processed dataset directory")->required();
  f->add_option("--pretrained", ft.pretrained, "Pretraining run directory (omit for random init)");
  f->add_option("--task", ft.task, "mortality, los72 or aki");
  f->add_option("--epochs", ft.epochs, "Maximum epochs");

  ProbeArgs pr;
  auto* q = app.add_subcommand("probe", "Linear probing of frozen CLS embeddings");
  add_common(q, pr.c);
  q->add_option("--data", pr.data, "Processed dataset directory")->required();
  q->add_option("--pretrained", pr.pretrained, "Pretraining run directory")->required();
  q->add_option("--fractions", pr.fractions, "Training fractions in percent, e.g. 1,5,10,50,100")->delimiter(',');
  q->add_option("--seeds", pr.seeds, "Subsampling seeds, e.g. 2020,2021")->delimiter(',');
  q->add_option("--task", pr.task, "mortality, los72 or aki");
  q->add_flag("--baselines", pr.baselines, "Also probe random weights and median-imputed raw features");

  EvalArgs rec;
  auto* r = app.add_subcommand("reconstruct", "Single-value reconstruction per feature");
  add_common(r, rec.c);
  r->add_option("--data", rec.data, "Processed dataset directory")->required();
  r->add_option("--pretrained", rec.pretrained, "Pretraining run directory")->required();
  r->add_option("--split", rec.split, "train, val, test or all");

  EvalArgs sw;
  auto* w = app.add_subcommand("sweep", "Imputation sweep under random or panel masking");
  add_common(w, sw.c);
  w->add_option("--data", sw.data, "Processed dataset directory")->required();
  w->add_option("--pretrained", sw.pretrained, "Pretraining run directory")->required();
  w->add_option("--mode", sw.mode, "random or panel");
  w->add_option("--ratios", sw.ratios, "Random masking ratios, e.g. 0,0.1,0.2")->delimiter(',');
  w->add_option("--panels", sw.panels, "Feature groups to hide")->delimiter(',');
  w->add_option("--split", sw.split, "train, val, test or all");

  EvalArgs em;
  auto* e = app.add_subcommand("embed", "Dump CLS embeddings to CSV");
  add_common(e, em.c);
  e->add_option("--data", em.data, "Processed dataset directory")->required();
  e->add_option("--pretrained", em.pretrained, "Pretraining run directory")->required();
  e->add_option("--split", em.split, "train, val, test or all");
  em.split = "all";

  AblateArgs ab;
  auto* g = app.add_subcommand("ablate", "Masking-policy and input-variant ablation grid");
  add_common(g, ab.c);
  g->add_option("--data", ab.data, "Processed dataset directory (default: synthesize from config)");
  g->add_option("--epochs", ab.epochs, "Pretraining epochs per cell");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& pe) {
    if (pe.get_exit_code() == 0) {
      // Help requests surface as parse errors; show the innermost command's help.
      auto subs = app.get_subcommands();
      out << (subs.empty() ? app.help() : subs.front()->help());
      return kExitOk;
    }
    err << "error: " << pe.what() << "\n";
    auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitConfig;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (p->parsed()) return cmd_preprocess(pre, out, err);
    if (t->parsed()) return cmd_pretrain(pt, out);
    if (f->parsed()) return cmd_finetune(ft, out);
    if (q->parsed()) return cmd_probe(pr, out);
    if (r->parsed()) return cmd_reconstruct(rec, out);
    if (w->parsed()) return cmd_sweep(sw, out);
    if (e->parsed()) return cmd_embed(em, out);
    if (g->parsed()) return cmd_ablate(ab, out);
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << "\n";
    return kExitConfig;
  } catch (const DataError& ex) {
    err << "data error: " << ex.what() << "\n";
    return kExitData;
  } catch (const std::exception& ex) {
    err << "runtime failure: " << ex.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace aidmae
