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

#include "aidmae/config.hpp"

#include <cstdlib>
#include <fstream>

#include "aidmae/errors.hpp"

namespace aidmae {

using nlohmann::json;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace

json model_config_to_json(const ModelConfig& c) {
  return {{"grid_length", c.grid_length}, {"d_embed", c.d_embed},       {"enc_depth", c.enc_depth},
          {"enc_heads", c.enc_heads},     {"mlp_ratio", c.mlp_ratio},   {"dec_embed", c.dec_embed},
          {"dec_depth", c.dec_depth},     {"dec_heads", c.dec_heads},   {"head_hidden", c.head_hidden},
          {"head_dropout", c.head_dropout}, {"init_std", c.init_std},   {"norm_eps", c.norm_eps}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
  const std::string w = "model";
  reject_unknown_keys(j, {"grid_length", "d_embed", "enc_depth", "enc_heads", "mlp_ratio", "dec_embed", "dec_depth",
                          "dec_heads", "head_hidden", "head_dropout", "init_std", "norm_eps"},
                      w);
  read(j, "grid_length", c.grid_length, w);
  read(j, "d_embed", c.d_embed, w);
  read(j, "enc_depth", c.enc_depth, w);
  read(j, "enc_heads", c.enc_heads, w);
  read(j, "mlp_ratio", c.mlp_ratio, w);
  read(j, "dec_embed", c.dec_embed, w);
  read(j, "dec_depth", c.dec_depth, w);
  read(j, "dec_heads", c.dec_heads, w);
  read(j, "head_hidden", c.head_hidden, w);
  read(j, "head_dropout", c.head_dropout, w);
  read(j, "init_std", c.init_std, w);
  read(j, "norm_eps", c.norm_eps, w);
  return c;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  reject_unknown_keys(j, {"seed", "output_dir", "data", "model", "masking", "pretrain", "finetune", "eval", "ablation"},
                      "config");
  read(j, "seed", c.seed, "config");
  read(j, "output_dir", c.output_dir, "config");
  c.pretrain.seed = c.seed;
  c.finetune.seed = c.seed;

  if (j.contains("data")) {
    const json& d = j["data"];
    const std::string w = "data";
    reject_unknown_keys(d, {"events", "labels", "registry", "time_format", "cut_time", "val_fraction", "variant", "synth"},
                        w);
    read(d, "events", c.data.events, w);
    read(d, "labels", c.data.labels, w);
    read(d, "registry", c.data.registry, w);
    read(d, "time_format", c.data.time_format, w);
    if (d.contains("cut_time")) {
      double v = 0.0;
      read(d, "cut_time", v, w);
      c.data.cut_time = v;
    }
    read(d, "val_fraction", c.data.val_fraction, w);
    read(d, "variant", c.data.variant, w);
    if (d.contains("synth")) c.data.synth = SynthConfig::from_json(d["synth"]);
  }
  c.data.synth.seed = j.contains("data") && j["data"].contains("synth") && j["data"]["synth"].contains("seed")
                          ? c.data.synth.seed
                          : c.seed;
  if (j.contains("model")) c.model = model_config_from_json(j["model"], c.model);
  if (j.contains("masking")) {
    const json& m = j["masking"];
    reject_unknown_keys(m, {"a", "b"}, "masking");
    read(m, "a", c.pretrain.policy.a, "masking");
    read(m, "b", c.pretrain.policy.b, "masking");
  }
  if (j.contains("pretrain")) {
    const json& p = j["pretrain"];
    const std::string w = "pretrain";
    reject_unknown_keys(p, {"base_lr", "min_lr", "warmup_epochs", "max_epochs", "weight_decay", "batch_size",
                            "accumulation", "halve_lr_on_nan", "eval_batch"},
                        w);
    read(p, "base_lr", c.pretrain.schedule.base_lr, w);
    read(p, "min_lr", c.pretrain.schedule.min_lr, w);
    read(p, "warmup_epochs", c.pretrain.schedule.warmup_epochs, w);
    read(p, "max_epochs", c.pretrain.schedule.max_epochs, w);
    read(p, "weight_decay", c.pretrain.weight_decay, w);
    read(p, "batch_size", c.pretrain.batch_size, w);
    read(p, "accumulation", c.pretrain.accumulation, w);
    read(p, "halve_lr_on_nan", c.pretrain.halve_lr_on_nan, w);
    read(p, "eval_batch", c.pretrain.eval_batch, w);
  }
  if (j.contains("finetune")) {
    const json& f = j["finetune"];
    const std::string w = "finetune";
    reject_unknown_keys(f, {"enc_lr", "head_lr", "weight_decay", "batch_size", "max_epochs", "patience", "task",
                            "freeze_encoder"},
                        w);
    read(f, "enc_lr", c.finetune.enc_lr, w);
    read(f, "head_lr", c.finetune.head_lr, w);
    read(f, "weight_decay", c.finetune.weight_decay, w);
    read(f, "batch_size", c.finetune.batch_size, w);
    read(f, "max_epochs", c.finetune.max_epochs, w);
    read(f, "patience", c.finetune.patience, w);
    read(f, "freeze_encoder", c.finetune.freeze_encoder, w);
    if (f.contains("task")) {
      std::string t;
      read(f, "task", t, w);
      c.finetune.task = task_from_string(t);
    }
  }
  if (j.contains("eval")) {
    const json& e = j["eval"];
    const std::string w = "eval";
    reject_unknown_keys(e, {"task", "fractions", "seeds", "C", "ratios", "panels", "batch_size"}, w);
    if (e.contains("task")) {
      std::string t;
      read(e, "task", t, w);
      c.eval.probe.task = task_from_string(t);
    }
    read(e, "fractions", c.eval.probe.fractions, w);
    read(e, "seeds", c.eval.probe.seeds, w);
    read(e, "C", c.eval.probe.C, w);
    read(e, "ratios", c.eval.ratios, w);
    read(e, "panels", c.eval.panels, w);
    read(e, "batch_size", c.eval.batch_size, w);
  }
  if (j.contains("ablation")) {
    const json& a = j["ablation"];
    const std::string w = "ablation";
    reject_unknown_keys(a, {"grid", "variants", "recon_ratio"}, w);
    if (a.contains("grid")) {
      c.ablation.grid.clear();
      for (const auto& cell : a["grid"]) {
        reject_unknown_keys(cell, {"a", "b"}, "ablation.grid[]");
        std::pair<double, double> ab{0.0, 0.25};
        read(cell, "a", ab.first, w);
        read(cell, "b", ab.second, w);
        c.ablation.grid.push_back(ab);
      }
    }
    read(a, "variants", c.ablation.variants, w);
    read(a, "recon_ratio", c.ablation.recon_ratio, w);
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  try {
    return from_json(json::parse(f));
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

json RunConfig::to_json() const {
  json grid = json::array();
  for (const auto& [a, b] : ablation.grid) grid.push_back({{"a", a}, {"b", b}});
  json data_j = {{"events", data.events},           {"labels", data.labels},
                 {"registry", data.registry},       {"time_format", data.time_format},
                 {"val_fraction", data.val_fraction}, {"variant", data.variant},
                 {"synth", data.synth.to_json()}};
  if (data.cut_time) data_j["cut_time"] = *data.cut_time;
  return {
      {"seed", seed},
      {"output_dir", output_dir},
      {"data", data_j},
      {"model", model_config_to_json(model)},
      {"masking", {{"a", pretrain.policy.a}, {"b", pretrain.policy.b}}},
      {"pretrain",
       {{"base_lr", pretrain.schedule.base_lr},
        {"min_lr", pretrain.schedule.min_lr},
        {"warmup_epochs", pretrain.schedule.warmup_epochs},
        {"max_epochs", pretrain.schedule.max_epochs},
        {"weight_decay", pretrain.weight_decay},
        {"batch_size", pretrain.batch_size},
        {"accumulation", pretrain.accumulation},
        {"halve_lr_on_nan", pretrain.halve_lr_on_nan},
        {"eval_batch", pretrain.eval_batch}}},
      {"finetune",
       {{"enc_lr", finetune.enc_lr},
        {"head_lr", finetune.head_lr},
        {"weight_decay", finetune.weight_decay},
        {"batch_size", finetune.batch_size},
        {"max_epochs", finetune.max_epochs},
        {"patience", finetune.patience},
        {"task", to_string(finetune.task)},
        {"freeze_encoder", finetune.freeze_encoder}}},
      {"eval",
       {{"task", to_string(eval.probe.task)},
        {"fractions", eval.probe.fractions},
        {"seeds", eval.probe.seeds},
        {"C", eval.probe.C},
        {"ratios", eval.ratios},
        {"panels", eval.panels},
        {"batch_size", eval.batch_size}}},
      {"ablation", {{"grid", grid}, {"variants", ablation.variants}, {"recon_ratio", ablation.recon_ratio}}},
  };
}

std::string default_output_dir() {
  const char* env = std::getenv("AIDMAE_OUTPUT_DIR");
  return env && *env ? std::string(env) : std::string("runs");
}

}  // namespace aidmae
