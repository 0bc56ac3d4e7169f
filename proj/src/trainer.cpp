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

#include "aidmae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "aidmae/checkpoint.hpp"
#include "aidmae/errors.hpp"
#include "aidmae/metrics.hpp"
#include "aidmae/rng.hpp"

namespace aidmae {

namespace {

constexpr std::uint64_t kOrderStream = 0x6f72646572ULL;
constexpr std::uint64_t kMaskStream = 0x6d61736bULL;
constexpr std::uint64_t kValStream = 0x76616cULL;
constexpr std::uint64_t kDropStream = 0x64726f70ULL;

void accumulate(LossReport& acc, const LossReport& r) {
  acc.unmasked_term += r.unmasked_term;
  acc.masked_term += r.masked_term;
  acc.total += r.total;
  acc.n_kept += r.n_kept;
  acc.n_hidden += r.n_hidden;
  acc.n_missing += r.n_missing;
}

LossReport divided(const LossReport& sum, std::uint64_t n) {
  LossReport r = sum;
  if (n == 0) return r;
  const double d = static_cast<double>(n);
  r.unmasked_term /= d;
  r.masked_term /= d;
  r.total /= d;
  // Counts stay as totals.
  return r;
}

}  // namespace

std::vector<double> slot_mask_weights(const Dataset& ds, std::span<const std::size_t> rows, const MaskPolicy& policy) {
  const auto p_miss = feature_missing_rates(ds, rows);
  const auto w = logit_weights(p_miss, policy.a, policy.b);
  const auto sf = ds.registry.slot_features();
  std::vector<double> out(sf.size());
  for (std::size_t k = 0; k < sf.size(); ++k) out[k] = w[sf[k]];
  return out;
}

MaskPlan epoch_mask(const TokenArray& s, std::span<const double> slot_weight, std::uint64_t seed, std::uint64_t epoch,
                    std::uint64_t row) {
  Rng rng = Rng(seed, kMaskStream).fork(epoch, row);
  return sample_augmented_mask(s.mask(), slot_weight, rng);
}

LossReport evaluate_dual_loss(const Model& model, const Dataset& ds, std::span<const std::size_t> rows,
                              std::span<const double> slot_weight, std::uint64_t seed, std::size_t batch_size) {
  LossReport sum;
  for (std::size_t start = 0; start < rows.size(); start += batch_size) {
    const std::size_t end = std::min(rows.size(), start + batch_size);
    std::vector<SampleView> views;
    std::vector<IntrinsicMask> masks;
    std::vector<MaskPlan> plans;
    for (std::size_t i = start; i < end; ++i) {
      const TokenArray& s = ds.samples[rows[i]];
      views.push_back(s.view());
      masks.push_back(s.mask());
      Rng rng = Rng(seed, kValStream).fork(rows[i]);
      plans.push_back(sample_augmented_mask(masks.back(), slot_weight, rng));
    }
    Tape tape;
    auto pass = forward_reconstruct(tape, model, views, plans);
    auto x_hat = pass.x_hat.data();
    const std::size_t L = ds.grid_length();
    for (std::size_t b = 0; b < views.size(); ++b) {
      accumulate(sum, dual_reconstruction_loss(x_hat.subspan(b * L, L), views[b].x, masks[b], plans[b]));
    }
  }
  return divided(sum, rows.size());
}

std::vector<std::vector<double>> snapshot_params(const Model& model) {
  std::vector<std::vector<double>> out;
  for (const auto& p : model.parameters()) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

void restore_params(Model& model, const std::vector<std::vector<double>>& values) {
  auto params = model.parameters();
  if (params.size() != values.size()) throw ContractError("restore_params: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].tensor.data();
    if (dst.size() != values[i].size()) throw ContractError("restore_params: size mismatch for " + params[i].name);
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

// ---- pretraining ------------------------------------------------------------------

PretrainSession::PretrainSession(Model& model, const Dataset& ds, PretrainConfig config)
    : model_(model), ds_(ds), config_(std::move(config)) {
  if (model.config().grid_length != ds.grid_length())
    throw ConfigError("model grid length does not match the dataset");
  if (config_.batch_size == 0 || config_.accumulation == 0 || config_.accumulation > config_.batch_size)
    throw ConfigError("batch_size must be positive and at least the accumulation count");
  if (!(config_.schedule.max_epochs >= 1.0)) throw ConfigError("max_epochs must be at least 1");
  train_ = ds.indices(Split::kTrain);
  val_ = ds.indices(Split::kVal);
  if (train_.empty()) throw DataError("pretraining needs a non-empty training split");
  slot_weight_ = slot_mask_weights(ds, train_, config_.policy);

  std::vector<Tensor> tensors;
  std::vector<std::size_t> groups;
  for (const auto& p : model_.parameters()) {
    tensors.push_back(p.tensor);
    groups.push_back(0);
  }
  opt_ = AdamW(std::move(tensors), std::move(groups));
}

std::size_t PretrainSession::steps_per_epoch() const {
  return (train_.size() + config_.batch_size - 1) / config_.batch_size;
}

bool PretrainSession::finished() const {
  return static_cast<double>(cursor_.epoch) >= std::floor(config_.schedule.max_epochs);
}

std::vector<std::size_t> PretrainSession::epoch_order(std::uint64_t epoch) const {
  std::vector<std::size_t> order = train_;
  Rng rng = Rng(config_.seed, kOrderStream).fork(epoch);
  rng.shuffle(order);
  return order;
}

void PretrainSession::step_batch(std::span<const std::size_t> rows) {
  model_.zero_grad();
  const std::size_t n = rows.size();
  const std::size_t parts = std::min(config_.accumulation, n);
  for (std::size_t part = 0; part < parts; ++part) {
    const std::size_t lo = part * n / parts, hi = (part + 1) * n / parts;
    std::vector<SampleView> views;
    std::vector<IntrinsicMask> masks;
    std::vector<MaskPlan> plans;
    for (std::size_t i = lo; i < hi; ++i) {
      const TokenArray& s = ds_.samples[rows[i]];
      views.push_back(s.view());
      masks.push_back(s.mask());
      plans.push_back(epoch_mask(s, slot_weight_, config_.seed, cursor_.epoch, rows[i]));
    }
    Tape tape;
    auto pass = forward_reconstruct(tape, model_, views, plans);
    std::vector<LossReport> reports;
    Tensor loss = batch_dual_loss(tape, pass.x_hat, views, masks, plans, &reports);
    if (!std::isfinite(loss.item())) {
      std::ostringstream msg;
      msg << "pretraining diverged: loss " << loss.item() << " at epoch " << cursor_.epoch << " batch "
          << cursor_.batch << " (lr scale " << cursor_.lr_scale << ")";
      throw RuntimeFailure(msg.str());
    }
    // Micro-batch means weighted so the accumulated gradient equals the full-batch mean.
    Tensor scaled = tape.scale(loss, static_cast<double>(hi - lo) / static_cast<double>(n));
    tape.backward(scaled);
    for (const auto& r : reports) accumulate(cursor_.epoch_sum, r);
    cursor_.epoch_samples += reports.size();
  }
  const double progress = static_cast<double>(cursor_.epoch) +
                          static_cast<double>(cursor_.batch) / static_cast<double>(steps_per_epoch());
  const double lr = cosine_lr(progress, config_.schedule) * cursor_.lr_scale;
  const GroupRate rate{lr, config_.weight_decay};
  if (!opt_.step(std::span<const GroupRate>(&rate, 1))) {
    ++cursor_.skipped_steps;
    if (config_.halve_lr_on_nan) cursor_.lr_scale *= 0.5;
  }
}

void PretrainSession::finish_epoch() {
  EpochLog entry;
  entry.epoch = cursor_.epoch;
  entry.lr = cosine_lr(static_cast<double>(cursor_.epoch), config_.schedule) * cursor_.lr_scale;
  entry.train = divided(cursor_.epoch_sum, cursor_.epoch_samples);
  double criterion = entry.train.total;
  if (!val_.empty()) {
    entry.val = evaluate_dual_loss(model_, ds_, val_, slot_weight_, config_.seed, config_.eval_batch);
    entry.has_val = true;
    criterion = entry.val.total;
  }
  if (criterion < cursor_.best_loss) {
    cursor_.best_loss = criterion;
    cursor_.best_epoch = static_cast<std::int64_t>(cursor_.epoch);
    best_ = snapshot_params(model_);
  }
  log_.push_back(entry);
  ++cursor_.epoch;
  cursor_.batch = 0;
  cursor_.epoch_sum = LossReport{};
  cursor_.epoch_samples = 0;
}

std::size_t PretrainSession::run_steps(std::size_t n) {
  std::size_t done = 0;
  const std::size_t per_epoch = steps_per_epoch();
  while (done < n && !finished()) {
    const auto order = epoch_order(cursor_.epoch);
    const std::size_t b = static_cast<std::size_t>(cursor_.batch);
    const std::size_t lo = b * config_.batch_size;
    const std::size_t hi = std::min(order.size(), lo + config_.batch_size);
    step_batch(std::span<const std::size_t>(order).subspan(lo, hi - lo));
    ++done;
    ++cursor_.batch;
    if (cursor_.batch == per_epoch) finish_epoch();
  }
  return done;
}

void PretrainSession::run_epoch() {
  const std::uint64_t e = cursor_.epoch;
  while (!finished() && cursor_.epoch == e) run_steps(1);
}

void PretrainSession::run(const std::function<void(const EpochLog&)>& on_epoch) {
  while (!finished()) {
    run_epoch();
    if (on_epoch && !log_.empty()) on_epoch(log_.back());
  }
}

namespace {

nlohmann::json report_json(const LossReport& r) {
  return {{"unmasked", r.unmasked_term}, {"masked", r.masked_term}, {"total", r.total},
          {"n_kept", r.n_kept},          {"n_hidden", r.n_hidden},  {"n_missing", r.n_missing}};
}

LossReport report_from(const nlohmann::json& j) {
  LossReport r;
  r.unmasked_term = j.at("unmasked").get<double>();
  r.masked_term = j.at("masked").get<double>();
  r.total = j.at("total").get<double>();
  r.n_kept = j.at("n_kept").get<std::size_t>();
  r.n_hidden = j.at("n_hidden").get<std::size_t>();
  r.n_missing = j.at("n_missing").get<std::size_t>();
  return r;
}

}  // namespace

void PretrainSession::save(const std::string& path) const {
  nlohmann::json meta;
  meta["kind"] = "pretrain";
  // Doubles go through JSON as exact round-trip decimal text.
  meta["cursor"] = {{"epoch", cursor_.epoch},
                    {"batch", cursor_.batch},
                    {"lr_scale", cursor_.lr_scale},
                    {"best_loss", std::isfinite(cursor_.best_loss) ? nlohmann::json(cursor_.best_loss) : nlohmann::json()},
                    {"best_epoch", cursor_.best_epoch},
                    {"skipped_steps", cursor_.skipped_steps},
                    {"epoch_sum", report_json(cursor_.epoch_sum)},
                    {"epoch_samples", cursor_.epoch_samples}};
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : log_) {
    log.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"train", report_json(e.train)},
                   {"val", report_json(e.val)}, {"has_val", e.has_val}});
  }
  meta["log"] = log;
  meta["seed"] = config_.seed;
  save_checkpoint(path, model_, &opt_, meta, best_);
}

void PretrainSession::resume(const std::string& path) {
  CheckpointData ck = read_checkpoint(path);
  load_params(model_, ck);
  if (!ck.has_optimizer) throw DataError("checkpoint '" + path + "' has no optimizer state to resume from");
  opt_.restore(ck.opt_step, std::move(ck.m), std::move(ck.v));
  const auto& c = ck.meta.at("cursor");
  cursor_.epoch = c.at("epoch").get<std::uint64_t>();
  cursor_.batch = c.at("batch").get<std::uint64_t>();
  cursor_.lr_scale = c.at("lr_scale").get<double>();
  cursor_.best_loss = c.at("best_loss").is_null() ? std::numeric_limits<double>::infinity()
                                                  : c.at("best_loss").get<double>();
  cursor_.best_epoch = c.at("best_epoch").get<std::int64_t>();
  cursor_.skipped_steps = c.at("skipped_steps").get<std::uint64_t>();
  cursor_.epoch_sum = report_from(c.at("epoch_sum"));
  cursor_.epoch_samples = c.at("epoch_samples").get<std::uint64_t>();
  log_.clear();
  for (const auto& e : ck.meta.at("log")) {
    EpochLog entry;
    entry.epoch = e.at("epoch").get<std::size_t>();
    entry.lr = e.at("lr").get<double>();
    entry.train = report_from(e.at("train"));
    entry.val = report_from(e.at("val"));
    entry.has_val = e.at("has_val").get<bool>();
    log_.push_back(entry);
  }
  best_ = std::move(ck.best);
}

// ---- fine-tuning ------------------------------------------------------------------

std::vector<std::size_t> labeled_rows(const Dataset& ds, Split split, Task task) {
  std::vector<std::size_t> out;
  for (std::size_t i : first_day_indices(ds, split)) {
    if (ds.samples[i].labels[static_cast<std::size_t>(task)] >= 0) out.push_back(i);
  }
  return out;
}

namespace {

std::vector<double> labels_of(const Dataset& ds, std::span<const std::size_t> rows, Task task) {
  std::vector<double> y;
  y.reserve(rows.size());
  for (std::size_t i : rows) y.push_back(ds.samples[i].labels[static_cast<std::size_t>(task)]);
  return y;
}

void require_both_classes(std::span<const double> y, const char* split, Task task) {
  bool pos = false, neg = false;
  for (double v : y) (v > 0.5 ? pos : neg) = true;
  if (!pos || !neg) {
    throw DataError(std::string("fine-tuning needs both classes of task '") + to_string(task) + "' in the " + split +
                    " split");
  }
}

Tensor forward_logits(Tape& tape, const Model& model, const Dataset& ds, std::span<const std::size_t> rows, Rng& rng,
                      bool training) {
  std::vector<SampleView> views;
  std::vector<std::vector<std::size_t>> kept;
  for (std::size_t i : rows) {
    const TokenArray& s = ds.samples[i];
    views.push_back(s.view());
    kept.push_back(keep_all(s.mask()).kept);
  }
  PaddedBatch batch = build_padded_batch(kept);
  Tensor z = model.embed_batch(tape, batch, views);
  Tensor h = model.encode(tape, z, batch);
  return model.classify(tape, h, batch, rng, training);
}

}  // namespace

std::vector<double> predict_logits(const Model& model, const Dataset& ds, std::span<const std::size_t> rows,
                                   std::size_t batch_size) {
  std::vector<double> out;
  out.reserve(rows.size());
  Rng unused(0);
  for (std::size_t start = 0; start < rows.size(); start += batch_size) {
    const std::size_t end = std::min(rows.size(), start + batch_size);
    Tape tape;
    Tensor logits = forward_logits(tape, model, ds, rows.subspan(start, end - start), unused, false);
    out.insert(out.end(), logits.data().begin(), logits.data().end());
  }
  return out;
}

FinetuneResult finetune(Model& model, const Dataset& ds, const FinetuneConfig& cfg) {
  if (model.config().grid_length != ds.grid_length())
    throw ConfigError("model grid length does not match the dataset");
  if (cfg.batch_size == 0) throw ConfigError("fine-tuning batch_size must be positive");
  const auto train = labeled_rows(ds, Split::kTrain, cfg.task);
  const auto val = labeled_rows(ds, Split::kVal, cfg.task);
  const auto test = labeled_rows(ds, Split::kTest, cfg.task);
  const auto y_train = labels_of(ds, train, cfg.task);
  const auto y_val = labels_of(ds, val, cfg.task);
  require_both_classes(y_train, "train", cfg.task);
  require_both_classes(y_val, "validation", cfg.task);

  std::vector<Tensor> tensors;
  std::vector<std::size_t> groups;
  for (const auto& p : model.parameters()) {
    if (p.group == ParamGroup::kDecoder) continue;
    if (p.group == ParamGroup::kEncoder && cfg.freeze_encoder) continue;
    tensors.push_back(p.tensor);
    groups.push_back(p.group == ParamGroup::kHead ? 1 : 0);
  }
  AdamW opt(std::move(tensors), std::move(groups));
  const GroupRate rates[2] = {{cfg.enc_lr, cfg.weight_decay}, {cfg.head_lr, cfg.weight_decay}};

  FinetuneResult result;
  result.best_val_auroc = -1.0;
  std::vector<std::vector<double>> best = snapshot_params(model);
  std::size_t since_best = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng(cfg.seed, kOrderStream).fork(epoch).shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::size_t> rows;
      std::vector<double> y;
      for (std::size_t k = start; k < end; ++k) {
        rows.push_back(train[order[k]]);
        y.push_back(y_train[order[k]]);
      }
      model.zero_grad();
      Tape tape;
      Rng drop = Rng(cfg.seed, kDropStream).fork(epoch, batches);
      Tensor logits = forward_logits(tape, model, ds, rows, drop, true);
      Tensor loss = tape.bce_with_logits(logits, y);
      if (!std::isfinite(loss.item())) throw RuntimeFailure("fine-tuning diverged (non-finite loss)");
      tape.backward(loss);
      opt.step(rates);
      loss_sum += loss.item();
      ++batches;
    }
    FinetuneEpoch entry;
    entry.epoch = epoch;
    entry.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    const auto val_logits = predict_logits(model, ds, val);
    entry.val_auroc = auroc(val_logits, y_val);
    entry.val_loss = bce_with_logits(val_logits, y_val);
    result.log.push_back(entry);
    result.epochs_run = epoch + 1;
    // Equal AUROC counts as progress only when the validation loss also drops.
    const bool better = entry.val_auroc > result.best_val_auroc ||
                        (entry.val_auroc == result.best_val_auroc && entry.val_loss < best_val_loss);
    if (better) {
      result.best_val_auroc = entry.val_auroc;
      best_val_loss = entry.val_loss;
      result.best_epoch = epoch;
      best = snapshot_params(model);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  restore_params(model, best);

  const auto train_logits = predict_logits(model, ds, train);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < train.size(); ++i) correct += ((train_logits[i] > 0.0) == (y_train[i] > 0.5));
  result.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
  const auto y_test = labels_of(ds, test, cfg.task);
  if (!test.empty()) {
    const auto s = predict_logits(model, ds, test);
    try {
      result.test_auroc = auroc(s, y_test);
      result.test_auprc = auprc(s, y_test);
    } catch (const UndefinedMetricError&) {
      result.test_auroc = result.test_auprc = std::nan("");
    }
  } else {
    result.test_auroc = result.test_auprc = std::nan("");
  }
  return result;
}

}  // namespace aidmae
