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
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "aidmae/masking.hpp"
#include "aidmae/model.hpp"
#include "aidmae/objective.hpp"
#include "aidmae/optim.hpp"
#include "aidmae/pipeline.hpp"

namespace aidmae {

struct PretrainConfig {
  Schedule schedule{1e-3, 1e-5, 20.0, 400.0};
  double weight_decay = 0.05;
  std::size_t batch_size = 64;
  std::size_t accumulation = 1;  // micro-batches per optimizer step
  MaskPolicy policy;
  std::uint64_t seed = 0;
  bool halve_lr_on_nan = false;
  std::size_t eval_batch = 256;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;  // learning rate at the epoch's first step
  LossReport train;
  LossReport val;
  bool has_val = false;
};

/// Position of a pretraining run, enough to resume it step for step.
struct TrainCursor {
  std::uint64_t epoch = 0;
  std::uint64_t batch = 0;  // next batch within the epoch
  double lr_scale = 1.0;
  double best_loss = std::numeric_limits<double>::infinity();
  std::int64_t best_epoch = -1;
  std::uint64_t skipped_steps = 0;
  // Running sums of the current epoch's training reports.
  LossReport epoch_sum;
  std::uint64_t epoch_samples = 0;
};

/// Missing rate per grid slot's feature, estimated on the given rows, mapped
/// through the logit weighting to a per-slot masking probability.
std::vector<double> slot_mask_weights(const Dataset& ds, std::span<const std::size_t> rows, const MaskPolicy& policy);

/// Augmented mask for sample `row` in `epoch`; a pure function of its inputs.
MaskPlan epoch_mask(const TokenArray& s, std::span<const double> slot_weight, std::uint64_t seed, std::uint64_t epoch,
                    std::uint64_t row);

/// Mean dual loss over rows with fixed per-row masks (no gradient).
LossReport evaluate_dual_loss(const Model& model, const Dataset& ds, std::span<const std::size_t> rows,
                              std::span<const double> slot_weight, std::uint64_t seed, std::size_t batch_size);

/// Masked-autoencoder pretraining with a resumable step cursor.
class PretrainSession {
 public:
  PretrainSession(Model& model, const Dataset& ds, PretrainConfig config);

  // Runs up to `n` optimizer steps (stopping at max_epochs). Returns steps run.
  std::size_t run_steps(std::size_t n);
  // Runs to the end of the current epoch.
  void run_epoch();
  // Runs until schedule.max_epochs; `on_epoch` sees every finished epoch.
  void run(const std::function<void(const EpochLog&)>& on_epoch = {});
  bool finished() const;

  std::size_t steps_per_epoch() const;
  const std::vector<EpochLog>& log() const { return log_; }
  const TrainCursor& cursor() const { return cursor_; }
  const AdamW& optimizer() const { return opt_; }
  const std::vector<double>& slot_weights() const { return slot_weight_; }
  const PretrainConfig& config() const { return config_; }

  // Parameter values at the best validation loss so far (empty before the first epoch ends).
  const std::vector<std::vector<double>>& best_params() const { return best_; }

  void save(const std::string& path) const;
  // Restores model, optimizer and cursor from a checkpoint written by save().
  void resume(const std::string& path);

 private:
  void step_batch(std::span<const std::size_t> rows);
  void finish_epoch();
  std::vector<std::size_t> epoch_order(std::uint64_t epoch) const;

  Model& model_;
  const Dataset& ds_;
  PretrainConfig config_;
  std::vector<std::size_t> train_, val_;
  std::vector<double> slot_weight_;
  AdamW opt_;
  TrainCursor cursor_;
  std::vector<EpochLog> log_;
  std::vector<std::vector<double>> best_;
};

/// Copies parameter values in Model::parameters() order.
std::vector<std::vector<double>> snapshot_params(const Model& model);
void restore_params(Model& model, const std::vector<std::vector<double>>& values);

struct FinetuneConfig {
  double enc_lr = 1e-5;
  double head_lr = 1e-3;
  double weight_decay = 1e-5;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  Task task = Task::kMortality;
  std::uint64_t seed = 0;
  bool freeze_encoder = false;
};

struct FinetuneEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_auroc = 0.0;
  double val_loss = 0.0;
};

struct FinetuneResult {
  std::vector<FinetuneEpoch> log;
  std::size_t best_epoch = 0;
  double best_val_auroc = 0.0;
  std::size_t epochs_run = 0;
  bool stopped_early = false;
  double test_auroc = 0.0;
  double test_auprc = 0.0;
  double train_accuracy = 0.0;
};

/// Rows of `split` usable for `task`: first-day rows with a label.
std::vector<std::size_t> labeled_rows(const Dataset& ds, Split split, Task task);

/// Supervised fine-tuning of encoder and head with early stopping on
/// validation AUROC. The model ends with its best-validation parameters.
FinetuneResult finetune(Model& model, const Dataset& ds, const FinetuneConfig& config);

/// Classification logits for rows (eval mode, no augmented masking).
std::vector<double> predict_logits(const Model& model, const Dataset& ds, std::span<const std::size_t> rows,
                                   std::size_t batch_size = 256);

}  // namespace aidmae
