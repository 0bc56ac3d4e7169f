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
#include <span>
#include <vector>

#include "aidmae/masking.hpp"
#include "aidmae/model.hpp"
#include "aidmae/tensor.hpp"

namespace aidmae {

struct LossReport {
  double unmasked_term = 0.0;  // mean squared error over R \ A
  double masked_term = 0.0;    // mean squared error over A (0 when A is empty)
  double total = 0.0;
  std::size_t n_kept = 0;
  std::size_t n_hidden = 0;
  std::size_t n_missing = 0;
};

LossReport dual_reconstruction_loss(std::span<const double> x_hat, std::span<const double> x,
                                    const IntrinsicMask& mask, const MaskPlan& plan);

double bce_with_logits(std::span<const double> logits, std::span<const double> labels);

/// Per-slot loss coefficients: 1/|R\A| on kept, 1/|A| on hidden, 0 elsewhere.
std::vector<double> dual_loss_coefficients(const IntrinsicMask& mask, const MaskPlan& plan);

/// Mean over the batch of per-sample dual losses, recorded on the tape.
/// `reports` receives one LossReport per sample when non-null.
Tensor batch_dual_loss(Tape& tape, const Tensor& x_hat, std::span<const SampleView> samples,
                       std::span<const IntrinsicMask> masks, std::span<const MaskPlan> plans,
                       std::vector<LossReport>* reports = nullptr);

/// Averages reports field by field.
LossReport mean_report(std::span<const LossReport> reports);

}  // namespace aidmae
