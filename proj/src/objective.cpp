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

#include "aidmae/objective.hpp"

#include <algorithm>
#include <cmath>

#include "aidmae/errors.hpp"

namespace aidmae {

LossReport dual_reconstruction_loss(std::span<const double> x_hat, std::span<const double> x,
                                    const IntrinsicMask& mask, const MaskPlan& plan) {
  const std::size_t L = mask.length();
  if (x_hat.size() != L || x.size() != L || plan.keep.size() != L) {
    throw DimensionError("dual_reconstruction_loss: vectors must all have length " + std::to_string(L));
  }
  LossReport r;
  r.n_kept = plan.kept.size();
  r.n_hidden = plan.hidden.size();
  r.n_missing = mask.missing.size();
  double s_kept = 0.0, s_hidden = 0.0;
  for (std::size_t i : plan.kept) s_kept += (x_hat[i] - x[i]) * (x_hat[i] - x[i]);
  for (std::size_t i : plan.hidden) s_hidden += (x_hat[i] - x[i]) * (x_hat[i] - x[i]);
  if (r.n_kept) r.unmasked_term = s_kept / static_cast<double>(r.n_kept);
  if (r.n_hidden) r.masked_term = s_hidden / static_cast<double>(r.n_hidden);
  r.total = r.unmasked_term + r.masked_term;
  return r;
}

double bce_with_logits(std::span<const double> logits, std::span<const double> labels) {
  if (logits.size() != labels.size() || logits.empty()) {
    throw DimensionError("bce_with_logits: logits and labels must be non-empty and equal length");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    s += std::max(z, 0.0) - z * labels[i] + std::log1p(std::exp(-std::abs(z)));
  }
  return s / static_cast<double>(logits.size());
}

std::vector<double> dual_loss_coefficients(const IntrinsicMask& mask, const MaskPlan& plan) {
  std::vector<double> c(mask.length(), 0.0);
  if (!plan.kept.empty()) {
    const double w = 1.0 / static_cast<double>(plan.kept.size());
    for (std::size_t i : plan.kept) c[i] = w;
  }
  if (!plan.hidden.empty()) {
    const double w = 1.0 / static_cast<double>(plan.hidden.size());
    for (std::size_t i : plan.hidden) c[i] = w;
  }
  return c;
}

Tensor batch_dual_loss(Tape& tape, const Tensor& x_hat, std::span<const SampleView> samples,
                       std::span<const IntrinsicMask> masks, std::span<const MaskPlan> plans,
                       std::vector<LossReport>* reports) {
  const std::size_t B = samples.size();
  if (x_hat.rank() != 2 || x_hat.dim(0) != B || masks.size() != B || plans.size() != B) {
    throw DimensionError("batch_dual_loss: prediction " + shape_str(x_hat.shape()) + " vs batch of " +
                         std::to_string(B));
  }
  const std::size_t L = x_hat.dim(1);
  std::vector<double> target(B * L, 0.0), coeff(B * L, 0.0);
  if (reports) reports->clear();
  for (std::size_t b = 0; b < B; ++b) {
    const auto c = dual_loss_coefficients(masks[b], plans[b]);
    for (std::size_t i = 0; i < L; ++i) {
      coeff[b * L + i] = c[i] / static_cast<double>(B);
      // Missing slots keep a zero target; their coefficient is zero anyway.
      if (masks[b].m[i]) target[b * L + i] = samples[b].x[i];
    }
    if (reports) {
      reports->push_back(dual_reconstruction_loss(x_hat.data().subspan(b * L, L), samples[b].x, masks[b], plans[b]));
    }
  }
  return tape.weighted_sse(x_hat, target, coeff);
}

LossReport mean_report(std::span<const LossReport> reports) {
  LossReport m;
  if (reports.empty()) return m;
  for (const auto& r : reports) {
    m.unmasked_term += r.unmasked_term;
    m.masked_term += r.masked_term;
    m.total += r.total;
    m.n_kept += r.n_kept;
    m.n_hidden += r.n_hidden;
    m.n_missing += r.n_missing;
  }
  const double n = static_cast<double>(reports.size());
  m.unmasked_term /= n;
  m.masked_term /= n;
  m.total /= n;
  return m;
}

}  // namespace aidmae
