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

#include "aidmae/masking.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aidmae/errors.hpp"

namespace aidmae {

IntrinsicMask intrinsic_mask_from_bits(std::span<const std::uint8_t> bits) {
  IntrinsicMask im;
  im.m.assign(bits.begin(), bits.end());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) {
      im.m[i] = 1;
      im.recorded.push_back(i);
    } else {
      im.missing.push_back(i);
    }
  }
  return im;
}

IntrinsicMask derive_intrinsic_mask(std::span<const std::optional<double>> values) {
  std::vector<std::uint8_t> bits(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) bits[i] = values[i].has_value() ? 1 : 0;
  return intrinsic_mask_from_bits(bits);
}

std::vector<double> logit_weights(std::span<const double> p_miss, double a, double b) {
  if (!(b > 0.0 && b < 1.0)) throw DomainError("logit_weights: b must lie in (0, 1), got " + std::to_string(b));
  std::vector<double> w(p_miss.size());
  for (std::size_t j = 0; j < p_miss.size(); ++j) {
    const double p = p_miss[j];
    if (!(p >= 0.0 && p <= 1.0)) {
      throw DomainError("logit_weights: missing rate " + std::to_string(p) + " outside [0, 1] for feature " +
                        std::to_string(j));
    }
    if (p == 1.0) {
      w[j] = 0.0;
      continue;
    }
    if (a == 0.0) {
      w[j] = std::clamp(b, 0.0, 1.0);
      continue;
    }
    // p == 0 gives -inf * a, which the clamp resolves to 0 or 1.
    const double v = a * std::log(p / (1.0 - p)) + b;
    w[j] = std::clamp(v, 0.0, 1.0);
  }
  return w;
}

namespace {

MaskPlan plan_from_keep(const IntrinsicMask& mask, std::vector<std::uint8_t> keep) {
  MaskPlan plan;
  for (std::size_t i : mask.recorded) {
    if (keep[i]) {
      plan.kept.push_back(i);
    } else {
      plan.hidden.push_back(i);
    }
  }
  plan.keep = std::move(keep);
  return plan;
}

}  // namespace

MaskPlan sample_augmented_mask(const IntrinsicMask& mask, std::span<const double> slot_weight, Rng& rng) {
  if (slot_weight.size() != mask.length()) {
    throw DimensionError("sample_augmented_mask: " + std::to_string(slot_weight.size()) + " weights for " +
                         std::to_string(mask.length()) + " slots");
  }
  std::vector<std::uint8_t> keep(mask.length(), 0);
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::size_t n_kept = 0;
    for (std::size_t i : mask.recorded) {
      keep[i] = rng.bernoulli(slot_weight[i]) ? 0 : 1;
      n_kept += keep[i];
    }
    if (n_kept > 0 || mask.recorded.empty()) return plan_from_keep(mask, std::move(keep));
  }
  std::size_t best = mask.recorded.front();
  for (std::size_t i : mask.recorded)
    if (slot_weight[i] > slot_weight[best]) best = i;
  keep[best] = 1;
  return plan_from_keep(mask, std::move(keep));
}

MaskPlan keep_all(const IntrinsicMask& mask) { return plan_from_keep(mask, mask.m); }

MaskPlan plan_hiding(const IntrinsicMask& mask, std::span<const std::size_t> hide) {
  std::vector<std::uint8_t> keep = mask.m;
  for (std::size_t i : hide) {
    if (i >= keep.size() || !mask.m[i]) {
      throw ContractError("plan_hiding: slot " + std::to_string(i) + " is not recorded");
    }
    keep[i] = 0;
  }
  return plan_from_keep(mask, std::move(keep));
}

PaddedBatch build_padded_batch(std::span<const std::vector<std::size_t>> kept_per_sample) {
  if (kept_per_sample.empty()) throw ContractError("build_padded_batch: empty batch");
  PaddedBatch pb;
  pb.batch = kept_per_sample.size();
  std::size_t keep_max = 0;
  for (const auto& k : kept_per_sample) {
    if (k.empty()) throw ContractError("build_padded_batch: sample without kept tokens");
    keep_max = std::max(keep_max, k.size());
    pb.lengths.push_back(k.size());
  }
  pb.slots = keep_max + 1;
  pb.origin.assign(pb.batch * pb.slots, PaddedBatch::kPad);
  pb.gamma.groups = pb.batch;
  pb.gamma.length = pb.slots;
  pb.gamma.allow.assign(pb.batch * pb.slots * pb.slots, 0);
  for (std::size_t b = 0; b < pb.batch; ++b) {
    pb.origin[b * pb.slots] = PaddedBatch::kCls;
    for (std::size_t s = 0; s < kept_per_sample[b].size(); ++s) {
      pb.origin[b * pb.slots + s + 1] = static_cast<std::int32_t>(kept_per_sample[b][s]);
    }
    const std::size_t real = kept_per_sample[b].size() + 1;
    for (std::size_t i = 0; i < real; ++i)
      for (std::size_t j = 0; j < real; ++j) pb.gamma.allow[(b * pb.slots + i) * pb.slots + j] = 1;
  }
  return pb;
}

}  // namespace aidmae
