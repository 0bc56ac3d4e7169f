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
#include <optional>
#include <span>
#include <vector>

#include "aidmae/rng.hpp"
#include "aidmae/tensor.hpp"

namespace aidmae {

/// Which grid slots hold a recorded measurement. `recorded` and `missing`
/// are sorted 0-based slot indices partitioning [0, L).
struct IntrinsicMask {
  std::vector<std::uint8_t> m;
  std::vector<std::size_t> recorded;
  std::vector<std::size_t> missing;

  std::size_t length() const { return m.size(); }
};

IntrinsicMask derive_intrinsic_mask(std::span<const std::optional<double>> values);
IntrinsicMask intrinsic_mask_from_bits(std::span<const std::uint8_t> bits);

/// Augmented mask for one sample. keep[i] is 1 for slots the encoder sees;
/// it is 0 on hidden recorded slots and on intrinsically missing slots.
struct MaskPlan {
  std::vector<std::uint8_t> keep;
  std::vector<std::size_t> hidden;  // A
  std::vector<std::size_t> kept;    // R \ A
};

struct MaskPolicy {
  double a = 0.0;
  double b = 0.25;
};

/// Per-feature masking probability clamp(a * logit(p) + b, 0, 1), with
/// w = 0 for features that are never observed (p = 1).
std::vector<double> logit_weights(std::span<const double> p_miss, double a, double b);

/// Samples A independently per recorded slot with probability weight[slot].
/// If every recorded slot ends up hidden the draw is repeated once; if that
/// fails too, the recorded slot with the largest weight (first on ties) is kept.
MaskPlan sample_augmented_mask(const IntrinsicMask& mask, std::span<const double> slot_weight, Rng& rng);

/// Plan with A = empty (fine-tuning, probing, embedding).
MaskPlan keep_all(const IntrinsicMask& mask);

/// Plan hiding exactly `hide` (must be recorded slots).
MaskPlan plan_hiding(const IntrinsicMask& mask, std::span<const std::size_t> hide);

/// Slot layout of an encoder batch. Slot 0 of every row is the CLS token,
/// then the kept tokens in grid order, then right padding.
struct PaddedBatch {
  static constexpr std::int32_t kCls = -1;
  static constexpr std::int32_t kPad = -2;

  std::size_t batch = 0;
  std::size_t slots = 0;  // l_keep + 1
  std::vector<std::size_t> lengths;   // kept tokens per sample (without CLS)
  std::vector<std::int32_t> origin;   // batch * slots grid positions, or kCls/kPad
  AttentionMask gamma;                // batch blocks of slots x slots

  std::int32_t origin_at(std::size_t b, std::size_t s) const { return origin[b * slots + s]; }
};

PaddedBatch build_padded_batch(std::span<const std::vector<std::size_t>> kept_per_sample);

}  // namespace aidmae
