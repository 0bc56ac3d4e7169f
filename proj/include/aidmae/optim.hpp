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
#include <span>
#include <vector>

#include "aidmae/tensor.hpp"

namespace aidmae {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Learning rate and decoupled weight decay for one parameter group.
struct GroupRate {
  double lr = 0.0;
  double weight_decay = 0.0;
};

/// AdamW over a fixed list of tensors. Each tensor belongs to a group whose
/// rate is supplied at step time, so encoder and head can move at
/// different speeds.
class AdamW {
 public:
  AdamW() = default;
  AdamW(std::vector<Tensor> params, std::vector<std::size_t> groups, AdamWConfig config = {});

  // Applies one update from the tensors' current gradients. Returns false
  // (and leaves everything untouched) if any gradient is not finite.
  bool step(std::span<const GroupRate> rates);

  std::uint64_t steps() const { return step_; }
  std::size_t size() const { return params_.size(); }
  const std::vector<double>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<double>& second_moment(std::size_t i) const { return v_[i]; }

  // Restores saved state; shapes must match the tensor list.
  void restore(std::uint64_t step, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v);

 private:
  std::vector<Tensor> params_;
  std::vector<std::size_t> groups_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t step_ = 0;
};

struct Schedule {
  double base_lr = 1e-3;
  double min_lr = 1e-5;
  double warmup_epochs = 20.0;
  double max_epochs = 400.0;
};

/// Linear warmup from 0 to base_lr over warmup_epochs, then cosine decay to
/// min_lr at max_epochs. `epoch` may be fractional.
double cosine_lr(double epoch, const Schedule& s);

}  // namespace aidmae
