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

#include "aidmae/optim.hpp"

#include <cmath>
#include <numbers>

#include "aidmae/errors.hpp"

namespace aidmae {

AdamW::AdamW(std::vector<Tensor> params, std::vector<std::size_t> groups, AdamWConfig config)
    : params_(std::move(params)), groups_(std::move(groups)), config_(config) {
  if (groups_.size() != params_.size()) throw ContractError("AdamW: one group id per tensor required");
  for (const Tensor& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

bool AdamW::step(std::span<const GroupRate> rates) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (groups_[i] >= rates.size()) throw ContractError("AdamW: no rate for parameter group");
    for (double g : params_[i].grad())
      if (!std::isfinite(g)) return false;
  }
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const GroupRate& r = rates[groups_[i]];
    auto theta = params_[i].data();
    auto grad = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double g = grad.empty() ? 0.0 : grad[k];
      m[k] = b1 * m[k] + (1.0 - b1) * g;
      v[k] = b2 * v[k] + (1.0 - b2) * g * g;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      theta[k] = theta[k] - r.lr * (mhat / (std::sqrt(vhat) + config_.eps)) - r.lr * r.weight_decay * theta[k];
    }
  }
  return true;
}

void AdamW::restore(std::uint64_t step, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v) {
  if (m.size() != params_.size() || v.size() != params_.size())
    throw DataError("optimizer state does not match the parameter list");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (m[i].size() != params_[i].numel() || v[i].size() != params_[i].numel())
      throw DataError("optimizer state shape mismatch");
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

double cosine_lr(double epoch, const Schedule& s) {
  if (epoch < 0.0) throw DomainError("cosine_lr: negative epoch");
  if (epoch < s.warmup_epochs) return s.base_lr * epoch / s.warmup_epochs;
  const double span = s.max_epochs - s.warmup_epochs;
  double progress = span > 0.0 ? (epoch - s.warmup_epochs) / span : 1.0;
  if (progress > 1.0) progress = 1.0;
  return s.min_lr + 0.5 * (s.base_lr - s.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace aidmae
