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

// Small fixtures shared by the model tests and the acceptance suite.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "aidmae/masking.hpp"
#include "aidmae/model.hpp"
#include "aidmae/objective.hpp"
#include "aidmae/rng.hpp"
#include "oracles.hpp"

namespace fixture {

struct ToyBatch {
  std::vector<std::vector<double>> x, t;
  std::vector<aidmae::IntrinsicMask> masks;
  std::vector<aidmae::MaskPlan> plans;

  std::vector<aidmae::SampleView> views() const {
    std::vector<aidmae::SampleView> v;
    for (std::size_t i = 0; i < x.size(); ++i) v.push_back({x[i], t[i]});
    return v;
  }
};

/// Random samples with roughly 30% missing slots, 30% of the rest hidden,
/// and at least one kept and one hidden slot per sample.
inline ToyBatch toy_batch(std::size_t B, std::size_t L, std::uint64_t seed) {
  aidmae::Rng rng(seed, 17);
  ToyBatch tb;
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<double> x(L), t(L);
    std::vector<std::uint8_t> m(L), keep(L);
    for (std::size_t i = 0; i < L; ++i) {
      m[i] = i < 2 ? 1 : !rng.bernoulli(0.3);
      x[i] = m[i] ? rng.uniform() : 0.0;
      t[i] = m[i] ? std::round(rng.uniform(0.0, 24.0) * 10.0) / 10.0 : 0.0;
    }
    tb.masks.push_back(aidmae::intrinsic_mask_from_bits(m));
    std::vector<std::size_t> hide = {1};
    for (std::size_t i = 2; i < L; ++i)
      if (m[i] && rng.bernoulli(0.3)) hide.push_back(i);
    tb.plans.push_back(aidmae::plan_hiding(tb.masks.back(), hide));
    tb.x.push_back(std::move(x));
    tb.t.push_back(std::move(t));
  }
  return tb;
}

inline aidmae::ModelConfig toy_config(std::size_t L = 8, std::size_t d = 8, std::size_t enc = 2, std::size_t dec = 1) {
  aidmae::ModelConfig c;
  c.grid_length = L;
  c.d_embed = d;
  c.dec_embed = d;
  c.enc_depth = enc;
  c.dec_depth = dec;
  c.enc_heads = 2;
  c.dec_heads = 2;
  c.head_hidden = 4;
  c.init_std = 0.5;  // large enough that every path carries gradient
  return c;
}

inline double pretrain_loss(const aidmae::Model& model, const ToyBatch& tb) {
  aidmae::Tape tape;
  const auto views = tb.views();
  auto pass = aidmae::forward_reconstruct(tape, model, views, tb.plans);
  return aidmae::batch_dual_loss(tape, pass.x_hat, views, tb.masks, tb.plans).item();
}

/// Largest relative error of the full pretraining gradient against central
/// differences over every parameter entry.
inline double pretrain_grad_error(aidmae::Model& model, const ToyBatch& tb, double h = 1e-5) {
  model.zero_grad();
  {
    aidmae::Tape tape;
    const auto views = tb.views();
    auto pass = aidmae::forward_reconstruct(tape, model, views, tb.plans);
    tape.backward(aidmae::batch_dual_loss(tape, pass.x_hat, views, tb.masks, tb.plans));
  }
  double worst = 0.0;
  for (auto& p : model.parameters()) {
    std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    if (analytic.empty()) analytic.assign(p.tensor.numel(), 0.0);
    const auto numeric = oracle::numeric_grad(p.tensor, [&] { return pretrain_loss(model, tb); }, h);
    worst = std::max(worst, oracle::max_rel_err(analytic, numeric, 1e-4));
  }
  return worst;
}

}  // namespace fixture
