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


#include <doctest.h>

#include <cmath>
#include <vector>

#include "aidmae/errors.hpp"
#include "aidmae/model.hpp"
#include "aidmae/objective.hpp"
#include "fixtures.hpp"
#include "mp_oracle.hpp"

using namespace aidmae;

namespace {

std::vector<double> copy_of(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("sinusoidal table matches a 256-bit evaluation") {
  const std::size_t L = 362, d = 64;
  const Tensor p = sinusoidal_pe(L, d);
  CHECK(p.at({1, 0}) == std::sin(1.0));
  CHECK(p.at({1, 1}) == std::cos(1.0));
  for (std::size_t k = 0; k < d; ++k) CHECK(p.at({0, k}) == (k % 2 == 0 ? 0.0 : 1.0));
  double worst = 0.0;
  for (std::size_t pos = 0; pos < L; ++pos) {
    for (std::size_t k = 0; k < d / 2; ++k) {
      const oracle::Mp expo = oracle::Mp(static_cast<double>(2 * k)) / oracle::Mp(static_cast<double>(d));
      const oracle::Mp angle = oracle::Mp(static_cast<double>(pos)) / oracle::mp_pow(oracle::Mp(10000.0), expo);
      worst = std::max(worst, std::abs(p.at({pos, 2 * k}) - oracle::mp_sin(angle).get()));
      worst = std::max(worst, std::abs(p.at({pos, 2 * k + 1}) - oracle::mp_cos(angle).get()));
    }
  }
  CHECK(worst < 1e-12);
  CHECK_THROWS_AS(sinusoidal_pe(4, 7), ConfigError);
}

TEST_CASE("positional table is not a learnable parameter") {
  Model model(fixture::toy_config(), 1);
  for (const auto& p : model.parameters()) CHECK(p.tensor.impl() != model.positional().impl());
  CHECK_FALSE(model.positional().requires_grad());
}

TEST_CASE("embedding with zero projections is the positional table") {
  Model model(fixture::toy_config(), 3);
  auto& P = model.params();
  for (Tensor* t : {&P.value_w, &P.value_b, &P.time_w, &P.time_b})
    for (auto& v : t->data()) v = 0.0;
  const std::vector<double> x = {1, -2, 3, 4, 5, 6, 7, 8}, t = {0, 1, 2, 3, 4, 5, 6, 23.5};
  Tape tape;
  const Tensor z = model.embed_tokens(tape, x, t);
  CHECK(copy_of(z) == copy_of(model.positional()));
}

TEST_CASE("embedding is affine in value and time") {
  Model model(fixture::toy_config(), 4);
  const auto& P = model.params();
  const std::vector<double> x = {0.1, 0.5, -0.3, 0.9, 0.2, 0.0, 0.7, 0.4}, t = {0, 1, 2, 3, 4, 5, 6, 7};
  Tape tape;
  const Tensor z = model.embed_tokens(tape, x, t);
  const std::size_t d = 8;
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      const double ref = x[i] * P.value_w[k] + P.value_b[k] + t[i] * P.time_w[k] + P.time_b[k] +
                         model.positional().at({i, k});
      CHECK(std::abs(z.at({i, k}) - ref) < 1e-14);
    }
  // Same value and time in two slots: rows differ by exactly the positional difference.
  const std::vector<double> xs(8, 0.25), ts(8, 2.0);
  const Tensor zs = model.embed_tokens(tape, xs, ts);
  for (std::size_t k = 0; k < d; ++k) {
    CHECK(std::abs((zs.at({5, k}) - zs.at({2, k})) - (model.positional().at({5, k}) - model.positional().at({2, k}))) <
          1e-14);
  }
}

TEST_CASE("embedding Jacobian matches central differences") {
  Model model(fixture::toy_config(), 5);
  const std::vector<double> x = {0.1, 0.5, -0.3, 0.9, 0.2, 0.0, 0.7, 0.4}, t = {0, 1, 2, 3, 4, 5, 6, 7};
  std::vector<double> coef(64);
  for (std::size_t i = 0; i < coef.size(); ++i) coef[i] = std::sin(0.37 * static_cast<double>(i));
  auto loss_of = [&](Tape& tape) {
    return tape.weighted_sse(model.embed_tokens(tape, x, t), std::vector<double>(64, 0.1), coef);
  };
  model.zero_grad();
  {
    Tape tape;
    tape.backward(loss_of(tape));
  }
  for (Tensor* p : {&model.params().value_w, &model.params().time_w, &model.params().value_b}) {
    const std::vector<double> analytic(p->grad().begin(), p->grad().end());
    const auto numeric = oracle::numeric_grad(*p, [&] {
      Tape tape;
      return loss_of(tape).item();
    });
    CHECK(oracle::max_rel_err(analytic, numeric, 1e-6) < 1e-5);
  }
}

TEST_CASE("depth-zero stacks reduce to linear maps") {
  Model model(fixture::toy_config(8, 8, 0, 0), 6);
  const auto tb = fixture::toy_batch(3, 8, 11);
  const auto views = tb.views();
  Tape tape;
  const auto pass = forward_reconstruct(tape, model, views, tb.plans);
  const auto& P = model.params();
  const Tensor& pe = model.positional();
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t i = 0; i < 8; ++i) {
      double ref = P.recon_b[0];
      for (std::size_t k = 0; k < 8; ++k) {
        double z = pe.at({i, k});
        if (tb.plans[b].keep[i]) {
          z += tb.x[b][i] * P.value_w[k] + P.value_b[k] + tb.t[b][i] * P.time_w[k] + P.time_b[k] + pe.at({i, k});
        } else {
          z += P.mask_token[k];
        }
        ref += z * P.recon_w[k];
      }
      CHECK(std::abs(pass.x_hat.at({b, i}) - ref) < 1e-12);
    }
  }
}

TEST_CASE("hidden and missing inputs never reach the model") {
  Model model(fixture::toy_config(), 7);
  auto tb = fixture::toy_batch(4, 8, 21);
  Tape t1;
  const auto base = forward_reconstruct(t1, model, tb.views(), tb.plans);
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t i = 0; i < 8; ++i)
      if (!tb.plans[b].keep[i]) {
        tb.x[b][i] += 3.7;
        tb.t[b][i] += 1.9;
      }
  Tape t2;
  const auto moved = forward_reconstruct(t2, model, tb.views(), tb.plans);
  CHECK(copy_of(base.h) == copy_of(moved.h));
  CHECK(copy_of(base.x_hat) == copy_of(moved.x_hat));
}

TEST_CASE("pad token values do not affect real rows") {
  Model model(fixture::toy_config(), 8);
  auto tb = fixture::toy_batch(4, 8, 31);
  // Force unequal kept counts so the batch has pad slots.
  tb.plans[0] = plan_hiding(tb.masks[0], std::vector<std::size_t>(tb.masks[0].recorded.begin() + 1,
                                                                    tb.masks[0].recorded.end()));
  Tape t1;
  const auto base = forward_reconstruct(t1, model, tb.views(), tb.plans);
  REQUIRE(base.batch.lengths[0] + 1 < base.batch.slots);
  for (auto& v : model.params().pad_token.data()) v += 5.0;
  Tape t2;
  const auto moved = forward_reconstruct(t2, model, tb.views(), tb.plans);
  const std::size_t d = 8;
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t s = 0; s < base.batch.slots; ++s) {
      if (base.batch.origin_at(b, s) == PaddedBatch::kPad) continue;
      for (std::size_t k = 0; k < d; ++k) CHECK(base.h.at({b, s, k}) == moved.h.at({b, s, k}));
    }
  CHECK(copy_of(base.x_hat) == copy_of(moved.x_hat));
}

TEST_CASE("samples in a batch do not attend to each other") {
  Model model(fixture::toy_config(), 9);
  const auto tb = fixture::toy_batch(5, 8, 41);
  const auto views = tb.views();
  Tape tape;
  const auto joint = forward_reconstruct(tape, model, views, tb.plans);
  for (std::size_t b = 0; b < 5; ++b) {
    Tape solo_tape;
    const auto solo = forward_reconstruct(solo_tape, model, std::span(views).subspan(b, 1),
                                          std::span(tb.plans).subspan(b, 1));
    for (std::size_t i = 0; i < 8; ++i) CHECK(solo.x_hat.at({0, i}) == joint.x_hat.at({b, i}));
    for (std::size_t s = 0; s < solo.batch.slots; ++s)
      for (std::size_t k = 0; k < 8; ++k) CHECK(solo.h.at({0, s, k}) == joint.h.at({b, s, k}));
  }
}

TEST_CASE("one mask token is shared by every hidden and missing slot") {
  Model model(fixture::toy_config(8, 8, 1, 0), 10);
  const auto tb = fixture::toy_batch(3, 8, 51);
  Tape t1;
  const auto base = forward_reconstruct(t1, model, tb.views(), tb.plans);
  const std::vector<double> delta = {0.1, -0.2, 0.3, 0.05, -0.4, 0.25, 0.0, 0.15};
  double shift = 0.0;
  for (std::size_t k = 0; k < 8; ++k) {
    model.params().mask_token[k] += delta[k];
    shift += delta[k] * model.params().recon_w[k];
  }
  Tape t2;
  const auto moved = forward_reconstruct(t2, model, tb.views(), tb.plans);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t i = 0; i < 8; ++i) {
      if (tb.plans[b].keep[i]) {
        CHECK(moved.x_hat.at({b, i}) == base.x_hat.at({b, i}));
      } else {
        CHECK(std::abs(moved.x_hat.at({b, i}) - base.x_hat.at({b, i}) - shift) < 1e-13);
      }
    }
}

TEST_CASE("a sample with a single kept value still encodes") {
  Model model(fixture::toy_config(), 12);
  std::vector<std::uint8_t> bits = {0, 0, 1, 0, 0, 0, 0, 0};
  const auto mask = intrinsic_mask_from_bits(bits);
  const std::vector<MaskPlan> plans = {keep_all(mask)};
  std::vector<double> x(8, 0.0), t(8, 0.0);
  x[2] = 0.4;
  t[2] = 2.5;
  const std::vector<SampleView> views = {{x, t}};
  Tape tape;
  const auto pass = forward_reconstruct(tape, model, views, plans);
  CHECK(pass.batch.slots == 2);
  for (double v : pass.x_hat.data()) CHECK(std::isfinite(v));
  CHECK(tape.fallback_rows() == 0);
}

TEST_CASE("classifier head") {
  Model model(fixture::toy_config(), 13);
  const auto tb = fixture::toy_batch(4, 8, 61);
  std::vector<MaskPlan> full;
  for (const auto& m : tb.masks) full.push_back(keep_all(m));
  Rng rng(1);

  SUBCASE("zero output weights give the bias") {
    for (auto& v : model.params().head_w2.data()) v = 0.0;
    model.params().head_b2[0] = 0.3;
    Tape tape;
    const auto pass = forward_reconstruct(tape, model, tb.views(), full);
    const Tensor logits = model.classify(tape, pass.h, pass.batch, rng, false);
    for (double v : logits.data()) CHECK(v == 0.3);
  }
  SUBCASE("identical samples give identical logits") {
    const std::vector<SampleView> twins = {tb.views()[0], tb.views()[0]};
    const std::vector<MaskPlan> plans = {full[0], full[0]};
    Tape tape;
    const auto pass = forward_reconstruct(tape, model, twins, plans);
    const Tensor logits = model.classify(tape, pass.h, pass.batch, rng, false);
    CHECK(logits[0] == logits[1]);
  }
  SUBCASE("classification gradient matches central differences") {
    model.params().head_b2[0] = 0.1;
    const std::vector<double> y = {1, 0, 1, 0};
    auto loss_of = [&](Tape& tape) {
      const auto pass = forward_reconstruct(tape, model, tb.views(), full);
      return tape.bce_with_logits(model.classify(tape, pass.h, pass.batch, rng, false), y);
    };
    model.zero_grad();
    {
      Tape tape;
      tape.backward(loss_of(tape));
    }
    double worst = 0.0;
    for (auto& p : model.parameters()) {
      if (p.group == ParamGroup::kDecoder) {
        CHECK_FALSE(p.tensor.has_grad());
        continue;
      }
      std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
      if (analytic.empty()) analytic.assign(p.tensor.numel(), 0.0);
      const auto numeric = oracle::numeric_grad(p.tensor, [&] {
        Tape tape;
        return loss_of(tape).item();
      });
      worst = std::max(worst, oracle::max_rel_err(analytic, numeric, 1e-4));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("full pretraining gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Model model(fixture::toy_config(), 100 + seed);
    const auto tb = fixture::toy_batch(2, 8, 200 + seed);
    CHECK(fixture::pretrain_grad_error(model, tb) < 1e-4);
  }
}

TEST_CASE("configuration validation") {
  auto c = fixture::toy_config();
  c.enc_heads = 3;
  CHECK_THROWS_AS(Model(c, 1), ConfigError);
  c = fixture::toy_config();
  c.d_embed = 7;
  c.dec_embed = 7;
  c.enc_heads = 7;
  c.dec_heads = 7;
  CHECK_THROWS_AS(Model(c, 1), ConfigError);
  c = fixture::toy_config();
  c.dec_embed = 16;
  CHECK_THROWS_AS(Model(c, 1), ConfigError);
}
