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
#include <limits>
#include <vector>

#include "aidmae/errors.hpp"
#include "aidmae/objective.hpp"
#include "fixtures.hpp"
#include "mp_oracle.hpp"

using namespace aidmae;

namespace {

struct Case {
  IntrinsicMask mask;
  MaskPlan plan;
};

Case worked_case() {
  const std::vector<std::uint8_t> bits = {1, 1, 1, 0};
  Case c{intrinsic_mask_from_bits(bits), {}};
  const std::vector<std::size_t> hide = {2};
  c.plan = plan_hiding(c.mask, hide);
  return c;
}

}  // namespace

TEST_CASE("dual loss worked values") {
  const Case c = worked_case();
  const std::vector<double> x = {1, 2, 3, 4}, xh = {1, 2, 5, 9};
  const LossReport r = dual_reconstruction_loss(xh, x, c.mask, c.plan);
  CHECK(r.unmasked_term == 0.0);
  CHECK(r.masked_term == 4.0);
  CHECK(r.total == 4.0);
  CHECK(r.n_kept == 2);
  CHECK(r.n_hidden == 1);
  CHECK(r.n_missing == 1);

  CHECK(dual_reconstruction_loss(x, x, c.mask, c.plan).total == 0.0);

  const LossReport none = dual_reconstruction_loss(xh, x, c.mask, keep_all(c.mask));
  CHECK(none.masked_term == 0.0);
  CHECK(none.unmasked_term == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
  CHECK(none.total == none.unmasked_term);

  const std::vector<double> short_x = {1, 2};
  CHECK_THROWS_AS(dual_reconstruction_loss(short_x, x, c.mask, c.plan), DimensionError);
}

TEST_CASE("values at missing slots never change the loss") {
  const Case c = worked_case();
  std::vector<double> x = {1, 2, 3, 4};
  const std::vector<double> xh = {0.5, 2.5, 1.0, -7.0};
  const LossReport a = dual_reconstruction_loss(xh, x, c.mask, c.plan);
  for (double v : {-1e6, 0.0, 123.456, std::numeric_limits<double>::quiet_NaN()}) {
    x[3] = v;
    const LossReport b = dual_reconstruction_loss(xh, x, c.mask, c.plan);
    CHECK(a.total == b.total);
    CHECK(a.unmasked_term == b.unmasked_term);
    CHECK(a.masked_term == b.masked_term);
  }
}

TEST_CASE("loss gradient coefficients") {
  const auto tb = fixture::toy_batch(1, 8, 3);
  const auto& mask = tb.masks[0];
  const auto& plan = tb.plans[0];
  const auto c = dual_loss_coefficients(mask, plan);
  for (std::size_t i = 0; i < 8; ++i) {
    if (!mask.m[i]) CHECK(c[i] == 0.0);
    else if (plan.keep[i]) CHECK(c[i] == 1.0 / static_cast<double>(plan.kept.size()));
    else CHECK(c[i] == 1.0 / static_cast<double>(plan.hidden.size()));
  }

  // d total / d x_hat = 2 c_i (x_hat_i - x_i), analytically and by differences.
  std::vector<double> xh(8);
  for (std::size_t i = 0; i < 8; ++i) xh[i] = 0.3 * static_cast<double>(i) - 0.7;
  Tensor pred = Tensor::from({1, 8}, xh, true);
  const auto views = tb.views();
  {
    Tape tape;
    tape.backward(batch_dual_loss(tape, pred, views, tb.masks, tb.plans));
  }
  const auto numeric = oracle::numeric_grad(pred, [&] {
    Tape tape;
    return batch_dual_loss(tape, pred, views, tb.masks, tb.plans).item();
  });
  for (std::size_t i = 0; i < 8; ++i) {
    const double analytic = 2.0 * c[i] * (xh[i] - (mask.m[i] ? tb.x[0][i] : 0.0));
    CHECK(pred.grad()[i] == doctest::Approx(analytic).epsilon(1e-14));
    CHECK(std::abs(numeric[i] - analytic) < 1e-8);
  }
}

TEST_CASE("batch loss is the mean of per-sample totals") {
  const auto tb = fixture::toy_batch(6, 8, 9);
  const auto views = tb.views();
  std::vector<double> xh(48);
  for (std::size_t i = 0; i < xh.size(); ++i) xh[i] = std::cos(0.7 * static_cast<double>(i));
  const Tensor pred = Tensor::from({6, 8}, xh);
  Tape tape;
  std::vector<LossReport> reports;
  const double batch = batch_dual_loss(tape, pred, views, tb.masks, tb.plans, &reports).item();
  double mean = 0.0;
  for (std::size_t b = 0; b < 6; ++b) {
    const LossReport r =
        dual_reconstruction_loss(std::span<const double>(xh).subspan(b * 8, 8), tb.x[b], tb.masks[b], tb.plans[b]);
    CHECK(r.total == reports[b].total);
    mean += r.total / 6.0;
  }
  CHECK(batch == doctest::Approx(mean).epsilon(1e-14));
  CHECK(mean_report(reports).total == doctest::Approx(mean).epsilon(1e-14));

  // A sample's own report does not depend on its batch mates.
  Tape solo;
  std::vector<LossReport> one;
  const Tensor pred0 = Tensor::from({1, 8}, std::vector<double>(xh.begin(), xh.begin() + 8));
  batch_dual_loss(solo, pred0, std::span(views).first(1), std::span(tb.masks).first(1), std::span(tb.plans).first(1),
                  &one);
  CHECK(one[0].total == reports[0].total);
}

TEST_CASE("binary cross-entropy") {
  const double z0[1] = {0.0}, y1[1] = {1.0};
  CHECK(bce_with_logits(z0, y1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const double big[1] = {800.0};
  CHECK(bce_with_logits(big, y1) == 0.0);
  const double z2[1] = {2.0}, y0[1] = {0.0};
  CHECK(std::abs(bce_with_logits(z2, y0) - oracle::mp_bce(2.0, 0.0)) < 1e-15);

  const std::vector<double> z = {-3.0, -0.5, 0.25, 4.0, 30.0}, y = {0, 1, 1, 0, 1};
  double ref = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) ref += oracle::mp_bce(z[i], y[i]) / 5.0;
  CHECK(std::abs(bce_with_logits(z, y) - ref) < 1e-15);

  // The tape op agrees with the scalar function and differentiates to (sigma(z) - y)/B.
  Tensor logits = Tensor::from({5}, z, true);
  Tape tape;
  const Tensor loss = tape.bce_with_logits(logits, y);
  CHECK(loss.item() == doctest::Approx(ref).epsilon(1e-14));
  tape.backward(loss);
  for (std::size_t i = 0; i < z.size(); ++i)
    CHECK(logits.grad()[i] == doctest::Approx((1.0 / (1.0 + std::exp(-z[i])) - y[i]) / 5.0).epsilon(1e-13));
}
