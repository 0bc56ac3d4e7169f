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
#include <optional>

#include "aidmae/errors.hpp"
#include "aidmae/masking.hpp"
#include "aidmae/rng.hpp"
#include "mp_oracle.hpp"

using namespace aidmae;

TEST_CASE("derive_intrinsic_mask worked values") {
  const std::optional<double> v[3] = {5.0, std::nullopt, 3.0};
  const IntrinsicMask m = derive_intrinsic_mask(v);
  CHECK(m.m == std::vector<std::uint8_t>{1, 0, 1});
  CHECK(m.recorded == std::vector<std::size_t>{0, 2});
  CHECK(m.missing == std::vector<std::size_t>{1});

  const std::optional<double> none[2] = {std::nullopt, std::nullopt};
  CHECK(derive_intrinsic_mask(none).recorded.empty());
  CHECK(derive_intrinsic_mask(none).missing.size() == 2);
  const std::optional<double> all[2] = {1.0, 2.0};
  CHECK(derive_intrinsic_mask(all).missing.empty());
}

TEST_CASE("logit_weights worked values") {
  SUBCASE("a = 0 is uniform random masking at rate b") {
    const double p[3] = {0.0, 0.3, 0.99};
    for (double w : logit_weights(p, 0.0, 0.25)) CHECK(w == 0.25);
  }
  SUBCASE("never-observed features are never masked") {
    const double p[2] = {1.0, 1.0};
    for (double w : logit_weights(p, 0.025, 0.5)) CHECK(w == 0.0);
    for (double w : logit_weights(p, 0.0, 0.25)) CHECK(w == 0.0);
  }
  SUBCASE("p = 0.5 leaves w = b") {
    const double p[1] = {0.5};
    CHECK(logit_weights(p, 0.025, 0.5)[0] == 0.5);
  }
  SUBCASE("p = 0.88 against a 256-bit logarithm") {
    const double p[1] = {0.88};
    const double ref = 0.5 + 0.025 * oracle::mp_logit(0.88);
    CHECK(std::abs(logit_weights(p, 0.025, 0.5)[0] - ref) < 1e-15);
  }
}

TEST_CASE("logit_weights rejects out-of-range inputs") {
  const double bad[1] = {1.2};
  CHECK_THROWS_AS(logit_weights(bad, 0.1, 0.5), DomainError);
  const double ok[1] = {0.2};
  CHECK_THROWS_AS(logit_weights(ok, 0.1, 0.0), DomainError);
  CHECK_THROWS_AS(logit_weights(ok, 0.1, 1.0), DomainError);
}

TEST_CASE("logit_weights are clamped and monotone in p with the sign of a") {
  std::vector<double> grid;
  for (int i = 0; i <= 100; ++i) grid.push_back(i / 100.0);
  grid.pop_back();  // p = 1 handled separately
  for (double a : {0.3, -0.3, 0.025, -0.025}) {
    const auto w = logit_weights(grid, a, 0.5);
    for (std::size_t i = 0; i < w.size(); ++i) {
      CHECK(w[i] >= 0.0);
      CHECK(w[i] <= 1.0);
      if (i > 0) {
        if (a > 0) CHECK(w[i] >= w[i - 1]);
        else CHECK(w[i] <= w[i - 1]);
      }
    }
  }
}

TEST_CASE("sample_augmented_mask edge cases") {
  Rng rng(1);
  const std::uint8_t none[4] = {0, 0, 0, 0};
  const IntrinsicMask empty = intrinsic_mask_from_bits(none);
  const std::vector<double> w(4, 0.9);
  const MaskPlan p0 = sample_augmented_mask(empty, w, rng);
  CHECK(p0.hidden.empty());
  CHECK(p0.kept.empty());

  const std::uint8_t bits[4] = {1, 0, 1, 1};
  const IntrinsicMask m = intrinsic_mask_from_bits(bits);
  const std::vector<double> zero(4, 0.0);
  const MaskPlan p1 = sample_augmented_mask(m, zero, rng);
  CHECK(p1.hidden.empty());
  CHECK(p1.kept == m.recorded);
}

TEST_CASE("an all-hidden draw is retried once, then the heaviest slot is kept") {
  const std::uint8_t bits[3] = {1, 1, 1};
  const IntrinsicMask m = intrinsic_mask_from_bits(bits);
  const std::vector<double> w = {1.0, 1.0, 1.0};
  Rng rng(3);
  const MaskPlan p = sample_augmented_mask(m, w, rng);
  CHECK(p.kept == std::vector<std::size_t>{0});
  CHECK(p.hidden == std::vector<std::size_t>{1, 2});
}

TEST_CASE("partition and Bernoulli rate over many samples") {
  Rng rng(99);
  const std::size_t L = 16;
  std::size_t hidden = 0, recorded = 0;
  for (int s = 0; s < 10000; ++s) {
    std::vector<std::uint8_t> bits(L);
    for (auto& b : bits) b = rng.bernoulli(0.6);
    const IntrinsicMask m = intrinsic_mask_from_bits(bits);
    const std::vector<double> w(L, 0.25);
    const MaskPlan p = sample_augmented_mask(m, w, rng);
    std::vector<int> seen(L, 0);
    for (std::size_t i : p.kept) seen[i] += 1;
    for (std::size_t i : p.hidden) seen[i] += 10;
    for (std::size_t i : m.missing) seen[i] += 100;
    for (std::size_t i = 0; i < L; ++i) {
      CHECK((seen[i] == 1 || seen[i] == 10 || seen[i] == 100));
      CHECK(p.keep[i] == (seen[i] == 1 ? 1 : 0));
    }
    hidden += p.hidden.size();
    recorded += m.recorded.size();
  }
  const double rate = static_cast<double>(hidden) / static_cast<double>(recorded);
  CHECK(std::abs(rate - 0.25) < 0.01);
}

TEST_CASE("sample_augmented_mask is deterministic under a fixed seed") {
  const std::uint8_t bits[6] = {1, 1, 0, 1, 1, 1};
  const IntrinsicMask m = intrinsic_mask_from_bits(bits);
  const std::vector<double> w(6, 0.5);
  Rng a(5), b(5);
  CHECK(sample_augmented_mask(m, w, a).keep == sample_augmented_mask(m, w, b).keep);
}

TEST_CASE("build_padded_batch layout") {
  SUBCASE("equal lengths need no padding") {
    const std::vector<std::vector<std::size_t>> kept = {{0, 1, 2}, {3, 4, 5}};
    const PaddedBatch pb = build_padded_batch(kept);
    CHECK(pb.slots == 4);
    for (std::size_t b = 0; b < 2; ++b) {
      CHECK(pb.origin_at(b, 0) == PaddedBatch::kCls);
      for (std::size_t s = 1; s < 4; ++s) CHECK(pb.origin_at(b, s) >= 0);
    }
  }
  SUBCASE("shorter sample is right-padded and its pads are blocked") {
    const std::vector<std::vector<std::size_t>> kept = {{0, 1, 2, 3, 4}, {7, 9}};
    const PaddedBatch pb = build_padded_batch(kept);
    CHECK(pb.slots == 6);
    CHECK(pb.lengths == std::vector<std::size_t>{5, 2});
    CHECK(pb.origin_at(1, 1) == 7);
    CHECK(pb.origin_at(1, 2) == 9);
    for (std::size_t s = 3; s < 6; ++s) CHECK(pb.origin_at(1, s) == PaddedBatch::kPad);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        const bool real = i < 3 && j < 3;
        CHECK(pb.gamma(1, i, j) == (real ? 1 : 0));
        CHECK(pb.gamma(0, i, j) == 1);
      }
  }
  SUBCASE("empty batch and empty samples are contract errors") {
    const std::vector<std::vector<std::size_t>> none;
    CHECK_THROWS_AS(build_padded_batch(none), ContractError);
    const std::vector<std::vector<std::size_t>> hollow = {{1}, {}};
    CHECK_THROWS_AS(build_padded_batch(hollow), ContractError);
  }
}

TEST_CASE("plan_hiding only hides recorded slots") {
  const std::uint8_t bits[4] = {1, 0, 1, 1};
  const IntrinsicMask m = intrinsic_mask_from_bits(bits);
  const std::size_t ok[1] = {2};
  const MaskPlan p = plan_hiding(m, ok);
  CHECK(p.hidden == std::vector<std::size_t>{2});
  CHECK(p.kept == std::vector<std::size_t>{0, 3});
  const std::size_t bad[1] = {1};
  CHECK_THROWS_AS(plan_hiding(m, bad), ContractError);
}
