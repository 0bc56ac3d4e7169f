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
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <vector>

#include "aidmae/checkpoint.hpp"
#include "aidmae/errors.hpp"
#include "aidmae/optim.hpp"
#include "aidmae/synth.hpp"
#include "aidmae/trainer.hpp"
#include "fixtures.hpp"

using namespace aidmae;

namespace {

Dataset toy_dataset(std::size_t n = 200, std::size_t labs = 16) {
  SynthConfig c;
  c.n_samples = n;
  c.n_labs = labs;
  c.seed = 3;
  return synth_generate(c);
}

ModelConfig tiny_model(std::size_t L) {
  ModelConfig c = fixture::toy_config(L, 16, 1, 1);
  c.init_std = 0.02;
  c.head_hidden = 8;
  return c;
}

PretrainConfig quick_pretrain(double epochs) {
  PretrainConfig p;
  p.schedule = {1e-3, 1e-5, 1.0, epochs};
  p.batch_size = 32;
  p.seed = 11;
  return p;
}

bool same_params(const Model& a, const Model& b) {
  return snapshot_params(a) == snapshot_params(b);
}

// Independent scalar AdamW used as an oracle.
struct ScalarAdam {
  double m = 0.0, v = 0.0;
  int t = 0;
  double step(double theta, double g, double lr, double wd) {
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t)), vh = v / (1.0 - std::pow(0.999, t));
    return theta - lr * mh / (std::sqrt(vh) + 1e-8) - lr * wd * theta;
  }
};

}  // namespace

TEST_CASE("AdamW closed-form steps") {
  SUBCASE("first step from theta = 1 with unit gradient") {
    Tensor p = Tensor::from({1}, {1.0}, true);
    AdamW opt({p}, {0});
    p.grad_buffer()[0] = 1.0;
    const GroupRate r{0.1, 0.0};
    CHECK(opt.step(std::span(&r, 1)));
    CHECK(p[0] == doctest::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(std::abs(p[0] - 0.9) < 1e-8);
    CHECK(opt.first_moment(0)[0] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(opt.second_moment(0)[0] == doctest::Approx(0.001).epsilon(1e-15));
  }
  SUBCASE("zero gradient without decay leaves parameters unchanged") {
    Tensor p = Tensor::from({3}, {0.5, -1.0, 2.0}, true);
    AdamW opt({p}, {0});
    p.grad_buffer();
    const GroupRate r{0.1, 0.0};
    for (int i = 0; i < 5; ++i) opt.step(std::span(&r, 1));
    CHECK(std::vector<double>(p.data().begin(), p.data().end()) == std::vector<double>{0.5, -1.0, 2.0});
  }
  SUBCASE("zero gradient with decay shrinks geometrically") {
    Tensor p = Tensor::from({2}, {3.0, -4.0}, true);
    AdamW opt({p}, {0});
    p.grad_buffer();
    const GroupRate r{0.1, 0.05};
    for (int k = 1; k <= 20; ++k) {
      opt.step(std::span(&r, 1));
      const double norm = std::hypot(p[0], p[1]);
      CHECK(norm == doctest::Approx(5.0 * std::pow(1.0 - 0.1 * 0.05, k)).epsilon(1e-13));
    }
  }
  SUBCASE("random gradients against a scalar oracle") {
    Rng rng(4);
    Tensor p = Tensor::from({4}, {0.1, 0.2, -0.3, 0.4}, true);
    AdamW opt({p}, {0});
    std::vector<ScalarAdam> ref(4);
    std::vector<double> theta = {0.1, 0.2, -0.3, 0.4};
    const GroupRate r{0.01, 0.02};
    for (int step = 0; step < 30; ++step) {
      for (std::size_t k = 0; k < 4; ++k) {
        const double g = rng.normal();
        p.grad_buffer()[k] = g;
        theta[k] = ref[k].step(theta[k], g, r.lr, r.weight_decay);
      }
      opt.step(std::span(&r, 1));
      for (std::size_t k = 0; k < 4; ++k) CHECK(p[k] == doctest::Approx(theta[k]).epsilon(1e-13));
    }
    CHECK(opt.steps() == 30);
  }
  SUBCASE("non-finite gradients skip the step") {
    Tensor p = Tensor::from({2}, {1.0, 2.0}, true);
    AdamW opt({p}, {0});
    p.grad_buffer()[1] = std::numeric_limits<double>::quiet_NaN();
    const GroupRate r{0.1, 0.1};
    CHECK_FALSE(opt.step(std::span(&r, 1)));
    CHECK(p[0] == 1.0);
    CHECK(p[1] == 2.0);
    CHECK(opt.steps() == 0);
  }
}

TEST_CASE("parameter groups match two separate optimizers") {
  Rng rng(8);
  auto make = [] { return std::vector<Tensor>{Tensor::from({3}, {1, 2, 3}, true), Tensor::from({2}, {-1, 5}, true)}; };
  auto joint = make(), enc = make(), head = make();
  AdamW both(joint, {0, 1});
  AdamW only_enc({enc[0]}, {0});
  AdamW only_head({head[1]}, {0});
  const GroupRate rates[2] = {{1e-5, 1e-5}, {1e-3, 1e-5}};
  for (int step = 0; step < 10; ++step) {
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t k = 0; k < joint[t].numel(); ++k) {
        const double g = rng.normal();
        joint[t].grad_buffer()[k] = g;
        enc[t].grad_buffer()[k] = g;
        head[t].grad_buffer()[k] = g;
      }
    both.step(rates);
    only_enc.step(std::span(&rates[0], 1));
    only_head.step(std::span(&rates[1], 1));
  }
  for (std::size_t k = 0; k < 3; ++k) CHECK(joint[0][k] == enc[0][k]);
  for (std::size_t k = 0; k < 2; ++k) CHECK(joint[1][k] == head[1][k]);
}

TEST_CASE("cosine schedule") {
  const Schedule s{1e-3, 1e-5, 20.0, 400.0};
  CHECK(cosine_lr(0.0, s) == 0.0);
  CHECK(cosine_lr(10.0, s) == doctest::Approx(5e-4).epsilon(1e-15));
  CHECK(cosine_lr(20.0, s) == doctest::Approx(1e-3).epsilon(1e-15));
  CHECK(cosine_lr(400.0, s) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(cosine_lr(210.0, s) == doctest::Approx((1e-3 + 1e-5) / 2.0).epsilon(1e-14));
  const double e = 123.4;
  CHECK(cosine_lr(e, s) ==
        doctest::Approx(1e-5 + 0.5 * (1e-3 - 1e-5) * (1.0 + std::cos(std::numbers::pi * (e - 20.0) / 380.0)))
            .epsilon(1e-14));
  for (double x = 20.0; x <= 400.0; x += 0.5) {
    CHECK(cosine_lr(x, s) <= 1e-3 + 1e-18);
    CHECK(cosine_lr(x, s) >= 1e-5 - 1e-18);
  }
  CHECK_THROWS_AS(cosine_lr(-1.0, s), DomainError);
}

TEST_CASE("pretraining with zero learning rate leaves parameters unchanged") {
  const Dataset ds = toy_dataset(64, 8);
  Model model(tiny_model(ds.grid_length()), 1);
  const auto before = snapshot_params(model);
  PretrainConfig cfg = quick_pretrain(1.0);
  cfg.schedule = {0.0, 0.0, 0.0, 1.0};
  cfg.batch_size = 256;
  PretrainSession session(model, ds, cfg);
  session.run();
  CHECK(snapshot_params(model) == before);
  REQUIRE(session.log().size() == 1);
  CHECK(session.log()[0].train.total > 0.0);
  CHECK(std::isfinite(session.log()[0].train.total));
}

TEST_CASE("pretraining loss trends down and the positional table stays fixed") {
  const Dataset ds = toy_dataset();
  REQUIRE(ds.grid_length() == 16);
  Model model(tiny_model(16), 2);
  const std::vector<double> pe(model.positional().data().begin(), model.positional().data().end());
  PretrainConfig cfg;
  cfg.schedule.warmup_epochs = 1.0;  // reach the default base rate after one epoch
  cfg.batch_size = 32;
  cfg.seed = 11;
  PretrainSession session(model, ds, cfg);
  for (int e = 0; e < 10; ++e) session.run_epoch();
  const auto& log = session.log();
  REQUIRE(log.size() == 10);
  int violations = 0;
  for (std::size_t e = 1; e < log.size(); ++e) violations += log[e].train.total >= log[e - 1].train.total;
  CHECK(violations <= 2);
  CHECK(log.back().train.total < log.front().train.total);
  CHECK(std::vector<double>(model.positional().data().begin(), model.positional().data().end()) == pe);
  CHECK(session.cursor().best_epoch >= 0);
}

TEST_CASE("pretraining is deterministic and resumes bitwise") {
  const Dataset ds = toy_dataset(150, 10);
  const auto cfg = quick_pretrain(3.0);

  Model a(tiny_model(ds.grid_length()), 5), b(tiny_model(ds.grid_length()), 5);
  PretrainSession sa(a, ds, cfg), sb(b, ds, cfg);
  sa.run();
  sb.run();
  CHECK(same_params(a, b));

  // Interrupt mid-epoch, save, and continue in a fresh process-like setup.
  const auto path = (std::filesystem::temp_directory_path() / "aidmae_resume_test.ckpt").string();
  Model c(tiny_model(ds.grid_length()), 5);
  {
    PretrainSession first(c, ds, cfg);
    first.run_epoch();
    first.run_steps(2);
    first.save(path);
  }
  Model d(tiny_model(ds.grid_length()), 99);
  PretrainSession second(d, ds, cfg);
  second.resume(path);
  second.run();
  CHECK(same_params(a, d));
  REQUIRE(second.log().size() == sa.log().size());
  for (std::size_t e = 0; e < sa.log().size(); ++e) CHECK(second.log()[e].train.total == sa.log()[e].train.total);
  CHECK(second.best_params() == sa.best_params());
  CHECK(second.optimizer().steps() == sa.optimizer().steps());
  std::filesystem::remove(path);

  // A different seed gives a different run.
  auto other = cfg;
  other.seed = 12;
  Model e(tiny_model(ds.grid_length()), 5);
  PretrainSession se(e, ds, other);
  se.run();
  CHECK_FALSE(same_params(a, e));
}

TEST_CASE("gradient accumulation matches the full batch") {
  const Dataset ds = toy_dataset(64, 8);
  auto cfg = quick_pretrain(1.0);
  cfg.schedule = {1e-3, 1e-3, 0.0, 1.0};
  cfg.batch_size = 64;
  Model a(tiny_model(8), 6), b(tiny_model(8), 6);
  PretrainSession sa(a, ds, cfg);
  sa.run_steps(1);
  cfg.accumulation = 4;
  PretrainSession sb(b, ds, cfg);
  sb.run_steps(1);
  const auto pa = snapshot_params(a), pb = snapshot_params(b);
  double worst = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t k = 0; k < pa[i].size(); ++k) worst = std::max(worst, std::abs(pa[i][k] - pb[i][k]));
  CHECK(worst < 1e-10);
}

TEST_CASE("checkpoint files") {
  Model model(tiny_model(8), 7);
  const auto path = (std::filesystem::temp_directory_path() / "aidmae_ck_test.ckpt").string();
  save_checkpoint(path, model, nullptr, {{"kind", "test"}});
  const CheckpointData ck = read_checkpoint(path);
  CHECK(ck.meta["kind"] == "test");
  CHECK_FALSE(ck.has_optimizer);
  const Model back = model_from_checkpoint(ck);
  CHECK(same_params(model, back));
  CHECK(back.config().grid_length == 8);

  // Flip one byte in the payload: the file must be rejected.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-20, std::ios::end);
    char c = 0;
    f.read(&c, 1);
    f.seekp(-20, std::ios::end);
    c = static_cast<char>(c ^ 0x5a);
    f.write(&c, 1);
  }
  CHECK_THROWS_AS(read_checkpoint(path), DataError);
  CHECK_THROWS_AS(read_checkpoint(path + ".missing"), DataError);

  Model wrong(tiny_model(9), 7);
  save_checkpoint(path, model, nullptr, {});
  CHECK_THROWS_AS(load_params(wrong, read_checkpoint(path)), DataError);
  std::filesystem::remove(path);
}

namespace {

// Two labs; lab 0 separates the classes with a wide margin and nothing else varies.
Dataset separable_dataset(std::size_t n, std::uint64_t seed) {
  Feature a, b;
  a.name = "marker";
  a.reference = false;
  b.name = "other";
  b.reference = false;
  Dataset ds;
  ds.registry = FeatureRegistry({a, b}, true);
  ds.normalized = true;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    TokenArray s;
    const bool y = i % 2 == 0;
    s.x = {y ? 0.8 + 0.2 * rng.uniform() : 0.2 * rng.uniform(), 0.5};
    s.t = {6.0, 6.0};
    s.m = {1, 1};
    s.subject_id = s.stay_id = "s" + std::to_string(i);
    s.labels[0] = static_cast<std::int8_t>(y);
    s.split = i % 5 == 0 ? Split::kVal : (i % 5 == 1 ? Split::kTest : Split::kTrain);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace

TEST_CASE("fine-tuning") {
  const Dataset ds = separable_dataset(200, 1);
  ModelConfig mc = tiny_model(2);
  mc.init_std = 0.3;
  mc.head_dropout = 0.0;

  SUBCASE("head-only training separates separable data") {
    Model model(mc, 3);
    const auto encoder_before = snapshot_params(model);
    FinetuneConfig fc;
    fc.freeze_encoder = true;
    fc.head_lr = 1e-2;
    fc.batch_size = 32;
    fc.max_epochs = 200;
    fc.patience = 200;
    const FinetuneResult r = finetune(model, ds, fc);
    CHECK(r.train_accuracy == 1.0);
    CHECK(r.best_val_auroc == 1.0);
    const auto after = snapshot_params(model);
    const auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i].group != ParamGroup::kHead) CHECK(after[i] == encoder_before[i]);
  }
  SUBCASE("patience stops at best epoch plus patience") {
    Model model(mc, 4);
    FinetuneConfig fc;
    fc.enc_lr = 0.0;
    fc.head_lr = 0.0;
    fc.weight_decay = 0.0;
    fc.patience = 10;
    fc.max_epochs = 100;
    const FinetuneResult r = finetune(model, ds, fc);
    CHECK(r.stopped_early);
    CHECK(r.best_epoch == 0);
    CHECK(r.epochs_run == r.best_epoch + 10 + 1);
  }
  SUBCASE("decoder parameters are never touched") {
    Model model(mc, 5);
    const auto before = snapshot_params(model);
    FinetuneConfig fc;
    fc.max_epochs = 3;
    finetune(model, ds, fc);
    const auto after = snapshot_params(model);
    const auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i].group == ParamGroup::kDecoder) CHECK(after[i] == before[i]);
  }
  SUBCASE("single-class splits are rejected") {
    Dataset one = ds;
    for (auto& s : one.samples) s.labels[0] = 1;
    Model model(mc, 6);
    CHECK_THROWS_AS(finetune(model, one, FinetuneConfig{}), DataError);
  }
}
