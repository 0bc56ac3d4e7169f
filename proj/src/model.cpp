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

#include "aidmae/model.hpp"

#include <cmath>

#include "aidmae/errors.hpp"

namespace aidmae {

void ModelConfig::validate() const {
  if (grid_length == 0) throw ConfigError("model: grid_length must be positive");
  if (d_embed == 0 || d_embed % 2 != 0) throw ConfigError("model: d_embed must be even and positive");
  if (enc_heads == 0 || d_embed % enc_heads != 0) throw ConfigError("model: d_embed must be divisible by enc_heads");
  if (dec_embed != d_embed) throw ConfigError("model: dec_embed must equal d_embed");
  if (dec_heads == 0 || dec_embed % dec_heads != 0) throw ConfigError("model: dec_embed must be divisible by dec_heads");
  if (mlp_ratio <= 0.0 || mlp_hidden() == 0) throw ConfigError("model: mlp_ratio must be positive");
  if (head_hidden == 0) throw ConfigError("model: head_hidden must be positive");
  if (head_dropout < 0.0 || head_dropout >= 1.0) throw ConfigError("model: head_dropout must lie in [0, 1)");
}

Tensor sinusoidal_pe(std::size_t length, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw ConfigError("sinusoidal_pe: dimension must be even, got " + std::to_string(dim));
  std::vector<double> p(length * dim);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t k = 0; k < dim / 2; ++k) {
      const double freq = std::pow(10000.0, static_cast<double>(2 * k) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) / freq;
      p[pos * dim + 2 * k] = std::sin(angle);
      p[pos * dim + 2 * k + 1] = std::cos(angle);
    }
  }
  return Tensor::from({length, dim}, std::move(p));
}

namespace {

Tensor init_normal(Shape shape, Rng rng, double sd) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& v : t.data()) v = rng.truncated_normal(sd);
  return t;
}

TransformerBlock make_block(std::size_t d, std::size_t hidden, const Rng& rng, double sd) {
  TransformerBlock b;
  b.ln1_gain = Tensor::full({d}, 1.0, true);
  b.ln1_bias = Tensor::zeros({d}, true);
  b.wq = init_normal({d, d}, rng.fork(1), sd);
  b.bq = Tensor::zeros({d}, true);
  b.wk = init_normal({d, d}, rng.fork(2), sd);
  b.bk = Tensor::zeros({d}, true);
  b.wv = init_normal({d, d}, rng.fork(3), sd);
  b.bv = Tensor::zeros({d}, true);
  b.wo = init_normal({d, d}, rng.fork(4), sd);
  b.bo = Tensor::zeros({d}, true);
  b.ln2_gain = Tensor::full({d}, 1.0, true);
  b.ln2_bias = Tensor::zeros({d}, true);
  b.w1 = init_normal({d, hidden}, rng.fork(5), sd);
  b.b1 = Tensor::zeros({hidden}, true);
  b.w2 = init_normal({hidden, d}, rng.fork(6), sd);
  b.b2 = Tensor::zeros({d}, true);
  return b;
}

void append_block(std::vector<NamedParam>& out, const std::string& prefix, const TransformerBlock& b,
                  ParamGroup g) {
  out.push_back({prefix + ".ln1_gain", b.ln1_gain, g});
  out.push_back({prefix + ".ln1_bias", b.ln1_bias, g});
  out.push_back({prefix + ".wq", b.wq, g});
  out.push_back({prefix + ".bq", b.bq, g});
  out.push_back({prefix + ".wk", b.wk, g});
  out.push_back({prefix + ".bk", b.bk, g});
  out.push_back({prefix + ".wv", b.wv, g});
  out.push_back({prefix + ".bv", b.bv, g});
  out.push_back({prefix + ".wo", b.wo, g});
  out.push_back({prefix + ".bo", b.bo, g});
  out.push_back({prefix + ".ln2_gain", b.ln2_gain, g});
  out.push_back({prefix + ".ln2_bias", b.ln2_bias, g});
  out.push_back({prefix + ".w1", b.w1, g});
  out.push_back({prefix + ".b1", b.b1, g});
  out.push_back({prefix + ".w2", b.w2, g});
  out.push_back({prefix + ".b2", b.b2, g});
}

}  // namespace

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t d = config_.d_embed;
  const double sd = config_.init_std;
  const Rng root(seed, 0x6d6f64656cULL);
  params_.value_w = init_normal({1, d}, root.fork(1), sd);
  params_.value_b = Tensor::zeros({d}, true);
  params_.time_w = init_normal({1, d}, root.fork(2), sd);
  params_.time_b = Tensor::zeros({d}, true);
  params_.cls_token = init_normal({1, d}, root.fork(3), sd);
  params_.pad_token = init_normal({1, d}, root.fork(4), sd);
  params_.mask_token = init_normal({1, d}, root.fork(5), sd);
  for (std::size_t i = 0; i < config_.enc_depth; ++i) {
    params_.encoder.push_back(make_block(d, config_.mlp_hidden(), root.fork(100 + i), sd));
  }
  params_.enc_norm_gain = Tensor::full({d}, 1.0, true);
  params_.enc_norm_bias = Tensor::zeros({d}, true);
  for (std::size_t i = 0; i < config_.dec_depth; ++i) {
    params_.decoder.push_back(make_block(d, config_.mlp_hidden(), root.fork(200 + i), sd));
  }
  params_.dec_norm_gain = Tensor::full({d}, 1.0, true);
  params_.dec_norm_bias = Tensor::zeros({d}, true);
  params_.recon_w = init_normal({d, 1}, root.fork(6), sd);
  params_.recon_b = Tensor::zeros({1}, true);
  reset_head(mix64(seed ^ 0x68656164ULL));
  positional_ = sinusoidal_pe(config_.grid_length, d);
}

void Model::reset_head(std::uint64_t seed) {
  const std::size_t d = config_.d_embed, hdn = config_.head_hidden;
  const Rng rng(seed, 0x68656164ULL);
  params_.head_w1 = init_normal({d, hdn}, rng.fork(1), config_.init_std);
  params_.head_b1 = Tensor::zeros({hdn}, true);
  params_.head_w2 = init_normal({hdn, 1}, rng.fork(2), config_.init_std);
  params_.head_b2 = Tensor::zeros({1}, true);
}

std::vector<NamedParam> Model::parameters() const {
  std::vector<NamedParam> out;
  const auto enc = ParamGroup::kEncoder, dec = ParamGroup::kDecoder, head = ParamGroup::kHead;
  out.push_back({"embed.value_w", params_.value_w, enc});
  out.push_back({"embed.value_b", params_.value_b, enc});
  out.push_back({"embed.time_w", params_.time_w, enc});
  out.push_back({"embed.time_b", params_.time_b, enc});
  out.push_back({"token.cls", params_.cls_token, enc});
  out.push_back({"token.pad", params_.pad_token, enc});
  for (std::size_t i = 0; i < params_.encoder.size(); ++i)
    append_block(out, "encoder." + std::to_string(i), params_.encoder[i], enc);
  out.push_back({"encoder.norm_gain", params_.enc_norm_gain, enc});
  out.push_back({"encoder.norm_bias", params_.enc_norm_bias, enc});
  out.push_back({"token.mask", params_.mask_token, dec});
  for (std::size_t i = 0; i < params_.decoder.size(); ++i)
    append_block(out, "decoder." + std::to_string(i), params_.decoder[i], dec);
  out.push_back({"decoder.norm_gain", params_.dec_norm_gain, dec});
  out.push_back({"decoder.norm_bias", params_.dec_norm_bias, dec});
  out.push_back({"decoder.recon_w", params_.recon_w, dec});
  out.push_back({"decoder.recon_b", params_.recon_b, dec});
  out.push_back({"head.w1", params_.head_w1, head});
  out.push_back({"head.b1", params_.head_b1, head});
  out.push_back({"head.w2", params_.head_w2, head});
  out.push_back({"head.b2", params_.head_b2, head});
  return out;
}

void Model::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

Tensor Model::embed_tokens(Tape& tape, std::span<const double> values, std::span<const double> times) const {
  const std::size_t L = config_.grid_length;
  if (values.size() != L || times.size() != L) {
    throw DimensionError("embed_tokens: expected " + std::to_string(L) + " values and times");
  }
  Tensor v = Tensor::from({L, 1}, {values.begin(), values.end()});
  Tensor t = Tensor::from({L, 1}, {times.begin(), times.end()});
  Tensor e = tape.add(tape.linear(v, params_.value_w, params_.value_b), tape.linear(t, params_.time_w, params_.time_b));
  return tape.add(e, positional_);
}

Tensor Model::embed_batch(Tape& tape, const PaddedBatch& batch, std::span<const SampleView> samples) const {
  if (samples.size() != batch.batch) throw DimensionError("embed_batch: sample count differs from batch");
  const std::size_t d = config_.d_embed;
  std::vector<double> vals, times;
  std::vector<RowPick> pos_rows;
  std::vector<RowPick> picks(batch.batch * batch.slots);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    for (std::size_t s = 0; s < batch.slots; ++s) {
      const std::int32_t o = batch.origin_at(b, s);
      if (o == PaddedBatch::kCls) {
        picks[b * batch.slots + s] = {1, 0};
      } else if (o == PaddedBatch::kPad) {
        picks[b * batch.slots + s] = {2, 0};
      } else {
        const auto i = static_cast<std::size_t>(o);
        if (i >= config_.grid_length || samples[b].x.size() != config_.grid_length) {
          throw ContractError("embed_batch: origin index outside the grid");
        }
        picks[b * batch.slots + s] = {0, static_cast<std::uint32_t>(vals.size())};
        pos_rows.push_back({0, static_cast<std::uint32_t>(i)});
        vals.push_back(samples[b].x[i]);
        times.push_back(samples[b].t[i]);
      }
    }
  }
  const std::size_t n = vals.size();
  Tensor v = Tensor::from({n, 1}, std::move(vals));
  Tensor t = Tensor::from({n, 1}, std::move(times));
  Tensor p = tape.compose_rows(std::span<const Tensor>(&positional_, 1), pos_rows, {n, d});
  Tensor e = tape.add(tape.add(tape.linear(v, params_.value_w, params_.value_b),
                               tape.linear(t, params_.time_w, params_.time_b)),
                      p);
  const Tensor sources[] = {e, params_.cls_token, params_.pad_token};
  return tape.compose_rows(sources, picks, {batch.batch, batch.slots, d});
}

Tensor Model::run_block(Tape& tape, const TransformerBlock& blk, const Tensor& x, std::size_t heads,
                        const AttentionMask* mask) const {
  const double eps = config_.norm_eps;
  const std::size_t dh = x.dim(2) / heads;
  Tensor h = tape.layer_norm(x, blk.ln1_gain, blk.ln1_bias, eps);
  Tensor q = tape.split_heads(tape.linear(h, blk.wq, blk.bq), heads);
  Tensor k = tape.split_heads(tape.linear(h, blk.wk, blk.bk), heads);
  Tensor v = tape.split_heads(tape.linear(h, blk.wv, blk.bv), heads);
  Tensor scores = tape.scale(tape.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor attn = tape.softmax_masked(scores, mask);
  Tensor mixed = tape.merge_heads(tape.matmul(attn, v), heads);
  Tensor x1 = tape.add(x, tape.linear(mixed, blk.wo, blk.bo));
  Tensor h2 = tape.layer_norm(x1, blk.ln2_gain, blk.ln2_bias, eps);
  Tensor mlp = tape.linear(tape.gelu(tape.linear(h2, blk.w1, blk.b1)), blk.w2, blk.b2);
  return tape.add(x1, mlp);
}

Tensor Model::encode(Tape& tape, const Tensor& z, const PaddedBatch& batch) const {
  if (z.rank() != 3 || z.dim(0) != batch.batch || z.dim(1) != batch.slots || z.dim(2) != config_.d_embed) {
    throw DimensionError("encode: input " + shape_str(z.shape()) + " does not match batch layout");
  }
  Tensor x = z;
  for (const auto& blk : params_.encoder) x = run_block(tape, blk, x, config_.enc_heads, &batch.gamma);
  // A depth-0 stack is the identity; the final norm belongs to the blocks.
  if (!params_.encoder.empty()) x = tape.layer_norm(x, params_.enc_norm_gain, params_.enc_norm_bias, config_.norm_eps);
  return x;
}

Tensor Model::decode(Tape& tape, const Tensor& h, const PaddedBatch& batch) const {
  const std::size_t L = config_.grid_length, d = config_.d_embed, B = batch.batch;
  if (h.rank() != 3 || h.dim(0) != B || h.dim(1) != batch.slots || h.dim(2) != d) {
    throw DimensionError("decode: encoder output " + shape_str(h.shape()) + " does not match batch layout");
  }
  std::vector<RowPick> picks(B * L, RowPick{1, 0});
  std::vector<RowPick> pos(B * L);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < L; ++i) pos[b * L + i] = {0, static_cast<std::uint32_t>(i)};
    for (std::size_t s = 0; s < batch.slots; ++s) {
      const std::int32_t o = batch.origin_at(b, s);
      if (o < 0) continue;
      if (static_cast<std::size_t>(o) >= L) throw ContractError("decode: origin index outside the grid");
      RowPick& slot = picks[b * L + static_cast<std::size_t>(o)];
      if (slot.source == 0) throw ContractError("decode: grid slot fed by two encoder positions");
      slot = {0, static_cast<std::uint32_t>(b * batch.slots + s)};
    }
  }
  const Tensor sources[] = {h, params_.mask_token};
  Tensor zdec = tape.compose_rows(sources, picks, {B, L, d});
  Tensor p = tape.compose_rows(std::span<const Tensor>(&positional_, 1), pos, {B, L, d});
  Tensor x = tape.add(zdec, p);
  for (const auto& blk : params_.decoder) x = run_block(tape, blk, x, config_.dec_heads, nullptr);
  if (!params_.decoder.empty()) x = tape.layer_norm(x, params_.dec_norm_gain, params_.dec_norm_bias, config_.norm_eps);
  Tensor out = tape.linear(x, params_.recon_w, params_.recon_b);
  return tape.reshape(out, {B, L});
}

Tensor Model::cls_embedding(Tape& tape, const Tensor& h, const PaddedBatch& batch) const {
  std::vector<RowPick> picks(batch.batch);
  for (std::size_t b = 0; b < batch.batch; ++b) picks[b] = {0, static_cast<std::uint32_t>(b * batch.slots)};
  return tape.compose_rows(std::span<const Tensor>(&h, 1), picks, {batch.batch, config_.d_embed});
}

Tensor Model::classify(Tape& tape, const Tensor& h, const PaddedBatch& batch, Rng& rng, bool training) const {
  Tensor c = cls_embedding(tape, h, batch);
  Tensor hid = tape.gelu(tape.linear(c, params_.head_w1, params_.head_b1));
  hid = tape.dropout(hid, config_.head_dropout, rng, training);
  Tensor logit = tape.linear(hid, params_.head_w2, params_.head_b2);
  return tape.reshape(logit, {batch.batch});
}

ReconstructionPass forward_reconstruct(Tape& tape, const Model& model, std::span<const SampleView> samples,
                                       std::span<const MaskPlan> plans) {
  if (samples.size() != plans.size()) throw DimensionError("forward_reconstruct: samples and plans differ in count");
  std::vector<std::vector<std::size_t>> kept;
  kept.reserve(plans.size());
  for (const auto& p : plans) kept.push_back(p.kept);
  ReconstructionPass pass;
  pass.batch = build_padded_batch(kept);
  Tensor z = model.embed_batch(tape, pass.batch, samples);
  pass.h = model.encode(tape, z, pass.batch);
  pass.x_hat = model.decode(tape, pass.h, pass.batch);
  return pass;
}

}  // namespace aidmae
