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
#include <string>
#include <vector>

#include "aidmae/masking.hpp"
#include "aidmae/rng.hpp"
#include "aidmae/tensor.hpp"

namespace aidmae {

struct ModelConfig {
  std::size_t grid_length = 0;  // L
  std::size_t d_embed = 64;
  std::size_t enc_depth = 8;
  std::size_t enc_heads = 8;
  double mlp_ratio = 4.0;
  std::size_t dec_embed = 64;
  std::size_t dec_depth = 4;
  std::size_t dec_heads = 4;
  std::size_t head_hidden = 32;
  double head_dropout = 0.1;
  double init_std = 0.02;
  double norm_eps = 1e-6;

  // Throws ConfigError on an inconsistent configuration.
  void validate() const;
  std::size_t mlp_hidden() const { return static_cast<std::size_t>(mlp_ratio * static_cast<double>(d_embed)); }
};

enum class ParamGroup { kEncoder, kDecoder, kHead };

struct NamedParam {
  std::string name;
  Tensor tensor;
  ParamGroup group;
};

struct TransformerBlock {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_bias;
  Tensor w1, b1, w2, b2;
};

struct ModelParams {
  Tensor value_w, value_b, time_w, time_b;
  Tensor cls_token, pad_token, mask_token;
  std::vector<TransformerBlock> encoder;
  Tensor enc_norm_gain, enc_norm_bias;
  std::vector<TransformerBlock> decoder;
  Tensor dec_norm_gain, dec_norm_bias;
  Tensor recon_w, recon_b;
  Tensor head_w1, head_b1, head_w2, head_b2;
};

/// P[pos, 2k] = sin(pos / 10000^(2k/d)), P[pos, 2k+1] = cos(...). Shape [L, d].
Tensor sinusoidal_pe(std::size_t length, std::size_t dim);

/// One sample's grid values and hours-before-midnight times (length L).
struct SampleView {
  std::span<const double> x;
  std::span<const double> t;
};

class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }
  const Tensor& positional() const { return positional_; }

  // Learnable tensors in a fixed order; the positional table is excluded.
  std::vector<NamedParam> parameters() const;
  void zero_grad();

  // Z_i = value_proj(x_i) + time_proj(t_i) + P_i for every slot: [L, d].
  Tensor embed_tokens(Tape& tape, std::span<const double> values, std::span<const double> times) const;

  // Encoder input [B, slots, d]: CLS at slot 0, embedded kept tokens, pad tokens.
  Tensor embed_batch(Tape& tape, const PaddedBatch& batch, std::span<const SampleView> samples) const;

  // Transformer encoder under the batch's attention mask: [B, slots, d].
  Tensor encode(Tape& tape, const Tensor& z, const PaddedBatch& batch) const;

  // Scatters encoder outputs back to their grid slots, places the mask token
  // everywhere else, adds P and runs the decoder. Returns x_hat [B, L].
  Tensor decode(Tape& tape, const Tensor& h, const PaddedBatch& batch) const;

  // CLS rows of encoder output: [B, d].
  Tensor cls_embedding(Tape& tape, const Tensor& h, const PaddedBatch& batch) const;

  // Classification logits [B] from the CLS rows.
  Tensor classify(Tape& tape, const Tensor& h, const PaddedBatch& batch, Rng& rng, bool training) const;

  // Re-initialize the classification head only.
  void reset_head(std::uint64_t seed);

 private:
  Tensor run_block(Tape& tape, const TransformerBlock& blk, const Tensor& x, std::size_t heads,
                   const AttentionMask* mask) const;

  ModelConfig config_;
  ModelParams params_;
  Tensor positional_;
};

/// Convenience wrapper for a full pretraining forward pass.
struct ReconstructionPass {
  PaddedBatch batch;
  Tensor h;      // encoder output
  Tensor x_hat;  // [B, L]
};

ReconstructionPass forward_reconstruct(Tape& tape, const Model& model, std::span<const SampleView> samples,
                                       std::span<const MaskPlan> plans);

}  // namespace aidmae
