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
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "aidmae/rng.hpp"

namespace aidmae {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient flows in
  bool requires_grad = false;
  // Index of the producing node on its tape, -1 for leaves.
  std::ptrdiff_t node = -1;
};

/// Shared handle to a dense row-major array of doubles. Copies alias the
/// same storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  double item() const;
  double& operator[](std::size_t i) { return impl_->data[i]; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double at(std::initializer_list<std::size_t> idx) const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool r) { impl_->requires_grad = r; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  // Allocates a zero gradient on first use.
  std::vector<double>& grad_buffer();
  void zero_grad();

  Tensor clone() const;
  // Detached tensor sharing nothing with the tape.
  Tensor detach() const { return clone(); }

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& handle() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
  friend class Tape;
};

/// Binary attention mask over `groups` independent L x L blocks. Entry 1
/// means the query row may attend to the key column.
struct AttentionMask {
  std::size_t groups = 0;
  std::size_t length = 0;
  std::vector<std::uint8_t> allow;  // groups * length * length

  static AttentionMask all(std::size_t groups, std::size_t length);
  std::uint8_t operator()(std::size_t g, std::size_t i, std::size_t j) const {
    return allow[(g * length + i) * length + j];
  }
};

/// One source row reference for Tape::compose_rows.
struct RowPick {
  std::uint32_t source;
  std::uint32_t row;
};

/// Append-only record of differentiable operations. Ops whose inputs do not
/// require gradients run eagerly without recording anything, so the same
/// code path serves inference.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // [.., m, k] x [.., k, n]; batch dims must match or one side is rank 2.
  Tensor matmul(const Tensor& a, const Tensor& b);
  // [.., m, k] x [.., n, k]^T
  Tensor matmul_nt(const Tensor& a, const Tensor& b);
  Tensor transpose_last(const Tensor& a);
  Tensor reshape(const Tensor& a, Shape shape);

  // x [.., in] W [in, out] b [out] (b may be undefined).
  Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double s);
  Tensor square(const Tensor& a);
  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);

  // Masked softmax over the last axis of logits [N, L, L]. The mask has
  // `groups` blocks and N must be a multiple of groups; block n / (N/groups)
  // applies to logits slice n. A null mask means no masking.
  Tensor softmax_masked(const Tensor& logits, const AttentionMask* mask);
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
  Tensor gelu(const Tensor& x);
  // Inverted dropout; identity when !training or p == 0.
  Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

  // [B, T, H*dh] -> [B*H, T, dh] and back.
  Tensor split_heads(const Tensor& x, std::size_t heads);
  Tensor merge_heads(const Tensor& x, std::size_t heads);

  // Builds a tensor of shape `out_shape` (last dim = row width) whose r-th
  // row is copied from sources[picks[r].source] row picks[r].row. Each
  // source is viewed as rows of the same width.
  Tensor compose_rows(std::span<const Tensor> sources, std::span<const RowPick> picks, Shape out_shape);

  // sum_i coeff_i * (pred_i - target_i)^2, target and coeff constant.
  Tensor weighted_sse(const Tensor& pred, std::span<const double> target, std::span<const double> coeff);
  // Mean binary cross-entropy on logits, stable form.
  Tensor bce_with_logits(const Tensor& logits, std::span<const double> labels);

  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  // Rows of softmax_masked that had no allowed entry (uniform fallback).
  std::size_t fallback_rows() const { return fallback_rows_; }

 private:
  struct Node {
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::shared_ptr<TensorImpl> out;
    std::function<void()> backward;
  };

  Tensor record(Shape shape, std::vector<double> data, std::vector<std::shared_ptr<TensorImpl>> parents,
                std::function<void(TensorImpl& out)> backward_fn);

  std::vector<Node> nodes_;
  std::size_t fallback_rows_ = 0;
};

}  // namespace aidmae
