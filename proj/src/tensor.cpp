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

#include "aidmae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "aidmae/errors.hpp"

namespace aidmae {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("Tensor::from: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double v) { return from({}, {v}); }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != rank()) throw DimensionError("at(): rank mismatch for " + shape_str(shape()));
  std::size_t off = 0;
  std::size_t k = 0;
  for (std::size_t i : idx) {
    if (i >= impl_->shape[k]) throw DimensionError("at(): index out of range for " + shape_str(shape()));
    off = off * impl_->shape[k] + i;
    ++k;
  }
  return impl_->data[off];
}

std::vector<double>& Tensor::grad_buffer() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::clone() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  impl->requires_grad = impl_->requires_grad;
  return Tensor(std::move(impl));
}

AttentionMask AttentionMask::all(std::size_t groups, std::size_t length) {
  AttentionMask m;
  m.groups = groups;
  m.length = length;
  m.allow.assign(groups * length * length, 1);
  return m;
}

// ---- Tape plumbing ------------------------------------------------------------

namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;

std::vector<double>& gbuf(TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
  return t.grad;
}

bool any_requires_grad(const std::vector<ImplPtr>& ps) {
  return std::any_of(ps.begin(), ps.end(), [](const ImplPtr& p) { return p && p->requires_grad; });
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

struct MatmulDims {
  std::size_t batch_a, batch_b, batch, m, k, n;
  Shape out_shape;
};

MatmulDims matmul_dims(const char* op, const Shape& sa, const Shape& sb, bool b_transposed) {
  if (sa.size() < 2 || sb.size() < 2) {
    throw DimensionError(std::string(op) + ": operands need rank >= 2, got " + shape_str(sa) + " and " +
                         shape_str(sb));
  }
  MatmulDims d{};
  d.m = sa[sa.size() - 2];
  d.k = sa[sa.size() - 1];
  const std::size_t kb = b_transposed ? sb[sb.size() - 1] : sb[sb.size() - 2];
  d.n = b_transposed ? sb[sb.size() - 2] : sb[sb.size() - 1];
  if (kb != d.k) {
    throw DimensionError(std::string(op) + ": inner dimensions differ for " + shape_str(sa) + " and " +
                         shape_str(sb));
  }
  d.batch_a = shape_numel(sa) / (d.m * d.k == 0 ? 1 : d.m * d.k);
  d.batch_b = shape_numel(sb) / (d.k * d.n == 0 ? 1 : d.k * d.n);
  Shape batch_dims;
  if (sa.size() == sb.size() && std::equal(sa.begin(), sa.end() - 2, sb.begin())) {
    batch_dims.assign(sa.begin(), sa.end() - 2);
  } else if (sb.size() == 2) {
    batch_dims.assign(sa.begin(), sa.end() - 2);
  } else if (sa.size() == 2) {
    batch_dims.assign(sb.begin(), sb.end() - 2);
  } else {
    throw DimensionError(std::string(op) + ": batch dimensions not broadcastable for " + shape_str(sa) +
                         " and " + shape_str(sb));
  }
  d.batch = shape_numel(batch_dims);
  d.out_shape = batch_dims;
  d.out_shape.push_back(d.m);
  d.out_shape.push_back(d.n);
  return d;
}

double gelu_value(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  const double u = c * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_derivative(double x) {
  constexpr double c = 0.7978845608028654;
  const double u = c * (x + 0.044715 * x * x * x);
  const double th = std::tanh(u);
  const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

}  // namespace

Tensor Tape::record(Shape shape, std::vector<double> data, std::vector<ImplPtr> parents,
                    std::function<void(TensorImpl& out)> backward_fn) {
  auto out = std::make_shared<TensorImpl>();
  out->shape = std::move(shape);
  out->data = std::move(data);
  if (any_requires_grad(parents)) {
    out->requires_grad = true;
    out->node = static_cast<std::ptrdiff_t>(nodes_.size());
    TensorImpl* raw = out.get();
    Node node;
    node.parents = std::move(parents);
    node.out = out;
    node.backward = [raw, fn = std::move(backward_fn)]() {
      if (!raw->grad.empty()) fn(*raw);
    };
    nodes_.push_back(std::move(node));
  }
  return Tensor(std::move(out));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) return;
  // Intermediate gradients belong to this pass only; leaves accumulate.
  for (auto& n : nodes_) n.out->grad.clear();
  gbuf(*loss.impl())[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
}

// ---- linear algebra ------------------------------------------------------------

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  const MatmulDims d = matmul_dims("matmul", a.shape(), b.shape(), false);
  std::vector<double> out(d.batch * d.m * d.n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  const std::size_t sa = d.batch_a == 1 ? 0 : d.m * d.k;
  const std::size_t sb = d.batch_b == 1 ? 0 : d.k * d.n;
  for (std::size_t bi = 0; bi < d.batch; ++bi) {
    const double* Ab = A + bi * sa;
    const double* Bb = B + bi * sb;
    double* C = out.data() + bi * d.m * d.n;
    for (std::size_t i = 0; i < d.m; ++i) {
      double* Ci = C + i * d.n;
      for (std::size_t p = 0; p < d.k; ++p) {
        const double av = Ab[i * d.k + p];
        const double* Bp = Bb + p * d.n;
        for (std::size_t j = 0; j < d.n; ++j) Ci[j] += av * Bp[j];
      }
    }
  }
  ImplPtr ha = a.handle(), hb = b.handle();
  return record(d.out_shape, std::move(out), {ha, hb}, [ha, hb, d, sa, sb](TensorImpl& o) {
    const double* G = o.grad.data();
    for (std::size_t bi = 0; bi < d.batch; ++bi) {
      const double* Gb = G + bi * d.m * d.n;
      if (ha->requires_grad) {
        double* dA = gbuf(*ha).data() + bi * sa;
        const double* Bb = hb->data.data() + bi * sb;
        for (std::size_t i = 0; i < d.m; ++i)
          for (std::size_t p = 0; p < d.k; ++p) {
            double s = 0.0;
            const double* Gi = Gb + i * d.n;
            const double* Bp = Bb + p * d.n;
            for (std::size_t j = 0; j < d.n; ++j) s += Gi[j] * Bp[j];
            dA[i * d.k + p] += s;
          }
      }
      if (hb->requires_grad) {
        double* dB = gbuf(*hb).data() + bi * sb;
        const double* Ab = ha->data.data() + bi * sa;
        for (std::size_t i = 0; i < d.m; ++i)
          for (std::size_t p = 0; p < d.k; ++p) {
            const double av = Ab[i * d.k + p];
            const double* Gi = Gb + i * d.n;
            double* dBp = dB + p * d.n;
            for (std::size_t j = 0; j < d.n; ++j) dBp[j] += av * Gi[j];
          }
      }
    }
  });
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
  const MatmulDims d = matmul_dims("matmul_nt", a.shape(), b.shape(), true);
  std::vector<double> out(d.batch * d.m * d.n, 0.0);
  const std::size_t sa = d.batch_a == 1 ? 0 : d.m * d.k;
  const std::size_t sb = d.batch_b == 1 ? 0 : d.n * d.k;
  for (std::size_t bi = 0; bi < d.batch; ++bi) {
    const double* Ab = a.data().data() + bi * sa;
    const double* Bb = b.data().data() + bi * sb;
    double* C = out.data() + bi * d.m * d.n;
    for (std::size_t i = 0; i < d.m; ++i)
      for (std::size_t j = 0; j < d.n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < d.k; ++p) s += Ab[i * d.k + p] * Bb[j * d.k + p];
        C[i * d.n + j] = s;
      }
  }
  ImplPtr ha = a.handle(), hb = b.handle();
  return record(d.out_shape, std::move(out), {ha, hb}, [ha, hb, d, sa, sb](TensorImpl& o) {
    for (std::size_t bi = 0; bi < d.batch; ++bi) {
      const double* Gb = o.grad.data() + bi * d.m * d.n;
      const double* Ab = ha->data.data() + bi * sa;
      const double* Bb = hb->data.data() + bi * sb;
      double* dA = ha->requires_grad ? gbuf(*ha).data() + bi * sa : nullptr;
      double* dB = hb->requires_grad ? gbuf(*hb).data() + bi * sb : nullptr;
      for (std::size_t i = 0; i < d.m; ++i)
        for (std::size_t j = 0; j < d.n; ++j) {
          const double g = Gb[i * d.n + j];
          if (g == 0.0) continue;
          if (dA)
            for (std::size_t p = 0; p < d.k; ++p) dA[i * d.k + p] += g * Bb[j * d.k + p];
          if (dB)
            for (std::size_t p = 0; p < d.k; ++p) dB[j * d.k + p] += g * Ab[i * d.k + p];
        }
    }
  });
}

Tensor Tape::transpose_last(const Tensor& a) {
  if (a.rank() < 2) throw DimensionError("transpose_last: rank < 2 for " + shape_str(a.shape()));
  const std::size_t m = a.dim(a.rank() - 2), n = a.dim(a.rank() - 1);
  const std::size_t batch = a.numel() / std::max<std::size_t>(1, m * n);
  Shape s = a.shape();
  std::swap(s[s.size() - 1], s[s.size() - 2]);
  std::vector<double> out(a.numel());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[b * m * n + j * m + i] = a[b * m * n + i * n + j];
  ImplPtr ha = a.handle();
  return record(std::move(s), std::move(out), {ha}, [ha, batch, m, n](TensorImpl& o) {
    auto& g = gbuf(*ha);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[b * m * n + i * n + j] += o.grad[b * m * n + j * m + i];
  });
}

Tensor Tape::reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  ImplPtr ha = a.handle();
  return record(std::move(shape), std::move(out), {ha}, [ha](TensorImpl& o) {
    auto& g = gbuf(*ha);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor Tape::linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2 || x.rank() < 1 || x.dim(x.rank() - 1) != w.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(w.shape()));
  }
  const std::size_t in = w.dim(0), outd = w.dim(1);
  if (b.defined() && b.numel() != outd) {
    throw DimensionError("linear: bias " + shape_str(b.shape()) + " does not match weight " + shape_str(w.shape()));
  }
  const std::size_t rows = x.numel() / in;
  Shape s = x.shape();
  s.back() = outd;
  std::vector<double> out(rows * outd, 0.0);
  const double* X = x.data().data();
  const double* W = w.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* o = out.data() + r * outd;
    if (b.defined())
      for (std::size_t j = 0; j < outd; ++j) o[j] = b[j];
    for (std::size_t p = 0; p < in; ++p) {
      const double xv = X[r * in + p];
      const double* Wp = W + p * outd;
      for (std::size_t j = 0; j < outd; ++j) o[j] += xv * Wp[j];
    }
  }
  ImplPtr hx = x.handle(), hw = w.handle(), hb = b.defined() ? b.handle() : nullptr;
  return record(std::move(s), std::move(out), {hx, hw, hb}, [hx, hw, hb, rows, in, outd](TensorImpl& o) {
    const double* G = o.grad.data();
    if (hx->requires_grad) {
      auto& dx = gbuf(*hx);
      const double* W = hw->data.data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t p = 0; p < in; ++p) {
          double s = 0.0;
          const double* Gr = G + r * outd;
          const double* Wp = W + p * outd;
          for (std::size_t j = 0; j < outd; ++j) s += Gr[j] * Wp[j];
          dx[r * in + p] += s;
        }
    }
    if (hw->requires_grad) {
      auto& dw = gbuf(*hw);
      const double* X = hx->data.data();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t p = 0; p < in; ++p) {
          const double xv = X[r * in + p];
          if (xv == 0.0) continue;
          const double* Gr = G + r * outd;
          double* dWp = dw.data() + p * outd;
          for (std::size_t j = 0; j < outd; ++j) dWp[j] += xv * Gr[j];
        }
    }
    if (hb && hb->requires_grad) {
      auto& db = gbuf(*hb);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < outd; ++j) db[j] += G[r * outd + j];
    }
  });
}

// ---- elementwise ----------------------------------------------------------------

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  ImplPtr ha = a.handle(), hb = b.handle();
  return record(a.shape(), std::move(out), {ha, hb}, [ha, hb](TensorImpl& o) {
    for (auto* h : {ha.get(), hb.get()}) {
      if (!h->requires_grad) continue;
      auto& g = gbuf(*h);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  ImplPtr ha = a.handle(), hb = b.handle();
  return record(a.shape(), std::move(out), {ha, hb}, [ha, hb](TensorImpl& o) {
    if (ha->requires_grad) {
      auto& g = gbuf(*ha);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (hb->requires_grad) {
      auto& g = gbuf(*hb);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  ImplPtr ha = a.handle(), hb = b.handle();
  return record(a.shape(), std::move(out), {ha, hb}, [ha, hb](TensorImpl& o) {
    if (ha->requires_grad) {
      auto& g = gbuf(*ha);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * hb->data[i];
    }
    if (hb->requires_grad) {
      auto& g = gbuf(*hb);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * ha->data[i];
    }
  });
}

Tensor Tape::scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  ImplPtr ha = a.handle();
  return record(a.shape(), std::move(out), {ha}, [ha, s](TensorImpl& o) {
    auto& g = gbuf(*ha);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * s;
  });
}

Tensor Tape::square(const Tensor& a) { return mul(a, a); }

Tensor Tape::sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  ImplPtr ha = a.handle();
  return record({}, {s}, {ha}, [ha](TensorImpl& o) {
    auto& g = gbuf(*ha);
    for (double& v : g) v += o.grad[0];
  });
}

Tensor Tape::mean(const Tensor& a) {
  if (a.numel() == 0) throw ContractError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

// ---- nonlinearities and normalization -------------------------------------------

Tensor Tape::softmax_masked(const Tensor& logits, const AttentionMask* mask) {
  if (logits.rank() != 3 || logits.dim(1) != logits.dim(2)) {
    throw DimensionError("softmax_masked: logits must be [N, L, L], got " + shape_str(logits.shape()));
  }
  const std::size_t N = logits.dim(0), L = logits.dim(1);
  std::size_t per_group = N;
  if (mask) {
    if (mask->length != L || mask->groups == 0 || N % mask->groups != 0) {
      throw DimensionError("softmax_masked: mask of " + std::to_string(mask->groups) + " x " +
                           std::to_string(mask->length) + "^2 does not fit logits " + shape_str(logits.shape()));
    }
    per_group = N / mask->groups;
  }
  constexpr double kMaskedLogit = -1e9;
  std::vector<double> out(logits.numel());
  std::vector<std::uint8_t> constant_row(N * L, 0);
  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t g = n / per_group;
    for (std::size_t i = 0; i < L; ++i) {
      const double* row = logits.data().data() + (n * L + i) * L;
      double* y = out.data() + (n * L + i) * L;
      bool any = !mask;
      if (mask)
        for (std::size_t j = 0; j < L && !any; ++j) any = (*mask)(g, i, j) != 0;
      if (!any) {
        ++fallback_rows_;
        constant_row[n * L + i] = 1;
        for (std::size_t j = 0; j < L; ++j) y[j] = 1.0 / static_cast<double>(L);
        continue;
      }
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < L; ++j) {
        y[j] = row[j] + ((mask && !(*mask)(g, i, j)) ? kMaskedLogit : 0.0);
        mx = std::max(mx, y[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < L; ++j) {
        y[j] = std::exp(y[j] - mx);
        z += y[j];
      }
      for (std::size_t j = 0; j < L; ++j) y[j] /= z;
    }
  }
  ImplPtr hl = logits.handle();
  return record(logits.shape(), std::move(out), {hl}, [hl, N, L, constant_row = std::move(constant_row)](TensorImpl& o) {
    auto& g = gbuf(*hl);
    for (std::size_t r = 0; r < N * L; ++r) {
      if (constant_row[r]) continue;
      const double* y = o.data.data() + r * L;
      const double* dy = o.grad.data() + r * L;
      double dot = 0.0;
      for (std::size_t j = 0; j < L; ++j) dot += y[j] * dy[j];
      for (std::size_t j = 0; j < L; ++j) g[r * L + j] += y[j] * (dy[j] - dot);
    }
  });
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() < 1) throw DimensionError("layer_norm: scalar input");
  const std::size_t d = x.dim(x.rank() - 1);
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " do not match " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xr[j] - mu) * is;
      out[r * d + j] = xhat[r * d + j] * gain[j] + bias[j];
    }
  }
  ImplPtr hx = x.handle(), hg = gain.handle(), hb = bias.handle();
  return record(x.shape(), std::move(out), {hx, hg, hb},
                [hx, hg, hb, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorImpl& o) {
                  const double* G = o.grad.data();
                  if (hg->requires_grad) {
                    auto& dg = gbuf(*hg);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t j = 0; j < d; ++j) dg[j] += G[r * d + j] * xhat[r * d + j];
                  }
                  if (hb->requires_grad) {
                    auto& db = gbuf(*hb);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t j = 0; j < d; ++j) db[j] += G[r * d + j];
                  }
                  if (hx->requires_grad) {
                    auto& dx = gbuf(*hx);
                    const double inv_d = 1.0 / static_cast<double>(d);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double s1 = 0.0, s2 = 0.0;
                      for (std::size_t j = 0; j < d; ++j) {
                        const double gh = G[r * d + j] * hg->data[j];
                        s1 += gh;
                        s2 += gh * xhat[r * d + j];
                      }
                      for (std::size_t j = 0; j < d; ++j) {
                        const double gh = G[r * d + j] * hg->data[j];
                        dx[r * d + j] += inv_std[r] * (gh - inv_d * s1 - xhat[r * d + j] * inv_d * s2);
                      }
                    }
                  }
                });
}

Tensor Tape::gelu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_value(x[i]);
  ImplPtr hx = x.handle();
  return record(x.shape(), std::move(out), {hx}, [hx](TensorImpl& o) {
    auto& g = gbuf(*hx);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * gelu_derivative(hx->data[i]);
  });
}

Tensor Tape::dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw DomainError("dropout: p must be < 1");
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> m(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    m[i] = rng.bernoulli(p) ? 0.0 : keep_scale;
    out[i] = x[i] * m[i];
  }
  ImplPtr hx = x.handle();
  return record(x.shape(), std::move(out), {hx}, [hx, m = std::move(m)](TensorImpl& o) {
    auto& g = gbuf(*hx);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * m[i];
  });
}

// ---- layout ----------------------------------------------------------------------

Tensor Tape::split_heads(const Tensor& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(2) % heads != 0) {
    throw DimensionError("split_heads: cannot split " + shape_str(x.shape()) + " into " + std::to_string(heads) +
                         " heads");
  }
  const std::size_t B = x.dim(0), T = x.dim(1), D = x.dim(2), dh = D / heads;
  std::vector<double> out(x.numel());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t k = 0; k < dh; ++k)
          out[((b * heads + h) * T + t) * dh + k] = x[(b * T + t) * D + h * dh + k];
  ImplPtr hx = x.handle();
  return record({B * heads, T, dh}, std::move(out), {hx}, [hx, B, T, D, heads, dh](TensorImpl& o) {
    auto& g = gbuf(*hx);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t k = 0; k < dh; ++k)
            g[(b * T + t) * D + h * dh + k] += o.grad[((b * heads + h) * T + t) * dh + k];
  });
}

Tensor Tape::merge_heads(const Tensor& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(0) % heads != 0) {
    throw DimensionError("merge_heads: cannot merge " + shape_str(x.shape()) + " with " + std::to_string(heads) +
                         " heads");
  }
  const std::size_t B = x.dim(0) / heads, T = x.dim(1), dh = x.dim(2), D = dh * heads;
  std::vector<double> out(x.numel());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t k = 0; k < dh; ++k)
          out[(b * T + t) * D + h * dh + k] = x[((b * heads + h) * T + t) * dh + k];
  ImplPtr hx = x.handle();
  return record({B, T, D}, std::move(out), {hx}, [hx, B, T, D, heads, dh](TensorImpl& o) {
    auto& g = gbuf(*hx);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t k = 0; k < dh; ++k)
            g[((b * heads + h) * T + t) * dh + k] += o.grad[(b * T + t) * D + h * dh + k];
  });
}

Tensor Tape::compose_rows(std::span<const Tensor> sources, std::span<const RowPick> picks, Shape out_shape) {
  if (out_shape.empty()) throw DimensionError("compose_rows: empty output shape");
  const std::size_t width = out_shape.back();
  if (shape_numel(out_shape) != picks.size() * width) {
    throw DimensionError("compose_rows: " + std::to_string(picks.size()) + " rows do not fill " +
                         shape_str(out_shape));
  }
  std::vector<std::size_t> rows_in(sources.size());
  for (std::size_t s = 0; s < sources.size(); ++s) {
    if (width == 0 || sources[s].numel() % width != 0) {
      throw DimensionError("compose_rows: source " + shape_str(sources[s].shape()) + " not a multiple of width " +
                           std::to_string(width));
    }
    rows_in[s] = sources[s].numel() / width;
  }
  std::vector<double> out(picks.size() * width);
  for (std::size_t r = 0; r < picks.size(); ++r) {
    const RowPick pk = picks[r];
    if (pk.source >= sources.size() || pk.row >= rows_in[pk.source]) {
      throw ContractError("compose_rows: pick " + std::to_string(r) + " out of range");
    }
    const double* src = sources[pk.source].data().data() + pk.row * width;
    std::copy(src, src + width, out.data() + r * width);
  }
  std::vector<ImplPtr> parents;
  for (const Tensor& s : sources) parents.push_back(s.handle());
  std::vector<RowPick> pk(picks.begin(), picks.end());
  return record(std::move(out_shape), std::move(out), parents,
                [parents, pk = std::move(pk), width](TensorImpl& o) {
                  for (std::size_t r = 0; r < pk.size(); ++r) {
                    TensorImpl& src = *parents[pk[r].source];
                    if (!src.requires_grad) continue;
                    auto& g = gbuf(src);
                    const double* go = o.grad.data() + r * width;
                    double* gs = g.data() + pk[r].row * width;
                    for (std::size_t k = 0; k < width; ++k) gs[k] += go[k];
                  }
                });
}

// ---- losses ----------------------------------------------------------------------

Tensor Tape::weighted_sse(const Tensor& pred, std::span<const double> target, std::span<const double> coeff) {
  if (target.size() != pred.numel() || coeff.size() != pred.numel()) {
    throw DimensionError("weighted_sse: prediction " + shape_str(pred.shape()) + " vs " +
                         std::to_string(target.size()) + " targets");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (coeff[i] == 0.0) continue;
    const double e = pred[i] - target[i];
    s += coeff[i] * e * e;
  }
  ImplPtr hp = pred.handle();
  std::vector<double> t(target.begin(), target.end()), c(coeff.begin(), coeff.end());
  return record({}, {s}, {hp}, [hp, t = std::move(t), c = std::move(c)](TensorImpl& o) {
    auto& g = gbuf(*hp);
    for (std::size_t i = 0; i < t.size(); ++i)
      if (c[i] != 0.0) g[i] += o.grad[0] * 2.0 * c[i] * (hp->data[i] - t[i]);
  });
}

Tensor Tape::bce_with_logits(const Tensor& logits, std::span<const double> labels) {
  if (labels.size() != logits.numel() || labels.empty()) {
    throw DimensionError("bce_with_logits: " + shape_str(logits.shape()) + " logits vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const double n = static_cast<double>(labels.size());
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double z = logits[i];
    // log(1 + e^z) - y z, evaluated without overflow.
    s += std::max(z, 0.0) - z * labels[i] + std::log1p(std::exp(-std::abs(z)));
  }
  ImplPtr hl = logits.handle();
  std::vector<double> y(labels.begin(), labels.end());
  return record({}, {s / n}, {hl}, [hl, y = std::move(y), n](TensorImpl& o) {
    auto& g = gbuf(*hl);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double z = hl->data[i];
      const double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      g[i] += o.grad[0] * (sig - y[i]) / n;
    }
  });
}

}  // namespace aidmae
