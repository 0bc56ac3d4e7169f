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

#include "aidmae/logistic.hpp"

#include <cmath>

#include "aidmae/errors.hpp"

namespace aidmae {

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// In-place Cholesky solve of H x = g; returns false if H is not positive definite.
bool cholesky_solve(std::vector<double> H, std::size_t n, std::vector<double>& x) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = H[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= H[j * n + k] * H[j * n + k];
    if (!(d > 0.0)) return false;
    d = std::sqrt(d);
    H[j * n + j] = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = H[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= H[i * n + k] * H[j * n + k];
      H[i * n + j] = s / d;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = x[i];
    for (std::size_t k = 0; k < i; ++k) s -= H[i * n + k] * x[k];
    x[i] = s / H[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = x[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= H[k * n + i] * x[k];
    x[i] = s / H[i * n + i];
  }
  return true;
}

}  // namespace

double LogisticModel::logit(std::span<const double> x) const {
  if (x.size() != w.size()) throw DimensionError("logistic: feature count mismatch");
  double z = b;
  for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x[j];
  return z;
}

double logistic_objective(const std::vector<std::vector<double>>& X, std::span<const double> y,
                          std::span<const double> w, double b, double C, std::vector<double>* grad) {
  const std::size_t n = X.size(), d = w.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  double f = 0.0;
  if (grad) grad->assign(d + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double z = b;
    for (std::size_t j = 0; j < d; ++j) z += w[j] * X[i][j];
    f += softplus(z) - y[i] * z;
    if (grad) {
      const double r = sigmoid(z) - y[i];
      for (std::size_t j = 0; j < d; ++j) (*grad)[j] += r * X[i][j];
      (*grad)[d] += r;
    }
  }
  double wn = 0.0;
  for (double v : w) wn += v * v;
  const double lambda = inv_n / C;
  f = f * inv_n + 0.5 * lambda * wn;
  if (grad) {
    for (std::size_t j = 0; j < d; ++j) (*grad)[j] = (*grad)[j] * inv_n + lambda * w[j];
    (*grad)[d] *= inv_n;
  }
  return f;
}

LogisticModel fit_logistic(const std::vector<std::vector<double>>& X, std::span<const double> y,
                           const LogisticConfig& cfg) {
  if (X.empty() || X.size() != y.size()) throw DimensionError("logistic: need one label per non-empty row");
  if (!(cfg.C > 0.0)) throw ConfigError("logistic: C must be positive");
  const std::size_t n = X.size(), d = X[0].size(), p = d + 1;
  for (const auto& row : X)
    if (row.size() != d) throw DimensionError("logistic: ragged feature matrix");
  const double inv_n = 1.0 / static_cast<double>(n);
  const double lambda = inv_n / cfg.C;

  LogisticModel model;
  model.w.assign(d, 0.0);
  std::vector<double> grad;
  double f = logistic_objective(X, y, model.w, model.b, cfg.C, &grad);
  for (model.iterations = 0; model.iterations < cfg.max_iter; ++model.iterations) {
    double gn = 0.0;
    for (double g : grad) gn += g * g;
    model.grad_norm = std::sqrt(gn);
    if (model.grad_norm < cfg.tol) {
      model.converged = true;
      break;
    }
    // Hessian of the mean objective, intercept last.
    std::vector<double> H(p * p, 0.0);
    std::vector<double> xi(p);
    for (std::size_t i = 0; i < n; ++i) {
      double z = model.b;
      for (std::size_t j = 0; j < d; ++j) z += model.w[j] * X[i][j];
      const double s = sigmoid(z);
      const double c = s * (1.0 - s) * inv_n;
      for (std::size_t j = 0; j < d; ++j) xi[j] = X[i][j];
      xi[d] = 1.0;
      for (std::size_t a = 0; a < p; ++a) {
        const double ca = c * xi[a];
        for (std::size_t bb = 0; bb <= a; ++bb) H[a * p + bb] += ca * xi[bb];
      }
    }
    for (std::size_t j = 0; j < d; ++j) H[j * p + j] += lambda;
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t bb = 0; bb < a; ++bb) H[bb * p + a] = H[a * p + bb];
    std::vector<double> step = grad;
    double jitter = 0.0;
    while (!cholesky_solve(H, p, step)) {
      jitter = jitter == 0.0 ? 1e-12 : jitter * 10.0;
      for (std::size_t a = 0; a < p; ++a) H[a * p + a] += jitter;
      step = grad;
      if (jitter > 1.0) throw RuntimeFailure("logistic: Hessian is not positive definite");
    }
    double slope = 0.0;
    for (std::size_t a = 0; a < p; ++a) slope += step[a] * grad[a];
    double t = 1.0;
    std::vector<double> w_new(d), g_new;
    double b_new = 0.0, f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      for (std::size_t j = 0; j < d; ++j) w_new[j] = model.w[j] - t * step[j];
      b_new = model.b - t * step[d];
      f_new = logistic_objective(X, y, w_new, b_new, cfg.C, &g_new);
      if (f_new <= f - 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // Objective is flat to rounding; accept the full Newton point if it is no worse.
      if (f_new > f) break;
    }
    model.w = std::move(w_new);
    model.b = b_new;
    f = f_new;
    grad = std::move(g_new);
  }
  if (!model.converged) {
    double gn = 0.0;
    for (double g : grad) gn += g * g;
    model.grad_norm = std::sqrt(gn);
    model.converged = model.grad_norm < cfg.tol;
  }
  model.objective = f;
  return model;
}

}  // namespace aidmae
