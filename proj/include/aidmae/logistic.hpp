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
#include <span>
#include <vector>

namespace aidmae {

struct LogisticConfig {
  double C = 1.0;
  std::size_t max_iter = 100;
  double tol = 1e-8;  // on the gradient norm
};

/// L2-regularized logistic regression fitted by damped Newton iteration on
/// mean BCE + ||w||^2 / (2 C n). The intercept is not penalized.
struct LogisticModel {
  std::vector<double> w;
  double b = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  double grad_norm = 0.0;
  double objective = 0.0;

  double logit(std::span<const double> x) const;
};

/// Rows of X are samples; y holds 0/1 labels.
LogisticModel fit_logistic(const std::vector<std::vector<double>>& X, std::span<const double> y,
                           const LogisticConfig& config = {});

/// Objective and its gradient (w entries then b) at the given point.
double logistic_objective(const std::vector<std::vector<double>>& X, std::span<const double> y,
                          std::span<const double> w, double b, double C, std::vector<double>* grad = nullptr);

}  // namespace aidmae
