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

// Independent reference implementations used by the tests. Nothing here
// calls into the library code it is meant to check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "aidmae/tensor.hpp"

namespace oracle {

/// Relative error with an absolute floor, as used for gradient checks.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central-difference gradient of `loss()` with respect to every entry of
/// `leaf`, perturbing the leaf in place.
inline std::vector<double> numeric_grad(aidmae::Tensor leaf, const std::function<double()>& loss, double h = 1e-5) {
  std::vector<double> g(leaf.numel());
  for (std::size_t i = 0; i < leaf.numel(); ++i) {
    const double keep = leaf[i];
    leaf[i] = keep + h;
    const double up = loss();
    leaf[i] = keep - h;
    const double down = loss();
    leaf[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Largest relative error between analytic and numeric gradients.
inline double max_rel_err(std::span<const double> analytic, std::span<const double> numeric, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) worst = std::max(worst, rel_err(analytic[i], numeric[i], floor));
  return worst;
}

/// AUROC by enumerating every positive/negative pair.
inline double auroc_pairs(std::span<const double> s, std::span<const double> y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] < 0.5) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] > 0.5) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

/// Average precision by sweeping every distinct score as a threshold
/// (predict positive when score >= threshold), highest threshold first.
inline double average_precision_thresholds(std::span<const double> s, std::span<const double> y) {
  std::vector<double> th(s.begin(), s.end());
  std::sort(th.begin(), th.end(), std::greater<>());
  th.erase(std::unique(th.begin(), th.end()), th.end());
  double npos = 0.0;
  for (double v : y) npos += v > 0.5;
  double ap = 0.0, prev_recall = 0.0;
  for (double t : th) {
    double tp = 0.0, pp = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) {
        pp += 1.0;
        tp += y[i] > 0.5;
      }
    }
    const double recall = tp / npos;
    ap += (recall - prev_recall) * (tp / pp);
    prev_recall = recall;
  }
  return ap;
}

/// Empirical quantile by linear interpolation between order statistics,
/// position h = (n - 1) q, written out directly.
inline double interp_quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = static_cast<std::size_t>(std::ceil(h));
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace oracle
