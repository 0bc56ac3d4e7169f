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

#include <span>

namespace aidmae {

/// Probability that a random positive scores above a random negative, ties
/// counting one half. Labels are 0/1. Throws UndefinedMetricError unless
/// both classes are present.
double auroc(std::span<const double> scores, std::span<const double> labels);

/// Average precision: sum over distinct thresholds of (R_k - R_{k-1}) P_k.
/// Throws UndefinedMetricError without positives.
double auprc(std::span<const double> scores, std::span<const double> labels);

struct RegressionMetrics {
  double nrmse = 0.0;
  double nmae = 0.0;
  double r2 = 0.0;
};

/// RMSE and MAE divided by value_range, and 1 - SS_res / SS_tot.
RegressionMetrics regression_metrics(std::span<const double> pred, std::span<const double> truth, double value_range);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1); 0 for a single value
};
MeanSd mean_sd(std::span<const double> values);

}  // namespace aidmae
