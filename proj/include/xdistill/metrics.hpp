/*
 * Copyright 2026 The xdistill Authors.
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

#ifndef XDISTILL_METRICS_HPP_
#define XDISTILL_METRICS_HPP_

#include <chrono>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "xdistill/common.hpp"

namespace xdistill {

// Metrics that do not apply to the task, or are undefined for the data
// (AUC with one class present, R^2 with constant targets), are empty.
struct MetricReport {
  Task task = Task::kClassification;
  std::optional<double> accuracy;
  std::optional<double> f1_macro;
  std::optional<double> auc;
  std::optional<double> rmse;
  std::optional<double> r2;
  std::optional<double> mae;
  double mean_uncertainty = 0.0;
  double inference_seconds = 0.0;
};

// Accuracy of the row argmax, macro F1 over the classes present in labels or
// predictions, and ROC AUC (one-vs-rest macro for more than two columns).
MetricReport classification_metrics(const Matrix& probs, std::span<const int> labels);

MetricReport regression_metrics(std::span<const double> preds, std::span<const double> targets);

// Area under the ROC curve via the Mann-Whitney statistic with midranks.
// Empty when either class is absent.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> positive);

// Median wall-clock seconds over `repeats` calls, after one warm-up call.
double time_inference(const std::function<void()>& call, int repeats = 5);

}  // namespace xdistill

#endif  // XDISTILL_METRICS_HPP_
