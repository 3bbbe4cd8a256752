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

#include "xdistill/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace xdistill {

std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> positive) {
  require(scores.size() == positive.size(), "roc_auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j + 1);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) {
        rank_sum += midrank;
        n_pos += 1.0;
      }
    }
    i = j;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) return std::nullopt;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

MetricReport classification_metrics(const Matrix& probs, std::span<const int> labels) {
  const auto n = static_cast<std::size_t>(probs.rows());
  const auto k = static_cast<int>(probs.cols());
  require(n > 0 && n == labels.size(), "classification_metrics: probs rows must match labels");
  require(k >= 2, "classification_metrics: need at least two probability columns");
  for (int y : labels) require(y >= 0 && y < k, "classification_metrics: label out of range");

  MetricReport r;
  r.task = Task::kClassification;
  std::vector<double> tp(k, 0.0), fp(k, 0.0), fn(k, 0.0);
  std::vector<bool> present(k, false);
  double correct = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int pred = argmax(probs.row(static_cast<Eigen::Index>(i)));
    const int y = labels[i];
    present[y] = true;
    present[pred] = true;
    if (pred == y) {
      correct += 1.0;
      tp[y] += 1.0;
    } else {
      fp[pred] += 1.0;
      fn[y] += 1.0;
    }
  }
  r.accuracy = correct / static_cast<double>(n);
  double f1_sum = 0.0;
  int f1_count = 0;
  for (int c = 0; c < k; ++c) {
    if (!present[c]) continue;
    const double denom = 2.0 * tp[c] + fp[c] + fn[c];
    f1_sum += denom > 0.0 ? 2.0 * tp[c] / denom : 0.0;
    ++f1_count;
  }
  r.f1_macro = f1_sum / f1_count;

  std::vector<double> scores(n);
  std::vector<int> positive(n);
  if (k == 2) {
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = probs(static_cast<Eigen::Index>(i), 1);
      positive[i] = labels[i] == 1;
    }
    r.auc = roc_auc(scores, positive);
  } else {
    double auc_sum = 0.0;
    int auc_count = 0;
    for (int c = 0; c < k; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        scores[i] = probs(static_cast<Eigen::Index>(i), c);
        positive[i] = labels[i] == c;
      }
      if (const auto a = roc_auc(scores, positive)) {
        auc_sum += *a;
        ++auc_count;
      }
    }
    if (auc_count > 0) r.auc = auc_sum / auc_count;
  }
  return r;
}

MetricReport regression_metrics(std::span<const double> preds, std::span<const double> targets) {
  require(preds.size() == targets.size(), "regression_metrics: length mismatch");
  require(preds.size() >= 2, "regression_metrics: need at least two samples");
  const double n = static_cast<double>(preds.size());
  const double mean_t = std::accumulate(targets.begin(), targets.end(), 0.0) / n;
  double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double e = preds[i] - targets[i];
    ss_res += e * e;
    abs_sum += std::abs(e);
    const double d = targets[i] - mean_t;
    ss_tot += d * d;
  }
  MetricReport r;
  r.task = Task::kRegression;
  r.rmse = std::sqrt(ss_res / n);
  r.mae = abs_sum / n;
  if (ss_tot > 0.0) r.r2 = 1.0 - ss_res / ss_tot;
  return r;
}

double time_inference(const std::function<void()>& call, int repeats) {
  require(repeats >= 3, "time_inference: repeats must be >= 3");
  using Clock = std::chrono::steady_clock;
  call();
  std::vector<double> seconds(static_cast<std::size_t>(repeats));
  for (double& s : seconds) {
    const auto start = Clock::now();
    call();
    s = std::chrono::duration<double>(Clock::now() - start).count();
  }
  std::sort(seconds.begin(), seconds.end());
  const std::size_t mid = seconds.size() / 2;
  return seconds.size() % 2 == 1 ? seconds[mid] : 0.5 * (seconds[mid - 1] + seconds[mid]);
}

}  // namespace xdistill
