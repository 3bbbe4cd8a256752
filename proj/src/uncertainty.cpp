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

#include "xdistill/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/special_functions/erf.hpp>

namespace xdistill {
namespace {

std::vector<PredictionWithUncertainty> to_points(const Matrix& mean, const Vector& variance, Task task) {
  std::vector<PredictionWithUncertainty> out(static_cast<std::size_t>(mean.rows()));
  for (Eigen::Index i = 0; i < mean.rows(); ++i) {
    auto& p = out[static_cast<std::size_t>(i)];
    p.uncertainty = variance[static_cast<std::size_t>(i)];
    if (task == Task::kClassification) {
      p.point = argmax(mean.row(i));
      p.probs = Vector(mean.row(i).begin(), mean.row(i).end());
    } else {
      p.point = mean(i, 0);
    }
  }
  return out;
}

}  // namespace

Vector epistemic_uncertainty(const std::vector<Matrix>& members) {
  require(!members.empty(), "epistemic_uncertainty: no members");
  if (members.size() < 2) return Vector(static_cast<std::size_t>(members.front().rows()), 0.0);
  return ensemble_signals(members).variance;
}

Vector epistemic_uncertainty(const TreeModel& model, const Matrix& x) {
  return epistemic_uncertainty(member_predictions(model, x));
}

Vector aleatoric_uncertainty(const MlpModel& model, const Matrix& x, int passes, std::uint64_t seed) {
  require(passes >= 2, "aleatoric_uncertainty: passes must be >= 2");
  if (!model.spec.has_dropout()) return Vector(static_cast<std::size_t>(x.rows()), 0.0);
  return predict_mlp(model, x, PredictMode::mc(passes, seed)).variance;
}

double normal_two_sided_quantile(double coverage) {
  require(coverage > 0.0 && coverage < 1.0, "prediction_interval: coverage must be in (0, 1)");
  return std::sqrt(2.0) * boost::math::erf_inv(coverage);
}

Intervals prediction_interval(const std::vector<Matrix>& members, double coverage) {
  require(!members.empty(), "prediction_interval: no members");
  require(members.front().cols() == 1, "prediction_interval: regression outputs required");
  const double z = normal_two_sided_quantile(coverage);
  const EnsembleSignals s = ensemble_signals(members);
  const auto n = static_cast<std::size_t>(s.mean.rows());
  Intervals out{Vector(n), Vector(n), Vector(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const double m = s.mean(static_cast<Eigen::Index>(i), 0);
    const double half = z * std::sqrt(s.variance[i]);
    out.mean[i] = m;
    out.lower[i] = m - half;
    out.upper[i] = m + half;
  }
  return out;
}

Intervals prediction_interval(const TreeModel& model, const Matrix& x, double coverage) {
  require(task_of(model) == Task::kRegression, "prediction_interval: classification models have no interval");
  return prediction_interval(member_predictions(model, x), coverage);
}

std::vector<PredictionWithUncertainty> predict_with_uncertainty(const TreeModel& model, const Matrix& x,
                                                                double coverage) {
  const std::vector<Matrix> members = member_predictions(model, x);
  const Matrix mean = predict(model, x);
  auto out = to_points(mean, epistemic_uncertainty(members), task_of(model));
  if (task_of(model) == Task::kRegression) {
    const Intervals iv = prediction_interval(members, coverage);
    for (std::size_t i = 0; i < out.size(); ++i) {
      // The interval is centred on the member mean, which equals the point
      // for forests; boosted models have a single member and zero width.
      out[i].interval = std::make_pair(std::min(iv.lower[i], out[i].point), std::max(iv.upper[i], out[i].point));
    }
  }
  return out;
}

std::vector<PredictionWithUncertainty> predict_with_uncertainty(const MlpModel& model, const Matrix& x, int passes,
                                                                std::uint64_t seed) {
  const MlpPrediction eval = predict_mlp(model, x);
  return to_points(eval.mean, aleatoric_uncertainty(model, x, passes, seed), model.spec.task);
}

double mean_uncertainty(const Vector& values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

}  // namespace xdistill
