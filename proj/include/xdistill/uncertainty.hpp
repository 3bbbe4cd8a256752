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

#ifndef XDISTILL_UNCERTAINTY_HPP_
#define XDISTILL_UNCERTAINTY_HPP_

#include <optional>
#include <utility>
#include <vector>

#include "xdistill/common.hpp"
#include "xdistill/neural.hpp"
#include "xdistill/trees.hpp"

namespace xdistill {

struct PredictionWithUncertainty {
  double point = 0.0;  // class index for classification, value for regression
  std::optional<Vector> probs;
  double uncertainty = 0.0;
  std::optional<std::pair<double, double>> interval;
};

// Per-sample population variance across members (class-averaged for
// probability outputs). Fewer than two members give zeros.
Vector epistemic_uncertainty(const std::vector<Matrix>& members);
// Members of a forest are its trees; a boosted model is a single member.
Vector epistemic_uncertainty(const TreeModel& model, const Matrix& x);

// MC-dropout variance over `passes` stochastic forward passes. Zero for a
// network without dropout. Throws for passes < 2.
Vector aleatoric_uncertainty(const MlpModel& model, const Matrix& x, int passes = 30, std::uint64_t seed = 0);

// Two-sided standard-normal quantile: P(|Z| <= z) = coverage.
double normal_two_sided_quantile(double coverage);

struct Intervals {
  Vector mean;
  Vector lower;
  Vector upper;
};

// mean +/- z(coverage) * std over members with n x 1 outputs.
Intervals prediction_interval(const std::vector<Matrix>& members, double coverage = 0.95);
Intervals prediction_interval(const TreeModel& model, const Matrix& x, double coverage = 0.95);

std::vector<PredictionWithUncertainty> predict_with_uncertainty(const TreeModel& model, const Matrix& x,
                                                                double coverage = 0.95);
std::vector<PredictionWithUncertainty> predict_with_uncertainty(const MlpModel& model, const Matrix& x,
                                                                int passes = 30, std::uint64_t seed = 0);

double mean_uncertainty(const Vector& values);

}  // namespace xdistill

#endif  // XDISTILL_UNCERTAINTY_HPP_
