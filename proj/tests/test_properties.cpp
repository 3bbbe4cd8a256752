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

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "xdistill/distill.hpp"
#include "xdistill/metrics.hpp"
#include "xdistill/trees.hpp"
#include "xdistill/uncertainty.hpp"

using namespace xdistill;

namespace {

Dataset small_classification(std::uint64_t seed) {
  Dataset d = generate_imbalanced(seed);
  std::vector<std::size_t> rows(240);
  std::iota(rows.begin(), rows.end(), 0);
  for (auto& r : rows) r *= 6;
  return select_rows(d, rows);
}

}  // namespace

TEST_CASE("predicted probabilities sum to one for every model family") {
  const Dataset d = small_classification(3);
  ForestParams fp;
  fp.n_estimators = 10;
  GbmParams gp;
  gp.n_estimators = 10;
  std::vector<TreeModel> models = {fit_forest(d, fp, ForestMode::kBagging), fit_forest(d, fp, ForestMode::kExtra),
                                   fit_gbm(d, gp, GbmVariant::kFirstOrder), fit_gbm(d, gp, GbmVariant::kNewton),
                                   fit_gbm(d, gp, GbmVariant::kHistogram)};
  for (const auto& m : models) {
    const Matrix p = predict(m, d.x);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(p.row(i).minCoeff() >= 0.0);
    }
    const Vector& imp = feature_importance(m);
    CHECK(std::accumulate(imp.begin(), imp.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    for (double v : imp) CHECK(v >= 0.0);
  }
  for (auto arch : {Architecture::kStandard, Architecture::kResidual}) {
    const MlpModel net = build_mlp(arch, static_cast<int>(d.n_features()), 3, Task::kClassification, 5);
    const Matrix p = predict_mlp(net, d.x, PredictMode::mc(4, 1)).mean;
    for (Eigen::Index i = 0; i < p.rows(); ++i) CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("AUC is invariant under strictly increasing score transforms") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Vector s(50);
    std::vector<int> pos(50);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = std::round(u(rng) * 10.0) / 10.0;  // coarse scores produce ties
      pos[i] = u(rng) < 0.4;
    }
    Vector t(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) t[i] = std::exp(3.0 * s[i]) - 2.0;
    const auto a = roc_auc(s, pos), b = roc_auc(t, pos);
    REQUIRE(a.has_value());
    CHECK(*a == doctest::Approx(*b).epsilon(1e-12));
  }
}

TEST_CASE("regression metric relations") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Vector y(40), p(40);
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = g(rng);
      p[i] = y[i] + 0.5 * g(rng);
    }
    const MetricReport r = regression_metrics(p, y);
    CHECK(*r.rmse >= *r.mae - 1e-12);
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    const Vector constant(y.size(), mean);
    CHECK(std::abs(*regression_metrics(constant, y).r2) < 1e-12);
    CHECK(*regression_metrics(y, y).r2 == 1.0);
  }
}

TEST_CASE("accuracy does not depend on probability scaling within a row") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Matrix p(30, 3);
  std::vector<int> labels(30);
  for (int i = 0; i < 30; ++i) {
    for (int k = 0; k < 3; ++k) p(i, k) = u(rng);
    p.row(i) /= p.row(i).sum();
    labels[static_cast<std::size_t>(i)] = i % 3;
  }
  Matrix sharpened = p.array().pow(3.0).matrix();
  for (int i = 0; i < 30; ++i) sharpened.row(i) /= sharpened.row(i).sum();
  CHECK(*classification_metrics(p, labels).accuracy == *classification_metrics(sharpened, labels).accuracy);
}

TEST_CASE("forest results do not depend on thread count") {
  const Dataset d = small_classification(4);
  ForestParams p;
  p.n_estimators = 12;
  p.seed = 9;
  p.n_threads = 1;
  const ForestModel a = fit_forest(d, p, ForestMode::kBagging);
  p.n_threads = 4;
  const ForestModel b = fit_forest(d, p, ForestMode::kBagging);
  CHECK(predict(a, d.x) == predict(b, d.x));
  CHECK(a.feature_importances == b.feature_importances);
}

TEST_CASE("temperature-scaled softmax keeps the argmax") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd z(1, 5);
    for (int k = 0; k < 5; ++k) z(0, k) = g(rng);
    Eigen::Index base, scaled;
    softmax(z).row(0).maxCoeff(&base);
    for (double tau : {0.5, 2.0, 3.0, 10.0}) {
      softmax(z, tau).row(0).maxCoeff(&scaled);
      CHECK(base == scaled);
    }
  }
}

TEST_CASE("epistemic uncertainty is nonnegative and zero for identical members") {
  const Dataset d = small_classification(5);
  ForestParams p;
  p.n_estimators = 6;
  const ForestModel m = fit_forest(d, p, ForestMode::kBagging);
  for (double v : epistemic_uncertainty(TreeModel(m), d.x)) CHECK(v >= 0.0);
  const Matrix same = predict(m, d.x);
  for (double v : epistemic_uncertainty({same, same, same})) CHECK(v == 0.0);
}

TEST_CASE("combined loss is linear in alpha") {
  std::mt19937_64 rng(19);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd s(8, 3), t(8, 3);
  std::vector<int> labels(8);
  for (int i = 0; i < 8; ++i) {
    for (int k = 0; k < 3; ++k) {
      s(i, k) = g(rng);
      t(i, k) = std::exp(g(rng));
    }
    t.row(i) /= t.row(i).sum();
    labels[static_cast<std::size_t>(i)] = i % 3;
  }
  const double l0 = combined_loss(s, t, labels, 0.0, 2.0);
  const double l1 = combined_loss(s, t, labels, 1.0, 2.0);
  for (double a : {0.1, 0.35, 0.8}) {
    CHECK(combined_loss(s, t, labels, a, 2.0) == doctest::Approx(a * l1 + (1 - a) * l0).epsilon(1e-12));
  }
  CHECK(kd_loss(s, t, 2.0) >= 0.0);
}
