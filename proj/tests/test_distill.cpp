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
#include <random>

#include "xdistill/distill.hpp"

using namespace xdistill;
using Eigen::MatrixXd;

namespace {

// Direct term-by-term evaluation of tau^2 * sum_k q_t log(q_t / q_s) for one
// row, with teacher logits ln(p + 1e-7). Deliberately avoids the library's
// softmax helpers.
double kd_oracle_row(const std::vector<double>& teacher_p, const std::vector<double>& student_z, double tau) {
  const std::size_t k = teacher_p.size();
  std::vector<double> qt(k), qs(k);
  double zt = 0.0, zs = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    qt[c] = std::exp(std::log(teacher_p[c] + 1e-7) / tau);
    qs[c] = std::exp(student_z[c] / tau);
    zt += qt[c];
    zs += qs[c];
  }
  double kl = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double a = qt[c] / zt, b = qs[c] / zs;
    kl += a * std::log(a / b);
  }
  return tau * tau * kl;
}

double ce_oracle_row(const std::vector<double>& z, int label) {
  double s = 0.0;
  for (double v : z) s += std::exp(v);
  return std::log(s) - z[static_cast<std::size_t>(label)];
}

MatrixXd rows(std::initializer_list<std::initializer_list<double>> r) {
  MatrixXd m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

std::vector<double> row_vec(const MatrixXd& m, Eigen::Index i) { return {m.row(i).begin(), m.row(i).end()}; }

Matrix random_x(int n, int p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(n, p);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  return x;
}

Matrix random_probs(int n, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Matrix p(n, k);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) p(i, c) = u(rng);
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

MlpSpec tiny_spec(int out, Task task) {
  MlpSpec s;
  s.layer_widths = {4};
  s.dropout_rates = {0.0};
  s.batchnorm = {false};
  s.output_dim = out;
  s.task = task;
  return s;
}

Dataset blobs(int n_per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.4);
  Dataset d;
  d.task = Task::kClassification;
  d.n_classes = 2;
  d.x.resize(2 * n_per_class, 2);
  for (int i = 0; i < 2 * n_per_class; ++i) {
    const int c = i % 2;
    d.x(i, 0) = (c ? 2.0 : -2.0) + noise(rng);
    d.x(i, 1) = noise(rng);
    d.y.push_back(c);
  }
  d.feature_names = {"a", "b"};
  return d;
}

double accuracy(const Matrix& probs, const Dataset& d) {
  int ok = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) ok += argmax(probs.row(i)) == d.labels()[i];
  return static_cast<double>(ok) / probs.rows();
}

}  // namespace

TEST_CASE("kd_loss of matching distributions is zero") {
  const MatrixXd teacher = rows({{0.2, 0.5, 0.3}, {0.9, 0.05, 0.05}});
  for (double tau : {0.5, 1.0, 3.0, 10.0}) CHECK(kd_loss(pseudo_logits(teacher), teacher, tau) < 1e-9);
  CHECK(std::abs(kd_loss(rows({{std::log(0.5), std::log(0.5)}}), rows({{0.5, 0.5}}), 1.0)) < 1e-15);
}

TEST_CASE("kd_loss matches the direct-summation oracle") {
  CHECK(kd_loss(rows({{0.0, 0.0}}), rows({{0.9, 0.1}}), 2.0) ==
        doctest::Approx(kd_oracle_row({0.9, 0.1}, {0.0, 0.0}, 2.0)).epsilon(1e-12));

  const MatrixXd teacher = rows({{0.7, 0.2, 0.1}, {0.1, 0.1, 0.8}, {1.0, 0.0, 0.0}});
  const MatrixXd student = rows({{0.3, -1.2, 2.0}, {1.0, 0.5, -0.5}, {0.0, 0.0, 0.0}});
  double expected = 0.0;
  for (Eigen::Index i = 0; i < 3; ++i) expected += kd_oracle_row(row_vec(teacher, i), row_vec(student, i), 3.0);
  expected /= 3.0;
  CHECK(std::abs(kd_loss(student, teacher, 3.0) - expected) < 1e-10);
}

TEST_CASE("kd_loss preconditions") {
  const MatrixXd t = rows({{0.5, 0.5}});
  CHECK_THROWS_AS(kd_loss(rows({{0.0, 0.0}}), t, 0.0), InvalidArgument);
  CHECK_THROWS_AS(kd_loss(rows({{0.0, 0.0}}), t, -1.0), InvalidArgument);
  CHECK_THROWS_AS(kd_loss(rows({{0.0, 0.0, 0.0}}), t, 1.0), InvalidArgument);
  CHECK_THROWS_AS(kd_loss(rows({{0.0, 0.0}}), rows({{0.7, 0.7}}), 1.0), InvalidArgument);
}

// As tau grows, tau^2 * KL tends to half the (uniform) variance across classes
// of the logit difference z_s - z_t. The KL itself vanishes.
TEST_CASE("kd_loss is nonnegative and has the large-temperature limit") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    MatrixXd s(4, 3);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = u(rng);
    const MatrixXd t = random_probs(4, 3, static_cast<std::uint64_t>(trial));
    CHECK(kd_loss(s, t, 1.0 + trial * 0.1) >= 0.0);
    const double big = 1e4;
    CHECK(kd_loss(s, t, big) / (big * big) < 1e-6);
    const MatrixXd d = s - pseudo_logits(t);
    double limit = 0.0;
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
      const double mean = d.row(i).mean();
      limit += 0.5 * ((d.row(i).array() - mean).square().mean());
    }
    limit /= static_cast<double>(d.rows());
    CHECK(kd_loss(s, t, big) == doctest::Approx(limit).epsilon(1e-3));
  }
}

TEST_CASE("combined_loss endpoints and midpoint") {
  const MatrixXd t = rows({{0.7, 0.2, 0.1}, {0.1, 0.6, 0.3}});
  const MatrixXd s = rows({{0.5, -0.3, 1.1}, {2.0, 0.1, -1.0}});
  const std::vector<int> y = {0, 2};
  MatrixXd ce_grad, kd_grad, g0, g1;
  CrossEntropyObjective ce(y);
  const std::vector<std::size_t> all = {0, 1};
  const double ce_loss = ce.evaluate(all, s, &ce_grad);
  const double kd = kd_loss(s, t, 3.0, &kd_grad);
  CHECK(combined_loss(s, t, y, 0.0, 3.0, &g0) == ce_loss);
  CHECK(g0 == ce_grad);
  CHECK(combined_loss(s, t, y, 1.0, 3.0, &g1) == kd);
  CHECK(g1 == kd_grad);

  const double kd_o = (kd_oracle_row(row_vec(t, 0), row_vec(s, 0), 3.0) + kd_oracle_row(row_vec(t, 1), row_vec(s, 1), 3.0)) / 2;
  const double ce_o = (ce_oracle_row(row_vec(s, 0), 0) + ce_oracle_row(row_vec(s, 1), 2)) / 2;
  CHECK(std::abs(combined_loss(s, t, y, 0.5, 3.0) - 0.5 * (kd_o + ce_o)) < 1e-10);
  CHECK_THROWS_AS(combined_loss(s, t, y, 1.5, 3.0), InvalidArgument);
  CHECK_THROWS_AS(combined_loss(s, t, y, -0.1, 3.0), InvalidArgument);
}

TEST_CASE("combined_loss is linear in alpha") {
  const MatrixXd t = random_probs(5, 3, 1);
  const MatrixXd s = random_x(5, 3, 2);
  const std::vector<int> y = {0, 1, 2, 1, 0};
  const double l0 = combined_loss(s, t, y, 0.0, 2.0), l1 = combined_loss(s, t, y, 1.0, 2.0);
  for (double a : {0.1, 0.25, 0.7, 0.9}) {
    CHECK(std::abs(combined_loss(s, t, y, a, 2.0) - ((1 - a) * l0 + a * l1)) < 1e-12);
  }
}

TEST_CASE("regression combined loss mixes two squared errors") {
  const MatrixXd s = rows({{1.0}, {2.0}});
  const MatrixXd t = rows({{0.0}, {4.0}});
  const std::vector<double> y = {2.0, 2.0};
  // teacher MSE = (1 + 4) / 2 = 2.5; label MSE = (1 + 0) / 2 = 0.5
  CHECK(combined_loss_regression(s, t, y, 1.0) == 2.5);
  CHECK(combined_loss_regression(s, t, y, 0.0) == 0.5);
  CHECK(combined_loss_regression(s, t, y, 0.5) == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("multi-teacher reductions") {
  const MatrixXd s = random_x(6, 3, 5);
  const MatrixXd t1 = random_probs(6, 3, 6), t2 = random_probs(6, 3, 7), t3 = random_probs(6, 3, 8);
  const std::vector<int> y = {0, 1, 2, 0, 1, 2};
  const std::vector<double> one = {1.0};
  CHECK(multi_teacher_loss(s, {t1}, one, y, 1.0, 3.0) == kd_loss(s, t1, 3.0));
  CHECK(multi_teacher_loss(s, {t1}, one, y, 0.7, 3.0) == combined_loss(s, t1, y, 0.7, 3.0));
  CHECK(std::abs(multi_teacher_loss(s, {t1, t1}, std::vector<double>{0.5, 0.5}, y, 0.7, 3.0) -
                 combined_loss(s, t1, y, 0.7, 3.0)) < 1e-12);
  const std::vector<double> w = {0.2, 0.5, 0.3};
  const double sum = w[0] * kd_loss(s, t1, 3.0) + w[1] * kd_loss(s, t2, 3.0) + w[2] * kd_loss(s, t3, 3.0);
  CHECK(std::abs(multi_teacher_loss(s, {t1, t2, t3}, w, y, 1.0, 3.0) - sum) < 1e-12);

  CHECK_THROWS_AS(multi_teacher_loss(s, {t1, t2}, one, y, 1.0, 3.0), InvalidArgument);
  CHECK_THROWS_AS(multi_teacher_loss(s, {t1, t2}, std::vector<double>{1.5, -0.5}, y, 1.0, 3.0), InvalidArgument);
  CHECK_THROWS_AS(multi_teacher_loss(s, {t1, t2}, std::vector<double>{0.3, 0.3}, y, 1.0, 3.0), InvalidArgument);
}

TEST_CASE("uncertainty-aware loss: endpoints and constant term") {
  const MatrixXd s = random_x(4, 3, 9);
  const MatrixXd t = random_probs(4, 3, 10);
  const std::vector<int> y = {2, 0, 1, 1};
  const std::vector<double> var = {0.05, 0.1, 0.15, 0.1};  // mean 0.1
  DistillSpec spec;
  spec.lambda = 0.0;
  const double base = combined_loss(s, t, y, spec.alpha, spec.tau);
  CHECK(uncertainty_aware_loss(s, t, var, y, spec) == base);
  spec.uncertainty_mode = UncertaintyMode::kSampleWeighted;
  CHECK(uncertainty_aware_loss(s, t, var, y, spec) == base);

  spec.uncertainty_mode = UncertaintyMode::kLiteral;
  spec.lambda = 2.0;
  MatrixXd g_lit, g_base;
  combined_loss(s, t, y, spec.alpha, spec.tau, &g_base);
  CHECK(uncertainty_aware_loss(s, t, var, y, spec, &g_lit) == doctest::Approx(base + 0.2).epsilon(1e-14));
  CHECK(g_lit == g_base);

  spec.uncertainty_mode = UncertaintyMode::kSampleWeighted;
  MatrixXd g_eq;
  const std::vector<double> flat(4, 0.3);
  CHECK(std::abs(uncertainty_aware_loss(s, t, flat, y, spec, &g_eq) - base) < 1e-12);
  CHECK((g_eq - g_base).cwiseAbs().maxCoeff() < 1e-15);

  spec.lambda = -1.0;
  CHECK_THROWS_AS(uncertainty_aware_loss(s, t, var, y, spec), InvalidArgument);
  spec.lambda = 1.0;
  CHECK_THROWS_AS(uncertainty_aware_loss(s, t, std::vector<double>{0.1, -0.1, 0.0, 0.0}, y, spec), InvalidArgument);
}

TEST_CASE("sample-weighted mode downweights uncertain rows") {
  const MatrixXd s = random_x(2, 2, 11);
  const MatrixXd t = random_probs(2, 2, 12);
  const std::vector<int> y = {0, 1};
  DistillSpec spec;
  spec.alpha = 1.0;
  spec.lambda = 4.0;
  spec.uncertainty_mode = UncertaintyMode::kSampleWeighted;
  // weights 1/(1+0)=1 and 1/(1+4)=0.2, normalized to mean 1: 5/3 and 1/3
  Eigen::VectorXd terms;
  kd_terms(s, t, spec.tau, terms, nullptr);
  const double expected = (5.0 / 3.0 * terms(0) + 1.0 / 3.0 * terms(1)) / 2.0;
  CHECK(uncertainty_aware_loss(s, t, std::vector<double>{0.0, 1.0}, y, spec) ==
        doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("every distillation objective passes the gradient check") {
  const Matrix x = random_x(6, 3, 13);
  const MlpModel cls = build_mlp(tiny_spec(3, Task::kClassification), 3, 1);
  const MlpModel reg = build_mlp(tiny_spec(1, Task::kRegression), 3, 1);
  const Vector labels = {0, 1, 2, 2, 1, 0};
  const Vector targets = {0.3, -1.0, 2.0, 0.5, 1.5, -0.2};
  const Vector var = {0.0, 0.1, 0.4, 0.2, 0.05, 0.3};

  for (auto mode : {UncertaintyMode::kLiteral, UncertaintyMode::kSampleWeighted}) {
    for (double lambda : {0.0, 0.5}) {
      DistillSpec spec;
      spec.lambda = lambda;
      spec.uncertainty_mode = mode;
      DistillTargets c{Task::kClassification, {random_probs(6, 3, 1), random_probs(6, 3, 2)}, {0.4, 0.6}, labels, var};
      CHECK(gradient_check(cls, DistillObjective(c, spec), x) < 1e-4);
      Matrix t1(6, 1), t2(6, 1);
      for (int i = 0; i < 6; ++i) {
        t1(i, 0) = targets[i] + 0.3;
        t2(i, 0) = targets[i] - 0.2;
      }
      DistillTargets r{Task::kRegression, {t1, t2}, {0.5, 0.5}, targets, var};
      CHECK(gradient_check(reg, DistillObjective(r, spec), x) < 1e-4);
    }
  }
}

TEST_CASE("objective with one unit-weight teacher equals combined_loss") {
  const MatrixXd s = random_x(5, 3, 14);
  const Matrix t = random_probs(5, 3, 15);
  const Vector y = {0, 1, 2, 0, 1};
  DistillSpec spec;
  spec.lambda = 0.0;
  DistillObjective obj({Task::kClassification, {t}, {1.0}, y, {}}, spec);
  const std::vector<std::size_t> idx = {0, 1, 2, 3, 4};
  const std::vector<int> labels = {0, 1, 2, 0, 1};
  CHECK(obj.evaluate(idx, s, nullptr) == combined_loss(s, t, labels, spec.alpha, spec.tau));
}

TEST_CASE("alpha = 0 distillation reproduces hard-label training exactly") {
  const Dataset d = blobs(30, 1);
  ForestParams fp;
  fp.n_estimators = 10;
  const TreeModel teacher = fit_forest(d, fp, ForestMode::kBagging);
  DistillSpec spec;
  spec.alpha = 0.0;
  spec.lambda = 0.0;
  TrainSpec t;
  t.max_epochs = 10;
  t.seed = 4;
  const MlpSpec student = preset_spec(Architecture::kCompact, 2, Task::kClassification);
  const MlpModel a = distill_rf_to_nn(teacher, student, d, spec, t);
  const MlpModel b = fit_hard_label_mlp(student, d, t);
  CHECK(a.history.train_loss == b.history.train_loss);
  CHECK(a.history.val_loss == b.history.val_loss);
  for (std::size_t l = 0; l < a.weights.size(); ++l) CHECK(a.weights[l] == b.weights[l]);
}

TEST_CASE("alpha = 1 student tracks a perfect forest teacher") {
  const Dataset train = blobs(60, 2), test = blobs(60, 3);
  const TreeModel teacher = fit_forest(train, ForestParams{50}, ForestMode::kBagging);
  DistillSpec spec;
  spec.alpha = 1.0;
  TrainSpec t;
  t.max_epochs = 60;
  const MlpModel s = distill_rf_to_nn(teacher, preset_spec(Architecture::kCompact, 2, Task::kClassification), train,
                                      spec, t);
  const double rf_acc = accuracy(predict(teacher, test.x), test);
  CHECK(accuracy(predict_mlp(s, test.x).mean, test) >= rf_acc - 0.02);
}

TEST_CASE("rf_to_nn rejects a task mismatch") {
  const Dataset d = blobs(10, 1);
  const TreeModel teacher = fit_forest(d, ForestParams{3}, ForestMode::kBagging);
  CHECK_THROWS_AS(distill_rf_to_nn(teacher, preset_spec(Architecture::kCompact, 1, Task::kRegression), d,
                                   DistillSpec{}, TrainSpec{}),
                  InvalidArgument);
}

TEST_CASE("nn_to_rf endpoints") {
  const Dataset d = blobs(40, 5);
  TrainSpec t;
  t.max_epochs = 30;
  const MlpModel teacher = fit_hard_label_mlp(preset_spec(Architecture::kCompact, 2, Task::kClassification), d, t);
  ForestParams fp;
  fp.n_estimators = 20;
  fp.seed = 8;
  const Matrix probe = random_x(30, 2, 16) * 3.0;

  DistillSpec spec;
  spec.beta = 0.0;
  spec.aug_copies = 0;
  const Matrix baseline = predict(fit_forest(d, fp, ForestMode::kBagging), probe);
  CHECK(predict(distill_nn_to_rf(teacher, d, spec, fp), probe) == baseline);

  // The teacher labels the training rows perfectly, so beta = 1 sees the
  // same labels as the baseline.
  REQUIRE(accuracy(predict_mlp(teacher, d.x).mean, d) == 1.0);
  spec.beta = 1.0;
  CHECK(predict(distill_nn_to_rf(teacher, d, spec, fp), probe) == baseline);

  spec.aug_copies = 2;
  spec.aug_sigma = 0.0;
  CHECK_THROWS_AS(distill_nn_to_rf(teacher, d, spec, fp), InvalidArgument);
}

TEST_CASE("teacher labels follow the logit argmax") {
  const MatrixXd z = rows({{2.0, -1.0, 0.5}});
  CHECK(argmax(softmax(z).row(0)) == 0);
  CHECK(argmax(z.row(0)) == 0);
}

TEST_CASE("nn_to_rf regression blends targets") {
  Dataset d;
  d.task = Task::kRegression;
  d.x = random_x(80, 2, 17);
  for (int i = 0; i < 80; ++i) d.y.push_back(d.x(i, 0) - d.x(i, 1));
  d.feature_names = {"a", "b"};
  TrainSpec t;
  t.max_epochs = 5;
  const MlpModel teacher = fit_hard_label_mlp(preset_spec(Architecture::kCompact, 1, Task::kRegression), d, t);
  DistillSpec spec;
  spec.beta = 0.0;
  spec.aug_copies = 0;
  ForestParams fp;
  fp.n_estimators = 5;
  CHECK(predict(distill_nn_to_rf(teacher, d, spec, fp), d.x) == predict(fit_forest(d, fp, ForestMode::kBagging), d.x));
  spec.aug_copies = 2;
  const ForestModel f = distill_nn_to_rf(teacher, d, spec, fp);
  CHECK(f.trees.size() == 5);
}

TEST_CASE("multi-teacher and progressive distillation on separable data") {
  const Dataset train = blobs(60, 6), test = blobs(60, 7);
  const TreeModel rf = fit_forest(train, ForestParams{30}, ForestMode::kBagging);
  GbmParams gp;
  gp.n_estimators = 30;
  const TreeModel xgb = fit_gbm(train, gp, GbmVariant::kNewton);
  const TreeModel lgb = fit_gbm(train, gp, GbmVariant::kHistogram);
  TrainSpec t;
  t.max_epochs = 40;
  DistillSpec spec;

  const MlpModel mt = multi_teacher_distill({&rf, &xgb, &lgb}, {}, preset_spec(Architecture::kStandard, 2,
                                            Task::kClassification), train, spec, t);
  CHECK(accuracy(predict_mlp(mt, test.x).mean, test) >= 0.98);
  CHECK_THROWS_AS(multi_teacher_distill({&rf, &xgb}, {1.0}, preset_spec(Architecture::kStandard, 2,
                                        Task::kClassification), train, spec, t),
                  InvalidArgument);

  const auto models = progressive_distill({&rf, &xgb, &lgb}, train, default_progressive_stages(2, Task::kClassification),
                                          spec, t);
  REQUIRE(models.size() == 3);
  CHECK(models[0].spec.layer_widths == std::vector<int>{256, 128, 64, 32});
  CHECK(models[1].spec.layer_widths == std::vector<int>{128, 64, 32});
  CHECK(models[2].spec.layer_widths == std::vector<int>{64, 32});
  CHECK(models[0].parameter_count() >= models[1].parameter_count());
  CHECK(models[1].parameter_count() >= models[2].parameter_count());
  for (const auto& m : models) CHECK(accuracy(predict_mlp(m, test.x).mean, test) >= 0.98);

  CHECK_THROWS_AS(progressive_distill({}, train, default_progressive_stages(2, Task::kClassification), spec, t),
                  InvalidArgument);
}

TEST_CASE("DistillSpec validation") {
  DistillSpec s;
  CHECK_NOTHROW(s.validate());
  s.tau = 0.0;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = {};
  s.beta = 1.1;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = {};
  s.teacher_weights = {0.5, 0.4};
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
  s = {};
  s.aug_copies = -1;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
}
