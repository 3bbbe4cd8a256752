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
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "xdistill/data.hpp"

using namespace xdistill;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& contents) {
  const fs::path p = fs::temp_directory_path() / ("xdistill_test_data_" + name);
  std::ofstream(p) << contents;
  return p;
}

std::map<int, int> class_counts(const Dataset& d) {
  std::map<int, int> c;
  for (int y : d.labels()) ++c[y];
  return c;
}

}  // namespace

TEST_CASE("breast cancer CSV loads with the expected shape") {
  const Dataset d = load_csv(fs::path(XDISTILL_DATA_DIR) / "breast_cancer.csv", Task::kClassification, "target");
  CHECK(d.n_samples() == 569);
  CHECK(d.n_features() == 30);
  CHECK(d.n_classes == 2);
  CHECK(d.feature_names.front() == "mean_radius");
}

TEST_CASE("single-row CSV re-encodes its only label to 0") {
  const Dataset d = load_csv(temp_file("one.csv", "f0,label\n1.5,7\n"), Task::kClassification, "label");
  REQUIRE(d.n_samples() == 1);
  CHECK(d.y[0] == 0.0);
  CHECK(d.n_classes == 1);
}

TEST_CASE("labels follow lexicographic order of the raw strings") {
  const Dataset d = load_csv(temp_file("lex.csv", "a,y\n1,10\n2,9\n3,b\n4,9\n"), Task::kClassification, "y");
  // "10" < "9" < "b"
  CHECK(d.labels() == std::vector<int>{0, 1, 2, 1});
}

TEST_CASE("load_csv error paths") {
  CHECK_THROWS_AS(load_csv(temp_file("abc.csv", "a,y\nabc,1\n"), Task::kClassification, "y"), IoError);
  CHECK_THROWS_AS(load_csv(temp_file("nolabel.csv", "a,b\n1,2\n"), Task::kClassification, "y"), IoError);
  CHECK_THROWS_AS(load_csv(temp_file("empty.csv", ""), Task::kClassification, "y"), IoError);
  CHECK_THROWS_AS(load_csv("/nonexistent/none.csv", Task::kClassification, "y"), IoError);
  CHECK_THROWS_AS(load_csv(temp_file("nan.csv", "a,y\nnan,1\n"), Task::kRegression, "y"), IoError);
}

TEST_CASE("write_csv round-trips through load_csv") {
  const Dataset d = generate_nonlinear_regression(3);
  const fs::path p = fs::temp_directory_path() / "xdistill_test_data_roundtrip.csv";
  write_csv(d, p);
  const Dataset back = load_csv(p, Task::kRegression, "target");
  CHECK(back.n_samples() == d.n_samples());
  CHECK(back.x == d.x);
  CHECK(back.y == d.y);
}

TEST_CASE("imbalanced generator: shape, counts and determinism") {
  const Dataset a = generate_imbalanced(0);
  CHECK(a.n_samples() == 1500);
  CHECK(a.n_features() == 20);
  CHECK(a.n_classes == 3);
  const auto c = class_counts(a);
  CHECK(c.at(0) == 1050);
  CHECK(c.at(1) == 300);
  CHECK(c.at(2) == 150);
  const Dataset b = generate_imbalanced(0);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(generate_imbalanced(7).n_samples() == 1500);
  CHECK_FALSE(generate_imbalanced(1).x == a.x);
}

TEST_CASE("imbalanced generator: noise features carry no class signal") {
  const Dataset d = generate_imbalanced(5);
  // Class-conditional means of a noise column stay near 0; an informative
  // column's means are spread by the N(0, 2^2) draws.
  auto class_mean_range = [&](int j) {
    double lo = 1e9, hi = -1e9;
    for (int k = 0; k < 3; ++k) {
      double s = 0.0;
      int n = 0;
      for (std::size_t i = 0; i < d.n_samples(); ++i) {
        if (d.labels()[i] == k) {
          s += d.x(static_cast<Eigen::Index>(i), j);
          ++n;
        }
      }
      lo = std::min(lo, s / n);
      hi = std::max(hi, s / n);
    }
    return hi - lo;
  };
  for (int j = 10; j < 20; ++j) CHECK(class_mean_range(j) < 0.5);
  double informative = 0.0;
  for (int j = 0; j < 10; ++j) informative = std::max(informative, class_mean_range(j));
  CHECK(informative > 1.0);
}

TEST_CASE("nonlinear generator: shape, signal at zero and noise ceiling") {
  const Dataset d = generate_nonlinear_regression(0);
  CHECK(d.n_samples() == 1200);
  CHECK(d.n_features() == 8);
  CHECK(d.task == Task::kRegression);
  const double zeros[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  CHECK(nonlinear_signal(zeros) == 0.0);

  // Monte-Carlo estimate of Var(signal) with an independent draw of inputs.
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int draws = 1000000;
  double mean = 0.0, m2 = 0.0;
  for (int i = 0; i < draws; ++i) {
    double x[8];
    for (double& v : x) v = normal(rng);
    const double s = 3.0 * std::sin(2.0 * x[0]) + x[1] * x[1] - 2.0 * x[2] * x[3] + std::abs(x[4]);
    const double delta = s - mean;
    mean += delta / (i + 1);
    m2 += delta * (s - mean);
  }
  const double var = m2 / draws;
  const double ceiling = var / (var + kNonlinearNoiseStd * kNonlinearNoiseStd);
  CHECK(ceiling == doctest::Approx(0.93).epsilon(0.01));
}

TEST_CASE("nonlinear generator matches its formula on the generated rows") {
  const Dataset d = generate_nonlinear_regression(11);
  double ss = 0.0;
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    const double* r = d.x.row(i).data();
    const double s = 3.0 * std::sin(2.0 * r[0]) + r[1] * r[1] - 2.0 * r[2] * r[3] + std::abs(r[4]);
    CHECK(nonlinear_signal(r) == doctest::Approx(s).epsilon(1e-12));
    ss += (d.y[static_cast<std::size_t>(i)] - s) * (d.y[static_cast<std::size_t>(i)] - s);
  }
  // Residual variance is the noise variance.
  CHECK(std::sqrt(ss / d.x.rows()) == doctest::Approx(kNonlinearNoiseStd).epsilon(0.06));
}

TEST_CASE("split 100 rows at 0.2 gives 80/20") {
  Dataset d;
  d.task = Task::kRegression;
  d.x = Matrix::Random(100, 3);
  d.y.assign(100, 0.0);
  for (int i = 0; i < 100; ++i) d.y[i] = i;
  d.feature_names = {"a", "b", "c"};
  const SplitResult s = split_and_standardize(d, {0.2, 1, false});
  CHECK(s.train.n_samples() == 80);
  CHECK(s.test.n_samples() == 20);
  std::set<std::size_t> all(s.train_rows.begin(), s.train_rows.end());
  all.insert(s.test_rows.begin(), s.test_rows.end());
  CHECK(all.size() == 100);
}

TEST_CASE("stratified split of (1050, 300, 150) at 0.2 gives (210, 60, 30)") {
  const SplitResult s = split_and_standardize(generate_imbalanced(0), {0.2, 3, true});
  const auto c = class_counts(s.test);
  CHECK(c.at(0) == 210);
  CHECK(c.at(1) == 60);
  CHECK(c.at(2) == 30);
}

TEST_CASE("standardization statistics and the constant-column rule") {
  Dataset d = generate_nonlinear_regression(2);
  d.x.col(7).setConstant(4.0);
  const SplitResult s = split_and_standardize(d, {0.25, 0, false});
  CHECK(s.scaler.stds[7] == 1.0);
  for (Eigen::Index j = 0; j < s.train.x.cols(); ++j) {
    const double mean = s.train.x.col(j).mean();
    CHECK(std::abs(mean) < 1e-9);
    if (j == 7) {
      CHECK(s.train.x.col(j).cwiseAbs().maxCoeff() == 0.0);
      continue;
    }
    const double var = (s.train.x.col(j).array() - mean).square().mean();
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
  }
}

TEST_CASE("split preconditions") {
  const Dataset d = generate_imbalanced(0);
  CHECK_THROWS_AS(split_and_standardize(d, {0.0, 0, true}), InvalidArgument);
  CHECK_THROWS_AS(split_and_standardize(d, {1.0, 0, true}), InvalidArgument);
  CHECK_THROWS_AS(split_and_standardize(generate_nonlinear_regression(0), {0.2, 0, true}), InvalidArgument);
  Dataset tiny;
  tiny.task = Task::kClassification;
  tiny.n_classes = 2;
  tiny.x = Matrix::Zero(4, 1);
  tiny.y = {0, 0, 0, 1};
  tiny.feature_names = {"a"};
  CHECK_THROWS_AS(split_and_standardize(tiny, {0.5, 0, true}), InvalidArgument);
}
