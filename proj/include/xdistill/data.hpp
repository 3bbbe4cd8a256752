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

#ifndef XDISTILL_DATA_HPP_
#define XDISTILL_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xdistill/common.hpp"

namespace xdistill {

// A tabular dataset. For classification `y` holds class indices 0..K-1
// stored as doubles; for regression it holds real targets.
struct Dataset {
  std::string name;
  Task task = Task::kClassification;
  Matrix x;
  Vector y;
  std::vector<std::string> feature_names;
  int n_classes = 0;  // 0 for regression

  std::size_t n_samples() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t n_features() const { return static_cast<std::size_t>(x.cols()); }
  std::vector<int> labels() const;

  // Throws InvalidArgument if any invariant (shape, label range, finiteness)
  // is violated.
  void validate() const;
};

struct SplitSpec {
  double test_fraction = 0.25;
  std::uint64_t seed = 0;
  bool stratified = true;
};

// Per-column standardization fitted on training rows.
struct Standardizer {
  Vector means;
  Vector stds;  // zero deviations are stored as 1

  static Standardizer fit(const Matrix& x);
  Matrix transform(const Matrix& x) const;
};

struct SplitResult {
  Dataset train;
  Dataset test;
  Standardizer scaler;
  std::vector<std::size_t> train_rows;  // indices into the source dataset
  std::vector<std::size_t> test_rows;
};

// Loads a header-first CSV. Every column except `label_column` must be
// numeric. Classification labels are re-encoded to 0..K-1 following the
// lexicographic order of the raw label strings.
Dataset load_csv(const std::filesystem::path& path, Task task, const std::string& label_column);

// Writes `d` in the same layout load_csv reads; the label column is "target".
void write_csv(const Dataset& d, const std::filesystem::path& path);

// 1500 x 20, three classes in proportion 0.70/0.20/0.10. Features 0-9 carry
// class-conditional Gaussian signal; features 10-19 are N(0,1) noise.
Dataset generate_imbalanced(std::uint64_t seed);

// 1200 x 8, y = 3 sin(2 x1) + x2^2 - 2 x3 x4 + |x5| + N(0, 0.9^2).
Dataset generate_nonlinear_regression(std::uint64_t seed);

// The noiseless part of the nonlinear regression target for one row.
double nonlinear_signal(const double* row);

inline constexpr double kNonlinearNoiseStd = 0.9;

SplitResult split_and_standardize(const Dataset& d, const SplitSpec& s);

// Copies the given rows of `d` into a new dataset.
Dataset select_rows(const Dataset& d, const std::vector<std::size_t>& rows);

}  // namespace xdistill

#endif  // XDISTILL_DATA_HPP_
