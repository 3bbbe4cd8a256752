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

#include "xdistill/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace xdistill {
namespace {

std::string trim(std::string_view s) {
  auto begin = s.find_first_not_of(" \t\r\n\"");
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(" \t\r\n\"");
  return std::string(s.substr(begin, end - begin + 1));
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

bool parse_double(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

std::vector<int> Dataset::labels() const {
  std::vector<int> out(y.size());
  std::transform(y.begin(), y.end(), out.begin(), [](double v) { return static_cast<int>(v); });
  return out;
}

void Dataset::validate() const {
  require(static_cast<std::size_t>(x.rows()) == y.size(), "dataset: x rows != y length");
  require(feature_names.empty() || feature_names.size() == n_features(),
          "dataset: feature_names length != feature count");
  require(x.allFinite(), "dataset: non-finite feature value");
  for (double v : y) require(std::isfinite(v), "dataset: non-finite target");
  if (task == Task::kClassification) {
    require(n_classes >= 1, "dataset: classification needs n_classes >= 1");
    for (double v : y) {
      require(v >= 0 && v < n_classes && v == std::floor(v), "dataset: label outside [0, n_classes)");
    }
  } else {
    require(n_classes == 0, "dataset: regression must have n_classes == 0");
  }
}

Dataset load_csv(const std::filesystem::path& path, Task task, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw IoError("load_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw IoError("load_csv: empty file " + path.string());
  const auto header = split_line(line);
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    throw IoError("load_csv: label column '" + label_column + "' missing in " + path.string());
  }
  const std::size_t label_index = static_cast<std::size_t>(label_it - header.begin());

  Dataset d;
  d.name = path.stem().string();
  d.task = task;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != label_index) d.feature_names.push_back(header[c]);
  }
  const std::size_t p = d.feature_names.size();

  std::vector<double> values;
  std::vector<std::string> raw_labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw IoError("load_csv: line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                    " cells, expected " + std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c == label_index) {
        raw_labels.push_back(cells[c]);
        continue;
      }
      double v = 0;
      if (!parse_double(cells[c], v) || !std::isfinite(v)) {
        throw IoError("load_csv: non-numeric value '" + cells[c] + "' at line " + std::to_string(line_no) +
                      ", column '" + header[c] + "'");
      }
      values.push_back(v);
    }
  }
  if (raw_labels.empty()) throw IoError("load_csv: no data rows in " + path.string());

  const std::size_t n = raw_labels.size();
  d.x = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  d.y.resize(n);
  if (task == Task::kClassification) {
    std::map<std::string, int> codes;
    for (const auto& label : raw_labels) codes.emplace(label, 0);
    int next = 0;
    for (auto& [label, code] : codes) code = next++;
    for (std::size_t i = 0; i < n; ++i) d.y[i] = codes.at(raw_labels[i]);
    d.n_classes = next;
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      if (!parse_double(raw_labels[i], d.y[i]) || !std::isfinite(d.y[i])) {
        throw IoError("load_csv: non-numeric regression target '" + raw_labels[i] + "'");
      }
    }
  }
  d.validate();
  return d;
}

void write_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_csv: cannot open " + path.string());
  out.precision(17);
  for (std::size_t j = 0; j < d.n_features(); ++j) {
    out << (d.feature_names.empty() ? "x" + std::to_string(j) : d.feature_names[j]) << ',';
  }
  out << "target\n";
  for (std::size_t i = 0; i < d.n_samples(); ++i) {
    for (std::size_t j = 0; j < d.n_features(); ++j) out << d.x(i, j) << ',';
    if (d.task == Task::kClassification) {
      out << static_cast<int>(d.y[i]) << '\n';
    } else {
      out << d.y[i] << '\n';
    }
  }
  if (!out) throw IoError("write_csv: write failed for " + path.string());
}

Dataset generate_imbalanced(std::uint64_t seed) {
  constexpr int kRows = 1500;
  constexpr int kFeatures = 20;
  constexpr int kInformative = 10;
  constexpr int kClasses = 3;
  constexpr int kCounts[kClasses] = {1050, 300, 150};

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  double means[kClasses][kInformative];
  for (auto& row : means) {
    for (double& m : row) m = 2.0 * normal(rng);
  }

  std::vector<int> labels;
  labels.reserve(kRows);
  for (int c = 0; c < kClasses; ++c) labels.insert(labels.end(), kCounts[c], c);
  std::shuffle(labels.begin(), labels.end(), rng);

  Dataset d;
  d.name = "imbalanced";
  d.task = Task::kClassification;
  d.n_classes = kClasses;
  d.x.resize(kRows, kFeatures);
  d.y.resize(kRows);
  for (int i = 0; i < kRows; ++i) {
    const int c = labels[i];
    d.y[i] = c;
    for (int j = 0; j < kFeatures; ++j) {
      d.x(i, j) = (j < kInformative ? means[c][j] : 0.0) + normal(rng);
    }
  }
  for (int j = 0; j < kFeatures; ++j) d.feature_names.push_back("x" + std::to_string(j));
  return d;
}

double nonlinear_signal(const double* row) {
  return 3.0 * std::sin(2.0 * row[0]) + row[1] * row[1] - 2.0 * row[2] * row[3] + std::abs(row[4]);
}

Dataset generate_nonlinear_regression(std::uint64_t seed) {
  constexpr int kRows = 1200;
  constexpr int kFeatures = 8;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset d;
  d.name = "nonlinear";
  d.task = Task::kRegression;
  d.x.resize(kRows, kFeatures);
  d.y.resize(kRows);
  for (int i = 0; i < kRows; ++i) {
    for (int j = 0; j < kFeatures; ++j) d.x(i, j) = normal(rng);
    d.y[i] = nonlinear_signal(d.x.row(i).data()) + kNonlinearNoiseStd * normal(rng);
  }
  for (int j = 0; j < kFeatures; ++j) d.feature_names.push_back("x" + std::to_string(j + 1));
  return d;
}

Standardizer Standardizer::fit(const Matrix& x) {
  Standardizer s;
  const auto n = static_cast<double>(x.rows());
  s.means.resize(x.cols());
  s.stds.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    const double var = (x.col(j).array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    s.means[j] = mean;
    // Column constant up to rounding: treat as degenerate.
    s.stds[j] = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 1.0;
  }
  return s;
}

Matrix Standardizer::transform(const Matrix& x) const {
  require(static_cast<std::size_t>(x.cols()) == means.size(), "standardizer: feature count mismatch");
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - means[j]) / stds[j];
  }
  return out;
}

Dataset select_rows(const Dataset& d, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.name = d.name;
  out.task = d.task;
  out.feature_names = d.feature_names;
  out.n_classes = d.n_classes;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), d.x.cols());
  out.y.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.x.row(static_cast<Eigen::Index>(r)) = d.x.row(static_cast<Eigen::Index>(rows[r]));
    out.y[r] = d.y[rows[r]];
  }
  return out;
}

SplitResult split_and_standardize(const Dataset& d, const SplitSpec& s) {
  d.validate();
  require(s.test_fraction > 0.0 && s.test_fraction < 1.0, "split: test_fraction must be in (0, 1)");
  require(!s.stratified || d.task == Task::kClassification, "split: stratified split requires classification");
  require(d.n_samples() >= 2, "split: need at least two rows");

  std::mt19937_64 rng(s.seed);
  std::vector<std::size_t> test_rows;
  std::vector<std::size_t> train_rows;
  auto take = [&](std::vector<std::size_t>& pool) {
    std::shuffle(pool.begin(), pool.end(), rng);
    auto n_test = static_cast<std::size_t>(std::llround(s.test_fraction * pool.size()));
    n_test = std::clamp<std::size_t>(n_test, 1, pool.size() - 1);
    test_rows.insert(test_rows.end(), pool.begin(), pool.begin() + n_test);
    train_rows.insert(train_rows.end(), pool.begin() + n_test, pool.end());
  };

  if (s.stratified) {
    std::vector<std::vector<std::size_t>> by_class(d.n_classes);
    for (std::size_t i = 0; i < d.n_samples(); ++i) by_class[static_cast<int>(d.y[i])].push_back(i);
    for (int c = 0; c < d.n_classes; ++c) {
      if (by_class[c].empty()) continue;
      require(by_class[c].size() >= 2, "split: stratified split needs >= 2 rows in class " + std::to_string(c));
      take(by_class[c]);
    }
  } else {
    std::vector<std::size_t> all(d.n_samples());
    std::iota(all.begin(), all.end(), 0);
    take(all);
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());

  SplitResult out;
  out.train = select_rows(d, train_rows);
  out.test = select_rows(d, test_rows);
  out.scaler = Standardizer::fit(out.train.x);
  out.train.x = out.scaler.transform(out.train.x);
  out.test.x = out.scaler.transform(out.test.x);
  out.train_rows = std::move(train_rows);
  out.test_rows = std::move(test_rows);
  return out;
}

}  // namespace xdistill
