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

#ifndef XDISTILL_TREES_HPP_
#define XDISTILL_TREES_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "xdistill/common.hpp"
#include "xdistill/data.hpp"

namespace xdistill {

// Binary decision tree stored as a flat node array. Node 0 is the root.
// Samples with x[feature] <= threshold descend left.
struct Tree {
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int value = -1;  // offset into `values` for leaves
  };

  std::vector<Node> nodes;
  Vector values;
  int value_dim = 1;  // K for class distributions, 1 otherwise

  const double* leaf_value(const double* row) const;
  std::size_t leaf_count() const;
  int depth() const;
};

enum class ForestMode { kBagging, kExtra };
enum class GbmVariant { kFirstOrder, kNewton, kHistogram };

std::string to_string(ForestMode mode);
std::string to_string(GbmVariant variant);
ForestMode forest_mode_from_string(const std::string& name);
GbmVariant gbm_variant_from_string(const std::string& name);

struct ForestParams {
  int n_estimators = 200;
  int max_depth = 0;  // 0 = unlimited
  int mtry = 0;       // 0 = ceil(sqrt(p)) for classification, p for regression
  int min_leaf = 1;
  std::uint64_t seed = 0;
  unsigned n_threads = 0;  // 0 = hardware concurrency; never affects the result
  bool bootstrap = true;   // bagging mode only; false trains every tree on all rows
};

struct GbmParams {
  int n_estimators = 100;
  int max_depth = 6;
  int mtry = 0;  // 0 = all features
  int min_leaf = 1;
  double learning_rate = 0.1;
  int n_bins = 256;
  double l2_leaf = 1.0;
  std::uint64_t seed = 0;
};

struct ForestModel {
  std::vector<Tree> trees;
  ForestMode mode = ForestMode::kBagging;
  Task task = Task::kClassification;
  int n_classes = 0;
  int n_features = 0;
  Vector feature_importances;
  std::uint64_t seed = 0;
};

struct GbmModel {
  std::vector<std::vector<Tree>> stages;  // K trees per stage for K classes, else 1
  Vector base_score;
  double learning_rate = 0.1;
  GbmVariant variant = GbmVariant::kNewton;
  Task task = Task::kRegression;
  int n_classes = 0;
  int n_features = 0;
  Vector feature_importances;
  Vector train_loss;  // training loss after each stage
};

using TreeModel = std::variant<ForestModel, GbmModel>;

ForestModel fit_forest(const Dataset& d, const ForestParams& p, ForestMode mode,
                       std::span<const double> sample_weights = {});

GbmModel fit_gbm(const Dataset& d, const GbmParams& p, GbmVariant variant);

// Class probabilities (n x K) for classification, values (n x 1) for
// regression.
Matrix predict(const ForestModel& model, const Matrix& x);
Matrix predict(const GbmModel& model, const Matrix& x);
Matrix predict(const TreeModel& model, const Matrix& x);

// Per-member predictions: one per tree for a forest, one for a boosted model.
std::vector<Matrix> member_predictions(const TreeModel& model, const Matrix& x);

const Vector& feature_importance(const TreeModel& model);
Task task_of(const TreeModel& model);
int n_classes_of(const TreeModel& model);
int n_features_of(const TreeModel& model);

struct EnsembleSignals {
  Matrix mean;      // n x K probabilities, or n x 1 values
  Vector variance;  // per-sample population variance (class-averaged for K > 1)
};

// Mean and population variance across an ensemble's member predictions.
EnsembleSignals ensemble_signals(const std::vector<Matrix>& members);

// Mean prediction and spread across several fitted tree models.
EnsembleSignals teacher_signals(const std::vector<const TreeModel*>& models, const Matrix& x);

}  // namespace xdistill

#endif  // XDISTILL_TREES_HPP_
