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

#include "xdistill/trees.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tree_builder.hpp"

namespace xdistill {
namespace {

void normalize(Vector& v) {
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  if (total > 0.0) {
    for (double& x : v) x /= total;
  } else {
    std::fill(v.begin(), v.end(), 0.0);
  }
}

void check_features(int expected, const Matrix& x) {
  require(x.cols() == expected, "predict: model expects " + std::to_string(expected) + " features, got " +
                                    std::to_string(x.cols()));
}

Vector softmax_row(const double* z, int k) {
  Vector p(static_cast<std::size_t>(k));
  const double m = *std::max_element(z, z + k);
  double total = 0.0;
  for (int j = 0; j < k; ++j) {
    p[j] = std::exp(z[j] - m);
    total += p[j];
  }
  for (double& v : p) v /= total;
  return p;
}

}  // namespace

const double* Tree::leaf_value(const double* row) const {
  int node = 0;
  while (nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const Node& n = nodes[static_cast<std::size_t>(node)];
    node = row[n.feature] <= n.threshold ? n.left : n.right;
  }
  return values.data() + nodes[static_cast<std::size_t>(node)].value;
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.feature < 0; }));
}

int Tree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  int deepest = 0;
  while (!stack.empty()) {
    auto [node, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const Node& n = nodes[static_cast<std::size_t>(node)];
    if (n.feature >= 0) {
      stack.emplace_back(n.left, d + 1);
      stack.emplace_back(n.right, d + 1);
    }
  }
  return deepest;
}

std::string to_string(ForestMode mode) { return mode == ForestMode::kBagging ? "bagging" : "extra"; }

std::string to_string(GbmVariant variant) {
  switch (variant) {
    case GbmVariant::kFirstOrder:
      return "first_order";
    case GbmVariant::kNewton:
      return "newton";
    case GbmVariant::kHistogram:
      return "histogram";
  }
  return "newton";
}

ForestMode forest_mode_from_string(const std::string& name) {
  if (name == "bagging") return ForestMode::kBagging;
  if (name == "extra") return ForestMode::kExtra;
  throw InvalidArgument("unknown forest mode '" + name + "'");
}

GbmVariant gbm_variant_from_string(const std::string& name) {
  if (name == "first_order") return GbmVariant::kFirstOrder;
  if (name == "newton") return GbmVariant::kNewton;
  if (name == "histogram") return GbmVariant::kHistogram;
  throw InvalidArgument("unknown gbm variant '" + name + "'");
}

ForestModel fit_forest(const Dataset& d, const ForestParams& p, ForestMode mode,
                       std::span<const double> sample_weights) {
  d.validate();
  const std::size_t n = d.n_samples();
  const int n_features = static_cast<int>(d.n_features());
  require(n > 0, "fit_forest: empty dataset");
  require(n_features > 0, "fit_forest: no features");
  require(p.n_estimators > 0, "fit_forest: n_estimators must be positive");
  require(p.min_leaf >= 1, "fit_forest: min_leaf must be >= 1");
  require(p.max_depth >= 0, "fit_forest: max_depth must be >= 0");
  require(sample_weights.empty() || sample_weights.size() == n, "fit_forest: sample_weights length != rows");
  for (double w : sample_weights) require(std::isfinite(w) && w >= 0.0, "fit_forest: weights must be >= 0");
  require(sample_weights.empty() ||
              std::any_of(sample_weights.begin(), sample_weights.end(), [](double w) { return w > 0.0; }),
          "fit_forest: all sample weights are zero");

  const bool classification = d.task == Task::kClassification;
  int mtry = p.mtry;
  if (mtry == 0) {
    mtry = classification ? static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_features)))) : n_features;
  }
  require(mtry >= 1 && mtry <= n_features, "fit_forest: mtry must be in [1, n_features]");

  const std::vector<int> labels = classification ? d.labels() : std::vector<int>{};
  detail::BuildParams build{p.max_depth, mtry, p.min_leaf, mode == ForestMode::kExtra};

  ForestModel model;
  model.mode = mode;
  model.task = d.task;
  model.n_classes = d.n_classes;
  model.n_features = n_features;
  model.seed = p.seed;
  model.trees.resize(static_cast<std::size_t>(p.n_estimators));
  std::vector<Vector> importances(model.trees.size(), Vector(static_cast<std::size_t>(n_features), 0.0));

  parallel_for(model.trees.size(), p.n_threads, [&](std::size_t t) {
    std::mt19937_64 rng(derive_seed(p.seed, t));
    Vector weight(n, 0.0);
    if (mode == ForestMode::kBagging && p.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t i = 0; i < n; ++i) weight[pick(rng)] += 1.0;
    } else {
      std::fill(weight.begin(), weight.end(), 1.0);
    }
    if (!sample_weights.empty()) {
      for (std::size_t i = 0; i < n; ++i) weight[i] *= sample_weights[i];
    }
    std::vector<int> rows;
    for (std::size_t i = 0; i < n; ++i) {
      if (weight[i] > 0.0) rows.push_back(static_cast<int>(i));
    }
    if (rows.empty()) {
      // The bootstrap missed every positively weighted row.
      for (std::size_t i = 0; i < n; ++i) {
        weight[i] = sample_weights[i];
        if (weight[i] > 0.0) rows.push_back(static_cast<int>(i));
      }
    }

    detail::RowStats stats;
    Vector weighted_y;
    if (classification) {
      stats.label = labels;
      stats.weight = weight;
      stats.n_classes = d.n_classes;
    } else {
      weighted_y.resize(n);
      for (std::size_t i = 0; i < n; ++i) weighted_y[i] = weight[i] * d.y[i];
      stats.sum = weighted_y;
      stats.denom = weight;
    }
    model.trees[t] = detail::build_exact_tree(d.x, std::move(rows), stats, build, rng, importances[t]);
  });

  model.feature_importances.assign(static_cast<std::size_t>(n_features), 0.0);
  for (const auto& imp : importances) {
    for (int j = 0; j < n_features; ++j) model.feature_importances[j] += imp[j];
  }
  normalize(model.feature_importances);
  return model;
}

GbmModel fit_gbm(const Dataset& d, const GbmParams& p, GbmVariant variant) {
  d.validate();
  const std::size_t n = d.n_samples();
  const int n_features = static_cast<int>(d.n_features());
  require(n > 0, "fit_gbm: empty dataset");
  require(n_features > 0, "fit_gbm: no features");
  require(p.n_bins >= 2, "fit_gbm: n_bins must be >= 2");
  require(p.n_estimators > 0, "fit_gbm: n_estimators must be positive");
  require(p.learning_rate > 0.0, "fit_gbm: learning_rate must be positive");
  require(p.min_leaf >= 1, "fit_gbm: min_leaf must be >= 1");
  require(p.l2_leaf >= 0.0, "fit_gbm: l2_leaf must be >= 0");
  const int mtry = p.mtry == 0 ? n_features : p.mtry;
  require(mtry >= 1 && mtry <= n_features, "fit_gbm: mtry must be in [1, n_features]");

  const bool classification = d.task == Task::kClassification;
  const int k = classification ? d.n_classes : 1;
  const bool second_order = variant != GbmVariant::kFirstOrder;
  const double l2 = second_order ? p.l2_leaf : 0.0;

  GbmModel model;
  model.variant = variant;
  model.task = d.task;
  model.n_classes = d.n_classes;
  model.n_features = n_features;
  model.learning_rate = p.learning_rate;
  model.base_score.assign(static_cast<std::size_t>(k), 0.0);
  if (classification) {
    Vector counts(static_cast<std::size_t>(k), 0.0);
    for (double v : d.y) counts[static_cast<std::size_t>(v)] += 1.0;
    for (int c = 0; c < k; ++c) model.base_score[c] = std::log(std::max(counts[c] / n, 1e-12));
  } else {
    model.base_score[0] = std::accumulate(d.y.begin(), d.y.end(), 0.0) / static_cast<double>(n);
  }

  detail::FeatureBins bins;
  if (variant == GbmVariant::kHistogram) bins = detail::FeatureBins::build(d.x, p.n_bins);
  const int max_leaves = p.max_depth > 0 ? (1 << std::min(p.max_depth, 20)) : static_cast<int>(n);
  detail::BuildParams build{p.max_depth, mtry, p.min_leaf, false};

  Matrix scores(static_cast<Eigen::Index>(n), k);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) scores(static_cast<Eigen::Index>(i), c) = model.base_score[c];
  }
  const std::vector<int> labels = classification ? d.labels() : std::vector<int>{};
  std::vector<int> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), 0);
  Vector gradient(n), hessian(n, 1.0);
  model.feature_importances.assign(static_cast<std::size_t>(n_features), 0.0);
  Matrix probs;

  for (int stage = 0; stage < p.n_estimators; ++stage) {
    if (classification) {
      probs.resize(static_cast<Eigen::Index>(n), k);
      for (std::size_t i = 0; i < n; ++i) {
        const Vector pi = softmax_row(scores.row(static_cast<Eigen::Index>(i)).data(), k);
        for (int c = 0; c < k; ++c) probs(static_cast<Eigen::Index>(i), c) = pi[c];
      }
    }
    std::vector<Tree> group(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        if (classification) {
          const double pc = probs(row, c);
          gradient[i] = (labels[i] == c ? 1.0 : 0.0) - pc;
          hessian[i] = second_order ? std::max(pc * (1.0 - pc), 1e-16) : 1.0;
        } else {
          gradient[i] = d.y[i] - scores(row, 0);
        }
      }
      detail::RowStats stats;
      stats.sum = gradient;
      stats.denom = hessian;
      stats.l2 = l2;
      if (variant == GbmVariant::kHistogram) {
        group[c] = detail::build_histogram_tree(bins, stats, max_leaves, p.min_leaf, model.feature_importances);
      } else {
        std::mt19937_64 rng(derive_seed(p.seed, static_cast<std::uint64_t>(stage) * k + c));
        group[c] = detail::build_exact_tree(d.x, all_rows, stats, build, rng, model.feature_importances);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      for (int c = 0; c < k; ++c) scores(row, c) += p.learning_rate * group[c].leaf_value(d.x.row(row).data())[0];
    }
    model.stages.push_back(std::move(group));

    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      if (classification) {
        const double* z = scores.row(row).data();
        const double m = *std::max_element(z, z + k);
        double lse = 0.0;
        for (int c = 0; c < k; ++c) lse += std::exp(z[c] - m);
        loss += m + std::log(lse) - z[labels[i]];
      } else {
        const double r = d.y[i] - scores(row, 0);
        loss += r * r;
      }
    }
    model.train_loss.push_back(loss / static_cast<double>(n));
  }
  normalize(model.feature_importances);
  return model;
}

Matrix predict(const ForestModel& model, const Matrix& x) {
  check_features(model.n_features, x);
  const int k = model.task == Task::kClassification ? model.n_classes : 1;
  Matrix out = Matrix::Zero(x.rows(), k);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double* row = x.row(i).data();
    for (const Tree& tree : model.trees) {
      const double* v = tree.leaf_value(row);
      for (int c = 0; c < k; ++c) out(i, c) += v[c];
    }
  }
  out /= static_cast<double>(model.trees.size());
  return out;
}

Matrix predict(const GbmModel& model, const Matrix& x) {
  check_features(model.n_features, x);
  const int k = static_cast<int>(model.base_score.size());
  Matrix scores(x.rows(), k);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double* row = x.row(i).data();
    for (int c = 0; c < k; ++c) {
      double sum = 0.0;
      for (const auto& group : model.stages) sum += group[c].leaf_value(row)[0];
      scores(i, c) = model.base_score[c] + model.learning_rate * sum;
    }
  }
  if (model.task == Task::kRegression) return scores;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Vector p = softmax_row(scores.row(i).data(), k);
    for (int c = 0; c < k; ++c) scores(i, c) = p[c];
  }
  return scores;
}

Matrix predict(const TreeModel& model, const Matrix& x) {
  return std::visit([&](const auto& m) { return predict(m, x); }, model);
}

std::vector<Matrix> member_predictions(const TreeModel& model, const Matrix& x) {
  if (const auto* gbm = std::get_if<GbmModel>(&model)) return {predict(*gbm, x)};
  const auto& forest = std::get<ForestModel>(model);
  check_features(forest.n_features, x);
  const int k = forest.task == Task::kClassification ? forest.n_classes : 1;
  std::vector<Matrix> members;
  members.reserve(forest.trees.size());
  for (const Tree& tree : forest.trees) {
    Matrix m(x.rows(), k);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double* v = tree.leaf_value(x.row(i).data());
      for (int c = 0; c < k; ++c) m(i, c) = v[c];
    }
    members.push_back(std::move(m));
  }
  return members;
}

const Vector& feature_importance(const TreeModel& model) {
  return std::visit([](const auto& m) -> const Vector& { return m.feature_importances; }, model);
}

Task task_of(const TreeModel& model) {
  return std::visit([](const auto& m) { return m.task; }, model);
}

int n_classes_of(const TreeModel& model) {
  return std::visit([](const auto& m) { return m.n_classes; }, model);
}

int n_features_of(const TreeModel& model) {
  return std::visit([](const auto& m) { return m.n_features; }, model);
}

EnsembleSignals ensemble_signals(const std::vector<Matrix>& members) {
  require(!members.empty(), "ensemble_signals: no members");
  const auto rows = members.front().rows();
  const auto cols = members.front().cols();
  for (const auto& m : members) {
    require(m.rows() == rows && m.cols() == cols, "ensemble_signals: member shapes differ");
  }
  const double count = static_cast<double>(members.size());
  EnsembleSignals out;
  out.mean = Matrix::Zero(rows, cols);
  for (const auto& m : members) out.mean += m;
  out.mean /= count;
  out.variance.assign(static_cast<std::size_t>(rows), 0.0);
  for (Eigen::Index i = 0; i < rows; ++i) {
    double total = 0.0;
    for (Eigen::Index c = 0; c < cols; ++c) {
      double ss = 0.0;
      for (const auto& m : members) {
        const double dev = m(i, c) - out.mean(i, c);
        ss += dev * dev;
      }
      total += ss / count;
    }
    out.variance[static_cast<std::size_t>(i)] = total / static_cast<double>(cols);
  }
  return out;
}

EnsembleSignals teacher_signals(const std::vector<const TreeModel*>& models, const Matrix& x) {
  require(!models.empty(), "teacher_signals: need at least one model");
  const Task task = task_of(*models.front());
  const int k = n_classes_of(*models.front());
  std::vector<Matrix> predictions;
  for (const TreeModel* m : models) {
    require(task_of(*m) == task && n_classes_of(*m) == k, "teacher_signals: incompatible teacher tasks");
    require(n_features_of(*m) == x.cols(), "teacher_signals: feature count mismatch");
    predictions.push_back(predict(*m, x));
  }
  return ensemble_signals(predictions);
}

}  // namespace xdistill
