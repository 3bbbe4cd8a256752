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

#include "xdistill/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace xdistill {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kWeightSumTolerance = 1e-9;
constexpr double kRowSumTolerance = 1e-6;

void check_tau(double tau) { require(std::isfinite(tau) && tau > 0.0, "distill: tau must be positive"); }

void check_alpha(double alpha) { require(alpha >= 0.0 && alpha <= 1.0, "distill: alpha must be in [0, 1]"); }

void check_teacher_weights(std::span<const double> weights, std::size_t n_teachers) {
  require(weights.size() == n_teachers, "distill: teacher weight count does not match teacher count");
  double sum = 0.0;
  for (double w : weights) {
    require(std::isfinite(w) && w >= 0.0, "distill: teacher weights must be nonnegative");
    sum += w;
  }
  require(std::abs(sum - 1.0) <= kWeightSumTolerance, "distill: teacher weights must sum to 1");
}

void check_variance(std::span<const double> variance, std::size_t n) {
  require(variance.size() == n, "distill: teacher_variance length does not match batch");
  for (double v : variance) require(std::isfinite(v) && v >= 0.0, "distill: teacher_variance must be nonnegative");
}

Vector equal_weights(std::size_t n) { return Vector(n, 1.0 / static_cast<double>(n)); }

// Per-row factors 1 / (1 + lambda v), rescaled to mean 1.
Vector variance_scale(std::span<const double> variance, double lambda) {
  Vector s(variance.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < variance.size(); ++i) {
    s[i] = 1.0 / (1.0 + lambda * variance[i]);
    sum += s[i];
  }
  const double mean = sum / static_cast<double>(s.size());
  for (double& v : s) v /= mean;
  return s;
}

// mean_i(alpha * scale_i * soft_i + (1 - alpha) * hard_i).
double mix_terms(double alpha, const VectorXd& soft, const MatrixXd& soft_grad, const VectorXd& hard,
                 const MatrixXd& hard_grad, const double* scale, MatrixXd* grad) {
  // Reduced the same way as the hard-label objectives, so alpha = 0 and
  // alpha = 1 reproduce them bit for bit.
  const auto b = soft.size();
  VectorXd loss(b);
  if (grad) grad->resize(soft_grad.rows(), soft_grad.cols());
  for (Eigen::Index i = 0; i < b; ++i) {
    const double a = scale ? alpha * scale[i] : alpha;
    loss(i) = a * soft(i) + (1.0 - alpha) * hard(i);
    if (grad) grad->row(i) = a * soft_grad.row(i) + (1.0 - alpha) * hard_grad.row(i);
  }
  const double n = static_cast<double>(b);
  if (grad) *grad /= n;
  return loss.sum() / n;
}

// Weighted sum of per-teacher KD terms.
void weighted_kd_terms(const MatrixXd& student, const std::vector<MatrixXd>& teachers, std::span<const double> weights,
                       double tau, VectorXd& loss, MatrixXd& grad) {
  VectorXd l;
  MatrixXd g;
  for (std::size_t t = 0; t < teachers.size(); ++t) {
    kd_terms(student, teachers[t], tau, l, &g);
    if (t == 0) {
      loss = weights[t] * l;
      grad = weights[t] * g;
    } else {
      loss += weights[t] * l;
      grad += weights[t] * g;
    }
  }
}

void weighted_squared_terms(const MatrixXd& student, const std::vector<MatrixXd>& teachers,
                            std::span<const double> weights, VectorXd& loss, MatrixXd& grad) {
  VectorXd l;
  MatrixXd g;
  Vector targets(static_cast<std::size_t>(student.rows()));
  for (std::size_t t = 0; t < teachers.size(); ++t) {
    for (Eigen::Index i = 0; i < student.rows(); ++i) targets[static_cast<std::size_t>(i)] = teachers[t](i, 0);
    squared_error_terms(student, targets, l, &g);
    if (t == 0) {
      loss = weights[t] * l;
      grad = weights[t] * g;
    } else {
      loss += weights[t] * l;
      grad += weights[t] * g;
    }
  }
}

double batch_mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Matrix gather(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

void check_student(const MlpSpec& student, const Dataset& data) {
  require(student.task == data.task, "distill: student task does not match data task");
  if (data.task == Task::kClassification) {
    require(student.output_dim == data.n_classes, "distill: student output_dim must equal class count");
  } else {
    require(student.output_dim == 1, "distill: regression student must have output_dim 1");
  }
}

void check_teacher(const TreeModel& teacher, const Dataset& data) {
  require(task_of(teacher) == data.task, "distill: teacher task does not match data task");
  require(n_features_of(teacher) == static_cast<int>(data.n_features()),
          "distill: teacher feature count does not match data");
  if (data.task == Task::kClassification) {
    require(n_classes_of(teacher) == data.n_classes, "distill: teacher class count does not match data");
  }
}

MlpModel train_student(std::vector<Matrix> teachers, Vector weights, Vector variance, const MlpSpec& student,
                       const Dataset& data, const DistillSpec& spec, const TrainSpec& train_spec) {
  DistillTargets targets;
  targets.task = data.task;
  targets.teachers = std::move(teachers);
  targets.weights = std::move(weights);
  targets.y = data.y;
  if (spec.lambda > 0.0) targets.variance = std::move(variance);
  DistillObjective objective(std::move(targets), spec);
  MlpModel model = build_mlp(student, static_cast<int>(data.n_features()), train_spec.seed);
  return train(std::move(model), data.x, objective, train_spec);
}

Vector resolve_weights(Vector weights, const DistillSpec& spec, std::size_t n_teachers) {
  if (weights.empty()) weights = spec.teacher_weights;
  if (weights.empty()) weights = equal_weights(n_teachers);
  check_teacher_weights(weights, n_teachers);
  return weights;
}

}  // namespace

std::string to_string(UncertaintyMode mode) {
  return mode == UncertaintyMode::kLiteral ? "literal" : "sample_weighted";
}

UncertaintyMode uncertainty_mode_from_string(const std::string& name) {
  if (name == "literal") return UncertaintyMode::kLiteral;
  if (name == "sample_weighted") return UncertaintyMode::kSampleWeighted;
  throw InvalidArgument("unknown uncertainty_mode '" + name + "'");
}

void DistillSpec::validate() const {
  check_alpha(alpha);
  check_tau(tau);
  require(beta >= 0.0 && beta <= 1.0, "distill: beta must be in [0, 1]");
  require(std::isfinite(lambda) && lambda >= 0.0, "distill: lambda must be nonnegative");
  require(aug_copies >= 0, "distill: aug_copies must be nonnegative");
  require(std::isfinite(aug_sigma) && aug_sigma >= 0.0, "distill: aug_sigma must be nonnegative");
  if (!teacher_weights.empty()) check_teacher_weights(teacher_weights, teacher_weights.size());
}

MatrixXd pseudo_logits(const MatrixXd& teacher_probs) {
  return (teacher_probs.array() + kPseudoLogitEpsilon).log().matrix();
}

void kd_terms(const MatrixXd& student_logits, const MatrixXd& teacher_probs, double tau, VectorXd& loss,
              MatrixXd* grad) {
  check_tau(tau);
  require(student_logits.rows() == teacher_probs.rows() && student_logits.cols() == teacher_probs.cols(),
          "kd_loss: student and teacher shapes differ");
  require(student_logits.rows() > 0, "kd_loss: empty batch");
  for (Eigen::Index i = 0; i < teacher_probs.rows(); ++i) {
    require(std::abs(teacher_probs.row(i).sum() - 1.0) <= kRowSumTolerance, "kd_loss: teacher rows must sum to 1");
  }
  const MatrixXd log_qt = log_softmax(pseudo_logits(teacher_probs), tau);
  const MatrixXd log_qs = log_softmax(student_logits, tau);
  const MatrixXd qt = log_qt.array().exp().matrix();
  loss = (tau * tau) * (qt.array() * (log_qt - log_qs).array()).rowwise().sum().matrix();
  if (grad) *grad = tau * (log_qs.array().exp().matrix() - qt);
}

double kd_loss(const MatrixXd& student_logits, const MatrixXd& teacher_probs, double tau, MatrixXd* grad) {
  VectorXd loss;
  kd_terms(student_logits, teacher_probs, tau, loss, grad);
  const double b = static_cast<double>(loss.size());
  if (grad) *grad /= b;
  return loss.sum() / b;
}

double combined_loss(const MatrixXd& student_logits, const MatrixXd& teacher_probs, std::span<const int> labels,
                     double alpha, double tau, MatrixXd* grad) {
  check_alpha(alpha);
  VectorXd soft, hard;
  MatrixXd soft_grad, hard_grad;
  kd_terms(student_logits, teacher_probs, tau, soft, &soft_grad);
  cross_entropy_terms(student_logits, labels, hard, &hard_grad);
  return mix_terms(alpha, soft, soft_grad, hard, hard_grad, nullptr, grad);
}

double combined_loss_regression(const MatrixXd& student, const MatrixXd& teacher, std::span<const double> targets,
                                double alpha, MatrixXd* grad) {
  check_alpha(alpha);
  require(student.cols() == 1 && teacher.cols() == 1 && student.rows() == teacher.rows(),
          "combined_loss_regression: outputs must be matching n x 1 matrices");
  VectorXd soft, hard;
  MatrixXd soft_grad, hard_grad;
  weighted_squared_terms(student, {teacher}, std::vector<double>{1.0}, soft, soft_grad);
  squared_error_terms(student, targets, hard, &hard_grad);
  return mix_terms(alpha, soft, soft_grad, hard, hard_grad, nullptr, grad);
}

double multi_teacher_loss(const MatrixXd& student_logits, const std::vector<MatrixXd>& teacher_probs,
                          std::span<const double> weights, std::span<const int> labels, double alpha, double tau,
                          MatrixXd* grad) {
  check_alpha(alpha);
  require(!teacher_probs.empty(), "multi_teacher_loss: no teachers");
  check_teacher_weights(weights, teacher_probs.size());
  VectorXd soft, hard;
  MatrixXd soft_grad, hard_grad;
  weighted_kd_terms(student_logits, teacher_probs, weights, tau, soft, soft_grad);
  cross_entropy_terms(student_logits, labels, hard, &hard_grad);
  return mix_terms(alpha, soft, soft_grad, hard, hard_grad, nullptr, grad);
}

double uncertainty_aware_loss(const MatrixXd& student_logits, const MatrixXd& teacher_probs,
                              std::span<const double> teacher_variance, std::span<const int> labels,
                              const DistillSpec& spec, MatrixXd* grad) {
  check_alpha(spec.alpha);
  require(std::isfinite(spec.lambda) && spec.lambda >= 0.0, "uncertainty_aware_loss: lambda must be nonnegative");
  check_variance(teacher_variance, static_cast<std::size_t>(student_logits.rows()));
  VectorXd soft, hard;
  MatrixXd soft_grad, hard_grad;
  kd_terms(student_logits, teacher_probs, spec.tau, soft, &soft_grad);
  cross_entropy_terms(student_logits, labels, hard, &hard_grad);
  if (spec.uncertainty_mode == UncertaintyMode::kSampleWeighted && spec.lambda > 0.0) {
    const Vector scale = variance_scale(teacher_variance, spec.lambda);
    return mix_terms(spec.alpha, soft, soft_grad, hard, hard_grad, scale.data(), grad);
  }
  const double base = mix_terms(spec.alpha, soft, soft_grad, hard, hard_grad, nullptr, grad);
  if (spec.lambda == 0.0) return base;
  return base + spec.lambda * batch_mean(teacher_variance);
}

DistillObjective::DistillObjective(DistillTargets targets, const DistillSpec& spec)
    : targets_(std::move(targets)), spec_(spec) {
  spec_.validate();
  const std::size_t n = targets_.y.size();
  require(n > 0, "distill: empty training set");
  require(!targets_.teachers.empty(), "distill: no teachers");
  if (targets_.weights.empty()) targets_.weights = equal_weights(targets_.teachers.size());
  check_teacher_weights(targets_.weights, targets_.teachers.size());
  const Eigen::Index width = targets_.teachers.front().cols();
  for (const Matrix& t : targets_.teachers) {
    require(static_cast<std::size_t>(t.rows()) == n && t.cols() == width, "distill: teacher output shape mismatch");
    if (targets_.task == Task::kRegression) require(t.cols() == 1, "distill: regression teachers must be n x 1");
  }
  if (!targets_.variance.empty()) check_variance(targets_.variance, n);
  scale_.assign(n, 1.0);
  if (!targets_.variance.empty() && spec_.uncertainty_mode == UncertaintyMode::kSampleWeighted && spec_.lambda > 0.0) {
    scale_ = variance_scale(targets_.variance, spec_.lambda);
  }
}

double DistillObjective::evaluate(std::span<const std::size_t> rows, const MatrixXd& outputs, MatrixXd* grad) const {
  const std::size_t b = rows.size();
  std::vector<MatrixXd> teachers;
  teachers.reserve(targets_.teachers.size());
  for (const Matrix& t : targets_.teachers) teachers.emplace_back(gather(t, rows));

  VectorXd soft, hard;
  MatrixXd soft_grad, hard_grad;
  if (targets_.task == Task::kClassification) {
    std::vector<int> labels(b);
    for (std::size_t r = 0; r < b; ++r) labels[r] = static_cast<int>(targets_.y[rows[r]]);
    weighted_kd_terms(outputs, teachers, targets_.weights, spec_.tau, soft, soft_grad);
    cross_entropy_terms(outputs, labels, hard, &hard_grad);
  } else {
    Vector y(b);
    for (std::size_t r = 0; r < b; ++r) y[r] = targets_.y[rows[r]];
    weighted_squared_terms(outputs, teachers, targets_.weights, soft, soft_grad);
    squared_error_terms(outputs, y, hard, &hard_grad);
  }

  const bool weighted = spec_.uncertainty_mode == UncertaintyMode::kSampleWeighted && spec_.lambda > 0.0 &&
                        !targets_.variance.empty();
  Vector scale;
  if (weighted) {
    scale.resize(b);
    for (std::size_t r = 0; r < b; ++r) scale[r] = scale_[rows[r]];
  }
  double loss = mix_terms(spec_.alpha, soft, soft_grad, hard, hard_grad, weighted ? scale.data() : nullptr, grad);
  if (!weighted && spec_.lambda > 0.0 && !targets_.variance.empty()) {
    double v = 0.0;
    for (std::size_t r : rows) v += targets_.variance[r];
    loss += spec_.lambda * v / static_cast<double>(b);
  }
  return loss;
}

MlpModel fit_hard_label_mlp(const MlpSpec& student, const Dataset& data, const TrainSpec& train_spec) {
  check_student(student, data);
  MlpModel model = build_mlp(student, static_cast<int>(data.n_features()), train_spec.seed);
  if (data.task == Task::kClassification) {
    CrossEntropyObjective objective(data.labels());
    return train(std::move(model), data.x, objective, train_spec);
  }
  SquaredErrorObjective objective(data.y);
  return train(std::move(model), data.x, objective, train_spec);
}

Matrix teacher_outputs(const MlpModel& model, const Matrix& x) { return predict_mlp(model, x).mean; }

MlpModel distill_rf_to_nn(const TreeModel& teacher, const MlpSpec& student, const Dataset& data,
                          const DistillSpec& spec, const TrainSpec& train_spec) {
  spec.validate();
  check_student(student, data);
  check_teacher(teacher, data);
  std::vector<Matrix> outputs{predict(teacher, data.x)};
  Vector variance;
  if (spec.lambda > 0.0) variance = ensemble_signals(member_predictions(teacher, data.x)).variance;
  return train_student(std::move(outputs), {1.0}, std::move(variance), student, data, spec, train_spec);
}

ForestModel distill_nn_to_rf(const MlpModel& teacher, const Dataset& data, const DistillSpec& spec,
                             const ForestParams& forest, ForestMode mode) {
  spec.validate();
  data.validate();
  require(teacher.spec.task == data.task, "distill_nn_to_rf: teacher task does not match data task");
  require(teacher.input_dim == static_cast<int>(data.n_features()),
          "distill_nn_to_rf: teacher input_dim does not match data");
  require(spec.aug_copies == 0 || spec.aug_sigma > 0.0,
          "distill_nn_to_rf: aug_copies > 0 requires aug_sigma > 0 (copies would duplicate rows)");

  const auto n = static_cast<Eigen::Index>(data.n_samples());
  const auto p = static_cast<Eigen::Index>(data.n_features());
  const Eigen::Index n_aug = n * (1 + spec.aug_copies);
  Matrix x_aug(n_aug, p);
  x_aug.topRows(n) = data.x;
  std::mt19937_64 rng(derive_seed(forest.seed, 0xA11CE));
  std::normal_distribution<double> jitter(0.0, spec.aug_sigma > 0.0 ? spec.aug_sigma : 1.0);
  for (Eigen::Index r = n; r < n_aug; ++r) {
    for (Eigen::Index j = 0; j < p; ++j) x_aug(r, j) = data.x(r % n, j) + jitter(rng);
  }
  const Matrix teacher_out = teacher_outputs(teacher, x_aug);

  Dataset out;
  out.name = data.name;
  out.task = data.task;
  out.feature_names = data.feature_names;
  out.n_classes = data.n_classes;

  if (data.task == Task::kRegression) {
    out.x = x_aug;
    out.y.resize(static_cast<std::size_t>(n_aug));
    for (Eigen::Index r = 0; r < n; ++r) {
      out.y[r] = spec.beta * teacher_out(r, 0) + (1.0 - spec.beta) * data.y[r];
    }
    for (Eigen::Index r = n; r < n_aug; ++r) out.y[r] = teacher_out(r, 0);
    return fit_forest(out, forest, mode);
  }

  // Rows in order: originals with true labels, then every X_aug row with its
  // teacher label. Blocks whose weight is zero are left out.
  std::vector<Eigen::Index> source;
  Vector labels, weights;
  if (spec.beta < 1.0) {
    for (Eigen::Index r = 0; r < n; ++r) {
      source.push_back(r);
      labels.push_back(data.y[r]);
      weights.push_back(1.0 - spec.beta);
    }
  }
  if (spec.beta > 0.0) {
    for (Eigen::Index r = 0; r < n_aug; ++r) {
      source.push_back(r);
      labels.push_back(static_cast<double>(argmax(teacher_out.row(r))));
      weights.push_back(spec.beta);
    }
  }
  out.x.resize(static_cast<Eigen::Index>(source.size()), p);
  for (std::size_t i = 0; i < source.size(); ++i) out.x.row(static_cast<Eigen::Index>(i)) = x_aug.row(source[i]);
  out.y = std::move(labels);
  const bool unit = std::all_of(weights.begin(), weights.end(), [](double w) { return w == 1.0; });
  if (unit) return fit_forest(out, forest, mode);
  return fit_forest(out, forest, mode, weights);
}

MlpModel multi_teacher_distill(const std::vector<const TreeModel*>& teachers, Vector weights, const MlpSpec& student,
                               const Dataset& data, const DistillSpec& spec, const TrainSpec& train_spec) {
  spec.validate();
  check_student(student, data);
  require(!teachers.empty(), "multi_teacher_distill: no teachers");
  for (const TreeModel* t : teachers) {
    require(t != nullptr, "multi_teacher_distill: null teacher");
    check_teacher(*t, data);
  }
  weights = resolve_weights(std::move(weights), spec, teachers.size());
  std::vector<Matrix> outputs;
  for (const TreeModel* t : teachers) outputs.push_back(predict(*t, data.x));
  Vector variance;
  if (spec.lambda > 0.0) variance = ensemble_signals(outputs).variance;
  return train_student(std::move(outputs), std::move(weights), std::move(variance), student, data, spec, train_spec);
}

std::vector<MlpSpec> default_progressive_stages(int output_dim, Task task) {
  return {preset_spec(Architecture::kDeep, output_dim, task), preset_spec(Architecture::kStandard, output_dim, task),
          preset_spec(Architecture::kCompact, output_dim, task)};
}

std::vector<MlpModel> progressive_distill(const std::vector<const TreeModel*>& teachers, const Dataset& data,
                                          const std::vector<MlpSpec>& stages, const DistillSpec& spec,
                                          const TrainSpec& train_spec) {
  spec.validate();
  require(stages.size() == 3, "progressive_distill: expected 3 stage architectures");
  require(!teachers.empty(), "progressive_distill: at least one tree teacher is required");
  for (const TreeModel* t : teachers) {
    require(t != nullptr, "progressive_distill: null teacher");
    check_teacher(*t, data);
  }
  for (const MlpSpec& s : stages) check_student(s, data);

  std::vector<Matrix> tree_outputs;
  for (const TreeModel* t : teachers) tree_outputs.push_back(predict(*t, data.x));
  const std::size_t n_trees = tree_outputs.size();

  std::vector<MlpModel> models;
  for (std::size_t k = 0; k < stages.size(); ++k) {
    std::vector<Matrix> outputs;
    Vector weights;
    if (k == 0) {
      outputs = tree_outputs;
      weights = resolve_weights({}, spec, n_trees);
    } else {
      outputs.push_back(teacher_outputs(models.back(), data.x));
      weights.push_back(0.5);
      for (const Matrix& t : tree_outputs) {
        outputs.push_back(t);
        weights.push_back(0.5 / static_cast<double>(n_trees));
      }
    }
    Vector variance;
    if (spec.lambda > 0.0) variance = ensemble_signals(outputs).variance;
    TrainSpec stage_train = train_spec;
    stage_train.seed = train_spec.seed + k;
    models.push_back(train_student(std::move(outputs), std::move(weights), std::move(variance), stages[k], data, spec,
                                   stage_train));
  }
  return models;
}

}  // namespace xdistill
