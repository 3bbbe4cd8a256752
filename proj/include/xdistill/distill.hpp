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

#ifndef XDISTILL_DISTILL_HPP_
#define XDISTILL_DISTILL_HPP_

#include <string>
#include <vector>

#include "xdistill/common.hpp"
#include "xdistill/data.hpp"
#include "xdistill/neural.hpp"
#include "xdistill/trees.hpp"

namespace xdistill {

enum class UncertaintyMode { kLiteral, kSampleWeighted };

std::string to_string(UncertaintyMode mode);
UncertaintyMode uncertainty_mode_from_string(const std::string& name);

struct DistillSpec {
  double alpha = 0.7;    // weight of the soft-target term against hard labels
  double tau = 3.0;      // softmax temperature
  double beta = 0.5;     // teacher-label share when a forest learns from a network
  Vector teacher_weights;  // empty = equal weights
  double lambda = 0.1;   // weight of the teacher-variance term
  int aug_copies = 1;
  double aug_sigma = 0.05;
  UncertaintyMode uncertainty_mode = UncertaintyMode::kLiteral;

  void validate() const;
};

// Added to teacher probabilities before taking logs, so that tree ensembles
// (which emit probabilities, often exactly 0) get finite pseudo-logits.
inline constexpr double kPseudoLogitEpsilon = 1e-7;

Eigen::MatrixXd pseudo_logits(const Eigen::MatrixXd& teacher_probs);

// Per-sample tau^2 * KL(softmax(teacher/tau) || softmax(student/tau)) using
// teacher pseudo-logits, with its gradient w.r.t. the student logits.
void kd_terms(const Eigen::MatrixXd& student_logits, const Eigen::MatrixXd& teacher_probs, double tau,
              Eigen::VectorXd& loss, Eigen::MatrixXd* grad);

// Batch means. `grad`, when given, receives d(loss)/d(student outputs).
double kd_loss(const Eigen::MatrixXd& student_logits, const Eigen::MatrixXd& teacher_probs, double tau,
               Eigen::MatrixXd* grad = nullptr);

double combined_loss(const Eigen::MatrixXd& student_logits, const Eigen::MatrixXd& teacher_probs,
                     std::span<const int> labels, double alpha, double tau, Eigen::MatrixXd* grad = nullptr);

// alpha * MSE(student, teacher) + (1 - alpha) * MSE(student, y).
double combined_loss_regression(const Eigen::MatrixXd& student, const Eigen::MatrixXd& teacher,
                                std::span<const double> targets, double alpha, Eigen::MatrixXd* grad = nullptr);

double multi_teacher_loss(const Eigen::MatrixXd& student_logits, const std::vector<Eigen::MatrixXd>& teacher_probs,
                          std::span<const double> weights, std::span<const int> labels, double alpha, double tau,
                          Eigen::MatrixXd* grad = nullptr);

// Literal mode adds lambda * mean(variance) to the combined loss. Sample-
// weighted mode scales each row's soft-target term by 1 / (1 + lambda var),
// renormalized to mean weight 1 over the batch.
double uncertainty_aware_loss(const Eigen::MatrixXd& student_logits, const Eigen::MatrixXd& teacher_probs,
                              std::span<const double> teacher_variance, std::span<const int> labels,
                              const DistillSpec& spec, Eigen::MatrixXd* grad = nullptr);

// Soft-target training objective over a fixed training set. Teachers are
// n x K probability matrices (classification) or n x 1 value matrices.
struct DistillTargets {
  Task task = Task::kClassification;
  std::vector<Matrix> teachers;
  Vector weights;
  Vector y;
  Vector variance;  // per-row teacher spread; empty disables the uncertainty term
};

class DistillObjective : public Objective {
 public:
  DistillObjective(DistillTargets targets, const DistillSpec& spec);

  std::size_t size() const override { return targets_.y.size(); }
  double evaluate(std::span<const std::size_t> rows, const Eigen::MatrixXd& outputs,
                  Eigen::MatrixXd* grad) const override;

  // Per-row soft-term scale (all 1 unless sample_weighted with lambda > 0).
  const Vector& sample_scale() const { return scale_; }

 private:
  DistillTargets targets_;
  DistillSpec spec_;
  Vector scale_;
};

// Builds the student with `train.seed` and trains it on hard labels.
MlpModel fit_hard_label_mlp(const MlpSpec& student, const Dataset& data, const TrainSpec& train);

MlpModel distill_rf_to_nn(const TreeModel& teacher, const MlpSpec& student, const Dataset& data,
                          const DistillSpec& spec, const TrainSpec& train);

// Forest trained on network labels for the original rows plus aug_copies
// jittered copies. Each original row appears with its true label (weight
// 1 - beta) and its teacher label (weight beta); zero-weight rows are omitted.
ForestModel distill_nn_to_rf(const MlpModel& teacher, const Dataset& data, const DistillSpec& spec,
                             const ForestParams& forest, ForestMode mode = ForestMode::kBagging);

// `weights` empty falls back to spec.teacher_weights, then to equal weights.
MlpModel multi_teacher_distill(const std::vector<const TreeModel*>& teachers, Vector weights,
                               const MlpSpec& student, const Dataset& data, const DistillSpec& spec,
                               const TrainSpec& train);

// Three students trained in sequence; stage k > 1 learns from the previous
// student (weight 0.5) and the tree teachers (0.5 shared equally).
std::vector<MlpModel> progressive_distill(const std::vector<const TreeModel*>& teachers, const Dataset& data,
                                          const std::vector<MlpSpec>& stages, const DistillSpec& spec,
                                          const TrainSpec& train);

std::vector<MlpSpec> default_progressive_stages(int output_dim, Task task);

// Teacher outputs in distillation form: probabilities or n x 1 values.
Matrix teacher_outputs(const MlpModel& model, const Matrix& x);

}  // namespace xdistill

#endif  // XDISTILL_DISTILL_HPP_
