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

#ifndef XDISTILL_NEURAL_HPP_
#define XDISTILL_NEURAL_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xdistill/common.hpp"

namespace xdistill {

enum class Architecture { kStandard, kDeep, kWide, kCompact, kResidual };

std::string to_string(Architecture arch);
Architecture architecture_from_string(const std::string& name);

// Hidden layers are Dense -> [BatchNorm] -> ReLU -> [Dropout]. A skip block
// (i, j) adds activation i to activation j, where activation 0 is the input
// and activation k is the output of hidden layer k. The output layer is
// linear: logits for classification, values for regression.
struct MlpSpec {
  std::vector<int> layer_widths;
  std::vector<double> dropout_rates;
  std::vector<bool> batchnorm;
  std::vector<std::pair<int, int>> skip_blocks;
  int output_dim = 1;
  Task task = Task::kClassification;

  bool has_dropout() const;
  void validate(int input_dim) const;
};

MlpSpec preset_spec(Architecture arch, int output_dim, Task task);

struct BatchNormParams {
  Eigen::RowVectorXd gamma;
  Eigen::RowVectorXd beta;
  Eigen::RowVectorXd running_mean;
  Eigen::RowVectorXd running_var;
};

struct TrainHistory {
  Vector train_loss;
  Vector val_loss;
  int best_epoch = -1;
};

struct MlpModel {
  MlpSpec spec;
  int input_dim = 0;
  // weights[l] is (in x out); the last entry is the output layer.
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::RowVectorXd> biases;
  std::vector<BatchNormParams> norms;  // one per hidden layer; empty when unused
  TrainHistory history;

  std::size_t parameter_count() const;
};

inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kBatchNormEpsilon = 1e-5;

MlpModel build_mlp(const MlpSpec& spec, int input_dim, std::uint64_t seed);
MlpModel build_mlp(Architecture arch, int input_dim, int output_dim, Task task, std::uint64_t seed);

// Training objective over a fixed set of rows. `evaluate` returns the mean
// loss over `rows` given the network outputs for those rows (one output row
// per entry of `rows`), and writes d(loss)/d(outputs) into `grad` if set.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t size() const = 0;
  virtual double evaluate(std::span<const std::size_t> rows, const Eigen::MatrixXd& outputs,
                          Eigen::MatrixXd* grad) const = 0;
};

// Per-sample loss terms (not averaged) and their gradients w.r.t. outputs.
// Shared by the hard-label objectives and the distillation losses so that
// endpoint cases reproduce the plain losses bit for bit.
void cross_entropy_terms(const Eigen::MatrixXd& logits, std::span<const int> labels, Eigen::VectorXd& loss,
                         Eigen::MatrixXd* grad);
void squared_error_terms(const Eigen::MatrixXd& outputs, std::span<const double> targets, Eigen::VectorXd& loss,
                         Eigen::MatrixXd* grad);

// Row-wise softmax of logits / temperature.
Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits, double temperature = 1.0);
Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits, double temperature = 1.0);

class CrossEntropyObjective : public Objective {
 public:
  explicit CrossEntropyObjective(std::vector<int> labels) : labels_(std::move(labels)) {}
  std::size_t size() const override { return labels_.size(); }
  double evaluate(std::span<const std::size_t> rows, const Eigen::MatrixXd& outputs,
                  Eigen::MatrixXd* grad) const override;

 private:
  std::vector<int> labels_;
};

class SquaredErrorObjective : public Objective {
 public:
  explicit SquaredErrorObjective(Vector targets) : targets_(std::move(targets)) {}
  std::size_t size() const override { return targets_.size(); }
  double evaluate(std::span<const std::size_t> rows, const Eigen::MatrixXd& outputs,
                  Eigen::MatrixXd* grad) const override;

 private:
  Vector targets_;
};

struct TrainSpec {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int max_epochs = 200;
  int early_stop_patience = 20;
  double val_fraction = 0.15;
  std::uint64_t seed = 0;

  void validate() const;
};

// Minibatch Adam. Holds out `val_fraction` of the rows for early stopping
// and returns the parameters with the lowest validation loss (training loss
// when val_fraction is 0). Throws TrainingError on a non-finite loss.
MlpModel train(MlpModel model, const Matrix& x, const Objective& objective, const TrainSpec& spec);

enum class ForwardMode {
  kEval,            // dropout off, batchnorm running statistics
  kTrain,           // dropout on, batch statistics, running stats updated
  kTrainNoDropout,  // batch statistics, dropout off; used for gradient checks
  kMcDropout,       // dropout on, batchnorm running statistics
};

// Raw network outputs (logits or values), n x output_dim.
Matrix forward(const MlpModel& model, const Matrix& x, ForwardMode mode = ForwardMode::kEval,
               std::uint64_t seed = 0);

struct MlpPrediction {
  Matrix mean;      // probabilities (classification) or values, n x output_dim
  Vector variance;  // per sample; class-averaged for classification
};

struct PredictMode {
  bool mc_dropout = false;
  int passes = 30;
  std::uint64_t seed = 0;

  static PredictMode eval() { return {}; }
  static PredictMode mc(int passes, std::uint64_t seed = 0) { return {true, passes, seed}; }
};

MlpPrediction predict_mlp(const MlpModel& model, const Matrix& x, const PredictMode& mode = PredictMode::eval());

// Largest relative error |a - f| / max(|a| + |f|, 1e-6) between analytic
// and central-difference gradients over every trainable parameter. The floor
// keeps parameters with zero gradient (a bias feeding batch norm, say) from
// turning finite-difference round-off into a large ratio. Runs the
// network with batch statistics and dropout disabled. Objective rows are
// 0..x.rows()-1.
double gradient_check(const MlpModel& model, const Objective& objective, const Matrix& x, double epsilon = 1e-5);

// Analytic gradient of the objective w.r.t. every trainable parameter, in
// the same order gradient_check perturbs them.
Vector parameter_gradient(const MlpModel& model, const Objective& objective, const Matrix& x);

}  // namespace xdistill

#endif  // XDISTILL_NEURAL_HPP_
