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

#include "xdistill/neural.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace xdistill {
namespace {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

struct LayerCache {
  MatrixXd input;
  MatrixXd xhat;
  RowVectorXd inv_std;
  MatrixXd pre_activation;
  MatrixXd mask;  // scaled keep mask; empty when dropout is inactive
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  std::vector<MatrixXd> activations;  // activations[0] is the input
  bool batch_statistics = false;
};

struct Gradients {
  std::vector<MatrixXd> weights;
  std::vector<RowVectorXd> biases;
  std::vector<RowVectorXd> gammas;
  std::vector<RowVectorXd> betas;
};

struct BatchMoments {
  RowVectorXd mean;
  RowVectorXd var;
};

MatrixXd gather_rows(const Matrix& x, std::span<const std::size_t> rows) {
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

int hidden_count(const MlpModel& m) { return static_cast<int>(m.spec.layer_widths.size()); }

bool uses_dropout(ForwardMode mode) { return mode == ForwardMode::kTrain || mode == ForwardMode::kMcDropout; }
bool uses_batch_stats(ForwardMode mode) {
  return mode == ForwardMode::kTrain || mode == ForwardMode::kTrainNoDropout;
}

MatrixXd run_forward(const MlpModel& m, const MatrixXd& x, ForwardMode mode, std::mt19937_64* rng,
                     ForwardCache* cache, std::vector<BatchMoments>* moments) {
  const int hidden = hidden_count(m);
  const bool batch_stats = uses_batch_stats(mode);
  std::vector<MatrixXd> activations;
  activations.reserve(static_cast<std::size_t>(hidden) + 1);
  activations.push_back(x);
  if (cache) {
    cache->layers.assign(static_cast<std::size_t>(hidden), LayerCache{});
    cache->batch_statistics = batch_stats;
  }
  if (moments) moments->assign(static_cast<std::size_t>(hidden), BatchMoments{});
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int l = 0; l < hidden; ++l) {
    const MatrixXd& input = activations.back();
    MatrixXd z = input * m.weights[l];
    z.rowwise() += m.biases[l];
    LayerCache* lc = cache ? &cache->layers[static_cast<std::size_t>(l)] : nullptr;
    if (lc) lc->input = input;

    if (m.spec.batchnorm[l]) {
      const BatchNormParams& bn = m.norms[static_cast<std::size_t>(l)];
      RowVectorXd mean, var;
      if (batch_stats) {
        mean = z.colwise().mean();
        var = (z.rowwise() - mean).array().square().colwise().mean();
        if (moments) (*moments)[static_cast<std::size_t>(l)] = {mean, var};
      } else {
        mean = bn.running_mean;
        var = bn.running_var;
      }
      const RowVectorXd inv_std = (var.array() + kBatchNormEpsilon).rsqrt().matrix();
      MatrixXd xhat = ((z.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
      z = ((xhat.array().rowwise() * bn.gamma.array()).rowwise() + bn.beta.array()).matrix();
      if (lc) {
        lc->xhat = std::move(xhat);
        lc->inv_std = inv_std;
      }
    }
    if (lc) lc->pre_activation = z;
    MatrixXd a = z.cwiseMax(0.0);

    const double rate = m.spec.dropout_rates[l];
    if (uses_dropout(mode) && rate > 0.0) {
      const double scale = 1.0 / (1.0 - rate);
      MatrixXd mask(a.rows(), a.cols());
      for (Eigen::Index j = 0; j < mask.cols(); ++j) {
        for (Eigen::Index i = 0; i < mask.rows(); ++i) mask(i, j) = unit(*rng) >= rate ? scale : 0.0;
      }
      a.array() *= mask.array();
      if (lc) lc->mask = std::move(mask);
    }
    for (const auto& [from, to] : m.spec.skip_blocks) {
      if (to == l + 1) a += activations[static_cast<std::size_t>(from)];
    }
    activations.push_back(std::move(a));
  }
  MatrixXd out = activations.back() * m.weights.back();
  out.rowwise() += m.biases.back();
  if (cache) cache->activations = std::move(activations);
  return out;
}

Gradients run_backward(const MlpModel& m, const ForwardCache& cache, const MatrixXd& d_out) {
  const int hidden = hidden_count(m);
  Gradients g;
  g.weights.resize(m.weights.size());
  g.biases.resize(m.biases.size());
  g.gammas.resize(static_cast<std::size_t>(hidden));
  g.betas.resize(static_cast<std::size_t>(hidden));

  std::vector<MatrixXd> d_act(static_cast<std::size_t>(hidden) + 1);
  g.weights.back().noalias() = cache.activations.back().transpose() * d_out;
  g.biases.back() = d_out.colwise().sum();
  d_act.back().noalias() = d_out * m.weights.back().transpose();

  for (int l = hidden - 1; l >= 0; --l) {
    const auto out_index = static_cast<std::size_t>(l) + 1;
    MatrixXd& d_a = d_act[out_index];
    for (const auto& [from, to] : m.spec.skip_blocks) {
      if (to == l + 1) {
        auto& target = d_act[static_cast<std::size_t>(from)];
        if (target.size() == 0) {
          target = d_a;
        } else {
          target += d_a;
        }
      }
    }
    const LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];
    MatrixXd d_u = d_a;
    if (lc.mask.size() != 0) d_u.array() *= lc.mask.array();
    d_u = (lc.pre_activation.array() > 0.0).select(d_u, 0.0);

    MatrixXd d_z;
    if (m.spec.batchnorm[l]) {
      const BatchNormParams& bn = m.norms[static_cast<std::size_t>(l)];
      g.gammas[l] = (d_u.array() * lc.xhat.array()).colwise().sum().matrix();
      g.betas[l] = d_u.colwise().sum();
      const MatrixXd d_xhat = (d_u.array().rowwise() * bn.gamma.array()).matrix();
      if (cache.batch_statistics) {
        const double b = static_cast<double>(d_u.rows());
        const RowVectorXd sum_dx = d_xhat.colwise().sum();
        const RowVectorXd sum_dx_xhat = (d_xhat.array() * lc.xhat.array()).colwise().sum().matrix();
        MatrixXd t = (d_xhat * b).rowwise() - sum_dx;
        t.array() -= (lc.xhat.array().rowwise() * sum_dx_xhat.array());
        d_z = ((t.array().rowwise() * lc.inv_std.array()) / b).matrix();
      } else {
        d_z = (d_xhat.array().rowwise() * lc.inv_std.array()).matrix();
      }
    } else {
      d_z = std::move(d_u);
    }
    g.weights[l].noalias() = lc.input.transpose() * d_z;
    g.biases[l] = d_z.colwise().sum();
    MatrixXd d_in = d_z * m.weights[l].transpose();
    auto& target = d_act[static_cast<std::size_t>(l)];
    if (target.size() == 0) {
      target = std::move(d_in);
    } else {
      target += d_in;
    }
  }
  return g;
}

struct Block {
  double* data;
  Eigen::Index size;
};

std::vector<Block> parameter_blocks(MlpModel& m) {
  std::vector<Block> blocks;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    blocks.push_back({m.weights[l].data(), m.weights[l].size()});
    blocks.push_back({m.biases[l].data(), m.biases[l].size()});
    if (l < m.spec.batchnorm.size() && m.spec.batchnorm[l]) {
      blocks.push_back({m.norms[l].gamma.data(), m.norms[l].gamma.size()});
      blocks.push_back({m.norms[l].beta.data(), m.norms[l].beta.size()});
    }
  }
  return blocks;
}

std::vector<Block> gradient_blocks(const MlpModel& m, Gradients& g) {
  std::vector<Block> blocks;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    blocks.push_back({g.weights[l].data(), g.weights[l].size()});
    blocks.push_back({g.biases[l].data(), g.biases[l].size()});
    if (l < m.spec.batchnorm.size() && m.spec.batchnorm[l]) {
      blocks.push_back({g.gammas[l].data(), g.gammas[l].size()});
      blocks.push_back({g.betas[l].data(), g.betas[l].size()});
    }
  }
  return blocks;
}

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

double objective_loss(const MlpModel& m, const MatrixXd& x, const Objective& objective,
                      std::span<const std::size_t> rows) {
  const MatrixXd out = run_forward(m, x, ForwardMode::kTrainNoDropout, nullptr, nullptr, nullptr);
  return objective.evaluate(rows, out, nullptr);
}

}  // namespace

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::kStandard:
      return "standard";
    case Architecture::kDeep:
      return "deep";
    case Architecture::kWide:
      return "wide";
    case Architecture::kCompact:
      return "compact";
    case Architecture::kResidual:
      return "residual";
  }
  return "standard";
}

Architecture architecture_from_string(const std::string& name) {
  for (auto arch : {Architecture::kStandard, Architecture::kDeep, Architecture::kWide, Architecture::kCompact,
                    Architecture::kResidual}) {
    if (to_string(arch) == name) return arch;
  }
  throw InvalidArgument("unknown architecture '" + name + "'");
}

bool MlpSpec::has_dropout() const {
  return std::any_of(dropout_rates.begin(), dropout_rates.end(), [](double r) { return r > 0.0; });
}

void MlpSpec::validate(int input_dim) const {
  require(input_dim > 0, "mlp: input_dim must be positive");
  require(output_dim > 0, "mlp: output_dim must be positive");
  require(dropout_rates.size() == layer_widths.size(), "mlp: dropout_rates length != layer count");
  require(batchnorm.size() == layer_widths.size(), "mlp: batchnorm length != layer count");
  for (int w : layer_widths) require(w > 0, "mlp: layer widths must be positive");
  for (double r : dropout_rates) require(r >= 0.0 && r < 1.0, "mlp: dropout rates must be in [0, 1)");
  auto width = [&](int activation) { return activation == 0 ? input_dim : layer_widths[activation - 1]; };
  const int hidden = static_cast<int>(layer_widths.size());
  for (const auto& [from, to] : skip_blocks) {
    require(from >= 0 && from < to && to <= hidden, "mlp: skip block indices out of range");
    require(width(from) == width(to), "mlp: skip block connects unequal widths " + std::to_string(width(from)) +
                                          " and " + std::to_string(width(to)));
  }
}

MlpSpec preset_spec(Architecture arch, int output_dim, Task task) {
  MlpSpec s;
  s.output_dim = output_dim;
  s.task = task;
  auto fill = [&](std::vector<int> widths, double dropout, bool bn) {
    s.layer_widths = std::move(widths);
    s.dropout_rates.assign(s.layer_widths.size(), dropout);
    s.batchnorm.assign(s.layer_widths.size(), bn);
  };
  switch (arch) {
    case Architecture::kStandard:
      fill({128, 64, 32}, 0.3, false);
      break;
    case Architecture::kDeep:
      fill({256, 128, 64, 32}, 0.0, true);
      break;
    case Architecture::kWide:
      fill({512, 256, 64}, 0.4, false);
      break;
    case Architecture::kCompact:
      fill({64, 32}, 0.2, false);
      break;
    case Architecture::kResidual:
      fill({128, 128, 64}, 0.0, false);
      s.skip_blocks = {{1, 2}};
      break;
  }
  return s;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t count = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    count += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  }
  for (std::size_t l = 0; l < norms.size(); ++l) {
    if (spec.batchnorm[l]) count += static_cast<std::size_t>(norms[l].gamma.size() + norms[l].beta.size());
  }
  return count;
}

MlpModel build_mlp(const MlpSpec& spec, int input_dim, std::uint64_t seed) {
  spec.validate(input_dim);
  MlpModel m;
  m.spec = spec;
  m.input_dim = input_dim;
  std::mt19937_64 rng(seed);
  int fan_in = input_dim;
  std::vector<int> widths = spec.layer_widths;
  widths.push_back(spec.output_dim);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    // He-uniform.
    const double limit = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> draw(-limit, limit);
    MatrixXd w(fan_in, widths[l]);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = draw(rng);
    }
    m.weights.push_back(std::move(w));
    m.biases.push_back(RowVectorXd::Zero(widths[l]));
    fan_in = widths[l];
  }
  m.norms.resize(spec.layer_widths.size());
  for (std::size_t l = 0; l < spec.layer_widths.size(); ++l) {
    if (!spec.batchnorm[l]) continue;
    const int w = spec.layer_widths[l];
    m.norms[l] = {RowVectorXd::Ones(w), RowVectorXd::Zero(w), RowVectorXd::Zero(w), RowVectorXd::Ones(w)};
  }
  return m;
}

MlpModel build_mlp(Architecture arch, int input_dim, int output_dim, Task task, std::uint64_t seed) {
  return build_mlp(preset_spec(arch, output_dim, task), input_dim, seed);
}

MatrixXd log_softmax(const MatrixXd& logits, double temperature) {
  MatrixXd z = logits / temperature;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    const double lse = m + std::log((z.row(i).array() - m).exp().sum());
    z.row(i).array() -= lse;
  }
  return z;
}

MatrixXd softmax(const MatrixXd& logits, double temperature) {
  MatrixXd p = logits / temperature;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

void cross_entropy_terms(const MatrixXd& logits, std::span<const int> labels, VectorXd& loss, MatrixXd* grad) {
  require(static_cast<std::size_t>(logits.rows()) == labels.size(), "cross_entropy: label count != rows");
  const MatrixXd logp = log_softmax(logits);
  loss.resize(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    require(y >= 0 && y < logits.cols(), "cross_entropy: label out of range");
    loss[i] = -logp(i, y);
  }
  if (grad) {
    *grad = logp.array().exp().matrix();
    for (Eigen::Index i = 0; i < logits.rows(); ++i) (*grad)(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  }
}

void squared_error_terms(const MatrixXd& outputs, std::span<const double> targets, VectorXd& loss,
                         MatrixXd* grad) {
  require(static_cast<std::size_t>(outputs.rows()) == targets.size(), "squared_error: target count != rows");
  require(outputs.cols() == 1, "squared_error: expects a single output column");
  loss.resize(outputs.rows());
  if (grad) grad->resize(outputs.rows(), 1);
  for (Eigen::Index i = 0; i < outputs.rows(); ++i) {
    const double r = outputs(i, 0) - targets[static_cast<std::size_t>(i)];
    loss[i] = r * r;
    if (grad) (*grad)(i, 0) = 2.0 * r;
  }
}

double CrossEntropyObjective::evaluate(std::span<const std::size_t> rows, const MatrixXd& outputs,
                                       MatrixXd* grad) const {
  std::vector<int> labels(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) labels[r] = labels_[rows[r]];
  VectorXd loss;
  cross_entropy_terms(outputs, labels, loss, grad);
  const double b = static_cast<double>(rows.size());
  if (grad) *grad /= b;
  return loss.sum() / b;
}

double SquaredErrorObjective::evaluate(std::span<const std::size_t> rows, const MatrixXd& outputs,
                                       MatrixXd* grad) const {
  Vector targets(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) targets[r] = targets_[rows[r]];
  VectorXd loss;
  squared_error_terms(outputs, targets, loss, grad);
  const double b = static_cast<double>(rows.size());
  if (grad) *grad /= b;
  return loss.sum() / b;
}

void TrainSpec::validate() const {
  require(learning_rate > 0.0, "train: learning_rate must be positive");
  require(batch_size > 0, "train: batch_size must be positive");
  require(max_epochs > 0, "train: max_epochs must be positive");
  require(early_stop_patience > 0, "train: early_stop_patience must be positive");
  require(val_fraction >= 0.0 && val_fraction < 1.0, "train: val_fraction must be in [0, 1)");
}

MlpModel train(MlpModel model, const Matrix& x, const Objective& objective, const TrainSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::size_t>(x.rows());
  require(n > 0, "train: empty data");
  require(x.cols() == model.input_dim, "train: feature count != model input_dim");
  require(objective.size() == n, "train: objective size != row count");

  std::mt19937_64 order_rng(derive_seed(spec.seed, 0));
  std::mt19937_64 dropout_rng(derive_seed(spec.seed, 1));
  std::vector<std::size_t> rows = iota_rows(n);
  std::shuffle(rows.begin(), rows.end(), order_rng);
  std::size_t n_val = 0;
  if (spec.val_fraction > 0.0 && n >= 2) {
    n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(spec.val_fraction * n)), 1, n - 1);
  }
  std::vector<std::size_t> val_rows(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_rows(rows.begin() + static_cast<std::ptrdiff_t>(n_val), rows.end());
  std::sort(val_rows.begin(), val_rows.end());
  const MatrixXd x_val = gather_rows(x, val_rows);

  const bool any_batchnorm = std::any_of(model.spec.batchnorm.begin(), model.spec.batchnorm.end(),
                                          [](bool b) { return b; });
  auto blocks = parameter_blocks(model);
  std::vector<VectorXd> adam_m, adam_v;
  for (const auto& b : blocks) {
    adam_m.push_back(VectorXd::Zero(b.size));
    adam_v.push_back(VectorXd::Zero(b.size));
  }
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kAdamEps = 1e-8;
  long step = 0;

  MlpModel best = model;
  double best_loss = std::numeric_limits<double>::infinity();
  TrainHistory history;
  const auto batch = static_cast<std::size_t>(spec.batch_size);

  for (int epoch = 0; epoch < spec.max_epochs; ++epoch) {
    std::shuffle(train_rows.begin(), train_rows.end(), order_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0, stop = 0; start < train_rows.size(); start = stop) {
      stop = std::min(start + batch, train_rows.size());
      // A trailing batch of one row has no batch variance; fold it in.
      if (any_batchnorm && train_rows.size() - stop == 1) stop = train_rows.size();
      const std::span<const std::size_t> batch_rows(train_rows.data() + start, stop - start);
      const MatrixXd xb = gather_rows(x, batch_rows);

      ForwardCache cache;
      std::vector<BatchMoments> moments;
      const MatrixXd out = run_forward(model, xb, ForwardMode::kTrain, &dropout_rng, &cache, &moments);
      MatrixXd d_out;
      const double loss = objective.evaluate(batch_rows, out, &d_out);
      if (!std::isfinite(loss) || !d_out.allFinite()) {
        std::ostringstream msg;
        msg << "train: non-finite loss at epoch " << epoch << " (batch starting at " << start << ")";
        throw TrainingError(msg.str());
      }
      epoch_loss += loss * static_cast<double>(batch_rows.size());
      Gradients g = run_backward(model, cache, d_out);

      ++step;
      const double corr1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double corr2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      const auto grads = gradient_blocks(model, g);
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        Eigen::Map<VectorXd> param(blocks[b].data, blocks[b].size);
        Eigen::Map<const VectorXd> grad(grads[b].data, grads[b].size);
        adam_m[b] = kBeta1 * adam_m[b] + (1.0 - kBeta1) * grad;
        adam_v[b] = kBeta2 * adam_v[b] + (1.0 - kBeta2) * grad.cwiseAbs2();
        param.array() -= spec.learning_rate * (adam_m[b].array() / corr1) /
                         ((adam_v[b].array() / corr2).sqrt() + kAdamEps);
      }
      for (std::size_t l = 0; l < moments.size(); ++l) {
        if (!model.spec.batchnorm[l]) continue;
        auto& bn = model.norms[l];
        bn.running_mean = kBatchNormMomentum * bn.running_mean + (1.0 - kBatchNormMomentum) * moments[l].mean;
        bn.running_var = kBatchNormMomentum * bn.running_var + (1.0 - kBatchNormMomentum) * moments[l].var;
      }
    }
    epoch_loss /= static_cast<double>(train_rows.size());
    history.train_loss.push_back(epoch_loss);

    double monitored = epoch_loss;
    if (n_val > 0) {
      const MatrixXd val_out = run_forward(model, x_val, ForwardMode::kEval, nullptr, nullptr, nullptr);
      monitored = objective.evaluate(val_rows, val_out, nullptr);
      if (!std::isfinite(monitored)) throw TrainingError("train: non-finite validation loss at epoch " +
                                                         std::to_string(epoch));
      history.val_loss.push_back(monitored);
    }
    if (monitored < best_loss) {
      best_loss = monitored;
      best = model;
      history.best_epoch = epoch;
    } else if (epoch - history.best_epoch >= spec.early_stop_patience) {
      break;
    }
  }
  best.history = std::move(history);
  return best;
}

Matrix forward(const MlpModel& model, const Matrix& x, ForwardMode mode, std::uint64_t seed) {
  require(x.cols() == model.input_dim, "forward: feature count != model input_dim");
  require(mode != ForwardMode::kTrain, "forward: training mode is internal to train()");
  std::mt19937_64 rng(seed);
  const MatrixXd xin = x;
  return run_forward(model, xin, mode, &rng, nullptr, nullptr);
}

MlpPrediction predict_mlp(const MlpModel& model, const Matrix& x, const PredictMode& mode) {
  require(x.cols() == model.input_dim, "predict_mlp: feature count != model input_dim");
  const bool classification = model.spec.task == Task::kClassification;
  const MatrixXd xin = x;
  auto to_output = [&](const MatrixXd& raw) { return classification ? softmax(raw) : raw; };

  MlpPrediction out;
  if (!mode.mc_dropout) {
    out.mean = to_output(run_forward(model, xin, ForwardMode::kEval, nullptr, nullptr, nullptr));
    out.variance.assign(static_cast<std::size_t>(x.rows()), 0.0);
    return out;
  }
  require(mode.passes >= 1, "predict_mlp: passes must be >= 1");
  std::mt19937_64 rng(mode.seed);
  MatrixXd mean = MatrixXd::Zero(x.rows(), model.spec.output_dim);
  MatrixXd m2 = MatrixXd::Zero(x.rows(), model.spec.output_dim);
  for (int pass = 0; pass < mode.passes; ++pass) {
    const MatrixXd y = to_output(run_forward(model, xin, ForwardMode::kMcDropout, &rng, nullptr, nullptr));
    const MatrixXd delta = y - mean;
    mean += delta / static_cast<double>(pass + 1);
    m2.array() += delta.array() * (y - mean).array();
  }
  out.mean = mean;
  out.variance.resize(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out.variance[static_cast<std::size_t>(i)] = std::max(0.0, m2.row(i).mean() / mode.passes);
  }
  return out;
}

Vector parameter_gradient(const MlpModel& model, const Objective& objective, const Matrix& x) {
  require(x.cols() == model.input_dim, "gradient: feature count != model input_dim");
  const MatrixXd xin = x;
  const auto rows = iota_rows(static_cast<std::size_t>(x.rows()));
  ForwardCache cache;
  const MatrixXd out = run_forward(model, xin, ForwardMode::kTrainNoDropout, nullptr, &cache, nullptr);
  MatrixXd d_out;
  objective.evaluate(rows, out, &d_out);
  Gradients g = run_backward(model, cache, d_out);
  Vector flat;
  for (const auto& b : gradient_blocks(model, g)) flat.insert(flat.end(), b.data, b.data + b.size);
  return flat;
}

double gradient_check(const MlpModel& model, const Objective& objective, const Matrix& x, double epsilon) {
  require(epsilon > 0.0, "gradient_check: epsilon must be positive");
  const Vector analytic = parameter_gradient(model, objective, x);
  const MatrixXd xin = x;
  const auto rows = iota_rows(static_cast<std::size_t>(x.rows()));
  MlpModel probe = model;
  double worst = 0.0;
  std::size_t index = 0;
  for (const auto& block : parameter_blocks(probe)) {
    for (Eigen::Index i = 0; i < block.size; ++i, ++index) {
      double& theta = block.data[i];
      const double saved = theta;
      theta = saved + epsilon;
      const double up = objective_loss(probe, xin, objective, rows);
      theta = saved - epsilon;
      const double down = objective_loss(probe, xin, objective, rows);
      theta = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[index];
      worst = std::max(worst, std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6));
    }
  }
  return worst;
}

}  // namespace xdistill
