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

#include "xdistill/serialization.hpp"

#include <fstream>
#include <string>

namespace xdistill {
namespace {

Json node_to_json(const Tree& t, int index) {
  const Tree::Node& node = t.nodes[static_cast<std::size_t>(index)];
  if (node.feature < 0) {
    const auto begin = t.values.begin() + node.value;
    return Json{{"value", Vector(begin, begin + t.value_dim)}};
  }
  return Json{{"feature", node.feature},
              {"threshold", node.threshold},
              {"left", node_to_json(t, node.left)},
              {"right", node_to_json(t, node.right)}};
}

int node_from_json(const Json& j, Tree& t) {
  const int index = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  if (j.contains("value")) {
    const Vector v = j.at("value").get<Vector>();
    require(static_cast<int>(v.size()) == t.value_dim, "tree json: leaf value has wrong length");
    t.nodes[index].value = static_cast<int>(t.values.size());
    t.values.insert(t.values.end(), v.begin(), v.end());
    return index;
  }
  const int feature = j.at("feature").get<int>();
  require(feature >= 0, "tree json: negative feature index");
  const double threshold = j.at("threshold").get<double>();
  const int left = node_from_json(j.at("left"), t);
  const int right = node_from_json(j.at("right"), t);
  Tree::Node& node = t.nodes[index];
  node.feature = feature;
  node.threshold = threshold;
  node.left = left;
  node.right = right;
  return index;
}

Json tree_to_json(const Tree& t) { return Json{{"value_dim", t.value_dim}, {"root", node_to_json(t, 0)}}; }

Tree tree_from_json(const Json& j) {
  Tree t;
  t.value_dim = j.at("value_dim").get<int>();
  require(t.value_dim >= 1, "tree json: value_dim must be positive");
  node_from_json(j.at("root"), t);
  return t;
}

void check_header(const Json& j, const std::string& kind) {
  require(j.is_object(), "model json: expected an object");
  require(j.value("schema_version", -1) == kSchemaVersion, "model json: unsupported schema_version");
  require(j.value("kind", std::string()) == kind, "model json: expected kind '" + kind + "'");
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Vector flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  }
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const Vector flat = j.at("data").get<Vector>();
  require(rows >= 0 && cols >= 0 && static_cast<Eigen::Index>(flat.size()) == rows * cols,
          "model json: matrix data length does not match shape");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

Json row_to_json(const Eigen::RowVectorXd& v) { return Vector(v.begin(), v.end()); }

Eigen::RowVectorXd row_from_json(const Json& j) {
  const Vector v = j.get<Vector>();
  return Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

template <typename T>
void read_if(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& context) {
  require(j.is_object(), context + ": expected a JSON object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* key : allowed) ok = ok || item.key() == key;
    require(ok, context + ": unknown field '" + item.key() + "'");
  }
}

Json model_to_json(const ForestModel& m) {
  Json trees = Json::array();
  for (const Tree& t : m.trees) trees.push_back(tree_to_json(t));
  return Json{{"schema_version", kSchemaVersion},
              {"kind", "forest"},
              {"mode", to_string(m.mode)},
              {"task", to_string(m.task)},
              {"n_classes", m.n_classes},
              {"n_features", m.n_features},
              {"seed", m.seed},
              {"feature_importances", m.feature_importances},
              {"trees", trees}};
}

Json model_to_json(const GbmModel& m) {
  Json stages = Json::array();
  for (const auto& stage : m.stages) {
    Json s = Json::array();
    for (const Tree& t : stage) s.push_back(tree_to_json(t));
    stages.push_back(s);
  }
  return Json{{"schema_version", kSchemaVersion},
              {"kind", "gbm"},
              {"variant", to_string(m.variant)},
              {"task", to_string(m.task)},
              {"n_classes", m.n_classes},
              {"n_features", m.n_features},
              {"learning_rate", m.learning_rate},
              {"base_score", m.base_score},
              {"feature_importances", m.feature_importances},
              {"train_loss", m.train_loss},
              {"stages", stages}};
}

Json model_to_json(const TreeModel& m) {
  return std::visit([](const auto& model) { return model_to_json(model); }, m);
}

TreeModel tree_model_from_json(const Json& j) {
  const std::string kind = j.value("kind", std::string());
  if (kind == "forest") {
    check_header(j, "forest");
    ForestModel m;
    m.mode = forest_mode_from_string(j.at("mode").get<std::string>());
    m.task = task_from_string(j.at("task").get<std::string>());
    m.n_classes = j.at("n_classes").get<int>();
    m.n_features = j.at("n_features").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.feature_importances = j.at("feature_importances").get<Vector>();
    for (const Json& t : j.at("trees")) m.trees.push_back(tree_from_json(t));
    return m;
  }
  check_header(j, "gbm");
  GbmModel m;
  m.variant = gbm_variant_from_string(j.at("variant").get<std::string>());
  m.task = task_from_string(j.at("task").get<std::string>());
  m.n_classes = j.at("n_classes").get<int>();
  m.n_features = j.at("n_features").get<int>();
  m.learning_rate = j.at("learning_rate").get<double>();
  m.base_score = j.at("base_score").get<Vector>();
  m.feature_importances = j.at("feature_importances").get<Vector>();
  m.train_loss = j.at("train_loss").get<Vector>();
  for (const Json& s : j.at("stages")) {
    std::vector<Tree> stage;
    for (const Json& t : s) stage.push_back(tree_from_json(t));
    m.stages.push_back(std::move(stage));
  }
  return m;
}

Json model_to_json(const MlpModel& m) {
  Json skips = Json::array();
  for (const auto& [from, to] : m.spec.skip_blocks) skips.push_back({from, to});
  Json spec{{"layer_widths", m.spec.layer_widths},
            {"dropout_rates", m.spec.dropout_rates},
            {"batchnorm", m.spec.batchnorm},
            {"skip_blocks", skips},
            {"output_dim", m.spec.output_dim},
            {"task", to_string(m.spec.task)}};
  Json layers = Json::array();
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    layers.push_back({{"weights", matrix_to_json(m.weights[l])}, {"bias", row_to_json(m.biases[l])}});
  }
  Json norms = Json::array();
  for (const BatchNormParams& bn : m.norms) {
    norms.push_back({{"gamma", row_to_json(bn.gamma)},
                     {"beta", row_to_json(bn.beta)},
                     {"running_mean", row_to_json(bn.running_mean)},
                     {"running_var", row_to_json(bn.running_var)}});
  }
  return Json{{"schema_version", kSchemaVersion},
              {"kind", "mlp"},
              {"spec", spec},
              {"input_dim", m.input_dim},
              {"layers", layers},
              {"norms", norms},
              {"history",
               {{"train_loss", m.history.train_loss},
                {"val_loss", m.history.val_loss},
                {"best_epoch", m.history.best_epoch}}}};
}

MlpModel mlp_from_json(const Json& j) {
  check_header(j, "mlp");
  MlpModel m;
  const Json& spec = j.at("spec");
  m.spec.layer_widths = spec.at("layer_widths").get<std::vector<int>>();
  m.spec.dropout_rates = spec.at("dropout_rates").get<std::vector<double>>();
  m.spec.batchnorm = spec.at("batchnorm").get<std::vector<bool>>();
  for (const Json& s : spec.at("skip_blocks")) m.spec.skip_blocks.emplace_back(s.at(0).get<int>(), s.at(1).get<int>());
  m.spec.output_dim = spec.at("output_dim").get<int>();
  m.spec.task = task_from_string(spec.at("task").get<std::string>());
  m.input_dim = j.at("input_dim").get<int>();
  m.spec.validate(m.input_dim);
  for (const Json& layer : j.at("layers")) {
    m.weights.push_back(matrix_from_json(layer.at("weights")));
    m.biases.push_back(row_from_json(layer.at("bias")));
  }
  for (const Json& bn : j.at("norms")) {
    m.norms.push_back({row_from_json(bn.at("gamma")), row_from_json(bn.at("beta")),
                       row_from_json(bn.at("running_mean")), row_from_json(bn.at("running_var"))});
  }
  require(m.weights.size() == m.spec.layer_widths.size() + 1, "mlp json: layer count does not match spec");
  int in = m.input_dim;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    const int out = l < m.spec.layer_widths.size() ? m.spec.layer_widths[l] : m.spec.output_dim;
    require(m.weights[l].rows() == in && m.weights[l].cols() == out && m.biases[l].size() == out,
            "mlp json: weight shapes do not match spec");
    in = out;
  }
  if (const auto h = j.find("history"); h != j.end()) {
    m.history.train_loss = h->at("train_loss").get<Vector>();
    m.history.val_loss = h->at("val_loss").get<Vector>();
    m.history.best_epoch = h->at("best_epoch").get<int>();
  }
  return m;
}

void to_json(Json& j, const DistillSpec& s) {
  j = Json{{"alpha", s.alpha},
           {"tau", s.tau},
           {"beta", s.beta},
           {"teacher_weights", s.teacher_weights},
           {"lambda", s.lambda},
           {"aug_copies", s.aug_copies},
           {"aug_sigma", s.aug_sigma},
           {"uncertainty_mode", to_string(s.uncertainty_mode)}};
}

void from_json(const Json& j, DistillSpec& s) {
  check_keys(j, {"alpha", "tau", "beta", "teacher_weights", "lambda", "aug_copies", "aug_sigma", "uncertainty_mode"},
             "DistillSpec");
  read_if(j, "alpha", s.alpha);
  read_if(j, "tau", s.tau);
  read_if(j, "beta", s.beta);
  read_if(j, "teacher_weights", s.teacher_weights);
  read_if(j, "lambda", s.lambda);
  read_if(j, "aug_copies", s.aug_copies);
  read_if(j, "aug_sigma", s.aug_sigma);
  if (j.contains("uncertainty_mode")) {
    s.uncertainty_mode = uncertainty_mode_from_string(j.at("uncertainty_mode").get<std::string>());
  }
  s.validate();
}

void to_json(Json& j, const TrainSpec& s) {
  j = Json{{"learning_rate", s.learning_rate},
           {"batch_size", s.batch_size},
           {"max_epochs", s.max_epochs},
           {"early_stop_patience", s.early_stop_patience},
           {"val_fraction", s.val_fraction},
           {"seed", s.seed}};
}

void from_json(const Json& j, TrainSpec& s) {
  check_keys(j, {"learning_rate", "batch_size", "max_epochs", "early_stop_patience", "val_fraction", "seed"},
             "TrainSpec");
  read_if(j, "learning_rate", s.learning_rate);
  read_if(j, "batch_size", s.batch_size);
  read_if(j, "max_epochs", s.max_epochs);
  read_if(j, "early_stop_patience", s.early_stop_patience);
  read_if(j, "val_fraction", s.val_fraction);
  read_if(j, "seed", s.seed);
  s.validate();
}

void to_json(Json& j, const SplitSpec& s) {
  j = Json{{"test_fraction", s.test_fraction}, {"seed", s.seed}, {"stratified", s.stratified}};
}

void from_json(const Json& j, SplitSpec& s) {
  check_keys(j, {"test_fraction", "seed", "stratified"}, "SplitSpec");
  read_if(j, "test_fraction", s.test_fraction);
  read_if(j, "seed", s.seed);
  read_if(j, "stratified", s.stratified);
}

void to_json(Json& j, const ForestParams& p) {
  j = Json{{"n_estimators", p.n_estimators}, {"max_depth", p.max_depth}, {"mtry", p.mtry},
           {"min_leaf", p.min_leaf},         {"seed", p.seed},           {"n_threads", p.n_threads},
           {"bootstrap", p.bootstrap}};
}

void from_json(const Json& j, ForestParams& p) {
  check_keys(j, {"n_estimators", "max_depth", "mtry", "min_leaf", "seed", "n_threads", "bootstrap"}, "ForestParams");
  read_if(j, "n_estimators", p.n_estimators);
  read_if(j, "max_depth", p.max_depth);
  read_if(j, "mtry", p.mtry);
  read_if(j, "min_leaf", p.min_leaf);
  read_if(j, "seed", p.seed);
  read_if(j, "n_threads", p.n_threads);
  read_if(j, "bootstrap", p.bootstrap);
}

void to_json(Json& j, const GbmParams& p) {
  j = Json{{"n_estimators", p.n_estimators}, {"max_depth", p.max_depth},   {"mtry", p.mtry},
           {"min_leaf", p.min_leaf},         {"learning_rate", p.learning_rate}, {"n_bins", p.n_bins},
           {"l2_leaf", p.l2_leaf},           {"seed", p.seed}};
}

void from_json(const Json& j, GbmParams& p) {
  check_keys(j, {"n_estimators", "max_depth", "mtry", "min_leaf", "learning_rate", "n_bins", "l2_leaf", "seed"},
             "GbmParams");
  read_if(j, "n_estimators", p.n_estimators);
  read_if(j, "max_depth", p.max_depth);
  read_if(j, "mtry", p.mtry);
  read_if(j, "min_leaf", p.min_leaf);
  read_if(j, "learning_rate", p.learning_rate);
  read_if(j, "n_bins", p.n_bins);
  read_if(j, "l2_leaf", p.l2_leaf);
  read_if(j, "seed", p.seed);
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace xdistill
