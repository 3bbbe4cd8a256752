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

#include "xdistill/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "xdistill/distill.hpp"
#include "xdistill/trees.hpp"
#include "xdistill/uncertainty.hpp"

namespace xdistill {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

const std::vector<std::string> kKinds = {"tree",          "nn",          "rf_to_nn",
                                         "nn_to_rf",      "multi_teacher", "progressive",
                                         "uncertainty_rf_to_nn", "uncertainty_multi_teacher"};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string format_number(double v, const char* fmt = "%.10g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

std::string fixed4(double v) { return format_number(v, "%.4f"); }

// ---- CSV helpers ----

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_line(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += csv_field(fields[i]);
  }
  return line + "\n";
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw IoError("csv: unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::optional<double> parse_optional(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw IoError("csv: bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw IoError("csv: bad number '" + s + "'");
  }
}

double parse_number(const std::string& s) {
  const auto v = parse_optional(s);
  return v ? *v : 0.0;
}

std::uint64_t parse_seed(const std::string& s) {
  try {
    return std::stoull(s);
  } catch (const std::logic_error&) {
    throw IoError("csv: bad seed '" + s + "'");
  }
}

// Column lookup by header name.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  static CsvTable parse(const std::string& text, const std::vector<std::string>& required) {
    auto all = parse_csv(text);
    if (all.empty()) throw IoError("csv: missing header");
    CsvTable t;
    t.header = std::move(all.front());
    t.rows.assign(std::make_move_iterator(all.begin() + 1), std::make_move_iterator(all.end()));
    for (const auto& name : required) {
      if (std::find(t.header.begin(), t.header.end(), name) == t.header.end()) {
        throw IoError("csv: missing column '" + name + "'");
      }
    }
    for (const auto& r : t.rows) {
      if (r.size() != t.header.size()) throw IoError("csv: row has wrong number of fields");
    }
    return t;
  }

  const std::string& get(const std::vector<std::string>& row, const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    return row[static_cast<std::size_t>(it - header.begin())];
  }
};

// ---- statistics ----

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

// Population standard deviation.
MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  m.n = v.size();
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(ss / static_cast<double>(v.size()));
  return m;
}

std::string mean_pm(const MeanStd& m) { return m.n ? fixed4(m.mean) + " ± " + fixed4(m.std) : "-"; }

// ---- config parsing ----

std::vector<Task> parse_tasks(const Json& j) {
  std::vector<Task> out;
  for (const Json& t : j) out.push_back(task_from_string(t.get<std::string>()));
  return out;
}

DatasetSource dataset_from_json(const Json& j) {
  check_keys(j, {"name", "path", "task", "label_column", "generator", "seed"}, "dataset");
  DatasetSource d;
  d.name = j.value("name", std::string());
  d.path = j.value("path", std::string());
  d.generator = j.value("generator", std::string());
  d.label_column = j.value("label_column", std::string("target"));
  d.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("task")) d.task = task_from_string(j.at("task").get<std::string>());
  require(d.path.empty() != d.generator.empty(), "dataset: give exactly one of 'path' or 'generator'");
  if (!d.generator.empty()) {
    require(d.generator == "imbalanced" || d.generator == "nonlinear",
            "dataset: unknown generator '" + d.generator + "'");
    d.task = d.generator == "imbalanced" ? Task::kClassification : Task::kRegression;
  } else {
    require(j.contains("task"), "dataset: CSV datasets need a 'task'");
  }
  if (d.name.empty()) d.name = d.generator.empty() ? fs::path(d.path).stem().string() : d.generator;
  return d;
}

Json dataset_to_json(const DatasetSource& d) {
  Json j{{"name", d.name}};
  if (d.generator.empty()) {
    j["path"] = d.path;
    j["task"] = to_string(d.task);
    j["label_column"] = d.label_column;
  } else {
    j["generator"] = d.generator;
    j["seed"] = d.seed;
  }
  return j;
}

Dataset load_source(const DatasetSource& src, const fs::path& base_dir) {
  Dataset d;
  if (src.generator == "imbalanced") {
    d = generate_imbalanced(src.seed);
  } else if (src.generator == "nonlinear") {
    d = generate_nonlinear_regression(src.seed);
  } else {
    fs::path p(src.path);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    d = load_csv(p, src.task, src.label_column);
  }
  d.name = src.name;
  return d;
}

// Keeps about max_rows rows, preserving class proportions.
Dataset subsample(const Dataset& d, std::size_t max_rows, std::uint64_t seed) {
  if (max_rows == 0 || d.n_samples() <= max_rows) return d;
  std::mt19937_64 rng(derive_seed(seed, 0x5B5A));
  std::vector<std::size_t> keep;
  if (d.task == Task::kClassification) {
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(d.n_classes));
    for (std::size_t i = 0; i < d.n_samples(); ++i) by_class[static_cast<std::size_t>(d.y[i])].push_back(i);
    const double frac = static_cast<double>(max_rows) / static_cast<double>(d.n_samples());
    for (auto& rows : by_class) {
      std::shuffle(rows.begin(), rows.end(), rng);
      const auto take = std::min<std::size_t>(
          rows.size(), std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(frac * rows.size()))));
      keep.insert(keep.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take));
    }
  } else {
    keep.resize(d.n_samples());
    std::iota(keep.begin(), keep.end(), 0);
    std::shuffle(keep.begin(), keep.end(), rng);
    keep.resize(max_rows);
  }
  std::sort(keep.begin(), keep.end());
  return select_rows(d, keep);
}

// ---- per-cell execution ----

struct FittedTree {
  TreeModel model;
  double seconds = 0.0;
};

struct FittedNet {
  MlpModel model;
  double seconds = 0.0;
};

class CellContext {
 public:
  CellContext(const ExperimentConfig& cfg, const SplitResult& split, std::uint64_t seed)
      : cfg_(cfg), split_(split), seed_(seed) {}

  const Dataset& train() const { return split_.train; }
  const Dataset& test() const { return split_.test; }
  std::uint64_t seed() const { return seed_; }
  const ExperimentConfig& cfg() const { return cfg_; }

  // A tree descriptor is an object {model, variant, forest, gbm} or the id
  // of a tree method in the config.
  Json resolve_tree(const Json& desc) const {
    if (!desc.is_string()) return desc;
    const std::string id = desc.get<std::string>();
    for (const MethodSpec& m : cfg_.methods) {
      if (m.id == id && m.kind == "tree") return m.params;
    }
    throw InvalidArgument("teacher '" + id + "' does not name a tree method");
  }

  const FittedTree& tree(const Json& desc_in) {
    const Json desc = resolve_tree(desc_in);
    const std::string key = desc.dump();
    if (auto it = trees_.find(key); it != trees_.end()) return it->second;
    check_keys(desc, {"model", "variant", "forest", "gbm", "mode"}, "tree method");
    const std::string model = desc.value("model", std::string("random_forest"));
    const auto start = Clock::now();
    FittedTree f;
    if (model == "random_forest" || model == "extra_trees") {
      ForestParams p = desc.value("forest", Json::object()).get<ForestParams>();
      p.seed += seed_;
      if (cfg_.n_threads) p.n_threads = cfg_.n_threads;
      if (cfg_.budget.max_estimators) p.n_estimators = std::min(p.n_estimators, cfg_.budget.max_estimators);
      f.model = fit_forest(train(), p, model == "extra_trees" ? ForestMode::kExtra : ForestMode::kBagging);
    } else if (model == "gbm") {
      GbmParams p = desc.value("gbm", Json::object()).get<GbmParams>();
      p.seed += seed_;
      if (cfg_.budget.max_estimators) p.n_estimators = std::min(p.n_estimators, cfg_.budget.max_estimators);
      f.model = fit_gbm(train(), p, gbm_variant_from_string(desc.value("variant", std::string("newton"))));
    } else {
      throw InvalidArgument("unknown tree model '" + model + "'");
    }
    f.seconds = seconds_since(start);
    return trees_.emplace(key, std::move(f)).first->second;
  }

  TrainSpec train_spec(const Json& overrides) const {
    Json merged = cfg_.train;
    if (overrides.is_object()) {
      for (const auto& item : overrides.items()) merged[item.key()] = item.value();
    }
    TrainSpec t = merged.get<TrainSpec>();
    t.seed += seed_;
    if (cfg_.budget.max_epochs) {
      t.max_epochs = std::min(t.max_epochs, cfg_.budget.max_epochs);
      t.early_stop_patience = std::min(t.early_stop_patience, t.max_epochs);
    }
    return t;
  }

  MlpSpec student_spec(const std::string& arch) const {
    const int out = train().task == Task::kClassification ? train().n_classes : 1;
    return preset_spec(architecture_from_string(arch), out, train().task);
  }

  const FittedNet& net(const std::string& arch, const Json& train_overrides) {
    const std::string key = arch + "|" + train_overrides.dump();
    if (auto it = nets_.find(key); it != nets_.end()) return it->second;
    const auto start = Clock::now();
    FittedNet f{fit_hard_label_mlp(student_spec(arch), train(), train_spec(train_overrides)), 0.0};
    f.seconds = seconds_since(start);
    return nets_.emplace(key, std::move(f)).first->second;
  }

  std::vector<const TreeModel*> tree_list(const Json& descs) {
    std::vector<const TreeModel*> out;
    for (const Json& d : descs) out.push_back(&tree(d).model);
    return out;
  }

  MetricReport score(const Matrix& pred) const {
    const Dataset& t = test();
    if (t.task == Task::kClassification) return classification_metrics(pred, t.labels());
    Vector p(static_cast<std::size_t>(pred.rows()));
    for (Eigen::Index i = 0; i < pred.rows(); ++i) p[static_cast<std::size_t>(i)] = pred(i, 0);
    return regression_metrics(p, t.y);
  }

  MetricReport evaluate(const TreeModel& model) const {
    MetricReport r = score(predict(model, test().x));
    r.mean_uncertainty = mean_uncertainty(epistemic_uncertainty(model, test().x));
    r.inference_seconds = time_inference([&] { (void)predict(model, test().x); }, cfg_.timing_repeats);
    return r;
  }

  // Networks with dropout report MC-dropout uncertainty, and their timing
  // covers the MC call that produces it.
  MetricReport evaluate(const MlpModel& model) const {
    MetricReport r = score(predict_mlp(model, test().x).mean);
    if (model.spec.has_dropout()) {
      const PredictMode mode = PredictMode::mc(cfg_.mc_passes, derive_seed(seed_, 0x3C));
      r.mean_uncertainty = mean_uncertainty(predict_mlp(model, test().x, mode).variance);
      r.inference_seconds = time_inference([&] { (void)predict_mlp(model, test().x, mode); }, cfg_.timing_repeats);
    } else {
      r.inference_seconds = time_inference([&] { (void)predict_mlp(model, test().x); }, cfg_.timing_repeats);
    }
    return r;
  }

 private:
  const ExperimentConfig& cfg_;
  const SplitResult& split_;
  std::uint64_t seed_;
  std::map<std::string, FittedTree> trees_;
  std::map<std::string, FittedNet> nets_;
};

DistillSpec distill_params(const Json& params) {
  return params.value("distill", Json::object()).get<DistillSpec>();
}

std::string param_string(const Json& params, const char* key, const std::string& fallback) {
  return params.value(key, fallback);
}

Json default_teachers() { return Json::array({"RF", "XGB", "LGB"}); }

struct CellOutput {
  MetricReport metrics;
  double train_seconds = 0.0;
  std::vector<ImportanceRecord> importances;
  std::vector<StageRecord> stages;
};

CellOutput run_cell(const MethodSpec& m, CellContext& ctx) {
  const Json& prm = m.params;
  CellOutput out;
  const Json train_overrides = prm.value("train", Json::object());
  if (m.kind == "tree") {
    const FittedTree& f = ctx.tree(prm);
    out.metrics = ctx.evaluate(f.model);
    out.train_seconds = f.seconds;
    const Vector& imp = feature_importance(f.model);
    for (std::size_t j = 0; j < imp.size(); ++j) {
      out.importances.push_back({m.id, ctx.train().name, ctx.seed(), ctx.train().feature_names[j], imp[j]});
    }
  } else if (m.kind == "nn") {
    const FittedNet& f = ctx.net(param_string(prm, "arch", "standard"), train_overrides);
    out.metrics = ctx.evaluate(f.model);
    out.train_seconds = f.seconds;
  } else if (m.kind == "rf_to_nn" || m.kind == "uncertainty_rf_to_nn") {
    const TreeModel& teacher = ctx.tree(prm.value("teacher", Json("RF"))).model;
    const auto start = Clock::now();
    const MlpModel s = distill_rf_to_nn(teacher, ctx.student_spec(param_string(prm, "student", "standard")),
                                        ctx.train(), distill_params(prm), ctx.train_spec(train_overrides));
    out.train_seconds = seconds_since(start);
    out.metrics = ctx.evaluate(s);
  } else if (m.kind == "nn_to_rf") {
    const MlpModel& teacher = ctx.net(param_string(prm, "teacher", "standard"), train_overrides).model;
    ForestParams fp = prm.value("forest", Json::object()).get<ForestParams>();
    fp.seed += ctx.seed();
    if (ctx.cfg().n_threads) fp.n_threads = ctx.cfg().n_threads;
    if (ctx.cfg().budget.max_estimators) fp.n_estimators = std::min(fp.n_estimators, ctx.cfg().budget.max_estimators);
    const auto start = Clock::now();
    const ForestModel f = distill_nn_to_rf(teacher, ctx.train(), distill_params(prm), fp,
                                           forest_mode_from_string(param_string(prm, "mode", "bagging")));
    out.train_seconds = seconds_since(start);
    out.metrics = ctx.evaluate(TreeModel(f));
  } else if (m.kind == "multi_teacher" || m.kind == "uncertainty_multi_teacher") {
    const auto teachers = ctx.tree_list(prm.value("teachers", default_teachers()));
    const Vector weights = prm.value("weights", Vector{});
    const auto start = Clock::now();
    const MlpModel s = multi_teacher_distill(teachers, weights, ctx.student_spec(param_string(prm, "student", "standard")),
                                             ctx.train(), distill_params(prm), ctx.train_spec(train_overrides));
    out.train_seconds = seconds_since(start);
    out.metrics = ctx.evaluate(s);
  } else if (m.kind == "progressive") {
    const auto teachers = ctx.tree_list(prm.value("teachers", default_teachers()));
    const auto archs = prm.value("stages", std::vector<std::string>{"deep", "standard", "compact"});
    std::vector<MlpSpec> stages;
    for (const auto& a : archs) stages.push_back(ctx.student_spec(a));
    const auto start = Clock::now();
    const auto models = progressive_distill(teachers, ctx.train(), stages, distill_params(prm),
                                            ctx.train_spec(train_overrides));
    out.train_seconds = seconds_since(start);
    for (std::size_t k = 0; k < models.size(); ++k) {
      StageRecord r{m.id, ctx.train().name, ctx.seed(), static_cast<int>(k + 1), archs[k],
                    models[k].parameter_count(), ctx.evaluate(models[k])};
      out.stages.push_back(r);
    }
    out.metrics = out.stages.back().metrics;
  } else {
    throw InvalidArgument("unknown method kind '" + m.kind + "'");
  }
  return out;
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

// ---- report helpers ----

std::string md_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::string out = "|";
  for (const auto& h : header) out += " " + h + " |";
  out += "\n|";
  for (std::size_t i = 0; i < header.size(); ++i) out += "---|";
  out += "\n";
  for (const auto& r : rows) {
    out += "|";
    for (const auto& c : r) out += " " + c + " |";
    out += "\n";
  }
  return out;
}

std::string csv_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::string out = csv_line(header);
  for (const auto& r : rows) out += csv_line(r);
  return out;
}

std::string opt4(const std::optional<double>& v) { return v ? fixed4(*v) : "-"; }

}  // namespace

// ---- config ----

void ExperimentConfig::validate() const {
  require(!datasets.empty(), "config: datasets must be nonempty");
  require(!methods.empty(), "config: methods must be nonempty");
  require(!seeds.empty(), "config: seeds must be nonempty");
  require(mc_passes >= 2, "config: mc_passes must be >= 2");
  require(timing_repeats >= 3, "config: timing_repeats must be >= 3");
  require(split.test_fraction > 0.0 && split.test_fraction < 1.0, "config: split.test_fraction must be in (0, 1)");
  std::set<std::string> ids, names;
  for (const MethodSpec& m : methods) {
    require(!m.id.empty(), "config: method id must be nonempty");
    require(ids.insert(m.id).second, "config: duplicate method id '" + m.id + "'");
    require(std::find(kKinds.begin(), kKinds.end(), m.kind) != kKinds.end(),
            "config: unknown method kind '" + m.kind + "'");
    require(m.params.is_object(), "config: method params must be an object");
  }
  for (const DatasetSource& d : datasets) require(names.insert(d.name).second, "config: duplicate dataset '" + d.name + "'");
  train.validate();
}

ExperimentConfig config_from_json(const Json& j, const fs::path& base_dir) {
  try {
    check_keys(j, {"datasets", "methods", "split", "seeds", "output_dir", "train", "mc_passes", "timing_repeats",
                   "n_threads", "budget"},
               "config");
    ExperimentConfig cfg;
    cfg.base_dir = base_dir;
    for (const Json& d : j.at("datasets")) cfg.datasets.push_back(dataset_from_json(d));
    for (const Json& m : j.at("methods")) {
      check_keys(m, {"id", "kind", "params", "tasks"}, "method");
      MethodSpec spec;
      spec.id = m.at("id").get<std::string>();
      spec.kind = m.at("kind").get<std::string>();
      spec.params = m.value("params", Json::object());
      if (m.contains("tasks")) spec.tasks = parse_tasks(m.at("tasks"));
      cfg.methods.push_back(std::move(spec));
    }
    if (j.contains("split")) cfg.split = j.at("split").get<SplitSpec>();
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    if (j.contains("train")) cfg.train = j.at("train").get<TrainSpec>();
    cfg.mc_passes = j.value("mc_passes", cfg.mc_passes);
    cfg.timing_repeats = j.value("timing_repeats", cfg.timing_repeats);
    cfg.n_threads = j.value("n_threads", cfg.n_threads);
    if (j.contains("budget")) {
      const Json& b = j.at("budget");
      check_keys(b, {"max_epochs", "max_estimators", "max_rows"}, "budget");
      cfg.budget.max_epochs = b.value("max_epochs", 0);
      cfg.budget.max_estimators = b.value("max_estimators", 0);
      cfg.budget.max_rows = b.value("max_rows", std::size_t{0});
    }
    cfg.validate();
    return cfg;
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
}

Json config_to_json(const ExperimentConfig& cfg) {
  Json datasets = Json::array();
  for (const auto& d : cfg.datasets) datasets.push_back(dataset_to_json(d));
  Json methods = Json::array();
  for (const auto& m : cfg.methods) {
    Json jm{{"id", m.id}, {"kind", m.kind}, {"params", m.params}};
    if (!m.tasks.empty()) {
      Json tasks = Json::array();
      for (Task t : m.tasks) tasks.push_back(to_string(t));
      jm["tasks"] = tasks;
    }
    methods.push_back(jm);
  }
  Json j{{"datasets", datasets},
         {"methods", methods},
         {"split", cfg.split},
         {"seeds", cfg.seeds},
         {"output_dir", cfg.output_dir},
         {"train", cfg.train},
         {"mc_passes", cfg.mc_passes},
         {"timing_repeats", cfg.timing_repeats},
         {"n_threads", cfg.n_threads}};
  if (cfg.budget.max_epochs || cfg.budget.max_estimators || cfg.budget.max_rows) {
    j["budget"] = {{"max_epochs", cfg.budget.max_epochs},
                   {"max_estimators", cfg.budget.max_estimators},
                   {"max_rows", cfg.budget.max_rows}};
  }
  return j;
}

ExperimentConfig load_config(const fs::path& path) {
  return config_from_json(read_json(path), path.parent_path());
}

std::string category_of_kind(const std::string& kind) {
  if (kind == "tree") return "Tree";
  if (kind == "nn") return "Neural";
  if (kind == "rf_to_nn" || kind == "nn_to_rf") return "Cross-Paradigm";
  if (kind == "multi_teacher" || kind == "progressive" || kind == "uncertainty_rf_to_nn" ||
      kind == "uncertainty_multi_teacher") {
    return "Advanced";
  }
  throw InvalidArgument("unknown method kind '" + kind + "'");
}

ExperimentConfig default_config(const fs::path& data_dir) {
  ExperimentConfig cfg;
  cfg.base_dir = data_dir;
  cfg.datasets = {
      {"breast_cancer", "breast_cancer.csv", Task::kClassification, "target", "", 0},
      {"wine", "wine.csv", Task::kClassification, "target", "", 0},
      {"digits", "digits.csv", Task::kClassification, "target", "", 0},
      {"california_housing", "california_housing.csv", Task::kRegression, "MedHouseVal", "", 0},
      {"imbalanced", "", Task::kClassification, "target", "imbalanced", 42},
      {"nonlinear", "", Task::kRegression, "target", "nonlinear", 42},
  };
  const Json forest{{"n_estimators", 200}, {"max_depth", 0}};
  const Json gbm{{"n_estimators", 100}, {"max_depth", 6}, {"learning_rate", 0.1}};
  Json lgb = gbm;
  lgb["min_leaf"] = 20;
  cfg.methods = {
      {"RF", "tree", {{"model", "random_forest"}, {"forest", forest}}, {}},
      {"EXTRA_TREES", "tree", {{"model", "extra_trees"}, {"forest", forest}}, {}},
      {"GB", "tree", {{"model", "gbm"}, {"variant", "first_order"}, {"gbm", gbm}}, {}},
      {"XGB", "tree", {{"model", "gbm"}, {"variant", "newton"}, {"gbm", gbm}}, {}},
      {"LGB", "tree", {{"model", "gbm"}, {"variant", "histogram"}, {"gbm", lgb}}, {}},
  };
  const std::vector<std::string> archs = {"standard", "deep", "wide", "compact", "residual"};
  auto upper = [](std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
  };
  const Json plain_kd{{"alpha", 0.7}, {"tau", 3.0}, {"lambda", 0.0}};
  for (const auto& a : archs) cfg.methods.push_back({"NN_" + upper(a), "nn", {{"arch", a}}, {}});
  for (const auto& a : archs) {
    cfg.methods.push_back(
        {"RF_to_NN_" + upper(a), "rf_to_nn", {{"teacher", "RF"}, {"student", a}, {"distill", plain_kd}}, {}});
  }
  for (const auto& a : archs) {
    cfg.methods.push_back({"NN_" + upper(a) + "_to_RF",
                           "nn_to_rf",
                           {{"teacher", a},
                            {"forest", forest},
                            {"distill", {{"beta", 0.5}, {"aug_copies", 1}, {"aug_sigma", 0.05}}}},
                           {}});
  }
  const Json teachers = default_teachers();
  const Json ua_kd{{"alpha", 0.7}, {"tau", 3.0}, {"lambda", 0.1}, {"uncertainty_mode", "sample_weighted"}};
  cfg.methods.push_back(
      {"Multi_Teacher", "multi_teacher", {{"teachers", teachers}, {"student", "standard"}, {"distill", plain_kd}}, {}});
  cfg.methods.push_back({"Progressive",
                         "progressive",
                         {{"teachers", teachers}, {"stages", {"deep", "standard", "compact"}}, {"distill", plain_kd}},
                         {}});
  cfg.methods.push_back(
      {"UA_RF_to_NN", "uncertainty_rf_to_nn", {{"teacher", "RF"}, {"student", "standard"}, {"distill", ua_kd}}, {}});
  cfg.methods.push_back({"UA_Multi_Teacher",
                         "uncertainty_multi_teacher",
                         {{"teachers", teachers}, {"student", "standard"}, {"distill", ua_kd}},
                         {}});
  cfg.seeds = {0};
  cfg.validate();
  return cfg;
}

// ---- runner ----

ExperimentOutput run_experiments(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentOutput out;
  for (const DatasetSource& src : cfg.datasets) {
    const Dataset full = load_source(src, cfg.base_dir);
    for (std::uint64_t seed : cfg.seeds) {
      SplitSpec s = cfg.split;
      s.seed += seed;
      s.stratified = s.stratified && full.task == Task::kClassification;
      const Dataset data = subsample(full, cfg.budget.max_rows, s.seed);
      const SplitResult split = split_and_standardize(data, s);
      CellContext ctx(cfg, split, seed);
      for (const MethodSpec& m : cfg.methods) {
        ExperimentResult r;
        r.method = m.id;
        r.category = category_of_kind(m.kind);
        r.dataset = src.name;
        r.seed = seed;
        r.task = full.task;
        r.metrics.task = full.task;
        if (!m.tasks.empty() && std::find(m.tasks.begin(), m.tasks.end(), full.task) == m.tasks.end()) {
          r.status = "skipped";
          r.message = "method does not support " + to_string(full.task);
          out.results.push_back(std::move(r));
          continue;
        }
        try {
          CellOutput cell = run_cell(m, ctx);
          r.metrics = cell.metrics;
          r.train_seconds = cell.train_seconds;
          out.importances.insert(out.importances.end(), cell.importances.begin(), cell.importances.end());
          out.stages.insert(out.stages.end(), cell.stages.begin(), cell.stages.end());
        } catch (const std::exception& e) {
          r.status = "failed";
          r.message = first_line(e.what());
        }
        out.results.push_back(std::move(r));
      }
    }
  }
  return out;
}

// ---- CSV ----

std::string results_to_csv(const std::vector<ExperimentResult>& results) {
  std::string out = csv_line({"method", "category", "dataset", "seed", "task", "accuracy", "f1", "auc", "rmse", "r2",
                              "mae", "train_seconds", "inference_seconds", "mean_uncertainty", "status", "message"});
  for (const auto& r : results) {
    const bool ok = r.status == "ok";
    out += csv_line({r.method, r.category, r.dataset, std::to_string(r.seed), to_string(r.task),
                     format_optional(r.metrics.accuracy), format_optional(r.metrics.f1_macro),
                     format_optional(r.metrics.auc), format_optional(r.metrics.rmse), format_optional(r.metrics.r2),
                     format_optional(r.metrics.mae), ok ? format_number(r.train_seconds) : "",
                     ok ? format_number(r.metrics.inference_seconds) : "",
                     ok ? format_number(r.metrics.mean_uncertainty) : "", r.status, r.message});
  }
  return out;
}

std::vector<ExperimentResult> results_from_csv(const std::string& text) {
  const CsvTable t = CsvTable::parse(
      text, {"method", "category", "dataset", "seed", "task", "accuracy", "f1", "auc", "rmse", "r2", "mae",
             "train_seconds", "inference_seconds", "mean_uncertainty", "status"});
  const bool has_message = std::find(t.header.begin(), t.header.end(), "message") != t.header.end();
  std::vector<ExperimentResult> out;
  for (const auto& row : t.rows) {
    ExperimentResult r;
    r.method = t.get(row, "method");
    r.category = t.get(row, "category");
    r.dataset = t.get(row, "dataset");
    r.seed = parse_seed(t.get(row, "seed"));
    try {
      r.task = task_from_string(t.get(row, "task"));
    } catch (const InvalidArgument& e) {
      throw IoError(std::string("csv: ") + e.what());
    }
    r.metrics.task = r.task;
    r.metrics.accuracy = parse_optional(t.get(row, "accuracy"));
    r.metrics.f1_macro = parse_optional(t.get(row, "f1"));
    r.metrics.auc = parse_optional(t.get(row, "auc"));
    r.metrics.rmse = parse_optional(t.get(row, "rmse"));
    r.metrics.r2 = parse_optional(t.get(row, "r2"));
    r.metrics.mae = parse_optional(t.get(row, "mae"));
    r.train_seconds = parse_number(t.get(row, "train_seconds"));
    r.metrics.inference_seconds = parse_number(t.get(row, "inference_seconds"));
    r.metrics.mean_uncertainty = parse_number(t.get(row, "mean_uncertainty"));
    r.status = t.get(row, "status");
    if (has_message) r.message = t.get(row, "message");
    out.push_back(std::move(r));
  }
  return out;
}

std::string importances_to_csv(const std::vector<ImportanceRecord>& records) {
  std::string out = csv_line({"method", "dataset", "seed", "feature", "importance"});
  for (const auto& r : records) {
    out += csv_line({r.method, r.dataset, std::to_string(r.seed), r.feature, format_number(r.importance)});
  }
  return out;
}

std::vector<ImportanceRecord> importances_from_csv(const std::string& text) {
  const CsvTable t = CsvTable::parse(text, {"method", "dataset", "seed", "feature", "importance"});
  std::vector<ImportanceRecord> out;
  for (const auto& row : t.rows) {
    out.push_back({t.get(row, "method"), t.get(row, "dataset"), parse_seed(t.get(row, "seed")),
                   t.get(row, "feature"), parse_number(t.get(row, "importance"))});
  }
  return out;
}

std::string stages_to_csv(const std::vector<StageRecord>& records) {
  std::string out = csv_line({"method", "dataset", "seed", "stage", "architecture", "parameters", "accuracy", "f1",
                              "auc", "rmse", "r2", "mae", "inference_seconds", "mean_uncertainty"});
  for (const auto& r : records) {
    out += csv_line({r.method, r.dataset, std::to_string(r.seed), std::to_string(r.stage), r.architecture,
                     std::to_string(r.parameters), format_optional(r.metrics.accuracy),
                     format_optional(r.metrics.f1_macro), format_optional(r.metrics.auc),
                     format_optional(r.metrics.rmse), format_optional(r.metrics.r2), format_optional(r.metrics.mae),
                     format_number(r.metrics.inference_seconds), format_number(r.metrics.mean_uncertainty)});
  }
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& text, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void write_output(const ExperimentOutput& out, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text(results_to_csv(out.results), dir / kResultsFile);
  write_text(importances_to_csv(out.importances), dir / kImportancesFile);
  write_text(stages_to_csv(out.stages), dir / kStagesFile);
}

// ---- summary ----

ReportFiles summarize(const std::vector<ExperimentResult>& results, const std::vector<ImportanceRecord>& importances) {
  std::vector<const ExperimentResult*> ok;
  for (const auto& r : results) {
    if (r.status == "ok") ok.push_back(&r);
  }

  // Methods in first-appearance order.
  std::vector<std::string> methods;
  std::map<std::string, std::string> category;
  for (const auto* r : ok) {
    if (!category.count(r->method)) methods.push_back(r->method);
    category[r->method] = r->category;
  }

  ReportFiles rep;
  std::vector<std::vector<std::string>> summary_rows;
  for (const auto& m : methods) {
    std::vector<double> acc, r2;
    for (const auto* r : ok) {
      if (r->method != m) continue;
      if (r->metrics.accuracy) acc.push_back(*r->metrics.accuracy);
      if (r->metrics.r2) r2.push_back(*r->metrics.r2);
    }
    const MeanStd a = mean_std(acc), b = mean_std(r2);
    summary_rows.push_back({m, a.n ? fixed4(a.mean) : "-", a.n ? fixed4(a.std) : "-", b.n ? fixed4(b.mean) : "-",
                            b.n ? fixed4(b.std) : "-", category[m], std::to_string(a.n + b.n)});
  }
  const std::vector<std::string> summary_header = {"method", "class_acc_mean", "class_acc_std", "reg_r2_mean",
                                                   "reg_r2_std", "category", "n"};
  rep.method_summary_csv = csv_table(summary_header, summary_rows);

  auto ranked = [&](bool classification) {
    std::vector<const ExperimentResult*> rows;
    for (const auto* r : ok) {
      if (classification ? r->metrics.accuracy.has_value() : r->metrics.r2.has_value()) rows.push_back(r);
    }
    std::stable_sort(rows.begin(), rows.end(), [&](const ExperimentResult* a, const ExperimentResult* b) {
      const double ka = classification ? *a->metrics.accuracy : *a->metrics.r2;
      const double kb = classification ? *b->metrics.accuracy : *b->metrics.r2;
      if (ka != kb) return ka > kb;
      if (a->method != b->method) return a->method < b->method;
      if (a->dataset != b->dataset) return a->dataset < b->dataset;
      return a->seed < b->seed;
    });
    if (rows.size() > 10) rows.resize(10);
    return rows;
  };

  std::vector<std::vector<std::string>> top_c, top_r;
  int rank = 0;
  for (const auto* r : ranked(true)) {
    top_c.push_back({std::to_string(++rank), r->method, r->dataset, std::to_string(r->seed), fixed4(*r->metrics.accuracy),
                     opt4(r->metrics.f1_macro), opt4(r->metrics.auc)});
  }
  rank = 0;
  for (const auto* r : ranked(false)) {
    top_r.push_back({std::to_string(++rank), r->method, r->dataset, std::to_string(r->seed), opt4(r->metrics.rmse),
                     fixed4(*r->metrics.r2), opt4(r->metrics.mae), fixed4(r->metrics.mean_uncertainty)});
  }
  const std::vector<std::string> top_c_header = {"rank", "method", "dataset", "seed", "accuracy", "f1", "auc"};
  const std::vector<std::string> top_r_header = {"rank", "method", "dataset", "seed", "rmse", "r2", "mae", "uncertainty"};
  rep.top_classification_csv = csv_table(top_c_header, top_c);
  rep.top_regression_csv = csv_table(top_r_header, top_r);

  std::vector<std::vector<std::string>> cat_rows;
  for (const std::string c : {"Tree", "Neural", "Cross-Paradigm", "Advanced"}) {
    std::vector<double> acc, r2, t, u;
    for (const auto* r : ok) {
      if (r->category != c) continue;
      if (r->metrics.accuracy) acc.push_back(*r->metrics.accuracy);
      if (r->metrics.r2) r2.push_back(*r->metrics.r2);
      t.push_back(r->metrics.inference_seconds);
      u.push_back(r->metrics.mean_uncertainty);
    }
    const MeanStd ti = mean_std(t);
    cat_rows.push_back({c, std::to_string(t.size()), mean_pm(mean_std(acc)), mean_pm(mean_std(r2)),
                        ti.n ? format_number(ti.mean, "%.6f") : "-", ti.n ? format_number(ti.std, "%.6f") : "-",
                        mean_pm(mean_std(u))});
  }
  const std::vector<std::string> cat_header = {"category", "n", "accuracy", "r2", "inference_mean_s",
                                               "inference_std_s", "uncertainty"};
  rep.category_csv = csv_table(cat_header, cat_rows);

  // Top-5 features per (dataset, tree baseline), averaged over seeds.
  std::vector<std::pair<std::string, std::string>> groups;
  std::map<std::pair<std::string, std::string>, std::vector<std::pair<std::string, std::vector<double>>>> by_group;
  for (const auto& rec : importances) {
    const auto key = std::make_pair(rec.dataset, rec.method);
    auto [it, inserted] = by_group.try_emplace(key);
    if (inserted) groups.push_back(key);
    auto& feats = it->second;
    auto f = std::find_if(feats.begin(), feats.end(), [&](const auto& p) { return p.first == rec.feature; });
    if (f == feats.end()) {
      feats.emplace_back(rec.feature, std::vector<double>{});
      f = feats.end() - 1;
    }
    f->second.push_back(rec.importance);
  }
  std::vector<std::vector<std::string>> imp_rows;
  for (const auto& key : groups) {
    std::vector<std::pair<std::string, double>> means;
    for (const auto& [name, vals] : by_group[key]) means.emplace_back(name, mean_std(vals).mean);
    std::stable_sort(means.begin(), means.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (std::size_t i = 0; i < std::min<std::size_t>(5, means.size()); ++i) {
      imp_rows.push_back({key.first, key.second, std::to_string(i + 1), means[i].first, fixed4(means[i].second)});
    }
  }
  const std::vector<std::string> imp_header = {"dataset", "method", "rank", "feature", "importance"};
  rep.importance_csv = csv_table(imp_header, imp_rows);

  std::size_t skipped = 0, failed = 0;
  for (const auto& r : results) {
    skipped += r.status == "skipped";
    failed += r.status == "failed";
  }
  std::string md = "# Experiment summary\n\n";
  md += "Cells: " + std::to_string(results.size()) + " (ok " + std::to_string(ok.size()) + ", skipped " +
        std::to_string(skipped) + ", failed " + std::to_string(failed) + ")\n\n";
  md += "## Method summary\n\n";
  std::vector<std::vector<std::string>> md_summary;
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const auto& row = summary_rows[i];
    md_summary.push_back({row[0], row[1], row[2], row[3], row[5]});
  }
  md += md_table({"Method", "Class. Acc.", "Std", "Reg. R²", "Category"}, md_summary);
  md += "\n## Top 10 classification results by accuracy\n\n" + md_table(top_c_header, top_c);
  md += "\n## Top 10 regression results by R²\n\n" + md_table(top_r_header, top_r);
  md += "\n## Categories\n\n" + md_table(cat_header, cat_rows);
  md += "\n## Feature importance (tree baselines, top 5)\n\n" + md_table(imp_header, imp_rows);
  if (failed) {
    md += "\n## Failed cells\n\n";
    std::vector<std::vector<std::string>> fail_rows;
    for (const auto& r : results) {
      if (r.status == "failed") fail_rows.push_back({r.method, r.dataset, std::to_string(r.seed), r.message});
    }
    md += md_table({"method", "dataset", "seed", "message"}, fail_rows);
  }
  rep.markdown = md;
  return rep;
}

void write_report(const ReportFiles& report, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text(report.markdown, dir / "summary.md");
  write_text(report.method_summary_csv, dir / "method_summary.csv");
  write_text(report.top_classification_csv, dir / "top10_classification.csv");
  write_text(report.top_regression_csv, dir / "top10_regression.csv");
  write_text(report.category_csv, dir / "categories.csv");
  write_text(report.importance_csv, dir / "feature_importance.csv");
}

ReportFiles report_from_files(const fs::path& results_csv, const fs::path& out_dir) {
  const auto results = results_from_csv(read_text(results_csv));
  std::vector<ImportanceRecord> importances;
  const fs::path imp = results_csv.parent_path() / kImportancesFile;
  if (fs::exists(imp)) importances = importances_from_csv(read_text(imp));
  ReportFiles rep = summarize(results, importances);
  write_report(rep, out_dir);
  return rep;
}

}  // namespace xdistill
