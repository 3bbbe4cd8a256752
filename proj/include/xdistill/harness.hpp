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

#ifndef XDISTILL_HARNESS_HPP_
#define XDISTILL_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xdistill/data.hpp"
#include "xdistill/metrics.hpp"
#include "xdistill/neural.hpp"
#include "xdistill/serialization.hpp"

namespace xdistill {

// A CSV file (`path`, resolved against the config's directory) or a built-in
// generator ("imbalanced" or "nonlinear") with its seed.
struct DatasetSource {
  std::string name;
  std::string path;
  Task task = Task::kClassification;
  std::string label_column = "target";
  std::string generator;
  std::uint64_t seed = 0;
};

// kind is one of: tree, nn, rf_to_nn, nn_to_rf, multi_teacher, progressive,
// uncertainty_rf_to_nn, uncertainty_multi_teacher. `tasks` limits the method
// to some task kinds; other cells get a skip record.
struct MethodSpec {
  std::string id;
  std::string kind;
  Json params = Json::object();
  std::vector<Task> tasks;
};

// Caps applied on top of every method's settings; 0 leaves a value alone.
// Used to run the full matrix at reduced cost.
struct Budget {
  int max_epochs = 0;
  int max_estimators = 0;
  std::size_t max_rows = 0;
};

struct ExperimentConfig {
  std::vector<DatasetSource> datasets;
  std::vector<MethodSpec> methods;
  SplitSpec split;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "results";
  TrainSpec train;  // defaults for every network, overridable per method
  int mc_passes = 30;
  int timing_repeats = 3;
  unsigned n_threads = 0;
  Budget budget;
  std::filesystem::path base_dir;  // where relative dataset paths resolve

  void validate() const;
};

ExperimentConfig config_from_json(const Json& j, const std::filesystem::path& base_dir = {});
Json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

// The 24-method matrix over the six datasets, with seeds {0}.
ExperimentConfig default_config(const std::filesystem::path& data_dir);

std::string category_of_kind(const std::string& kind);

struct ExperimentResult {
  std::string method;
  std::string category;
  std::string dataset;
  std::uint64_t seed = 0;
  Task task = Task::kClassification;
  MetricReport metrics;
  double train_seconds = 0.0;
  std::string status = "ok";  // ok, skipped or failed
  std::string message;
};

struct ImportanceRecord {
  std::string method;
  std::string dataset;
  std::uint64_t seed = 0;
  std::string feature;
  double importance = 0.0;
};

// One row per progressive stage.
struct StageRecord {
  std::string method;
  std::string dataset;
  std::uint64_t seed = 0;
  int stage = 0;
  std::string architecture;
  std::size_t parameters = 0;
  MetricReport metrics;
};

struct ExperimentOutput {
  std::vector<ExperimentResult> results;
  std::vector<ImportanceRecord> importances;
  std::vector<StageRecord> stages;
};

// Executes every (dataset, method, seed) cell. Cells that throw are recorded
// as failed; the matrix continues. Rows come back in config order.
ExperimentOutput run_experiments(const ExperimentConfig& cfg);

inline constexpr const char* kResultsFile = "results.csv";
inline constexpr const char* kImportancesFile = "importances.csv";
inline constexpr const char* kStagesFile = "stages.csv";

std::string results_to_csv(const std::vector<ExperimentResult>& results);
std::vector<ExperimentResult> results_from_csv(const std::string& text);
std::string importances_to_csv(const std::vector<ImportanceRecord>& records);
std::vector<ImportanceRecord> importances_from_csv(const std::string& text);
std::string stages_to_csv(const std::vector<StageRecord>& records);

void write_output(const ExperimentOutput& out, const std::filesystem::path& dir);

struct ReportFiles {
  std::string markdown;            // summary.md
  std::string method_summary_csv;  // per-method mean and std
  std::string top_classification_csv;
  std::string top_regression_csv;
  std::string category_csv;
  std::string importance_csv;  // top-5 features per dataset and tree baseline
};

// Tables built from successful rows only. Output depends only on the
// inputs, so summarizing the same CSV twice gives identical bytes.
ReportFiles summarize(const std::vector<ExperimentResult>& results,
                      const std::vector<ImportanceRecord>& importances = {});
void write_report(const ReportFiles& report, const std::filesystem::path& dir);

// Reads <dir>/results.csv (and importances.csv if present next to it),
// then writes the report into `out_dir`.
ReportFiles report_from_files(const std::filesystem::path& results_csv, const std::filesystem::path& out_dir);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::string& text, const std::filesystem::path& path);

}  // namespace xdistill

#endif  // XDISTILL_HARNESS_HPP_
