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

// Command-line front end: dataset generation, experiment runs and reports.

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "xdistill/data.hpp"
#include "xdistill/harness.hpp"

namespace fs = std::filesystem;

namespace {

int generate(const std::string& name, std::uint64_t seed, const std::string& out) {
  xdistill::Dataset d;
  if (name == "imbalanced") {
    d = xdistill::generate_imbalanced(seed);
  } else if (name == "nonlinear") {
    d = xdistill::generate_nonlinear_regression(seed);
  } else {
    std::cerr << "error: unknown dataset '" << name << "' (expected imbalanced or nonlinear)\n";
    return 2;
  }
  xdistill::write_csv(d, out);
  std::cout << "wrote " << d.n_samples() << " rows x " << d.n_features() << " features to " << out << "\n";
  return 0;
}

int run(const std::string& config_path, const std::string& out_dir) {
  xdistill::ExperimentConfig cfg = xdistill::load_config(config_path);
  const fs::path dir = out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(out_dir);
  const xdistill::ExperimentOutput out = xdistill::run_experiments(cfg);
  xdistill::write_output(out, dir);
  xdistill::write_report(xdistill::summarize(out.results, out.importances), dir);
  std::size_t failed = 0, skipped = 0;
  for (const auto& r : out.results) {
    failed += r.status == "failed";
    skipped += r.status == "skipped";
  }
  std::cout << out.results.size() << " cells (" << skipped << " skipped, " << failed << " failed) -> "
            << (dir / xdistill::kResultsFile).string() << "\n";
  return 0;
}

int report(const std::string& results, const std::string& out_dir) {
  const fs::path dir = out_dir.empty() ? fs::path(results).parent_path() : fs::path(out_dir);
  xdistill::report_from_files(results, dir);
  std::cout << "wrote report to " << (dir / "summary.md").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge distillation between tree ensembles and neural networks"};
  app.require_subcommand(1);

  auto* datasets = app.add_subcommand("datasets", "Synthetic dataset utilities");
  datasets->require_subcommand(1);
  auto* gen = datasets->add_subcommand("generate", "Write a synthetic dataset to CSV");
  std::string gen_name, gen_out;
  std::uint64_t gen_seed = 0;
  gen->add_option("--name", gen_name, "imbalanced or nonlinear")->required();
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output CSV path")->required();

  auto* run_cmd = app.add_subcommand("run", "Run an experiment matrix");
  std::string config_path, run_out;
  run_cmd->add_option("--config", config_path, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out", run_out, "Output directory (default: config output_dir)");

  auto* report_cmd = app.add_subcommand("report", "Summarize a results CSV");
  std::string results_path, report_out;
  report_cmd->add_option("--results", results_path, "results.csv from a run")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--out", report_out, "Output directory (default: next to results)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return generate(gen_name, gen_seed, gen_out);
    if (run_cmd->parsed()) return run(config_path, run_out);
    if (report_cmd->parsed()) return report(results_path, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
