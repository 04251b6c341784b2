/*
 * Copyright 2026 The platoon-perl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line entry point: run closed-loop platoon experiments (single
// cells or the full comparison matrix) and export plot-ready series from
// stored runs.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "pperl/platoon.hpp"

namespace fs = std::filesystem;

namespace {

#ifndef PPERL_VERSION
#define PPERL_VERSION "dev"
#endif

struct Cell {
  pperl::ScenarioKind scenario;
  pperl::DisturbanceKind error;
  pperl::ControllerKind controller;
  std::uint64_t seed;
};

std::string cell_dir_name(const Cell& c) {
  return std::string(pperl::to_string(c.scenario)) + "_" +
         pperl::to_string(c.error) + "_" + pperl::to_string(c.controller) +
         "_seed" + std::to_string(c.seed);
}

/// The full comparison matrix: both scenarios, both deterministic error
/// families, all three controller arms.
std::vector<Cell> benchmark_matrix(const std::vector<std::uint64_t>& seeds) {
  std::vector<Cell> cells;
  for (const auto scen :
       {pperl::ScenarioKind::uniform, pperl::ScenarioKind::variable})
    for (const auto err :
         {pperl::DisturbanceKind::affine, pperl::DisturbanceKind::quadratic})
      for (const auto ctrl :
           {pperl::ControllerKind::mpc_only, pperl::ControllerKind::mpc_nn,
            pperl::ControllerKind::mpc_q})
        for (const std::uint64_t seed : seeds)
          cells.push_back({scen, err, ctrl, seed});
  return cells;
}

int run_command(const std::string& config_path, const std::string& scenario,
                const std::string& error_kind, const std::string& controller,
                const std::vector<std::uint64_t>& seeds,
                const std::string& matrix, const std::string& out_flag) {
  pperl::HarnessConfig cfg;
  if (!config_path.empty()) {
    try {
      cfg = pperl::load_config(config_path);
    } catch (const std::exception& e) {
      std::cerr << "config error in " << config_path << ": " << e.what()
                << "\n";
      return 1;
    }
  }

  // Flag overrides on top of the file.
  try {
    if (!scenario.empty())
      cfg.scenario.kind = pperl::scenario_kind_from_string(scenario);
    if (!error_kind.empty())
      cfg.disturbance.kind = pperl::disturbance_kind_from_string(error_kind);
    if (!controller.empty())
      cfg.controllers = {pperl::controller_kind_from_string(controller)};
    if (!seeds.empty()) cfg.seeds = seeds;
    if (!out_flag.empty()) {
      cfg.out_dir = out_flag;
    } else if (const char* env = std::getenv("PLATOON_PERL_OUT");
               env && *env) {
      cfg.out_dir = env;
    }
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }

  std::vector<Cell> cells;
  if (!matrix.empty()) {
    cells = benchmark_matrix(cfg.seeds);
  } else {
    for (const auto ctrl : cfg.controllers)
      for (const std::uint64_t seed : cfg.seeds)
        cells.push_back(
            {cfg.scenario.kind, cfg.disturbance.kind, ctrl, seed});
  }

  const fs::path out_root(cfg.out_dir);
  std::vector<pperl::LabeledReport> results;
  nlohmann::json run_records = nlohmann::json::array();
  std::vector<std::string> artifact_paths;
  bool any_failure = false;

  try {
    fs::create_directories(out_root);
  } catch (const std::exception& e) {
    std::cerr << "cannot create output directory " << out_root << ": "
              << e.what() << "\n";
    return 2;
  }

  for (const Cell& cell : cells) {
    pperl::ExperimentConfig exp =
        cfg.experiment(cell.controller, cell.seed);
    exp.scenario.kind = cell.scenario;
    exp.disturbance.kind = cell.error;
    const std::string dir_name = cell_dir_name(cell);

    nlohmann::json record{{"scenario", pperl::to_string(cell.scenario)},
                          {"error", pperl::to_string(cell.error)},
                          {"controller", pperl::to_string(cell.controller)},
                          {"seed", cell.seed},
                          {"dir", dir_name}};
    try {
      const pperl::TrajectoryLog log = pperl::run_experiment(exp);
      const pperl::MetricReport report = pperl::compute_metrics(log);
      results.push_back({report, cell.seed});

      const fs::path cell_dir = out_root / dir_name;
      fs::create_directories(cell_dir);
      const std::string rel = dir_name + "/trajectory.csv";
      pperl::write_file((out_root / rel).string(),
                        pperl::trajectory_to_csv(log));
      artifact_paths.push_back(rel);

      record["status"] = "ok";
      std::cout << dir_name << ": cae_p=" << pperl::format_double(report.cae_p)
                << " cae_v=" << pperl::format_double(report.cae_v)
                << " mae_p=" << pperl::format_double(report.mae_p)
                << " mae_v=" << pperl::format_double(report.mae_v) << "\n";
    } catch (const std::exception& e) {
      any_failure = true;
      record["status"] = "failed";
      record["message"] = e.what();
      std::cerr << dir_name << ": FAILED: " << e.what() << "\n";
    }
    run_records.push_back(record);
  }

  try {
    pperl::write_file((out_root / "results.csv").string(),
                      pperl::results_to_csv(results));
    artifact_paths.push_back("results.csv");

    const std::string config_text = pperl::serialize_config(cfg);
    pperl::write_file((out_root / "effective_config.json").string(),
                      config_text);
    artifact_paths.push_back("effective_config.json");

    nlohmann::json manifest{
        {"version", PPERL_VERSION},
        {"config_file", "effective_config.json"},
        {"config_hash", pperl::fnv1a64_hex(config_text)},
        {"seeds", cfg.seeds},
        {"runs", run_records}};
    nlohmann::json files = nlohmann::json::array();
    for (const std::string& rel : artifact_paths) {
      const std::string content =
          pperl::read_file((out_root / rel).string());
      files.push_back({{"path", rel}, {"fnv1a64", pperl::fnv1a64_hex(content)}});
    }
    manifest["files"] = files;
    pperl::write_file((out_root / "manifest.json").string(),
                      manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    std::cerr << "failed writing summary artifacts: " << e.what() << "\n";
    return 2;
  }

  return any_failure ? 2 : 0;
}

int export_plot_command(const std::vector<std::string>& run_dirs) {
  std::vector<std::string> missing;
  for (const std::string& dir : run_dirs)
    if (!fs::exists(fs::path(dir) / "trajectory.csv"))
      missing.push_back((fs::path(dir) / "trajectory.csv").string());
  if (!missing.empty()) {
    std::cerr << "missing run artifacts:\n";
    for (const std::string& m : missing) std::cerr << "  " << m << "\n";
    return 2;
  }

  for (const std::string& dir : run_dirs) {
    try {
      const pperl::CsvTable t = pperl::parse_csv(
          pperl::read_file((fs::path(dir) / "trajectory.csv").string()));
      const int c_time = t.column("time");
      const int c_vehicle = t.column("vehicle");
      const int c_pref = t.column("p_ref");
      const int c_p = t.column("p");
      const int c_vref = t.column("v_ref");
      const int c_v = t.column("v");

      std::ostringstream ts, ve;
      ts << "time,vehicle,p_ref,p\n";
      ve << "time,vehicle,v_err\n";
      for (const auto& row : t.rows) {
        ts << pperl::format_double(row[c_time]) << ","
           << static_cast<int>(row[c_vehicle]) << ","
           << pperl::format_double(row[c_pref]) << ","
           << pperl::format_double(row[c_p]) << "\n";
        ve << pperl::format_double(row[c_time]) << ","
           << static_cast<int>(row[c_vehicle]) << ","
           << pperl::format_double(row[c_v] - row[c_vref]) << "\n";
      }
      pperl::write_file((fs::path(dir) / "timespace.csv").string(), ts.str());
      pperl::write_file((fs::path(dir) / "velocity_error.csv").string(),
                        ve.str());
      std::cout << dir << ": wrote timespace.csv, velocity_error.csv\n";
    } catch (const std::exception& e) {
      std::cerr << dir << ": export failed: " << e.what() << "\n";
      return 2;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Platoon control workbench: MPC with online residual "
               "compensation"};
  app.set_version_flag("--version", PPERL_VERSION);
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run closed-loop experiments");
  std::string config_path, scenario, error_kind, controller, matrix, out_dir;
  std::vector<std::uint64_t> seeds;
  run->add_option("--config", config_path, "Config file (JSON)");
  run->add_option("--scenario", scenario, "Scenario kind")
      ->check(CLI::IsMember({"uniform", "variable"}));
  run->add_option("--error", error_kind, "Actuation error family")
      ->check(CLI::IsMember({"none", "affine", "quadratic"}));
  run->add_option("--controller", controller, "Controller arm")
      ->check(CLI::IsMember({"mpc_only", "mpc_nn", "mpc_q"}));
  run->add_option("--seed", seeds, "Seed (repeatable)");
  run->add_option("--matrix", matrix,
                  "Run the full comparison matrix preset "
                  "(accepted names: benchmark, paper)")
      ->check(CLI::IsMember({"benchmark", "paper"}));
  run->add_option("--out", out_dir,
                  "Output directory (falls back to $PLATOON_PERL_OUT, then "
                  "the config value)");

  // export-plot
  auto* export_plot = app.add_subcommand(
      "export-plot", "Derive plot-ready series from stored runs");
  std::vector<std::string> run_dirs;
  export_plot
      ->add_option("dirs", run_dirs, "Run directories holding trajectory.csv")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run->parsed())
      return run_command(config_path, scenario, error_kind, controller, seeds,
                         matrix, out_dir);
    return export_plot_command(run_dirs);
  } catch (const std::exception& e) {
    std::cerr << "fatal: " << e.what() << "\n";
    return 2;
  }
}
