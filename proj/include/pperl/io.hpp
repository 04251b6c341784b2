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

#ifndef PPERL_IO_HPP_
#define PPERL_IO_HPP_

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pperl/metrics.hpp"
#include "pperl/scenario.hpp"

namespace pperl {

/**
 * File artifacts of a run: trajectory and results CSVs, plot-ready series,
 * and content hashing for the run manifest. All CSVs use '.' decimals,
 * newline-terminated rows, and a mandatory header; doubles are printed with
 * %.12g so identical runs produce byte-identical files.
 */

// ---------------------------------------------------------------------------
// Formatting and hashing

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

/// FNV-1a 64-bit content hash, as fixed-width hex.
inline std::string fnv1a64_hex(const std::string& content) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : content) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << content;
  if (!os) throw std::runtime_error("short write to " + path);
}

// ---------------------------------------------------------------------------
// Trajectory CSV

inline std::string trajectory_csv_header() {
  return "step,time,vehicle,p_ref,p,v_ref,v,a,u_p,u_r,u_a,infeasible_flag";
}

/// One row per vehicle per step, in step-major order.
inline std::string trajectory_to_csv(const TrajectoryLog& log) {
  std::ostringstream os;
  os << trajectory_csv_header() << "\n";
  for (const StepRecord& rec : log.steps) {
    for (int i = 0; i < static_cast<int>(rec.state.size()); ++i) {
      os << rec.step << "," << format_double(rec.time) << "," << i << ","
         << format_double(rec.ref.positions[i]) << ","
         << format_double(rec.state.positions[i]) << ","
         << format_double(rec.ref.velocities[i]) << ","
         << format_double(rec.state.velocities[i]) << ","
         << format_double(rec.state.accelerations[i]) << ","
         << format_double(rec.u_p[i]) << "," << format_double(rec.u_r[i])
         << "," << format_double(rec.u_a[i]) << ","
         << (rec.infeasible ? 1 : 0) << "\n";
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Results CSV (Table-style)

inline std::string results_csv_header() {
  return "scenario,error_kind,controller,cae_p,cae_v,mae_p,mae_v,"
         "gap_cae_p,gap_cae_v,gap_mae_p,gap_mae_v,seed";
}

struct LabeledReport {
  MetricReport report;
  std::uint64_t seed = 0;
};

/// Emit one row per report. Gap columns compare each row against the
/// mpc_q row of the same (scenario, error, seed) group; they are left empty
/// on the mpc_q rows themselves, when no reference row exists, and when the
/// baseline metric is nonpositive.
inline std::string results_to_csv(const std::vector<LabeledReport>& rows) {
  std::map<std::string, const MetricReport*> reference;
  auto group_key = [](const LabeledReport& r) {
    return r.report.scenario + "|" + r.report.error_kind + "|" +
           std::to_string(r.seed);
  };
  for (const LabeledReport& r : rows)
    if (r.report.controller == "mpc_q") reference[group_key(r)] = &r.report;

  std::ostringstream os;
  os << results_csv_header() << "\n";
  for (const LabeledReport& r : rows) {
    os << r.report.scenario << "," << r.report.error_kind << ","
       << r.report.controller << "," << format_double(r.report.cae_p) << ","
       << format_double(r.report.cae_v) << "," << format_double(r.report.mae_p)
       << "," << format_double(r.report.mae_v);
    const auto it = reference.find(group_key(r));
    const bool is_reference = r.report.controller == "mpc_q";
    const MetricReport* ref =
        (!is_reference && it != reference.end()) ? it->second : nullptr;
    const double base[4] = {r.report.cae_p, r.report.cae_v, r.report.mae_p,
                            r.report.mae_v};
    const double refv[4] = {ref ? ref->cae_p : 0.0, ref ? ref->cae_v : 0.0,
                            ref ? ref->mae_p : 0.0, ref ? ref->mae_v : 0.0};
    for (int j = 0; j < 4; ++j) {
      os << ",";
      if (ref) {
        const std::optional<double> gap = compute_gap(base[j], refv[j]);
        if (gap) os << format_double(*gap);
      }
    }
    os << "," << r.seed << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Plot-ready series

/// Time-space series: reference and realized positions per vehicle per step.
inline std::string timespace_to_csv(const TrajectoryLog& log) {
  std::ostringstream os;
  os << "time,vehicle,p_ref,p\n";
  for (const StepRecord& rec : log.steps)
    for (int i = 0; i < static_cast<int>(rec.state.size()); ++i)
      os << format_double(rec.time) << "," << i << ","
         << format_double(rec.ref.positions[i]) << ","
         << format_double(rec.state.positions[i]) << "\n";
  return os.str();
}

/// Velocity-error series: realized minus reference speed per vehicle.
inline std::string velocity_error_to_csv(const TrajectoryLog& log) {
  std::ostringstream os;
  os << "time,vehicle,v_err\n";
  for (const StepRecord& rec : log.steps)
    for (int i = 0; i < static_cast<int>(rec.state.size()); ++i)
      os << format_double(rec.time) << "," << i << ","
         << format_double(rec.state.velocities[i] - rec.ref.velocities[i])
         << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Minimal CSV reading (for re-deriving plot series from stored runs)

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    for (size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<int>(j);
    throw std::runtime_error("CSV column not found: " + name);
  }
};

/// Parse a numeric CSV with a header row. Only the shapes this project
/// writes are supported: comma separators, no quoting, numeric data cells
/// (empty cells read as NaN).
inline CsvTable parse_csv(const std::string& content) {
  CsvTable t;
  std::istringstream is(content);
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("parse_csv: empty input");
  std::istringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) t.header.push_back(cell);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ','))
      row.push_back(cell.empty() ? std::nan("")
                                 : std::strtod(cell.c_str(), nullptr));
    if (row.size() != t.header.size())
      throw std::runtime_error("parse_csv: ragged row");
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace pperl

#endif  // PPERL_IO_HPP_
