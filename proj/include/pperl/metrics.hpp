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

#ifndef PPERL_METRICS_HPP_
#define PPERL_METRICS_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pperl/scenario.hpp"

namespace pperl {

/**
 * Evaluation quantities for closed-loop runs: cumulative and maximum
 * absolute position/velocity tracking errors, summed over all vehicles and
 * all steps (not averaged), and the percent gap between two controllers'
 * metrics. Negative gaps are meaningful (the reference arm may lose) and are
 * not clamped.
 */

struct MetricReport {
  double cae_p = 0.0;  ///< sum of |p - p*| over vehicles and steps (m)
  double cae_v = 0.0;  ///< sum of |v - v*| (m/s)
  double mae_p = 0.0;  ///< max |p - p*| (m)
  double mae_v = 0.0;  ///< max |v - v*| (m/s)
  Eigen::VectorXd cae_p_per_vehicle;
  Eigen::VectorXd cae_v_per_vehicle;
  Eigen::VectorXd mae_p_per_vehicle;
  Eigen::VectorXd mae_v_per_vehicle;
  std::string controller;  ///< label, e.g. "mpc_q"
  std::string scenario;    ///< label, e.g. "variable"
  std::string error_kind;  ///< label, e.g. "affine"
};

/// Accumulate the error metrics over every logged state (and the final state
/// when present). Errors are realized minus reference, per Eq.-style
/// definition p~ = p - p*.
inline MetricReport compute_metrics(const TrajectoryLog& log) {
  if (log.steps.empty() && !log.has_final)
    throw std::invalid_argument("compute_metrics: empty log");
  const int i_count = static_cast<int>(
      log.steps.empty() ? log.final_state.size() : log.steps[0].state.size());
  MetricReport r;
  r.cae_p_per_vehicle = Eigen::VectorXd::Zero(i_count);
  r.cae_v_per_vehicle = Eigen::VectorXd::Zero(i_count);
  r.mae_p_per_vehicle = Eigen::VectorXd::Zero(i_count);
  r.mae_v_per_vehicle = Eigen::VectorXd::Zero(i_count);
  r.controller = to_string(log.controller);
  r.scenario = to_string(log.scenario);
  r.error_kind = to_string(log.disturbance);

  auto absorb = [&](const PlatoonState& state, const PlatoonState& ref) {
    for (int i = 0; i < i_count; ++i) {
      const double ep = std::abs(state.positions[i] - ref.positions[i]);
      const double ev = std::abs(state.velocities[i] - ref.velocities[i]);
      r.cae_p_per_vehicle[i] += ep;
      r.cae_v_per_vehicle[i] += ev;
      r.mae_p_per_vehicle[i] = std::max(r.mae_p_per_vehicle[i], ep);
      r.mae_v_per_vehicle[i] = std::max(r.mae_v_per_vehicle[i], ev);
    }
  };
  for (const StepRecord& rec : log.steps) absorb(rec.state, rec.ref);
  if (log.has_final) absorb(log.final_state, log.final_ref);

  r.cae_p = r.cae_p_per_vehicle.sum();
  r.cae_v = r.cae_v_per_vehicle.sum();
  r.mae_p = r.mae_p_per_vehicle.maxCoeff();
  r.mae_v = r.mae_v_per_vehicle.maxCoeff();
  return r;
}

/// Percent improvement of `reference` over `baseline`:
/// 100 (baseline - reference) / baseline. A nonpositive baseline makes the
/// quotient meaningless and yields an empty optional.
inline std::optional<double> compute_gap(double baseline, double reference) {
  if (!(baseline > 0)) return std::nullopt;
  return 100.0 * (baseline - reference) / baseline;
}

}  // namespace pperl

#endif  // PPERL_METRICS_HPP_
