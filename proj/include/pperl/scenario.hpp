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

#ifndef PPERL_SCENARIO_HPP_
#define PPERL_SCENARIO_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pperl/disturbance.hpp"
#include "pperl/dynamics.hpp"
#include "pperl/mpc.hpp"
#include "pperl/residual_nn.hpp"
#include "pperl/residual_q.hpp"
#include "pperl/rng.hpp"

namespace pperl {

/**
 * Reference-trajectory generation and the closed-loop experiment harness.
 *
 * A scenario describes a leader speed profile as constant-acceleration
 * phases; every follower tracks the same profile shifted back by a fixed
 * spacing. The harness then runs the control pipeline per step — MPC command,
 * residual adjustment, actuation disturbance, plant update — while the
 * residual stage learns online from the observed state evolution.
 *
 * Two stock scenarios:
 *   uniform   cruise at 15 m/s for the whole run
 *   variable  2 s cruise, 5.5 s at -2 m/s^2 (down to 4 m/s at t = 7.5 s),
 *             5.5 s at +2 m/s^2 (back to 15 m/s), 2 s cruise
 */

// ---------------------------------------------------------------------------
// Scenario description

enum class ScenarioKind { uniform, variable };
enum class ControllerKind { mpc_only, mpc_nn, mpc_q };

inline const char* to_string(ScenarioKind k) {
  return k == ScenarioKind::uniform ? "uniform" : "variable";
}

inline const char* to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::mpc_only: return "mpc_only";
    case ControllerKind::mpc_nn: return "mpc_nn";
    case ControllerKind::mpc_q: return "mpc_q";
  }
  return "?";
}

inline ScenarioKind scenario_kind_from_string(const std::string& s) {
  if (s == "uniform") return ScenarioKind::uniform;
  if (s == "variable") return ScenarioKind::variable;
  throw std::invalid_argument("unknown scenario kind: " + s);
}

inline ControllerKind controller_kind_from_string(const std::string& s) {
  if (s == "mpc_only") return ControllerKind::mpc_only;
  if (s == "mpc_nn") return ControllerKind::mpc_nn;
  if (s == "mpc_q") return ControllerKind::mpc_q;
  throw std::invalid_argument("unknown controller kind: " + s);
}

/// One constant-acceleration segment of the leader profile.
struct Phase {
  double duration = 0.0;  ///< seconds
  double accel = 0.0;     ///< m/s^2
};

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::uniform;
  double duration = 15.0;        ///< seconds
  double dt = 0.1;               ///< seconds
  int n_vehicles = 5;
  double initial_spacing = 20.0; ///< m
  double cruise_speed = 15.0;    ///< m/s
  /// Open-loop leader: vehicle 0 is commanded the reference speed directly
  /// (no feedback, no residual, no disturbance); the default keeps every
  /// vehicle under the MPC.
  bool leader_open_loop = false;

  /// The phase schedule; empty means "derive from kind".
  std::vector<Phase> phases;

  std::vector<Phase> effective_phases() const {
    if (!phases.empty()) return phases;
    if (kind == ScenarioKind::uniform) return {{duration, 0.0}};
    return {{2.0, 0.0}, {5.5, -2.0}, {5.5, 2.0}, {2.0, 0.0}};
  }

  int n_steps() const { return static_cast<int>(std::llround(duration / dt)); }

  void validate() const {
    if (dt <= 0) throw std::invalid_argument("ScenarioSpec: dt <= 0");
    if (duration <= 0) throw std::invalid_argument("ScenarioSpec: duration <= 0");
    if (std::abs(duration / dt - std::llround(duration / dt)) > 1e-9)
      throw std::invalid_argument(
          "ScenarioSpec: duration must be an integer number of steps");
    if (n_vehicles < 1)
      throw std::invalid_argument("ScenarioSpec: n_vehicles < 1");
    if (initial_spacing <= 0)
      throw std::invalid_argument("ScenarioSpec: initial_spacing <= 0");
    if (cruise_speed < 0)
      throw std::invalid_argument("ScenarioSpec: negative cruise speed");
  }
};

// ---------------------------------------------------------------------------
// Reference generation

/// Leader kinematics at continuous time t under the phase schedule, by exact
/// piecewise integration from (p = 0, v = cruise). Past the schedule end the
/// final phase's acceleration continues, which lets callers pad the
/// trajectory beyond the run for full receding-horizon windows.
inline void leader_profile(const ScenarioSpec& spec, double t, double* p,
                           double* v, double* a) {
  const std::vector<Phase> phases = spec.effective_phases();
  double p0 = 0.0, v0 = spec.cruise_speed, t0 = 0.0;
  for (size_t j = 0; j < phases.size(); ++j) {
    const bool last = j + 1 == phases.size();
    const double t1 = t0 + phases[j].duration;
    if (t < t1 || last) {
      const double s = t - t0;
      *p = p0 + v0 * s + 0.5 * phases[j].accel * s * s;
      *v = v0 + phases[j].accel * s;
      *a = phases[j].accel;
      return;
    }
    p0 += v0 * phases[j].duration +
          0.5 * phases[j].accel * phases[j].duration * phases[j].duration;
    v0 += phases[j].accel * phases[j].duration;
    t0 = t1;
  }
  *p = p0;
  *v = v0;
  *a = 0.0;
}

/// Reference states for steps 0 .. n_steps + extra_steps. Vehicle i trails
/// the leader profile by i * initial_spacing in position with identical
/// speed and acceleration, so every reference gap is exactly the initial
/// spacing at every step.
inline ReferenceTrajectory generate_reference(const ScenarioSpec& spec,
                                              int extra_steps = 0) {
  spec.validate();
  if (extra_steps < 0)
    throw std::invalid_argument("generate_reference: extra_steps < 0");
  ReferenceTrajectory traj;
  const int total = spec.n_steps() + extra_steps;
  traj.states.reserve(static_cast<size_t>(total) + 1);
  for (int k = 0; k <= total; ++k) {
    double p = 0, v = 0, a = 0;
    leader_profile(spec, k * spec.dt, &p, &v, &a);
    PlatoonState x;
    x.positions.resize(spec.n_vehicles);
    x.velocities = Eigen::VectorXd::Constant(spec.n_vehicles, v);
    x.accelerations = Eigen::VectorXd::Constant(spec.n_vehicles, a);
    for (int i = 0; i < spec.n_vehicles; ++i)
      x.positions[i] = p - i * spec.initial_spacing;
    traj.states.push_back(x);
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Trajectory log

/// One step of a closed-loop run: the state the controls were computed from,
/// the matching reference, the three control stages, and diagnostics.
struct StepRecord {
  int step = 0;
  double time = 0.0;
  PlatoonState ref;
  PlatoonState state;
  Eigen::VectorXd u_p;  ///< MPC command
  Eigen::VectorXd u_r;  ///< after residual adjustment
  Eigen::VectorXd u_a;  ///< after actuation disturbance
  bool infeasible = false;      ///< hard QP infeasible this step
  bool fallback_hold = false;   ///< soft retry failed; command held
  bool spacing_violation = false;  ///< realized gap outside [d_min, d_max]
};

struct TrajectoryLog {
  std::vector<StepRecord> steps;
  PlatoonState final_state;  ///< state after the last recorded step
  PlatoonState final_ref;
  bool has_final = false;

  ScenarioKind scenario = ScenarioKind::uniform;
  DisturbanceKind disturbance = DisturbanceKind::none;
  ControllerKind controller = ControllerKind::mpc_only;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Closed-loop harness

struct ExperimentConfig {
  ScenarioSpec scenario;
  DisturbanceModel disturbance;
  ControllerKind controller = ControllerKind::mpc_only;
  DynamicsParams dynamics;
  MpcConfig mpc;
  QLearnerConfig qlearn;
  NnLearnerConfig nn;
  std::uint64_t seed = 1;
};

namespace detail {

inline bool spacing_violated(const PlatoonState& x, double d_min,
                             double d_max) {
  for (int i = 0; i + 1 < static_cast<int>(x.size()); ++i) {
    const double gap = x.positions[i] - x.positions[i + 1];
    if (gap < d_min - 1e-9 || gap > d_max + 1e-9) return true;
  }
  return false;
}

}  // namespace detail

/// Run one closed-loop experiment. Per step: observe X_k, compute the MPC
/// command, pass it through the residual stage (identity for mpc_only),
/// disturb it, advance the plant, and let the learner digest the transition.
/// Bit-reproducible for a fixed (config, seed): the three consumers of
/// randomness — actuation noise, exploration, network initialization — each
/// draw from an independent stream derived from the seed.
inline TrajectoryLog run_experiment(const ExperimentConfig& cfg) {
  cfg.scenario.validate();
  cfg.disturbance.validate();
  cfg.mpc.validate();
  DynamicsParams dyn = cfg.dynamics;
  dyn.n_vehicles = cfg.scenario.n_vehicles;
  dyn.dt = cfg.scenario.dt;
  dyn.validate();
  if (cfg.scenario.initial_spacing < cfg.mpc.d_min ||
      cfg.scenario.initial_spacing > cfg.mpc.d_max)
    throw std::invalid_argument(
        "run_experiment: initial spacing outside [d_min, d_max]");

  const int n = cfg.scenario.n_steps();
  const int i_count = cfg.scenario.n_vehicles;
  const SystemMatrices mats = build_system_matrices(dyn);
  const ReferenceTrajectory ref =
      generate_reference(cfg.scenario, cfg.mpc.horizon);

  Rng rng_noise(derive_stream_seed(cfg.seed, 1));
  Rng rng_explore(derive_stream_seed(cfg.seed, 2));

  PlatoonMpc mpc(mats, cfg.mpc);
  const Eigen::VectorXd u0 = ref.states[0].velocities;
  mpc.reset(u0);

  QLearner qlearner(cfg.qlearn, dyn, cfg.mpc.a_min, cfg.mpc.a_max, n);
  qlearner.reset(u0);
  // The network is only constructed (and pretrained) when it will be used.
  std::optional<NnLearner> nn;
  if (cfg.controller == ControllerKind::mpc_nn)
    nn.emplace(cfg.nn, dyn, derive_stream_seed(cfg.seed, 3));

  TrajectoryLog log;
  log.scenario = cfg.scenario.kind;
  log.disturbance = cfg.disturbance.kind;
  log.controller = cfg.controller;
  log.seed = cfg.seed;
  log.steps.reserve(static_cast<size_t>(n));

  PlatoonState x = ref.states[0];
  for (int k = 0; k < n; ++k) {
    const ReferenceWindow window =
        build_reference_window(ref, k, cfg.mpc.horizon);
    MpcStepResult mpc_res = mpc.step(x, window);
    Eigen::VectorXd u_p = mpc_res.u_p;
    if (cfg.scenario.leader_open_loop) {
      u_p[0] = ref.states[k + 1].velocities[0];
      mpc.override_command(0, u_p[0]);
    }

    Eigen::VectorXd u_r;
    switch (cfg.controller) {
      case ControllerKind::mpc_only:
        u_r = u_p;
        break;
      case ControllerKind::mpc_q:
        u_r = qlearner.adjust(u_p, x, rng_explore);
        break;
      case ControllerKind::mpc_nn:
        u_r = nn->adjust(u_p);
        break;
    }
    if (cfg.scenario.leader_open_loop) u_r[0] = u_p[0];

    Eigen::VectorXd u_a(i_count);
    for (int i = 0; i < i_count; ++i)
      u_a[i] = (cfg.scenario.leader_open_loop && i == 0)
                   ? u_r[i]
                   : cfg.disturbance.apply(u_r[i], rng_noise);

    const PlatoonState x_next = step_platoon(x, u_a, mats);
    if (cfg.controller == ControllerKind::mpc_q)
      qlearner.observe(x, x_next);
    else if (cfg.controller == ControllerKind::mpc_nn)
      nn->observe(x, x_next);

    StepRecord rec;
    rec.step = k;
    rec.time = k * cfg.scenario.dt;
    rec.ref = ref.states[k];
    rec.state = x;
    rec.u_p = u_p;
    rec.u_r = u_r;
    rec.u_a = u_a;
    rec.infeasible = mpc_res.diagnostics.infeasible;
    rec.fallback_hold = mpc_res.diagnostics.fallback_hold;
    rec.spacing_violation =
        detail::spacing_violated(x, cfg.mpc.d_min, cfg.mpc.d_max);
    log.steps.push_back(std::move(rec));

    x = x_next;
  }
  log.final_state = x;
  log.final_ref = ref.states[n];
  log.has_final = true;
  return log;
}

}  // namespace pperl

#endif  // PPERL_SCENARIO_HPP_
