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

#ifndef PPERL_CONFIG_HPP_
#define PPERL_CONFIG_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "pperl/disturbance.hpp"
#include "pperl/dynamics.hpp"
#include "pperl/io.hpp"
#include "pperl/mpc.hpp"
#include "pperl/residual_nn.hpp"
#include "pperl/residual_q.hpp"
#include "pperl/scenario.hpp"

namespace pperl {

/**
 * Harness configuration: one JSON document covering the scenario, the
 * disturbance, the controllers to run, all controller hyperparameters, the
 * seed list, and the output directory. Every field is optional in the file;
 * missing fields keep their built-in defaults, so an empty object is a valid
 * config describing the stock experiment.
 */

struct HarnessConfig {
  ScenarioSpec scenario;
  DisturbanceModel disturbance;
  std::vector<ControllerKind> controllers{
      ControllerKind::mpc_only, ControllerKind::mpc_nn, ControllerKind::mpc_q};
  DynamicsParams dynamics;
  MpcConfig mpc;
  QLearnerConfig qlearn;
  NnLearnerConfig nn;
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir = "runs";

  void validate() const {
    scenario.validate();
    disturbance.validate();
    mpc.validate();
    qlearn.validate();
    nn.validate();
    if (controllers.empty())
      throw std::invalid_argument("HarnessConfig: no controllers selected");
    if (seeds.empty())
      throw std::invalid_argument("HarnessConfig: seed list empty");
    if (out_dir.empty())
      throw std::invalid_argument("HarnessConfig: empty output directory");
  }

  /// Build the per-run config for one (controller, seed) cell.
  ExperimentConfig experiment(ControllerKind controller,
                              std::uint64_t seed) const {
    ExperimentConfig e;
    e.scenario = scenario;
    e.disturbance = disturbance;
    e.controller = controller;
    e.dynamics = dynamics;
    e.mpc = mpc;
    e.qlearn = qlearn;
    e.nn = nn;
    e.seed = seed;
    return e;
  }
};

// ---------------------------------------------------------------------------
// JSON mapping
//
// Writers emit every field; readers accept any subset. The round-trip
// guarantee is parse(serialize(c)) == c for all valid configs.

inline void to_json(nlohmann::json& j, const ScenarioSpec& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)},
                     {"duration", s.duration},
                     {"dt", s.dt},
                     {"n_vehicles", s.n_vehicles},
                     {"initial_spacing", s.initial_spacing},
                     {"cruise_speed", s.cruise_speed},
                     {"leader_open_loop", s.leader_open_loop}};
  if (!s.phases.empty()) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Phase& p : s.phases)
      arr.push_back({{"duration", p.duration}, {"accel", p.accel}});
    j["phases"] = arr;
  }
}

inline void from_json(const nlohmann::json& j, ScenarioSpec& s) {
  s.kind = scenario_kind_from_string(j.value("kind", to_string(s.kind)));
  s.duration = j.value("duration", s.duration);
  s.dt = j.value("dt", s.dt);
  s.n_vehicles = j.value("n_vehicles", s.n_vehicles);
  s.initial_spacing = j.value("initial_spacing", s.initial_spacing);
  s.cruise_speed = j.value("cruise_speed", s.cruise_speed);
  s.leader_open_loop = j.value("leader_open_loop", s.leader_open_loop);
  s.phases.clear();
  if (j.contains("phases"))
    for (const auto& pj : j.at("phases")) {
      Phase p;
      p.duration = pj.value("duration", 0.0);
      p.accel = pj.value("accel", 0.0);
      s.phases.push_back(p);
    }
}

inline void to_json(nlohmann::json& j, const DisturbanceModel& d) {
  j = nlohmann::json{{"kind", to_string(d.kind)},
                     {"noise_sigma", d.noise_sigma}};
}

inline void from_json(const nlohmann::json& j, DisturbanceModel& d) {
  d.kind = disturbance_kind_from_string(j.value("kind", to_string(d.kind)));
  d.noise_sigma = j.value("noise_sigma", d.noise_sigma);
}

inline void to_json(nlohmann::json& j, const DynamicsParams& d) {
  j = nlohmann::json{
      {"dt", d.dt}, {"tau", d.tau}, {"n_vehicles", d.n_vehicles}};
}

inline void from_json(const nlohmann::json& j, DynamicsParams& d) {
  d.dt = j.value("dt", d.dt);
  d.tau = j.value("tau", d.tau);
  d.n_vehicles = j.value("n_vehicles", d.n_vehicles);
}

inline void to_json(nlohmann::json& j, const MpcConfig& m) {
  j = nlohmann::json{{"horizon", m.horizon},
                     {"q1", m.q1},
                     {"q2", m.q2},
                     {"q3", m.q3},
                     {"q4", m.q4},
                     {"d_min", m.d_min},
                     {"d_max", m.d_max},
                     {"v_min", m.v_min},
                     {"v_max", m.v_max},
                     {"a_min", m.a_min},
                     {"a_max", m.a_max},
                     {"weight_final_block", m.weight_final_block}};
}

inline void from_json(const nlohmann::json& j, MpcConfig& m) {
  m.horizon = j.value("horizon", m.horizon);
  m.q1 = j.value("q1", m.q1);
  m.q2 = j.value("q2", m.q2);
  m.q3 = j.value("q3", m.q3);
  m.q4 = j.value("q4", m.q4);
  m.d_min = j.value("d_min", m.d_min);
  m.d_max = j.value("d_max", m.d_max);
  m.v_min = j.value("v_min", m.v_min);
  m.v_max = j.value("v_max", m.v_max);
  m.a_min = j.value("a_min", m.a_min);
  m.a_max = j.value("a_max", m.a_max);
  m.weight_final_block = j.value("weight_final_block", m.weight_final_block);
}

inline void to_json(nlohmann::json& j, const QLearnerConfig& q) {
  j = nlohmann::json{{"sigma", q.sigma},
                     {"n_states", q.n_states},
                     {"delta", q.delta},
                     {"action_span", q.action_span},
                     {"alpha", q.alpha},
                     {"gamma_discount", q.gamma_discount},
                     {"epsilon_start", q.epsilon_start},
                     {"epsilon_end", q.epsilon_end},
                     {"update_period", q.update_period}};
}

inline void from_json(const nlohmann::json& j, QLearnerConfig& q) {
  q.sigma = j.value("sigma", q.sigma);
  q.n_states = j.value("n_states", q.n_states);
  q.delta = j.value("delta", q.delta);
  q.action_span = j.value("action_span", q.action_span);
  q.alpha = j.value("alpha", q.alpha);
  q.gamma_discount = j.value("gamma_discount", q.gamma_discount);
  q.epsilon_start = j.value("epsilon_start", q.epsilon_start);
  q.epsilon_end = j.value("epsilon_end", q.epsilon_end);
  q.update_period = j.value("update_period", q.update_period);
}

inline void to_json(nlohmann::json& j, const NnLearnerConfig& n) {
  j = nlohmann::json{{"sizes", n.sizes},
                     {"learning_rate", n.learning_rate},
                     {"update_period", n.update_period},
                     {"online_epochs", n.online_epochs},
                     {"pretrain_samples", n.pretrain_samples},
                     {"pretrain_epochs", n.pretrain_epochs}};
}

inline void from_json(const nlohmann::json& j, NnLearnerConfig& n) {
  n.sizes = j.value("sizes", n.sizes);
  n.learning_rate = j.value("learning_rate", n.learning_rate);
  n.update_period = j.value("update_period", n.update_period);
  n.online_epochs = j.value("online_epochs", n.online_epochs);
  n.pretrain_samples = j.value("pretrain_samples", n.pretrain_samples);
  n.pretrain_epochs = j.value("pretrain_epochs", n.pretrain_epochs);
}

inline void to_json(nlohmann::json& j, const HarnessConfig& c) {
  std::vector<std::string> controllers;
  for (ControllerKind k : c.controllers)
    controllers.push_back(to_string(k));
  j = nlohmann::json{{"scenario", c.scenario},
                     {"disturbance", c.disturbance},
                     {"controllers", controllers},
                     {"dynamics", c.dynamics},
                     {"mpc", c.mpc},
                     {"qlearn", c.qlearn},
                     {"nn", c.nn},
                     {"seeds", c.seeds},
                     {"out_dir", c.out_dir}};
}

inline void from_json(const nlohmann::json& j, HarnessConfig& c) {
  if (j.contains("scenario")) j.at("scenario").get_to(c.scenario);
  if (j.contains("disturbance")) j.at("disturbance").get_to(c.disturbance);
  if (j.contains("controllers")) {
    c.controllers.clear();
    for (const auto& s : j.at("controllers"))
      c.controllers.push_back(
          controller_kind_from_string(s.get<std::string>()));
  }
  if (j.contains("dynamics")) j.at("dynamics").get_to(c.dynamics);
  if (j.contains("mpc")) j.at("mpc").get_to(c.mpc);
  if (j.contains("qlearn")) j.at("qlearn").get_to(c.qlearn);
  if (j.contains("nn")) j.at("nn").get_to(c.nn);
  if (j.contains("seeds")) j.at("seeds").get_to(c.seeds);
  c.out_dir = j.value("out_dir", c.out_dir);
}

/// Canonical serialized form (sorted keys, 2-space indent) — what the config
/// hash in the run manifest is computed over.
inline std::string serialize_config(const HarnessConfig& c) {
  const nlohmann::json j = c;
  return j.dump(2) + "\n";
}

inline HarnessConfig parse_config(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  HarnessConfig c = j.get<HarnessConfig>();
  c.validate();
  return c;
}

inline HarnessConfig load_config(const std::string& path) {
  return parse_config(read_file(path));
}

}  // namespace pperl

#endif  // PPERL_CONFIG_HPP_
