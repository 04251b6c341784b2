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

#ifndef PPERL_RESIDUAL_Q_HPP_
#define PPERL_RESIDUAL_Q_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pperl/dynamics.hpp"
#include "pperl/rng.hpp"

namespace pperl {

/**
 * Online tabular Q-learning residual stage.
 *
 * The stage sits between the MPC and the actuator: it adds a small learned
 * speed offset to each commanded speed so that the speed the actuator
 * actually delivers matches what the MPC asked for. The continuous speed
 * control error is squashed into [-sigma, +sigma] by a sigmoid and
 * discretized by maximum triangular membership; actions are a uniform grid of
 * additive speed offsets containing zero. Rewards penalize the discrepancy
 * between delivered and requested speed, experience is buffered and the table
 * updated on a fixed cadence.
 *
 * An all-zero table must act as the identity, so action selection over a row
 * whose entries are all equal returns the zero offset; genuine value ties are
 * broken by lowest index.
 */

// ---------------------------------------------------------------------------
// State encoding

struct FuzzyEncoder {
  double sigma = 1.0;        ///< squash range bound (m/s)
  Eigen::VectorXd centers;   ///< membership centers, increasing over [-σ, σ]

  static FuzzyEncoder uniform(double sigma, int n_states) {
    if (n_states < 3)
      throw std::invalid_argument("FuzzyEncoder: need at least 3 states");
    if (sigma <= 0) throw std::invalid_argument("FuzzyEncoder: sigma <= 0");
    FuzzyEncoder e;
    e.sigma = sigma;
    e.centers = Eigen::VectorXd::LinSpaced(n_states, -sigma, sigma);
    return e;
  }

  int n_states() const { return static_cast<int>(centers.size()); }

  void validate() const {
    if (sigma <= 0) throw std::invalid_argument("FuzzyEncoder: sigma <= 0");
    if (n_states() < 3)
      throw std::invalid_argument("FuzzyEncoder: need at least 3 states");
    for (int i = 1; i < n_states(); ++i)
      if (!(centers[i] > centers[i - 1]))
        throw std::invalid_argument("FuzzyEncoder: centers not increasing");
    if (std::abs(centers[0] + sigma) > 1e-12 ||
        std::abs(centers[n_states() - 1] - sigma) > 1e-12)
      throw std::invalid_argument("FuzzyEncoder: centers must span [-σ, σ]");
  }

  /// Sigmoid squash of the raw error into (-σ, +σ).
  double squash(double speed_error) const {
    return sigma * (2.0 / (1.0 + std::exp(-speed_error)) - 1.0);
  }

  /// Triangular membership of center i at squashed coordinate x; the outer
  /// memberships shoulder off to 1 beyond the end centers.
  double membership(int i, double x) const {
    const int n = n_states();
    const double c = centers[i];
    if (i == 0 && x <= c) return 1.0;
    if (i == n - 1 && x >= c) return 1.0;
    const double left = i > 0 ? centers[i - 1] : c - 1.0;
    const double right = i + 1 < n ? centers[i + 1] : c + 1.0;
    if (x < c) return std::max(0.0, (x - left) / (c - left));
    return std::max(0.0, (right - x) / (right - c));
  }
};

/// Squash, then assign the state of maximum membership (ties → lower index).
inline int encode_state(double speed_error, const FuzzyEncoder& encoder) {
  const double x = encoder.squash(speed_error);
  int best = 0;
  double best_mu = encoder.membership(0, x);
  for (int i = 1; i < encoder.n_states(); ++i) {
    const double mu = encoder.membership(i, x);
    if (mu > best_mu) {
      best_mu = mu;
      best = i;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Action grid

/// Uniform grid of additive speed offsets k·Δ, k integer, zero included.
struct ActionGrid {
  double delta = 0.1;  ///< discretization interval (m/s)
  long k_lo = -20;     ///< lowest action = k_lo · Δ
  long k_hi = 20;      ///< highest action = k_hi · Δ

  /// Derive the offset range from acceleration bounds: one correction may
  /// move the commanded speed by at most `horizon_factor` steps of maximal
  /// acceleration.
  static ActionGrid from_accel_bounds(double a_min, double a_max, double dt,
                                      double horizon_factor = 5.0,
                                      double delta = 0.1) {
    if (delta <= 0) throw std::invalid_argument("ActionGrid: delta <= 0");
    ActionGrid g;
    g.delta = delta;
    g.k_lo = std::lround(a_min * dt * horizon_factor / delta);
    g.k_hi = std::lround(a_max * dt * horizon_factor / delta);
    g.validate();
    return g;
  }

  void validate() const {
    if (delta <= 0) throw std::invalid_argument("ActionGrid: delta <= 0");
    if (k_lo > 0 || k_hi < 0)
      throw std::invalid_argument("ActionGrid: zero must be on the grid");
    if (k_lo >= k_hi)
      throw std::invalid_argument("ActionGrid: empty action range");
  }

  int n_actions() const { return static_cast<int>(k_hi - k_lo) + 1; }
  int zero_index() const { return static_cast<int>(-k_lo); }
  double value(int idx) const {
    return static_cast<double>(k_lo + idx) * delta;
  }
};

// ---------------------------------------------------------------------------
// Table, experience, updates

struct QTable {
  Eigen::MatrixXd values;  ///< n_states x n_actions
  double alpha = 0.2;            ///< learning rate
  double gamma_discount = 0.8;   ///< discount factor
  double epsilon = 0.0;          ///< exploration probability
  double max_abs_reward = 0.0;   ///< largest |r| absorbed so far

  static QTable zeros(int n_states, int n_actions) {
    QTable t;
    t.values = Eigen::MatrixXd::Zero(n_states, n_actions);
    return t;
  }

  void validate() const {
    if (!(alpha > 0 && alpha <= 1))
      throw std::invalid_argument("QTable: alpha outside (0, 1]");
    if (!(gamma_discount >= 0 && gamma_discount < 1))
      throw std::invalid_argument("QTable: gamma outside [0, 1)");
    if (!(epsilon >= 0 && epsilon <= 1))
      throw std::invalid_argument("QTable: epsilon outside [0, 1]");
    if (!values.allFinite())
      throw std::invalid_argument("QTable: non-finite values");
  }
};

struct Experience {
  int state = 0;
  int action = 0;
  double reward = 0.0;
  int next_state = 0;
};

struct ExperienceBuffer {
  std::vector<Experience> items;

  void push(const Experience& e) { items.push_back(e); }
  bool empty() const { return items.empty(); }
  int size() const { return static_cast<int>(items.size()); }
  void clear() { items.clear(); }
};

/// Greedy argmax over a table row, ties broken by lowest index.
inline int greedy_action(const QTable& table, int state) {
  int best = 0;
  double best_v = table.values(state, 0);
  for (int a = 1; a < table.values.cols(); ++a)
    if (table.values(state, a) > best_v) {
      best_v = table.values(state, a);
      best = a;
    }
  return best;
}

/// ε-greedy action choice; the greedy branch breaks ties by lowest index.
inline int select_action(const QTable& table, int state, Rng& rng) {
  if (state < 0 || state >= table.values.rows())
    throw std::invalid_argument("select_action: state out of range");
  if (table.epsilon > 0 && rng.uniform() < table.epsilon)
    return static_cast<int>(rng.uniform_int(
        static_cast<std::uint64_t>(table.values.cols())));
  return greedy_action(table, state);
}

/// Reward for one delivered-vs-requested speed pair: zero when they agree,
/// more negative the larger the discrepancy.
inline double compute_reward(double v_actual, double v_commanded) {
  return -std::abs(v_actual - v_commanded);
}

/// One-step temporal-difference sweep over the buffer in collection order;
/// the buffer is emptied. Verifies the boundedness invariant: with |r| <= R
/// and values entering within [lo, hi], every value stays inside
/// [min(lo, -R/(1-γ)), max(hi, R/(1-γ))] — each write is a convex
/// combination of the old value and a target already inside that box. With
/// the nonpositive rewards used here the upper edge is simply max(hi, 0).
inline void update_qtable(QTable& table, ExperienceBuffer& buffer) {
  table.validate();
  const double entry_lo = table.values.minCoeff();
  const double entry_hi = table.values.maxCoeff();
  for (const Experience& e : buffer.items) {
    const double best_next = table.values.row(e.next_state).maxCoeff();
    double& q = table.values(e.state, e.action);
    q += table.alpha * (e.reward + table.gamma_discount * best_next - q);
    table.max_abs_reward = std::max(table.max_abs_reward, std::abs(e.reward));
  }
  buffer.clear();
  const double radius = table.max_abs_reward / (1.0 - table.gamma_discount);
  if (table.values.minCoeff() < std::min(entry_lo, -radius) - 1e-9 ||
      table.values.maxCoeff() > std::max(entry_hi, radius) + 1e-9)
    throw std::logic_error("update_qtable: boundedness invariant violated");
}

/// Add each vehicle's selected offset to its commanded speed. All vehicles
/// share one table but are encoded and selected independently. Rows with all
/// entries equal (an untrained state) select the zero offset so the untrained
/// stage is exactly the identity; trained rows go through ε-greedy selection.
/// `chosen` (optional) receives the action indices for experience collection.
inline Eigen::VectorXd apply_residual(const Eigen::VectorXd& u_p,
                                      const Eigen::VectorXd& speed_errors,
                                      const QTable& table,
                                      const FuzzyEncoder& encoder,
                                      const ActionGrid& grid, Rng& rng,
                                      std::vector<int>* chosen = nullptr) {
  if (u_p.size() != speed_errors.size())
    throw std::invalid_argument("apply_residual: length mismatch");
  if (table.values.cols() != grid.n_actions() ||
      table.values.rows() != encoder.n_states())
    throw std::invalid_argument("apply_residual: table shape mismatch");
  Eigen::VectorXd u_r(u_p.size());
  if (chosen) chosen->assign(static_cast<size_t>(u_p.size()), 0);
  for (int i = 0; i < u_p.size(); ++i) {
    const int s = encode_state(speed_errors[i], encoder);
    const auto row = table.values.row(s);
    const bool untrained = (row.maxCoeff() - row.minCoeff()) == 0.0;
    const int a = untrained ? grid.zero_index() : select_action(table, s, rng);
    if (chosen) (*chosen)[static_cast<size_t>(i)] = a;
    u_r[i] = u_p[i] + grid.value(a);
  }
  return u_r;
}

// ---------------------------------------------------------------------------
// Snapshot format

/// Plain-text snapshot: header "n_states n_actions sigma delta", then the
/// value matrix row by row.
inline void save_qtable(const std::string& path, const QTable& table,
                        double sigma, double delta) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_qtable: cannot open " + path);
  os.precision(17);
  os << table.values.rows() << " " << table.values.cols() << " " << sigma
     << " " << delta << "\n";
  for (int s = 0; s < table.values.rows(); ++s) {
    for (int a = 0; a < table.values.cols(); ++a)
      os << (a ? " " : "") << table.values(s, a);
    os << "\n";
  }
}

struct QTableSnapshot {
  QTable table;
  double sigma = 0.0;
  double delta = 0.0;
};

inline QTableSnapshot load_qtable(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_qtable: cannot open " + path);
  int n_states = 0, n_actions = 0;
  QTableSnapshot snap;
  if (!(is >> n_states >> n_actions >> snap.sigma >> snap.delta))
    throw std::runtime_error("load_qtable: bad header");
  snap.table.values.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) is >> snap.table.values(s, a);
  if (!is) throw std::runtime_error("load_qtable: truncated file");
  return snap;
}

// ---------------------------------------------------------------------------
// Harness-facing residual stage

struct QLearnerConfig {
  double sigma = 1.0;          ///< squash bound (m/s)
  int n_states = 7;            ///< membership count
  double delta = 0.1;          ///< action interval (m/s)
  double action_span = 5.0;    ///< grid bound factor on a·Δt
  double alpha = 0.2;
  double gamma_discount = 0.8;
  double epsilon_start = 0.3;
  double epsilon_end = 0.01;
  int update_period = 20;      ///< steps between table updates

  void validate() const {
    if (update_period < 1)
      throw std::invalid_argument("QLearnerConfig: update_period < 1");
    if (epsilon_start < 0 || epsilon_start > 1 || epsilon_end < 0 ||
        epsilon_end > 1)
      throw std::invalid_argument("QLearnerConfig: epsilon outside [0, 1]");
  }
};

/// Stateful wrapper driving the table inside a closed-loop run. Per step the
/// harness calls adjust() to turn u_p into u_r, advances the plant with the
/// disturbed control, then calls observe() with the new state so the stage
/// can reconstruct the speed the actuator delivered and buffer the
/// transition.
///
/// The delivered speed is recovered from the observed evolution: the
/// acceleration update a' = (Δt/τ)(u − v) inverts to u = v + (τ/Δt) a', so no
/// privileged access to the disturbance is needed. Exploration stays off
/// until the first table update so the untrained stage is the identity; it
/// then decays linearly from epsilon_start to epsilon_end over the run.
class QLearner {
 public:
  QLearner(const QLearnerConfig& cfg, const DynamicsParams& dyn,
           double a_min, double a_max, int total_steps)
      : cfg_(cfg),
        dyn_(dyn),
        total_steps_(total_steps),
        encoder_(FuzzyEncoder::uniform(cfg.sigma, cfg.n_states)),
        grid_(ActionGrid::from_accel_bounds(a_min, a_max, dyn.dt,
                                            cfg.action_span, cfg.delta)),
        table_(QTable::zeros(encoder_.n_states(), grid_.n_actions())) {
    cfg.validate();
    table_.alpha = cfg.alpha;
    table_.gamma_discount = cfg.gamma_discount;
    last_u_p_ = Eigen::VectorXd::Zero(dyn.n_vehicles);
  }

  /// Seed the held previous command (the harness's initial u_prev).
  void reset(const Eigen::VectorXd& u0) {
    if (u0.size() != last_u_p_.size())
      throw std::invalid_argument("QLearner::reset: wrong length");
    last_u_p_ = u0;
  }

  /// Residual-adjust the MPC command given the currently observed speeds.
  Eigen::VectorXd adjust(const Eigen::VectorXd& u_p, const PlatoonState& x,
                         Rng& rng) {
    table_.epsilon = effective_epsilon();
    pending_errors_ = last_u_p_ - x.velocities;
    const Eigen::VectorXd u_r = apply_residual(
        u_p, pending_errors_, table_, encoder_, grid_, rng, &pending_actions_);
    pending_u_p_ = u_p;
    return u_r;
  }

  /// Record the outcome of the step taken after adjust(): reconstruct the
  /// delivered speed from (x_k, x_{k+1}), buffer one transition per vehicle,
  /// and run the scheduled update every update_period steps.
  void observe(const PlatoonState& x_before, const PlatoonState& x_after) {
    const double inv_gain = dyn_.tau / dyn_.dt;
    for (int i = 0; i < pending_u_p_.size(); ++i) {
      const double delivered =
          x_before.velocities[i] + inv_gain * x_after.accelerations[i];
      Experience e;
      e.state = encode_state(pending_errors_[i], encoder_);
      e.action = pending_actions_[static_cast<size_t>(i)];
      e.reward = compute_reward(delivered, pending_u_p_[i]);
      e.next_state =
          encode_state(pending_u_p_[i] - x_after.velocities[i], encoder_);
      buffer_.push(e);
    }
    last_u_p_ = pending_u_p_;
    ++steps_;
    if (steps_ % cfg_.update_period == 0 && !buffer_.empty()) {
      update_qtable(table_, buffer_);
      ++updates_;
    }
  }

  const QTable& table() const { return table_; }
  QTable& table() { return table_; }
  const FuzzyEncoder& encoder() const { return encoder_; }
  const ActionGrid& grid() const { return grid_; }
  int updates_done() const { return updates_; }

  double effective_epsilon() const {
    if (updates_ == 0) return 0.0;
    if (total_steps_ <= 1) return cfg_.epsilon_end;
    const double frac =
        std::min(1.0, static_cast<double>(steps_) / (total_steps_ - 1));
    return cfg_.epsilon_start + frac * (cfg_.epsilon_end - cfg_.epsilon_start);
  }

 private:
  QLearnerConfig cfg_;
  DynamicsParams dyn_;
  int total_steps_ = 0;
  int steps_ = 0;
  int updates_ = 0;
  FuzzyEncoder encoder_;
  ActionGrid grid_;
  QTable table_;
  ExperienceBuffer buffer_;
  Eigen::VectorXd last_u_p_;
  Eigen::VectorXd pending_u_p_;
  Eigen::VectorXd pending_errors_;
  std::vector<int> pending_actions_;
};

}  // namespace pperl

#endif  // PPERL_RESIDUAL_Q_HPP_
