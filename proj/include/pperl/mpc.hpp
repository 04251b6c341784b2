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

#ifndef PPERL_MPC_HPP_
#define PPERL_MPC_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "pperl/dynamics.hpp"
#include "pperl/qp.hpp"

namespace pperl {

/**
 * Centralized platoon MPC, condensed to a dense QP.
 *
 * Over an N-step horizon the stacked predicted states are an affine function
 * of the control increments:
 *
 *     X = Phi x_k + Lambda u_{k-1} + Gamma dU
 *
 * where dU stacks the per-step increment vectors and the control applied at
 * prediction step n is u_{k-1} plus the accumulated increments. Substituting
 * into the tracking cost
 *
 *     sum_n (X_n - X*_n)' Q (X_n - X*_n)  +  dU' Psi dU
 *
 * gives a strictly convex dense QP in dU alone. Spacing, speed and
 * acceleration bounds on the predicted states map to linear inequalities on
 * dU through the same affine relation.
 *
 * The stage weight is applied to predicted states k+1 .. k+N with the final
 * block zeroed (the printed form); `weight_final_block` switches the last
 * block on for sensitivity studies. When the hard-constrained QP is
 * infeasible, the spacing rows are softened with a large quadratic slack
 * penalty and the solve is retried; if even that fails the controller holds
 * the previous command. Both conditions are reported in the diagnostics.
 */

// ---------------------------------------------------------------------------
// Configuration

struct MpcConfig {
  int horizon = 10;    ///< prediction steps N
  double q1 = 1.0;     ///< weight on position error
  double q2 = 1.0;     ///< weight on velocity error
  double q3 = 0.1;     ///< weight on acceleration error
  double q4 = 0.1;     ///< weight on control increment
  double d_min = 15.0; ///< minimum inter-vehicle spacing (m)
  double d_max = 30.0; ///< maximum inter-vehicle spacing (m)
  double v_min = 0.0;  ///< speed lower bound (m/s)
  double v_max = 30.0; ///< speed upper bound (m/s)
  double a_min = -4.0; ///< acceleration lower bound (m/s^2)
  double a_max = 4.0;  ///< acceleration upper bound (m/s^2)
  /// Weight the final predicted state like the others instead of zeroing it.
  bool weight_final_block = false;

  void validate() const {
    if (horizon < 1) throw std::invalid_argument("MpcConfig: horizon < 1");
    if (q1 < 0 || q2 < 0 || q3 < 0 || q4 < 0)
      throw std::invalid_argument("MpcConfig: negative weight");
    if (q1 + q2 + q3 + q4 <= 0)
      throw std::invalid_argument("MpcConfig: all weights zero");
    if (!(d_min < d_max))
      throw std::invalid_argument("MpcConfig: d_min must be < d_max");
    if (!(v_min < v_max))
      throw std::invalid_argument("MpcConfig: v_min must be < v_max");
    if (!(a_min < a_max))
      throw std::invalid_argument("MpcConfig: a_min must be < a_max");
  }
};

// ---------------------------------------------------------------------------
// Prediction

/// Stacked prediction operators: X = phi x_k + lambda u_{k-1} + gamma dU,
/// with X the 3I*N vector of predicted states k+1 .. k+N.
struct PredictionMatrices {
  Eigen::MatrixXd phi;     ///< 3I*N x 3I
  Eigen::MatrixXd lambda;  ///< 3I*N x I
  Eigen::MatrixXd gamma;   ///< 3I*N x I*N (block lower triangular)
  int horizon = 0;
  int state_dim = 0;       ///< 3I
  int n_controls = 0;      ///< I
};

/// Build the closed-form prediction operators from the lifted platoon model.
///
/// Block row n (1-based) of phi is A^n; of lambda is (sum_{j<n} A^j) B; block
/// (n, m) of gamma is (sum_{j<=n-m} A^j) B for m <= n and zero above the
/// diagonal.
inline PredictionMatrices build_prediction_matrices(const SystemMatrices& mats,
                                                    int horizon) {
  if (horizon < 1)
    throw std::invalid_argument("build_prediction_matrices: horizon < 1");
  const int s = mats.state_dim();
  const int c = mats.n_vehicles();
  PredictionMatrices pm;
  pm.horizon = horizon;
  pm.state_dim = s;
  pm.n_controls = c;
  pm.phi.resize(s * horizon, s);
  pm.lambda.resize(s * horizon, c);
  pm.gamma = Eigen::MatrixXd::Zero(s * horizon, c * horizon);

  // Running power A^n and partial geometric sum S_n = I + A + ... + A^(n-1).
  Eigen::MatrixXd a_pow = Eigen::MatrixXd::Identity(s, s);
  Eigen::MatrixXd a_sum = Eigen::MatrixXd::Zero(s, s);
  std::vector<Eigen::MatrixXd> sum_b(horizon + 1);  // sum_b[k] = S_k B
  for (int n = 1; n <= horizon; ++n) {
    a_sum += a_pow;                       // S_n
    a_pow = mats.a_platoon * a_pow;       // A^n
    pm.phi.middleRows((n - 1) * s, s) = a_pow;
    sum_b[n] = a_sum * mats.b_platoon;
    pm.lambda.middleRows((n - 1) * s, s) = sum_b[n];
  }
  for (int n = 1; n <= horizon; ++n)
    for (int m = 1; m <= n; ++m)
      pm.gamma.block((n - 1) * s, (m - 1) * c, s, c) = sum_b[n - m + 1];
  return pm;
}

// ---------------------------------------------------------------------------
// Reference

/// Per-step reference states for a whole run (step 0 .. T).
struct ReferenceTrajectory {
  std::vector<PlatoonState> states;

  int size() const { return static_cast<int>(states.size()); }
};

/// Stacked reference states X*_{k+1} .. X*_{k+N}.
struct ReferenceWindow {
  Eigen::VectorXd stacked;  ///< length 3I*N
  int horizon = 0;
  int state_dim = 0;

  Eigen::VectorXd block(int n) const {  // n = 1..N
    return stacked.segment((n - 1) * state_dim, state_dim);
  }
};

/// Stack reference states k+1 .. k+N; past the trajectory end the final
/// reference state is held.
inline ReferenceWindow build_reference_window(const ReferenceTrajectory& ref,
                                              int k, int horizon) {
  if (ref.states.empty())
    throw std::invalid_argument("build_reference_window: empty reference");
  const int s = static_cast<int>(ref.states.front().size()) * 3;
  ReferenceWindow w;
  w.horizon = horizon;
  w.state_dim = s;
  w.stacked.resize(s * horizon);
  const int last = ref.size() - 1;
  for (int n = 1; n <= horizon; ++n) {
    const int idx = std::min(k + n, last);
    w.stacked.segment((n - 1) * s, s) = ref.states[idx].serialize();
  }
  return w;
}

// ---------------------------------------------------------------------------
// Constraints

/// (I-1) x I spacing difference operator: -1 on the diagonal, +1 on the first
/// superdiagonal, so row i yields p_{i+1} - p_i = -(gap between i and i+1).
inline Eigen::MatrixXd spacing_matrix(int n_vehicles) {
  if (n_vehicles < 1)
    throw std::invalid_argument("spacing_matrix: need at least one vehicle");
  Eigen::MatrixXd x =
      Eigen::MatrixXd::Zero(std::max(0, n_vehicles - 1), n_vehicles);
  for (int i = 0; i + 1 < n_vehicles; ++i) {
    x(i, i) = -1.0;
    x(i, i + 1) = 1.0;
  }
  return x;
}

/// Per-step and horizon-stacked state constraints. Rows encode, in order:
/// spacing lower, spacing upper, speed lower, speed upper, acceleration
/// lower, acceleration upper — each as  g_check x <= -g_offset,  so that a
/// state satisfying the physical bounds satisfies every row.
struct ConstraintSet {
  Eigen::MatrixXd spacing;    ///< the (I-1) x I difference operator
  Eigen::MatrixXd g_check;    ///< per-step row block, rows x 3I
  Eigen::VectorXd g_offset;   ///< per-step offsets g (constraint is <= -g)
  Eigen::MatrixXd g_bar;      ///< block-diagonal stack over the horizon
  Eigen::VectorXd g_vec;      ///< stacked offsets
  int rows_per_step = 0;
  int spacing_rows_per_step = 0;  ///< leading rows of each step block

  /// True when stacked row r bounds an inter-vehicle gap (the rows softened
  /// on infeasibility).
  bool is_spacing_row(int r) const {
    return rows_per_step > 0 && (r % rows_per_step) < spacing_rows_per_step;
  }

  static ConstraintSet build(const MpcConfig& cfg, int n_vehicles,
                             int horizon) {
    cfg.validate();
    const int i = n_vehicles;
    const int s = 3 * i;
    const int gaps = i - 1;
    ConstraintSet cs;
    cs.spacing = spacing_matrix(i);
    cs.spacing_rows_per_step = 2 * gaps;
    cs.rows_per_step = 2 * gaps + 4 * i;
    cs.g_check = Eigen::MatrixXd::Zero(cs.rows_per_step, s);
    cs.g_offset.resize(cs.rows_per_step);

    int r = 0;
    // d_min <= p_i - p_{i+1}  ==>  (spacing p) <= -d_min
    cs.g_check.block(r, 0, gaps, i) = cs.spacing;
    cs.g_offset.segment(r, gaps).setConstant(cfg.d_min);
    r += gaps;
    // p_i - p_{i+1} <= d_max  ==>  -(spacing p) <= d_max
    cs.g_check.block(r, 0, gaps, i) = -cs.spacing;
    cs.g_offset.segment(r, gaps).setConstant(-cfg.d_max);
    r += gaps;
    // v_min <= v  ==>  -v <= -v_min
    cs.g_check.block(r, i, i, i) = -Eigen::MatrixXd::Identity(i, i);
    cs.g_offset.segment(r, i).setConstant(cfg.v_min);
    r += i;
    // v <= v_max
    cs.g_check.block(r, i, i, i) = Eigen::MatrixXd::Identity(i, i);
    cs.g_offset.segment(r, i).setConstant(-cfg.v_max);
    r += i;
    // a_min <= a
    cs.g_check.block(r, 2 * i, i, i) = -Eigen::MatrixXd::Identity(i, i);
    cs.g_offset.segment(r, i).setConstant(cfg.a_min);
    r += i;
    // a <= a_max
    cs.g_check.block(r, 2 * i, i, i) = Eigen::MatrixXd::Identity(i, i);
    cs.g_offset.segment(r, i).setConstant(-cfg.a_max);

    cs.g_bar = Eigen::MatrixXd::Zero(cs.rows_per_step * horizon, s * horizon);
    cs.g_vec.resize(cs.rows_per_step * horizon);
    for (int n = 0; n < horizon; ++n) {
      cs.g_bar.block(n * cs.rows_per_step, n * s, cs.rows_per_step, s) =
          cs.g_check;
      cs.g_vec.segment(n * cs.rows_per_step, cs.rows_per_step) = cs.g_offset;
    }
    return cs;
  }
};

// ---------------------------------------------------------------------------
// QP assembly

/// Horizon-stacked stage weight: diag{Q, ..., Q, 0} over predicted states
/// k+1 .. k+N (final block optionally weighted), with Q = diag(q1 on
/// positions, q2 on speeds, q3 on accelerations) in the grouped ordering.
inline Eigen::VectorXd stage_weight_diagonal(const MpcConfig& cfg,
                                             int n_vehicles) {
  const int i = n_vehicles;
  Eigen::VectorXd q(3 * i);
  q.segment(0, i).setConstant(cfg.q1);
  q.segment(i, i).setConstant(cfg.q2);
  q.segment(2 * i, i).setConstant(cfg.q3);
  Eigen::VectorXd omega(3 * i * cfg.horizon);
  for (int n = 0; n < cfg.horizon; ++n)
    omega.segment(n * 3 * i, 3 * i) =
        (n + 1 < cfg.horizon || cfg.weight_final_block)
            ? q
            : Eigen::VectorXd::Zero(3 * i);
  return omega;
}

namespace detail {

inline void check_mpc_dims(const PlatoonState& x, const Eigen::VectorXd& u_prev,
                           const ReferenceWindow& window,
                           const PredictionMatrices& pred) {
  const int s = static_cast<int>(x.size()) * 3;
  if (s != pred.state_dim || u_prev.size() != pred.n_controls ||
      window.stacked.size() != pred.phi.rows() ||
      window.horizon != pred.horizon)
    throw std::invalid_argument("mpc: inconsistent dimensions");
}

}  // namespace detail

/// Condense one MPC step into  min 0.5 dU' P dU + q' dU  s.t.  G dU <= h.
///
/// P = 2 (Psi + Gamma' Omega Gamma), q = 2 Gamma' Omega (X_free - X*), and
/// the state constraints map to G = g_bar Gamma, h = -g_bar X_free - g_vec,
/// with X_free = phi x_k + lambda u_{k-1} the zero-increment prediction.
/// The dropped constant means objective differences, not values, match the
/// stage-cost sum.
inline QpProblem assemble_qp(const PlatoonState& x,
                             const Eigen::VectorXd& u_prev,
                             const ReferenceWindow& window,
                             const PredictionMatrices& pred,
                             const MpcConfig& cfg, const ConstraintSet& cs) {
  detail::check_mpc_dims(x, u_prev, window, pred);
  const Eigen::VectorXd omega = stage_weight_diagonal(cfg, pred.n_controls);
  if (omega.size() != pred.gamma.rows())
    throw std::invalid_argument("assemble_qp: config/prediction horizon differ");
  const Eigen::VectorXd x_free =
      pred.phi * x.serialize() + pred.lambda * u_prev;

  QpProblem qp;
  const Eigen::MatrixXd omega_gamma = omega.asDiagonal() * pred.gamma;
  qp.p_mat = 2.0 * (pred.gamma.transpose() * omega_gamma);
  qp.p_mat.diagonal().array() += 2.0 * cfg.q4;
  qp.p_mat = 0.5 * (qp.p_mat + qp.p_mat.transpose().eval());  // exact symmetry
  qp.q_vec = 2.0 * omega_gamma.transpose() * (x_free - window.stacked);
  qp.g_mat = cs.g_bar * pred.gamma;
  qp.h_vec = -(cs.g_bar * x_free) - cs.g_vec;
  return qp;
}

/// Convenience overload building the constraint set from the config.
inline QpProblem assemble_qp(const PlatoonState& x,
                             const Eigen::VectorXd& u_prev,
                             const ReferenceWindow& window,
                             const PredictionMatrices& pred,
                             const MpcConfig& cfg) {
  return assemble_qp(x, u_prev, window, pred, cfg,
                     ConstraintSet::build(cfg, pred.n_controls, pred.horizon));
}

struct MpcDiagnostics {
  QpStatus status = QpStatus::optimal;
  bool infeasible = false;     ///< hard QP infeasible; soft retry used
  bool fallback_hold = false;  ///< soft retry failed too; command held
  int iterations = 0;
  double stationarity = 0.0;
  double primal_feasibility = 0.0;
  double objective = 0.0;
  double max_slack = 0.0;      ///< largest spacing slack when softened
};

struct MpcStepResult {
  Eigen::VectorXd u_p;  ///< commanded speeds, length I
  Eigen::VectorXd du;   ///< first increment block dU*_{k|k}
  MpcDiagnostics diagnostics;
  std::vector<int> active_set;  ///< of the hard QP, for warm starting
};

namespace detail {

/// Soften the stacked spacing rows of a hard QP: one nonnegative slack per
/// spacing row, charged quadratically at `penalty`.
inline QpProblem soften_spacing(const QpProblem& hard, const ConstraintSet& cs,
                                double penalty) {
  const int nx = hard.n();
  const int m = hard.m();
  std::vector<int> soft_rows;
  for (int r = 0; r < m; ++r)
    if (cs.is_spacing_row(r)) soft_rows.push_back(r);
  const int ns = static_cast<int>(soft_rows.size());

  QpProblem qp;
  qp.p_mat = Eigen::MatrixXd::Zero(nx + ns, nx + ns);
  qp.p_mat.topLeftCorner(nx, nx) = hard.p_mat;
  qp.p_mat.bottomRightCorner(ns, ns).diagonal().setConstant(2.0 * penalty);
  qp.q_vec = Eigen::VectorXd::Zero(nx + ns);
  qp.q_vec.head(nx) = hard.q_vec;
  qp.g_mat = Eigen::MatrixXd::Zero(m + ns, nx + ns);
  qp.g_mat.topLeftCorner(m, nx) = hard.g_mat;
  for (int j = 0; j < ns; ++j) {
    qp.g_mat(soft_rows[j], nx + j) = -1.0;  // G dU - s <= h
    qp.g_mat(m + j, nx + j) = -1.0;         // s >= 0
  }
  qp.h_vec = Eigen::VectorXd::Zero(m + ns);
  qp.h_vec.head(m) = hard.h_vec;
  return qp;
}

}  // namespace detail

/// One receding-horizon step: solve the condensed QP and return the commanded
/// speeds u_p = u_prev + dU*_{k|k}. Infeasible instances fall back to the
/// spacing-softened problem; if that fails too, the previous command is held.
inline MpcStepResult solve_mpc_step(const PlatoonState& x,
                                    const Eigen::VectorXd& u_prev,
                                    const ReferenceWindow& window,
                                    const PredictionMatrices& pred,
                                    const MpcConfig& cfg,
                                    const ConstraintSet& cs,
                                    const QpSolver& solver,
                                    const QpSettings& settings = {},
                                    const std::vector<int>& warm_active = {}) {
  const QpProblem qp = assemble_qp(x, u_prev, window, pred, cfg, cs);
  QpSolution sol = warm_active.empty()
                       ? solver.solve(qp, settings)
                       : solver.solve_warm(qp, warm_active, settings);

  MpcStepResult res;
  res.diagnostics.status = sol.status;
  const int i = pred.n_controls;

  if (sol.status == QpStatus::infeasible) {
    res.diagnostics.infeasible = true;
    const double penalty =
        1e4 * std::max({cfg.q1, cfg.q2, cfg.q3, cfg.q4});
    const QpProblem soft = detail::soften_spacing(qp, cs, penalty);
    const QpSolution soft_sol = solver.solve(soft, settings);
    if (soft_sol.status == QpStatus::optimal) {
      res.du = soft_sol.x.head(i);
      res.diagnostics.max_slack =
          soft.n() > qp.n() ? soft_sol.x.tail(soft.n() - qp.n()).maxCoeff()
                            : 0.0;
      res.diagnostics.iterations = sol.iterations + soft_sol.iterations;
      res.diagnostics.stationarity = soft_sol.stationarity;
      res.diagnostics.primal_feasibility = soft_sol.primal_feasibility;
      res.diagnostics.objective = soft.objective(soft_sol.x);
    } else {
      res.diagnostics.fallback_hold = true;
      res.du = Eigen::VectorXd::Zero(i);
    }
    res.u_p = u_prev + res.du;
    return res;
  }

  res.du = sol.x.head(i);
  res.u_p = u_prev + res.du;
  res.active_set = sol.active_set;
  res.diagnostics.iterations = sol.iterations;
  res.diagnostics.stationarity = sol.stationarity;
  res.diagnostics.primal_feasibility = sol.primal_feasibility;
  res.diagnostics.objective = qp.objective(sol.x);
  return res;
}

/// Spec-shaped convenience overload (constraints rebuilt from the config).
inline MpcStepResult solve_mpc_step(const PlatoonState& x,
                                    const Eigen::VectorXd& u_prev,
                                    const ReferenceWindow& window,
                                    const PredictionMatrices& pred,
                                    const MpcConfig& cfg,
                                    const QpSolver& solver,
                                    const QpSettings& settings = {}) {
  return solve_mpc_step(x, u_prev, window, pred, cfg,
                        ConstraintSet::build(cfg, pred.n_controls, pred.horizon),
                        solver, settings);
}

// ---------------------------------------------------------------------------
// Stateful controller

/// Receding-horizon controller holding the previous command between steps and
/// warm-starting each QP with the last active set. One instance serves one
/// simulation loop; concurrent simulations use separate instances.
class PlatoonMpc {
 public:
  PlatoonMpc(const SystemMatrices& mats, const MpcConfig& cfg)
      : mats_(mats),
        cfg_(cfg),
        pred_(build_prediction_matrices(mats, cfg.horizon)),
        cs_(ConstraintSet::build(cfg, mats.n_vehicles(), cfg.horizon)),
        u_prev_(Eigen::VectorXd::Zero(mats.n_vehicles())) {
    cfg.validate();
  }

  /// Set the held command, typically the initial vehicle speeds.
  void reset(const Eigen::VectorXd& u0) {
    if (u0.size() != u_prev_.size())
      throw std::invalid_argument("PlatoonMpc::reset: wrong length");
    u_prev_ = u0;
    warm_.clear();
  }

  /// Replace one vehicle's held command, for callers that drive that vehicle
  /// outside the MPC (an open-loop leader).
  void override_command(int i, double u) {
    if (i < 0 || i >= u_prev_.size())
      throw std::invalid_argument("PlatoonMpc::override_command: bad index");
    u_prev_[i] = u;
  }

  MpcStepResult step(const PlatoonState& x, const ReferenceWindow& window) {
    MpcStepResult res = solve_mpc_step(x, u_prev_, window, pred_, cfg_, cs_,
                                       solver_, settings_, warm_);
    u_prev_ = res.u_p;
    warm_ = res.active_set;
    return res;
  }

  const Eigen::VectorXd& u_prev() const { return u_prev_; }
  const PredictionMatrices& prediction() const { return pred_; }
  const ConstraintSet& constraints() const { return cs_; }
  const MpcConfig& config() const { return cfg_; }
  void set_settings(const QpSettings& s) { settings_ = s; }

 private:
  SystemMatrices mats_;
  MpcConfig cfg_;
  PredictionMatrices pred_;
  ConstraintSet cs_;
  Eigen::VectorXd u_prev_;
  std::vector<int> warm_;
  QpSolver solver_;
  QpSettings settings_;
};

}  // namespace pperl

#endif  // PPERL_MPC_HPP_
