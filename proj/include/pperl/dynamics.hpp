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

#ifndef PPERL_DYNAMICS_HPP_
#define PPERL_DYNAMICS_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace pperl {

/**
 * Discrete-time longitudinal dynamics of a homogeneous vehicle platoon.
 *
 * A single vehicle evolves as
 *     p' = p + v*dt + 0.5*a*dt^2
 *     v' = v + a*dt
 *     a' = -(dt/tau)*v + (dt/tau)*u
 * where u is the commanded (desired) speed and tau the inertial delay of the
 * drivetrain. Note the acceleration update feeds back the speed only, not the
 * previous acceleration: the commanded speed acts through a one-step lag
 * channel, and a' is proportional to the current speed-command mismatch.
 *
 * The stacked platoon state orders all positions first, then all velocities,
 * then all accelerations: X = [p_1..p_I, v_1..v_I, a_1..a_I]. Under this
 * grouped ordering the platoon matrices are exactly the Kronecker lifts
 * A_I = A (x) E_I and B_I = B (x) E_I of the single-vehicle matrices.
 */

struct VehicleState {
  double p = 0.0;  ///< position [m]
  double v = 0.0;  ///< speed [m/s]
  double a = 0.0;  ///< acceleration [m/s^2]

  bool finite() const {
    return std::isfinite(p) && std::isfinite(v) && std::isfinite(a);
  }
};

struct DynamicsParams {
  double dt = 0.1;     ///< sampling interval [s]
  double tau = 0.5;    ///< inertial delay of the longitudinal response [s]
  int n_vehicles = 5;  ///< number of stacked (controlled) vehicles I

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt))
      throw std::invalid_argument("DynamicsParams: dt must be positive");
    if (!(tau > 0.0) || !std::isfinite(tau))
      throw std::invalid_argument("DynamicsParams: tau must be positive");
    if (n_vehicles < 1)
      throw std::invalid_argument("DynamicsParams: need at least one vehicle");
  }
};

/// Stacked platoon state. Kept as three per-quantity vectors; serialize()
/// produces the grouped [p..., v..., a...] layout used by the controller.
struct PlatoonState {
  Eigen::VectorXd positions;
  Eigen::VectorXd velocities;
  Eigen::VectorXd accelerations;

  PlatoonState() = default;
  explicit PlatoonState(int n)
      : positions(Eigen::VectorXd::Zero(n)),
        velocities(Eigen::VectorXd::Zero(n)),
        accelerations(Eigen::VectorXd::Zero(n)) {}

  int size() const { return static_cast<int>(positions.size()); }

  VehicleState vehicle(int i) const {
    return {positions[i], velocities[i], accelerations[i]};
  }

  /// Grouped serialization [p_1..p_I, v_1..v_I, a_1..a_I], length 3I.
  Eigen::VectorXd serialize() const {
    const int n = size();
    Eigen::VectorXd x(3 * n);
    x.segment(0, n) = positions;
    x.segment(n, n) = velocities;
    x.segment(2 * n, n) = accelerations;
    return x;
  }

  static PlatoonState deserialize(const Eigen::VectorXd& x) {
    if (x.size() % 3 != 0)
      throw std::invalid_argument("PlatoonState: serialized length must be 3I");
    const int n = static_cast<int>(x.size()) / 3;
    PlatoonState s(n);
    s.positions = x.segment(0, n);
    s.velocities = x.segment(n, n);
    s.accelerations = x.segment(2 * n, n);
    return s;
  }
};

/// Single-vehicle (A, B) and their platoon lifts under the grouped ordering.
struct SystemMatrices {
  Eigen::Matrix3d a_single;
  Eigen::Vector3d b_single;
  Eigen::MatrixXd a_platoon;  ///< 3I x 3I
  Eigen::MatrixXd b_platoon;  ///< 3I x I
  DynamicsParams params;

  int n_vehicles() const { return params.n_vehicles; }
  int state_dim() const { return 3 * params.n_vehicles; }
};

/// One dynamics step of a single vehicle under commanded speed u.
inline VehicleState step_vehicle(const VehicleState& state, double u,
                                 const DynamicsParams& params) {
  params.validate();
  if (!state.finite() || !std::isfinite(u))
    throw std::invalid_argument("step_vehicle: non-finite state or input");
  const double dt = params.dt;
  const double k = dt / params.tau;
  return {state.p + state.v * dt + 0.5 * state.a * dt * dt,
          state.v + state.a * dt,
          -k * state.v + k * u};
}

inline SystemMatrices build_system_matrices(const DynamicsParams& params) {
  params.validate();
  const double dt = params.dt;
  const double k = dt / params.tau;

  SystemMatrices m;
  m.params = params;
  m.a_single << 1.0, dt, 0.5 * dt * dt,
                0.0, 1.0, dt,
                0.0, -k, 0.0;
  m.b_single << 0.0, 0.0, k;

  // Kronecker lift A (x) E_I: scalar block (r, c) of A becomes a_rc * E_I.
  const int n = params.n_vehicles;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  m.a_platoon = Eigen::MatrixXd::Zero(3 * n, 3 * n);
  m.b_platoon = Eigen::MatrixXd::Zero(3 * n, n);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c)
      m.a_platoon.block(r * n, c * n, n, n) = m.a_single(r, c) * eye;
    m.b_platoon.block(r * n, 0, n, n) = m.b_single(r) * eye;
  }
  return m;
}

/// One dynamics step of the whole platoon: X' = A_I X + B_I U.
inline PlatoonState step_platoon(const PlatoonState& x, const Eigen::VectorXd& u,
                                 const SystemMatrices& mats) {
  if (x.size() != mats.n_vehicles() || u.size() != mats.n_vehicles())
    throw std::invalid_argument("step_platoon: dimension mismatch");
  return PlatoonState::deserialize(mats.a_platoon * x.serialize() +
                                   mats.b_platoon * u);
}

}  // namespace pperl

#endif  // PPERL_DYNAMICS_HPP_
