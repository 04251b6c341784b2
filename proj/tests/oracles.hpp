// Copyright 2026 The platoon-perl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used only by the test suite.  Each
// oracle recomputes a quantity the library produces in closed form, by a
// deliberately different route (step-by-step rollout, exhaustive enumeration,
// finite differences, value iteration), so agreement is meaningful evidence.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace oracle {

// ---------------------------------------------------------------------------
// Linear-system rollout
// ---------------------------------------------------------------------------

// Propagates x_{n+1} = A x_n + B u_n for the given control sequence and
// returns the stacked trajectory [x_{k+1}; ...; x_{k+N}].
inline Eigen::VectorXd rollout_stacked(const Eigen::MatrixXd& a,
                                       const Eigen::MatrixXd& b,
                                       const Eigen::VectorXd& x0,
                                       const std::vector<Eigen::VectorXd>& controls) {
  const auto dim = static_cast<Eigen::Index>(x0.size());
  const auto horizon = static_cast<Eigen::Index>(controls.size());
  Eigen::VectorXd stacked(dim * horizon);
  Eigen::VectorXd x = x0;
  for (Eigen::Index n = 0; n < horizon; ++n) {
    x = a * x + b * controls[static_cast<std::size_t>(n)];
    stacked.segment(n * dim, dim) = x;
  }
  return stacked;
}

// Builds the absolute control sequence U_{k+n} = u_prev + sum_{m<=n} du_m and
// rolls it out; this is the quantity the condensed prediction matrices encode.
inline Eigen::VectorXd rollout_from_increments(const Eigen::MatrixXd& a,
                                               const Eigen::MatrixXd& b,
                                               const Eigen::VectorXd& x0,
                                               const Eigen::VectorXd& u_prev,
                                               const std::vector<Eigen::VectorXd>& du) {
  std::vector<Eigen::VectorXd> controls;
  controls.reserve(du.size());
  Eigen::VectorXd u = u_prev;
  for (const auto& step : du) {
    u += step;
    controls.push_back(u);
  }
  return rollout_stacked(a, b, x0, controls);
}

// ---------------------------------------------------------------------------
// Quadratic program by exhaustive active-set enumeration
// ---------------------------------------------------------------------------

struct EnumeratedQp {
  bool feasible = false;
  Eigen::VectorXd x;
  double objective = std::numeric_limits<double>::infinity();
  std::vector<int> active_set;
};

namespace detail {

inline void subsets_of_size(int m, int k, int start, std::vector<int>& current,
                            std::vector<std::vector<int>>& out) {
  if (static_cast<int>(current.size()) == k) {
    out.push_back(current);
    return;
  }
  for (int i = start; i < m; ++i) {
    current.push_back(i);
    subsets_of_size(m, k, i + 1, current, out);
    current.pop_back();
  }
}

}  // namespace detail

// Solves min 1/2 x'Px + q'x  s.t. Gx <= h by trying every candidate active
// set of size <= n: solve the equality-constrained KKT system on the subset,
// keep solutions that are primal feasible with nonnegative multipliers, and
// return the best.  Exponential in the row count, so only for tiny problems.
inline EnumeratedQp solve_qp_by_enumeration(const Eigen::MatrixXd& p,
                                            const Eigen::VectorXd& q,
                                            const Eigen::MatrixXd& g,
                                            const Eigen::VectorXd& h,
                                            double tol = 1e-8) {
  const int n = static_cast<int>(p.rows());
  const int m = static_cast<int>(g.rows());
  EnumeratedQp best;
  std::vector<std::vector<int>> subsets;
  subsets.push_back({});
  for (int k = 1; k <= std::min(m, n); ++k) {
    std::vector<int> scratch;
    detail::subsets_of_size(m, k, 0, scratch, subsets);
  }
  for (const auto& subset : subsets) {
    const int k = static_cast<int>(subset.size());
    Eigen::MatrixXd kkt(n + k, n + k);
    kkt.setZero();
    kkt.topLeftCorner(n, n) = p;
    Eigen::VectorXd rhs(n + k);
    rhs.head(n) = -q;
    for (int i = 0; i < k; ++i) {
      kkt.block(n + i, 0, 1, n) = g.row(subset[static_cast<std::size_t>(i)]);
      kkt.block(0, n + i, n, 1) = g.row(subset[static_cast<std::size_t>(i)]).transpose();
      rhs(n + i) = h(subset[static_cast<std::size_t>(i)]);
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible()) {
      continue;
    }
    const Eigen::VectorXd sol = lu.solve(rhs);
    const Eigen::VectorXd x = sol.head(n);
    const Eigen::VectorXd mu = sol.tail(k);
    if (k > 0 && mu.minCoeff() < -tol) {
      continue;
    }
    if (m > 0 && ((g * x - h).maxCoeff() > tol)) {
      continue;
    }
    const double objective = 0.5 * x.dot(p * x) + q.dot(x);
    if (objective < best.objective - 1e-12) {
      best.feasible = true;
      best.x = x;
      best.objective = objective;
      best.active_set = subset;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Finite-difference gradients
// ---------------------------------------------------------------------------

// Central differences on a scalar function of a flat parameter vector.
template <typename Fn>
Eigen::VectorXd central_difference_gradient(Fn&& f, const Eigen::VectorXd& at,
                                            double step = 1e-6) {
  Eigen::VectorXd grad(at.size());
  Eigen::VectorXd probe = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    probe(i) = at(i) + step;
    const double up = f(probe);
    probe(i) = at(i) - step;
    const double down = f(probe);
    probe(i) = at(i);
    grad(i) = (up - down) / (2.0 * step);
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Tabular value iteration on a tiny deterministic MDP
// ---------------------------------------------------------------------------

struct SmallMdp {
  // next_state[s][a] and reward[s][a]; actions may vary per state.
  std::vector<std::vector<int>> next_state;
  std::vector<std::vector<double>> reward;
  double gamma = 0.8;

  int n_states() const { return static_cast<int>(next_state.size()); }
};

// Classic Q-value iteration to a fixed point: Q(s,a) = r + gamma * max Q(s',.).
inline std::vector<std::vector<double>> value_iteration(const SmallMdp& mdp,
                                                        int sweeps = 10000) {
  std::vector<std::vector<double>> q(mdp.next_state.size());
  for (std::size_t s = 0; s < mdp.next_state.size(); ++s) {
    q[s].assign(mdp.next_state[s].size(), 0.0);
  }
  for (int it = 0; it < sweeps; ++it) {
    double delta = 0.0;
    for (std::size_t s = 0; s < mdp.next_state.size(); ++s) {
      for (std::size_t a = 0; a < mdp.next_state[s].size(); ++a) {
        const int sn = mdp.next_state[s][a];
        const double best_next =
            *std::max_element(q[static_cast<std::size_t>(sn)].begin(),
                              q[static_cast<std::size_t>(sn)].end());
        const double target = mdp.reward[s][a] + mdp.gamma * best_next;
        delta = std::max(delta, std::abs(target - q[s][a]));
        q[s][a] = target;
      }
    }
    if (delta < 1e-13) {
      break;
    }
  }
  return q;
}

}  // namespace oracle
