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

#ifndef PPERL_QP_HPP_
#define PPERL_QP_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pperl {

/**
 * Dense convex QP
 *
 *     minimize    0.5 x'Px + q'x
 *     subject to  Gx <= h
 *
 * solved by a dual active-set method. The iterate starts at the
 * unconstrained minimum and adds the most violated constraint one at a time,
 * keeping a dual-feasible working set; constraints whose multiplier would turn
 * negative are dropped. The method terminates finitely, needs no feasible
 * starting point, and is deterministic: ties in the violated-constraint choice
 * are broken by lowest row index.
 *
 * Every reported optimum carries a KKT certificate (stationarity, primal
 * feasibility, complementarity residuals) recomputed from the original data.
 */

struct QpProblem {
  Eigen::MatrixXd p_mat;  ///< n x n, symmetric PSD
  Eigen::VectorXd q_vec;  ///< n
  Eigen::MatrixXd g_mat;  ///< m x n (m may be 0)
  Eigen::VectorXd h_vec;  ///< m

  int n() const { return static_cast<int>(p_mat.rows()); }
  int m() const { return static_cast<int>(g_mat.rows()); }

  void validate() const {
    if (p_mat.rows() != p_mat.cols())
      throw std::invalid_argument("QpProblem: P must be square");
    if (q_vec.size() != p_mat.rows())
      throw std::invalid_argument("QpProblem: q length must match P");
    if (g_mat.rows() != h_vec.size())
      throw std::invalid_argument("QpProblem: G rows must match h length");
    if (g_mat.rows() > 0 && g_mat.cols() != p_mat.rows())
      throw std::invalid_argument("QpProblem: G cols must match P");
    const double asym = (p_mat - p_mat.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10)
      throw std::invalid_argument("QpProblem: P not symmetric within 1e-10");
  }

  double objective(const Eigen::VectorXd& x) const {
    return 0.5 * x.dot(p_mat * x) + q_vec.dot(x);
  }

  /// Plain-text dump for offline cross-checking. Header line "n m", then P
  /// row by row, q on one line, G row by row, h on one line.
  void dump(std::ostream& os) const {
    os.precision(17);
    os << n() << " " << m() << "\n";
    for (int i = 0; i < n(); ++i) {
      for (int j = 0; j < n(); ++j) os << (j ? " " : "") << p_mat(i, j);
      os << "\n";
    }
    for (int j = 0; j < n(); ++j) os << (j ? " " : "") << q_vec[j];
    os << "\n";
    for (int i = 0; i < m(); ++i) {
      for (int j = 0; j < n(); ++j) os << (j ? " " : "") << g_mat(i, j);
      os << "\n";
    }
    for (int i = 0; i < m(); ++i) os << (i ? " " : "") << h_vec[i];
    os << "\n";
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("QpProblem: cannot open " + path);
    dump(os);
  }

  static QpProblem load(std::istream& is) {
    QpProblem p;
    int n = 0, m = 0;
    if (!(is >> n >> m)) throw std::runtime_error("QpProblem: bad header");
    p.p_mat.resize(n, n);
    p.q_vec.resize(n);
    p.g_mat.resize(m, n);
    p.h_vec.resize(m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) is >> p.p_mat(i, j);
    for (int j = 0; j < n; ++j) is >> p.q_vec[j];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) is >> p.g_mat(i, j);
    for (int i = 0; i < m; ++i) is >> p.h_vec[i];
    if (!is) throw std::runtime_error("QpProblem: truncated file");
    return p;
  }
};

enum class QpStatus { optimal, max_iter, infeasible };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::max_iter: return "max_iter";
    case QpStatus::infeasible: return "infeasible";
  }
  return "?";
}

struct QpSolution {
  Eigen::VectorXd x;      ///< primal iterate (best effort unless optimal)
  Eigen::VectorXd duals;  ///< length m, nonnegative
  QpStatus status = QpStatus::max_iter;
  double stationarity = std::numeric_limits<double>::quiet_NaN();
  double primal_feasibility = std::numeric_limits<double>::quiet_NaN();
  double complementarity = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  /// Active rows at termination, usable to warm-start the next related solve.
  std::vector<int> active_set;
  /// Farkas certificate for infeasible problems: y >= 0 with G'y = 0 and
  /// h'y < 0. Empty when not applicable.
  Eigen::VectorXd infeasibility_certificate;
};

struct QpSettings {
  double tol = 1e-6;        ///< KKT/violation tolerance
  int max_iter = 20000;     ///< active-set change cap
  double reg = 1e-8;        ///< Tikhonov term added to diag(P)
};

struct KktReport {
  double stationarity = 0.0;
  double primal_feasibility = 0.0;
  double complementarity = 0.0;
  double dual_feasibility = 0.0;  ///< max(-mu_i, 0)
  bool pass = false;
};

/// Recompute all KKT residuals from scratch, independent of the solver's
/// internal bookkeeping.
inline KktReport check_kkt(const QpProblem& problem, const QpSolution& solution,
                           double tol) {
  KktReport r;
  const Eigen::VectorXd grad = problem.p_mat * solution.x + problem.q_vec +
                               (problem.m() > 0
                                    ? Eigen::VectorXd(problem.g_mat.transpose() *
                                                      solution.duals)
                                    : Eigen::VectorXd::Zero(problem.n()));
  r.stationarity = problem.n() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
  if (problem.m() > 0) {
    const Eigen::VectorXd slack = problem.g_mat * solution.x - problem.h_vec;
    r.primal_feasibility = std::max(0.0, slack.maxCoeff());
    r.complementarity = std::abs(solution.duals.dot(slack));
    r.dual_feasibility = std::max(0.0, -solution.duals.minCoeff());
  }
  r.pass = r.stationarity <= tol && r.primal_feasibility <= tol &&
           r.complementarity <= tol && r.dual_feasibility <= tol;
  return r;
}

class QpSolver {
 public:
  QpSolution solve(const QpProblem& problem,
                   const QpSettings& settings = {}) const {
    return solve_impl(problem, settings, {});
  }

  /// Warm start from a previous solve's active set. The set is used to seed
  /// the working set; the final certificate is identical in kind to a cold
  /// start, only the path there is shorter.
  QpSolution solve_warm(const QpProblem& problem,
                        const std::vector<int>& warm_active,
                        const QpSettings& settings = {}) const {
    return solve_impl(problem, settings, warm_active);
  }

 private:
  QpSolution solve_impl(const QpProblem& problem, const QpSettings& settings,
                        std::vector<int> active) const {
    problem.validate();
    const int n = problem.n();
    const int m = problem.m();

    // Regularized P for the factorization; residuals are always reported
    // against the original data.
    Eigen::MatrixXd p_reg = problem.p_mat;
    p_reg.diagonal().array() += settings.reg;
    Eigen::LLT<Eigen::MatrixXd> llt(p_reg);
    double reg = settings.reg;
    while (llt.info() != Eigen::Success && reg < 1e-2) {
      reg *= 10.0;
      p_reg = problem.p_mat;
      p_reg.diagonal().array() += reg;
      llt.compute(p_reg);
    }
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("QpSolver: P is not positive semidefinite");

    QpSolution sol;
    sol.duals = Eigen::VectorXd::Zero(m);
    sol.x = llt.solve(-problem.q_vec);

    std::vector<double> u;  // multipliers of the working set, >= 0

    // Seed the working set: solve the equality-constrained subproblem on the
    // warm set and drop rows with negative multipliers until the pair
    // (x, active) is a valid dual-feasible starting point.
    if (!active.empty()) {
      std::sort(active.begin(), active.end());
      active.erase(std::unique(active.begin(), active.end()), active.end());
      std::erase_if(active, [m](int i) { return i < 0 || i >= m; });
      if (static_cast<int>(active.size()) > n) active.resize(n);
      while (!active.empty()) {
        const int na = static_cast<int>(active.size());
        Eigen::MatrixXd ga(na, n);
        Eigen::VectorXd ha(na);
        for (int i = 0; i < na; ++i) {
          ga.row(i) = problem.g_mat.row(active[i]);
          ha[i] = problem.h_vec[active[i]];
        }
        const Eigen::MatrixXd pinv_gat = llt.solve(ga.transpose());
        const Eigen::MatrixXd schur = ga * pinv_gat;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(schur);
        if (ldlt.info() != Eigen::Success ||
            (ldlt.vectorD().array().abs() < 1e-12).any()) {
          active.pop_back();  // dependent rows: shrink and retry
          continue;
        }
        const Eigen::VectorXd rhs = -ga * llt.solve(problem.q_vec) - ha;
        const Eigen::VectorXd nu = ldlt.solve(rhs);
        int worst = -1;
        double worst_val = -1e-12;
        for (int i = 0; i < na; ++i)
          if (nu[i] < worst_val) { worst_val = nu[i]; worst = i; }
        if (worst >= 0) {
          active.erase(active.begin() + worst);
          continue;
        }
        sol.x = llt.solve(-(problem.q_vec + ga.transpose() * nu));
        u.assign(nu.data(), nu.data() + na);
        break;
      }
    }

    const double scale =
        std::max({1.0, problem.q_vec.size() ? problem.q_vec.cwiseAbs().maxCoeff() : 0.0,
                  m ? problem.h_vec.cwiseAbs().maxCoeff() : 0.0});
    const double viol_tol = 0.5 * settings.tol * std::max(1.0, scale);

    int iter = 0;
    while (true) {
      // Most violated constraint outside the working set.
      int p = -1;
      double viol = viol_tol;
      for (int i = 0; i < m; ++i) {
        if (std::find(active.begin(), active.end(), i) != active.end()) continue;
        const double s = problem.g_mat.row(i).dot(sol.x) - problem.h_vec[i];
        if (s > viol) { viol = s; p = i; }
      }
      if (p < 0) {
        for (size_t i = 0; i < active.size(); ++i) sol.duals[active[i]] = u[i];
        sol.status = QpStatus::optimal;
        break;
      }

      const Eigen::VectorXd gp = problem.g_mat.row(p).transpose();
      double up = 0.0;  // multiplier of the entering constraint

      bool resolved = false;
      while (!resolved) {
        if (++iter > settings.max_iter) break;

        const int na = static_cast<int>(active.size());
        Eigen::VectorXd z, r;
        if (na == 0) {
          z = llt.solve(gp);
          r.resize(0);
        } else {
          Eigen::MatrixXd ga(na, n);
          for (int i = 0; i < na; ++i) ga.row(i) = problem.g_mat.row(active[i]);
          const Eigen::MatrixXd pinv_gat = llt.solve(ga.transpose());
          const Eigen::MatrixXd schur = ga * pinv_gat;
          r = schur.ldlt().solve(ga * llt.solve(gp));
          z = llt.solve(gp - ga.transpose() * r);
        }

        // denom = z'Pz up to regularization; for a genuine descent direction
        // it is bounded below by |gp|^2 / lambda_max(P), while a gp lying in
        // the span of the working set leaves only roundoff. The relative
        // threshold separates the two regimes by many orders of magnitude.
        const double denom = gp.dot(z);
        const bool z_is_zero = denom <= 1e-11 * std::max(1.0, gp.squaredNorm());

        // Longest step keeping the working-set multipliers nonnegative.
        double t1 = std::numeric_limits<double>::infinity();
        int blocking = -1;
        for (int i = 0; i < na; ++i) {
          if (r[i] > 1e-12) {
            const double t = u[i] / r[i];
            if (t < t1) { t1 = t; blocking = i; }
          }
        }

        if (z_is_zero) {
          if (blocking < 0) {
            // No primal motion possible and no multiplier to trade off:
            // the constraints are contradictory. Build the Farkas vector.
            sol.status = QpStatus::infeasible;
            sol.infeasibility_certificate = Eigen::VectorXd::Zero(m);
            for (int i = 0; i < na; ++i)
              sol.infeasibility_certificate[active[i]] =
                  std::max(0.0, -r[i]);
            sol.infeasibility_certificate[p] = 1.0;
            resolved = true;
            break;
          }
          for (int i = 0; i < na; ++i) u[i] -= t1 * r[i];
          up += t1;
          active.erase(active.begin() + blocking);
          u.erase(u.begin() + blocking);
          continue;
        }

        const double s_p = gp.dot(sol.x) - problem.h_vec[p];
        const double t2 = s_p / denom;
        const double t = std::min(t1, t2);

        sol.x -= t * z;
        for (int i = 0; i < na; ++i) u[i] -= t * r[i];
        up += t;

        if (t == t2) {
          active.push_back(p);
          u.push_back(up);
          resolved = true;
        } else {
          active.erase(active.begin() + blocking);
          u.erase(u.begin() + blocking);
        }
      }

      if (sol.status == QpStatus::infeasible) break;
      if (iter > settings.max_iter) {
        for (size_t i = 0; i < active.size(); ++i) sol.duals[active[i]] = u[i];
        sol.status = QpStatus::max_iter;
        break;
      }
    }

    sol.iterations = iter;
    sol.active_set = active;
    const KktReport rep = check_kkt(problem, sol, settings.tol);
    sol.stationarity = rep.stationarity;
    sol.primal_feasibility = rep.primal_feasibility;
    sol.complementarity = rep.complementarity;
    return sol;
  }
};

}  // namespace pperl

#endif  // PPERL_QP_HPP_
