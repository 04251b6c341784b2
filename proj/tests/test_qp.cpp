// Copyright 2026 The platoon-perl Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "oracles.hpp"
#include "pperl/qp.hpp"
#include "pperl/rng.hpp"

namespace {

using pperl::QpProblem;
using pperl::QpSettings;
using pperl::QpSolution;
using pperl::QpSolver;
using pperl::QpStatus;

QpProblem spec_problem() {
  QpProblem qp;
  qp.p_mat = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  qp.q_vec = Eigen::VectorXd(2);
  qp.q_vec << -2.0, -4.0;
  qp.g_mat.resize(0, 2);
  qp.h_vec.resize(0);
  return qp;
}

// A Farkas vector y proves Gx <= h empty when y >= 0, G'y = 0, h'y < 0.
void require_valid_certificate(const QpProblem& qp, const QpSolution& sol) {
  REQUIRE(sol.status == QpStatus::infeasible);
  const Eigen::VectorXd& y = sol.infeasibility_certificate;
  REQUIRE(y.size() == qp.m());
  REQUIRE(y.minCoeff() >= 0.0);
  REQUIRE(y.cwiseAbs().maxCoeff() > 0.0);
  const double scale =
      std::max(1.0, y.cwiseAbs().maxCoeff() *
                        qp.g_mat.cwiseAbs().maxCoeff() * qp.m());
  CHECK((qp.g_mat.transpose() * y).cwiseAbs().maxCoeff() <= 1e-7 * scale);
  CHECK(qp.h_vec.dot(y) < 0.0);
}

}  // namespace

TEST_CASE("unconstrained minimum is -P^{-1} q", "[qp]") {
  const QpProblem qp = spec_problem();
  const QpSolution sol = QpSolver{}.solve(qp);
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.x[0] == Catch::Approx(1.0).margin(1e-7));
  CHECK(sol.x[1] == Catch::Approx(2.0).margin(1e-7));
  CHECK(sol.stationarity <= 1e-6);
  CHECK(pperl::check_kkt(qp, sol, 1e-6).pass);
}

TEST_CASE("single active constraint is found with a positive multiplier",
          "[qp]") {
  QpProblem qp = spec_problem();
  qp.g_mat.resize(1, 2);
  qp.g_mat << 1.0, 1.0;
  qp.h_vec.resize(1);
  qp.h_vec << 1.0;

  const QpSolution sol = QpSolver{}.solve(qp);
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.x[0] == Catch::Approx(0.0).margin(1e-6));
  CHECK(sol.x[1] == Catch::Approx(1.0).margin(1e-6));
  REQUIRE(sol.duals.size() == 1);
  CHECK(sol.duals[0] == Catch::Approx(2.0).margin(1e-6));
  CHECK(qp.objective(sol.x) == Catch::Approx(-3.0).margin(1e-6));
  REQUIRE(sol.active_set.size() == 1);
  CHECK(sol.active_set[0] == 0);
  CHECK(pperl::check_kkt(qp, sol, 1e-6).pass);
}

TEST_CASE("contradictory box is reported infeasible with a certificate",
          "[qp]") {
  QpProblem qp = spec_problem();
  qp.g_mat.resize(2, 2);
  qp.g_mat << 1.0, 0.0,
              -1.0, 0.0;  // x1 <= -1 and x1 >= 2
  qp.h_vec.resize(2);
  qp.h_vec << -1.0, -2.0;

  const QpSolution sol = QpSolver{}.solve(qp);
  require_valid_certificate(qp, sol);
}

TEST_CASE("kkt checker judges independently of the solver", "[qp]") {
  QpProblem qp = spec_problem();
  qp.g_mat.resize(1, 2);
  qp.g_mat << 1.0, 1.0;
  qp.h_vec.resize(1);
  qp.h_vec << 1.0;

  SECTION("hand-built optimal pair passes") {
    QpSolution sol;
    sol.x = Eigen::VectorXd(2);
    sol.x << 0.0, 1.0;
    sol.duals = Eigen::VectorXd(1);
    sol.duals << 2.0;
    CHECK(pperl::check_kkt(qp, sol, 1e-9).pass);
  }

  SECTION("perturbing x* breaks stationarity or feasibility") {
    QpSolution sol;
    sol.duals = Eigen::VectorXd(1);
    sol.duals << 2.0;
    sol.x = Eigen::VectorXd(2);
    sol.x << 0.1, 1.0;  // outside the halfplane
    CHECK_FALSE(pperl::check_kkt(qp, sol, 1e-6).pass);
    sol.x << -0.1, 1.0;  // feasible but no longer stationary
    const auto rep = pperl::check_kkt(qp, sol, 1e-6);
    CHECK_FALSE(rep.pass);
    CHECK(rep.stationarity > 1e-2);
  }

  SECTION("the all-zero problem certifies trivially") {
    QpProblem zero;
    zero.p_mat = Eigen::MatrixXd::Zero(2, 2);
    zero.q_vec = Eigen::VectorXd::Zero(2);
    zero.g_mat.resize(0, 2);
    zero.h_vec.resize(0);
    QpSolution sol;
    sol.x = Eigen::VectorXd::Zero(2);
    sol.duals.resize(0);
    CHECK(pperl::check_kkt(zero, sol, 1e-12).pass);
  }
}

TEST_CASE("problem validation rejects malformed data", "[qp]") {
  QpProblem qp = spec_problem();
  SECTION("asymmetric P") {
    qp.p_mat(0, 1) = 0.5;
    CHECK_THROWS_AS(qp.validate(), std::invalid_argument);
  }
  SECTION("q length mismatch") {
    qp.q_vec.resize(3);
    CHECK_THROWS_AS(qp.validate(), std::invalid_argument);
  }
  SECTION("G/h row mismatch") {
    qp.g_mat.resize(2, 2);
    qp.g_mat.setZero();
    qp.h_vec.resize(1);
    CHECK_THROWS_AS(qp.validate(), std::invalid_argument);
  }
}

TEST_CASE("iteration cap yields max_iter with the best iterate", "[qp]") {
  QpProblem qp = spec_problem();
  qp.g_mat.resize(2, 2);
  qp.g_mat << 1.0, 1.0,
              0.0, 1.0;
  qp.h_vec.resize(2);
  qp.h_vec << 1.0, 0.5;

  QpSettings tight;
  tight.max_iter = 1;
  const QpSolution capped = QpSolver{}.solve(qp, tight);
  CHECK(capped.status == QpStatus::max_iter);
  CHECK(capped.x.allFinite());

  const QpSolution full = QpSolver{}.solve(qp);
  CHECK(full.status == QpStatus::optimal);
  CHECK(pperl::check_kkt(qp, full, 1e-6).pass);
}

TEST_CASE("semidefinite curvature is handled by bounded regularization",
          "[qp]") {
  QpProblem qp;
  qp.p_mat = Eigen::MatrixXd::Zero(2, 2);
  qp.p_mat(0, 0) = 2.0;  // x2-direction has zero curvature
  qp.q_vec = Eigen::VectorXd(2);
  qp.q_vec << -2.0, 0.0;
  qp.g_mat.resize(2, 2);
  qp.g_mat << 0.0, 1.0,
              0.0, -1.0;
  qp.h_vec.resize(2);
  qp.h_vec << 3.0, 3.0;

  const QpSolution sol = QpSolver{}.solve(qp);
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.x[0] == Catch::Approx(1.0).margin(1e-6));
  CHECK(pperl::check_kkt(qp, sol, 1e-6).pass);
}

TEST_CASE("solver is bitwise deterministic", "[qp]") {
  QpProblem qp = spec_problem();
  qp.g_mat.resize(3, 2);
  qp.g_mat << 1.0, 1.0,
              0.0, 1.0,
              -1.0, 0.3;
  qp.h_vec.resize(3);
  qp.h_vec << 1.0, 0.8, 0.4;

  const QpSolution a = QpSolver{}.solve(qp);
  const QpSolution b = QpSolver{}.solve(qp);
  REQUIRE(a.status == b.status);
  CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.duals - b.duals).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.active_set == b.active_set);
}

TEST_CASE("random strictly convex instances match exhaustive enumeration",
          "[qp]") {
  pperl::Rng rng(2024);
  QpSolver solver;
  int infeasible_seen = 0;

  for (int trial = 0; trial < 260; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(5));  // 2..6
    const int m = 1 + static_cast<int>(rng.uniform_int(8));  // 1..8
    Eigen::MatrixXd root(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) root(i, j) = rng.normal(0.0, 1.0);

    QpProblem qp;
    qp.p_mat = root.transpose() * root +
               0.5 * Eigen::MatrixXd::Identity(n, n);
    qp.q_vec.resize(n);
    for (int i = 0; i < n; ++i) qp.q_vec[i] = rng.normal(0.0, 2.0);
    qp.g_mat.resize(m, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) qp.g_mat(i, j) = rng.normal(0.0, 1.0);

    const bool make_infeasible = trial % 4 == 3;
    if (make_infeasible) {
      // Append a contradictory pair: g.x <= alpha and g.x >= alpha + 1.
      Eigen::RowVectorXd g(n);
      for (int j = 0; j < n; ++j) g[j] = rng.normal(0.0, 1.0);
      const double alpha = rng.normal(0.0, 1.0);
      qp.g_mat.conservativeResize(m + 2, n);
      qp.g_mat.row(m) = g;
      qp.g_mat.row(m + 1) = -g;
      qp.h_vec.resize(m + 2);
      for (int i = 0; i < m; ++i) qp.h_vec[i] = rng.normal(0.0, 1.0) + 5.0;
      qp.h_vec[m] = alpha;
      qp.h_vec[m + 1] = -alpha - 1.0;
    } else {
      // Guarantee feasibility: h = G x0 + positive slack.
      Eigen::VectorXd x0(n);
      for (int j = 0; j < n; ++j) x0[j] = rng.normal(0.0, 1.0);
      qp.h_vec = qp.g_mat * x0;
      for (int i = 0; i < m; ++i) qp.h_vec[i] += 0.1 + rng.uniform();
    }

    const QpSolution sol = solver.solve(qp);
    if (make_infeasible) {
      ++infeasible_seen;
      require_valid_certificate(qp, sol);
      continue;
    }

    REQUIRE(sol.status == QpStatus::optimal);
    REQUIRE(sol.stationarity <= 1e-6);
    REQUIRE(sol.primal_feasibility <= 1e-6);
    REQUIRE(sol.complementarity <= 1e-5);
    REQUIRE(sol.duals.minCoeff() >= 0.0);

    const auto oracle = oracle::solve_qp_by_enumeration(
        qp.p_mat, qp.q_vec, qp.g_mat, qp.h_vec);
    REQUIRE(oracle.feasible);
    REQUIRE(qp.objective(sol.x) <= oracle.objective + 1e-5);
    REQUIRE((sol.x - oracle.x).cwiseAbs().maxCoeff() <= 1e-5);
  }
  CHECK(infeasible_seen >= 60);
}

TEST_CASE("warm start never worsens the certificate", "[qp]") {
  pperl::Rng rng(99);
  QpSolver solver;
  const int n = 4, m = 6;
  Eigen::MatrixXd root(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) root(i, j) = rng.normal(0.0, 1.0);

  QpProblem qp;
  qp.p_mat = root.transpose() * root + Eigen::MatrixXd::Identity(n, n);
  qp.q_vec = Eigen::VectorXd::Zero(n);
  qp.g_mat.resize(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) qp.g_mat(i, j) = rng.normal(0.0, 1.0);
  qp.h_vec = Eigen::VectorXd::Constant(m, -0.2);  // push the optimum around

  std::vector<int> carry;
  for (int step = 0; step < 25; ++step) {
    for (int i = 0; i < n; ++i) qp.q_vec[i] += rng.normal(0.0, 0.3);
    const QpSolution cold = solver.solve(qp);
    const QpSolution warm = solver.solve_warm(qp, carry);
    REQUIRE(warm.status == cold.status);
    if (cold.status != QpStatus::optimal) break;
    CHECK(warm.stationarity <= 1e-6);
    CHECK(warm.primal_feasibility <= 1e-6);
    CHECK(qp.objective(warm.x) ==
          Catch::Approx(qp.objective(cold.x)).margin(1e-6));
    carry = warm.active_set;
  }
}

TEST_CASE("plain-text dump round-trips exactly", "[qp]") {
  pperl::Rng rng(5);
  QpProblem qp;
  const int n = 3, m = 4;
  Eigen::MatrixXd root(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) root(i, j) = rng.normal(0.0, 1.0);
  qp.p_mat = root.transpose() * root;
  qp.q_vec.resize(n);
  qp.g_mat.resize(m, n);
  qp.h_vec.resize(m);
  for (int i = 0; i < n; ++i) qp.q_vec[i] = rng.normal(0.0, 1.0);
  for (int i = 0; i < m; ++i) {
    qp.h_vec[i] = rng.normal(0.0, 1.0);
    for (int j = 0; j < n; ++j) qp.g_mat(i, j) = rng.normal(0.0, 1.0);
  }

  std::stringstream buffer;
  qp.dump(buffer);
  const QpProblem back = QpProblem::load(buffer);
  CHECK((back.p_mat - qp.p_mat).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.q_vec - qp.q_vec).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.g_mat - qp.g_mat).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.h_vec - qp.h_vec).cwiseAbs().maxCoeff() == 0.0);
}
