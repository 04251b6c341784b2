// Copyright 2026 The platoon-perl Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "oracles.hpp"
#include "pperl/dynamics.hpp"
#include "pperl/residual_q.hpp"
#include "pperl/rng.hpp"

using pperl::ActionGrid;
using pperl::Experience;
using pperl::ExperienceBuffer;
using pperl::FuzzyEncoder;
using pperl::QTable;

TEST_CASE("sigmoid squash and fuzzy assignment", "[residual_q]") {
  const FuzzyEncoder enc = FuzzyEncoder::uniform(1.0, 5);
  REQUIRE(enc.n_states() == 5);
  CHECK(enc.centers[0] == Catch::Approx(-1.0));
  CHECK(enc.centers[2] == Catch::Approx(0.0).margin(1e-15));
  CHECK(enc.centers[4] == Catch::Approx(1.0));

  SECTION("zero error maps to the middle state") {
    CHECK(enc.squash(0.0) == Catch::Approx(0.0).margin(1e-15));
    CHECK(pperl::encode_state(0.0, enc) == 2);
  }

  SECTION("extreme errors saturate to the boundary states") {
    CHECK(pperl::encode_state(80.0, enc) == 4);
    CHECK(pperl::encode_state(-80.0, enc) == 0);
  }

  SECTION("worked example: error 0.9 lands on the 0.5 center") {
    CHECK(enc.squash(0.9) == Catch::Approx(0.4219).margin(5e-4));
    CHECK(pperl::encode_state(0.9, enc) == 3);
  }

  SECTION("every finite error maps to exactly one in-range state") {
    for (double e = -30.0; e <= 30.0; e += 0.37) {
      const int s = pperl::encode_state(e, enc);
      REQUIRE(s >= 0);
      REQUIRE(s < enc.n_states());
    }
  }

  SECTION("validation") {
    CHECK_THROWS_AS(FuzzyEncoder::uniform(1.0, 2), std::invalid_argument);
    CHECK_THROWS_AS(FuzzyEncoder::uniform(0.0, 5), std::invalid_argument);
    FuzzyEncoder bad = enc;
    bad.centers[1] = bad.centers[2];  // not strictly increasing
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = enc;
    bad.centers[4] = 0.7;  // no longer spans [-sigma, sigma]
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  }
}

TEST_CASE("action grid derived from the acceleration envelope", "[residual_q]") {
  const ActionGrid grid = ActionGrid::from_accel_bounds(-4.0, 4.0, 0.1);
  CHECK(grid.delta == 0.1);
  CHECK(grid.k_lo == -20);
  CHECK(grid.k_hi == 20);
  CHECK(grid.n_actions() == 41);
  CHECK(grid.zero_index() == 20);
  CHECK(grid.value(grid.zero_index()) == 0.0);
  CHECK(grid.value(0) == Catch::Approx(-2.0));
  CHECK(grid.value(40) == Catch::Approx(2.0));

  ActionGrid bad;
  bad.delta = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ActionGrid{};
  bad.k_lo = 1;  // zero off the grid
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("action selection is greedy with deterministic tie-breaks",
          "[residual_q]") {
  QTable table = QTable::zeros(2, 3);
  pperl::Rng rng(5);

  SECTION("pure greedy argmax") {
    table.values.row(0) << 0.0, 3.0, 1.0;
    CHECK(pperl::select_action(table, 0, rng) == 1);
  }

  SECTION("all-equal row breaks to the lowest index") {
    CHECK(pperl::select_action(table, 1, rng) == 0);
  }

  SECTION("full exploration replays exactly under the same seed") {
    table.epsilon = 1.0;
    pperl::Rng a(9), b(9);
    std::vector<int> hit(3, 0);
    for (int i = 0; i < 300; ++i) {
      const int ia = pperl::select_action(table, 0, a);
      const int ib = pperl::select_action(table, 0, b);
      REQUIRE(ia == ib);
      ++hit[static_cast<size_t>(ia)];
    }
    for (int a_idx = 0; a_idx < 3; ++a_idx) CHECK(hit[a_idx] > 0);
  }

  SECTION("out-of-range state rejected") {
    CHECK_THROWS_AS(pperl::select_action(table, 7, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("reward is the negative absolute speed discrepancy", "[residual_q]") {
  CHECK(pperl::compute_reward(15.0, 15.0) == 0.0);
  CHECK(pperl::compute_reward(15.0, 14.5) == Catch::Approx(-0.5));
  CHECK(pperl::compute_reward(14.5, 15.0) ==
        Catch::Approx(pperl::compute_reward(15.0, 14.5)));
  CHECK(pperl::compute_reward(10.0, 15.0) < pperl::compute_reward(14.0, 15.0));
}

TEST_CASE("temporal-difference updates", "[residual_q]") {
  SECTION("one tuple with full learning rate writes the target") {
    QTable table = QTable::zeros(3, 3);
    table.alpha = 1.0;
    table.gamma_discount = 0.0;
    ExperienceBuffer buf;
    buf.push({1, 2, -0.5, 0});
    pperl::update_qtable(table, buf);
    CHECK(table.values(1, 2) == Catch::Approx(-0.5));
    CHECK(buf.empty());
  }

  SECTION("zero reward on a zero table is a fixed point") {
    QTable table = QTable::zeros(3, 3);
    ExperienceBuffer buf;
    for (int i = 0; i < 50; ++i) buf.push({0, 1, 0.0, 0});
    pperl::update_qtable(table, buf);
    CHECK(table.values.cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("deterministic chain converges to the value-iteration oracle") {
    // Two states, two actions; action a moves to state a. Staying in state 1
    // via action 1 is free, everything else costs 1.
    oracle::SmallMdp mdp;
    mdp.gamma = 0.9;
    mdp.next_state = {{0, 1}, {0, 1}};
    mdp.reward = {{-1.0, -1.0}, {-1.0, 0.0}};
    const auto q_star = oracle::value_iteration(mdp);

    QTable table = QTable::zeros(2, 2);
    table.alpha = 0.5;
    table.gamma_discount = 0.9;
    for (int round = 0; round < 400; ++round) {
      ExperienceBuffer buf;
      for (int s = 0; s < 2; ++s)
        for (int a = 0; a < 2; ++a)
          buf.push({s, a, mdp.reward[s][a], mdp.next_state[s][a]});
      pperl::update_qtable(table, buf);
    }
    for (int s = 0; s < 2; ++s)
      for (int a = 0; a < 2; ++a)
        REQUIRE(table.values(s, a) ==
                Catch::Approx(q_star[s][a]).margin(1e-6));
    // Greedy policy matches the oracle's.
    CHECK(pperl::greedy_action(table, 0) == 1);
    CHECK(pperl::greedy_action(table, 1) == 1);
  }

  SECTION("values stay inside the reward-implied box") {
    QTable table = QTable::zeros(4, 5);
    table.alpha = 0.3;
    table.gamma_discount = 0.8;
    pperl::Rng rng(31);
    for (int round = 0; round < 200; ++round) {
      ExperienceBuffer buf;
      for (int i = 0; i < 20; ++i)
        buf.push({static_cast<int>(rng.uniform_int(4)),
                  static_cast<int>(rng.uniform_int(5)),
                  -2.0 * rng.uniform(),
                  static_cast<int>(rng.uniform_int(4))});
      CHECK_NOTHROW(pperl::update_qtable(table, buf));
    }
    CHECK(table.values.minCoeff() >= -2.0 / (1.0 - 0.8) - 1e-9);
    CHECK(table.values.maxCoeff() <= 1e-9);
  }

  SECTION("invalid hyperparameters rejected") {
    QTable table = QTable::zeros(2, 2);
    table.alpha = 0.0;
    ExperienceBuffer buf;
    buf.push({0, 0, 0.0, 0});
    CHECK_THROWS_AS(pperl::update_qtable(table, buf), std::invalid_argument);
    table.alpha = 0.2;
    table.gamma_discount = 1.0;
    CHECK_THROWS_AS(pperl::update_qtable(table, buf), std::invalid_argument);
  }
}

TEST_CASE("residual application over a platoon", "[residual_q]") {
  const FuzzyEncoder enc = FuzzyEncoder::uniform(1.0, 7);
  const ActionGrid grid = ActionGrid::from_accel_bounds(-4.0, 4.0, 0.1);
  pperl::Rng rng(17);

  SECTION("untrained table is exactly the identity") {
    const QTable table = QTable::zeros(7, grid.n_actions());
    const Eigen::VectorXd u_p = Eigen::VectorXd::Constant(5, 14.7);
    Eigen::VectorXd errors(5);
    errors << -0.8, -0.1, 0.0, 0.4, 2.5;
    const Eigen::VectorXd u_r =
        pperl::apply_residual(u_p, errors, table, enc, grid, rng);
    CHECK((u_r - u_p).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("trained row applies its greedy offset; vehicles are independent") {
    QTable table = QTable::zeros(7, grid.n_actions());
    const int mid = pperl::encode_state(0.0, enc);
    const int chosen = grid.zero_index() - 10;  // offset -1.0 m/s
    table.values(mid, chosen) = 0.5;
    std::vector<int> actions;
    Eigen::VectorXd u_p(2);
    u_p << 15.0, 12.0;
    Eigen::VectorXd errors(2);
    errors << 0.0, 40.0;  // second vehicle in an untouched boundary state
    const Eigen::VectorXd u_r = pperl::apply_residual(
        u_p, errors, table, enc, grid, rng, &actions);
    CHECK(u_r[0] == Catch::Approx(14.0).margin(1e-12));
    CHECK(u_r[1] == 12.0);
    REQUIRE(actions.size() == 2);
    CHECK(actions[0] == chosen);
    CHECK(actions[1] == grid.zero_index());
  }

  SECTION("single-vehicle platoon reduces to the scalar pipeline") {
    QTable table = QTable::zeros(7, grid.n_actions());
    table.values(3, grid.zero_index() + 5) = 1.0;
    const Eigen::VectorXd u_r = pperl::apply_residual(
        Eigen::VectorXd::Constant(1, 10.0), Eigen::VectorXd::Zero(1), table,
        enc, grid, rng);
    CHECK(u_r[0] == Catch::Approx(10.5).margin(1e-12));
  }

  SECTION("shape mismatches rejected") {
    const QTable table = QTable::zeros(5, grid.n_actions());  // wrong rows
    CHECK_THROWS_AS(
        pperl::apply_residual(Eigen::VectorXd::Zero(2),
                              Eigen::VectorXd::Zero(2), table, enc, grid, rng),
        std::invalid_argument);
    const QTable ok = QTable::zeros(7, grid.n_actions());
    CHECK_THROWS_AS(
        pperl::apply_residual(Eigen::VectorXd::Zero(2),
                              Eigen::VectorXd::Zero(3), ok, enc, grid, rng),
        std::invalid_argument);
  }
}

TEST_CASE("q-table snapshots round-trip through the text format",
          "[residual_q]") {
  QTable table = QTable::zeros(3, 4);
  pperl::Rng rng(8);
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 4; ++a) table.values(s, a) = rng.normal(0.0, 2.0);

  const std::string path = "qtable_roundtrip_test.txt";
  pperl::save_qtable(path, table, 1.0, 0.1);
  const pperl::QTableSnapshot snap = pperl::load_qtable(path);
  std::remove(path.c_str());

  CHECK(snap.sigma == 1.0);
  CHECK(snap.delta == 0.1);
  REQUIRE(snap.table.values.rows() == 3);
  REQUIRE(snap.table.values.cols() == 4);
  CHECK((snap.table.values - table.values).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(pperl::load_qtable("definitely_missing_file.txt"),
                  std::runtime_error);
}

TEST_CASE("online learner compensates a persistent actuation bias",
          "[residual_q]") {
  pperl::DynamicsParams dyn;
  const auto mats = pperl::build_system_matrices(dyn);
  pperl::QLearnerConfig cfg;
  const int total_steps = 150;
  pperl::QLearner learner(cfg, dyn, -4.0, 4.0, total_steps);
  pperl::Rng rng(2);

  pperl::PlatoonState x(5);
  for (int i = 0; i < 5; ++i) {
    x.positions[i] = 20.0 * (4 - i);
    x.velocities[i] = 15.0;
  }
  const Eigen::VectorXd u_p = Eigen::VectorXd::Constant(5, 15.0);
  learner.reset(u_p);

  // Until the first scheduled update the stage must be the exact identity.
  CHECK(learner.effective_epsilon() == 0.0);
  const Eigen::VectorXd first = learner.adjust(u_p, x, rng);
  CHECK((first - u_p).cwiseAbs().maxCoeff() == 0.0);

  double steady_error = 0.0;
  for (int k = 0; k < total_steps; ++k) {
    const Eigen::VectorXd u_r = learner.adjust(u_p, x, rng);
    // The actuator persistently over-delivers by 1 m/s.
    const Eigen::VectorXd u_a = u_r.array() + 1.0;
    const pperl::PlatoonState x_next = step_platoon(x, u_a, mats);
    learner.observe(x, x_next);
    x = x_next;
    steady_error = u_p[0] - x.velocities[0];
  }

  CHECK(learner.updates_done() == total_steps / cfg.update_period);
  CHECK(learner.effective_epsilon() ==
        Catch::Approx(cfg.epsilon_end).margin(1e-9));

  // The greedy offset for the state the loop settled in must push the
  // command down, against the positive bias.
  const int settled = pperl::encode_state(steady_error, learner.encoder());
  const int greedy = pperl::greedy_action(learner.table(), settled);
  CHECK(learner.grid().value(greedy) < 0.0);
}
