#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>

#include "mmapirl/envs.hpp"
#include "mmapirl/mdp.hpp"
#include "mmapirl/reward.hpp"

using namespace mmapirl;

TEST_CASE("forestworld structure") {
  using namespace forest;
  const Environment env = build_forestworld();

  CHECK(env.mdp.num_states == 16);
  CHECK(env.mdp.num_actions == 4);
  CHECK(env.mdp.discount == 0.99);
  CHECK_NOTHROW(env.mdp.validate());
  CHECK_NOTHROW(env.features.validate(16, 4));
  CHECK_NOTHROW(env.observation.validate(16, 4));
  CHECK(!env.has_positive_class);

  const int goal = cell_index(3, 3);
  const int avoid_a = cell_index(1, 1);
  const int avoid_b = cell_index(3, 2);

  SUBCASE("slip splits 0.1 over the three unintended moves") {
    const int s = cell_index(2, 3);  // interior for all four destinations
    for (int a = 0; a < 4; ++a) {
      const int dx[4] = {0, 0, 1, -1};
      const int dy[4] = {1, -1, 0, 0};
      const int intended = cell_index(2 + dx[a], 3 + dy[a]);
      CHECK(env.mdp.transitions[a](s, intended) == doctest::Approx(0.9));
      CHECK(1.0 - env.mdp.transitions[a](s, intended) == doctest::Approx(0.1));
      for (int b = 0; b < 4; ++b) {
        if (b == a) continue;
        const int other = cell_index(2 + dx[b], 3 + dy[b]);
        CHECK(env.mdp.transitions[a](s, other) == doctest::Approx(0.1 / 3.0));
      }
    }
  }

  SUBCASE("walls reflect, including slipped moves") {
    const int corner = cell_index(1, 1);
    // West from (1,1): intended off-grid (stay), slip South also off-grid.
    CHECK(env.mdp.transitions[West](corner, corner) ==
          doctest::Approx(0.9 + 0.1 / 3.0));
    CHECK(env.mdp.transitions[West](corner, cell_index(1, 2)) ==
          doctest::Approx(0.1 / 3.0));
    CHECK(env.mdp.transitions[West](corner, cell_index(2, 1)) ==
          doctest::Approx(0.1 / 3.0));
  }

  SUBCASE("goal is absorbing") {
    for (int a = 0; a < 4; ++a) {
      CHECK(env.mdp.transitions[a](goal, goal) == 1.0);
    }
  }

  SUBCASE("features mark exactly the two avoid cells and the goal") {
    for (int k = 0; k < 3; ++k) {
      const int cell = k == 0 ? avoid_a : (k == 1 ? avoid_b : goal);
      for (int s = 0; s < 16; ++s) {
        for (int a = 0; a < 4; ++a) {
          CHECK(env.features.phi[k](s, a) == (s == cell ? 1.0 : 0.0));
        }
      }
    }
    CHECK(env.true_weights.theta == Eigen::Vector3d(-1.0, -1.0, 1.0));
  }

  SUBCASE("perception misplaces the goal to (2,3) with probability 0.3") {
    for (int s = 0; s < 16; ++s) {
      for (int a = 0; a < 4; ++a) {
        const int row = encode_state_action(s, a, 4);
        if (s == goal) {
          CHECK(env.observation.prob(row, row) == doctest::Approx(0.7));
          CHECK(env.observation.prob(
                    row, encode_state_action(cell_index(2, 3), a, 4)) ==
                doctest::Approx(0.3));
        } else {
          CHECK(env.observation.prob(row, row) == 1.0);
        }
      }
    }
  }

  SUBCASE("starts are uniform over the 13 unmarked cells") {
    int nonzero = 0;
    for (int s = 0; s < 16; ++s) {
      if (s == goal || s == avoid_a || s == avoid_b) {
        CHECK(env.mdp.initial_distribution[s] == 0.0);
      } else {
        CHECK(env.mdp.initial_distribution[s] == doctest::Approx(1.0 / 13.0));
        ++nonzero;
      }
    }
    CHECK(nonzero == 13);
  }

  SUBCASE("expert treats marked cells as costs, not stops") {
    // With unit-magnitude penalties against a goal that pays every step of
    // the absorbing tail, cutting straight through (3,2) from (3,1) is worth
    // the one-step penalty, so the expert may cross a marked cell. What must
    // hold: it never lingers in one, never enters (1,1) (off every useful
    // route), and every start reaches the goal.
    const SolveResult solve =
        solve_optimal(env.mdp, reward_of(env.true_weights, env.features));
    CHECK(solve.policy.action_of[cell_index(2, 3)] == East);
    CHECK(solve.policy.action_of[cell_index(4, 3)] == West);

    const int dx[4] = {0, 0, 1, -1};
    const int dy[4] = {1, -1, 0, 0};
    for (int start = 0; start < 16; ++start) {
      if (env.mdp.initial_distribution[start] == 0.0) continue;
      int s = start;
      int avoid_steps = 0;
      for (int step = 0; step < 32 && s != goal; ++step) {
        CHECK(s != avoid_a);
        avoid_steps += s == avoid_b;
        const int a = solve.policy.action_of[s];
        auto [x, y] = cell_coords(s);
        const int nx = x + dx[a], ny = y + dy[a];
        const int next = (nx < 1 || nx > 4 || ny < 1 || ny > 4) ? s : cell_index(nx, ny);
        if (s == avoid_b) CHECK(next != avoid_b);
        s = next;
      }
      CHECK(s == goal);
      CHECK(avoid_steps <= 1);
    }
  }
}

TEST_CASE("builders are deterministic") {
  const Environment f1 = build_forestworld();
  const Environment f2 = build_forestworld();
  for (int a = 0; a < 4; ++a) CHECK(f1.mdp.transitions[a] == f2.mdp.transitions[a]);
  CHECK(f1.observation.prob == f2.observation.prob);

  const Environment o1 = build_onionworld();
  const Environment o2 = build_onionworld();
  for (int a = 0; a < 5; ++a) CHECK(o1.mdp.transitions[a] == o2.mdp.transitions[a]);
  CHECK(o1.observation.prob == o2.observation.prob);
}

TEST_CASE("every feature is non-constant") {
  for (const Environment& env : {build_forestworld(), build_onionworld()}) {
    for (int k = 0; k < env.features.num_features; ++k) {
      CHECK(env.features.phi[k].minCoeff() < env.features.phi[k].maxCoeff());
    }
  }
}

TEST_CASE("onionworld structure") {
  using namespace onion;
  const Environment env = build_onionworld();

  CHECK(env.mdp.num_states == 48);
  CHECK(env.mdp.num_actions == 5);
  CHECK_NOTHROW(env.mdp.validate());
  CHECK(env.has_positive_class);
  CHECK(env.blemish_rate == 0.5);
  CHECK(env.mdp.initial_distribution[encode(Conveyor, Conveyor, Unknown)] == 1.0);

  SUBCASE("claim refocuses whenever the gripper is empty") {
    const int binned = encode(Bin, Bin, Good);
    CHECK(env.mdp.transitions[Claim](binned, encode(Conveyor, Bin, Unknown)) == 1.0);
    const int holding = encode(Hover, Hover, Unknown);
    CHECK(env.mdp.transitions[Claim](holding, holding) == 1.0);
  }

  SUBCASE("pick lifts only an unclassified conveyor onion") {
    const int fresh = encode(Conveyor, Conveyor, Unknown);
    CHECK(env.mdp.transitions[Pick](fresh, encode(Hover, Hover, Unknown)) == 1.0);
    const int sorted = encode(Conveyor, Conveyor, Good);
    CHECK(env.mdp.transitions[Pick](sorted, sorted) == 1.0);
  }

  SUBCASE("inspect reveals a held onion's class") {
    const int holding = encode(Hover, Hover, Unknown);
    CHECK(env.mdp.transitions[Inspect](holding, encode(AtFace, AtFace, Bad)) == 0.5);
    CHECK(env.mdp.transitions[Inspect](holding, encode(AtFace, AtFace, Good)) == 0.5);
    const int known = encode(AtFace, AtFace, Good);
    CHECK(env.mdp.transitions[Inspect](known, known) == 1.0);

    // After Inspect from any held state, the prediction is never unknown.
    for (int s = 0; s < 48; ++s) {
      if (!held(s)) continue;
      double known_mass = 0.0;
      for (int t = 0; t < 48; ++t) {
        if (prediction(t) != Unknown) known_mass += env.mdp.transitions[Inspect](s, t);
      }
      CHECK(known_mass == doctest::Approx(1.0));
    }
  }

  SUBCASE("placements move a held onion and the arm together") {
    const int bad_at_face = encode(AtFace, AtFace, Bad);
    CHECK(env.mdp.transitions[PlaceInBin](bad_at_face, encode(Bin, Bin, Bad)) == 1.0);
    CHECK(env.mdp.transitions[PlaceOnConveyor](bad_at_face,
                                               encode(Conveyor, Conveyor, Bad)) == 1.0);
    const int empty_handed = encode(Conveyor, Conveyor, Unknown);
    CHECK(env.mdp.transitions[PlaceInBin](empty_handed, empty_handed) == 1.0);
  }

  SUBCASE("feature supports match their definitions exactly") {
    for (int s = 0; s < 48; ++s) {
      for (int a = 0; a < 5; ++a) {
        const bool is_held = held(s);
        const int p = prediction(s);
        CHECK(env.features.phi[0](s, a) ==
              ((is_held && p == Good && a == PlaceOnConveyor) ? 1.0 : 0.0));
        CHECK(env.features.phi[1](s, a) ==
              ((is_held && p == Bad && a == PlaceOnConveyor) ? 1.0 : 0.0));
        CHECK(env.features.phi[2](s, a) ==
              ((is_held && p == Good && a == PlaceInBin) ? 1.0 : 0.0));
        CHECK(env.features.phi[3](s, a) ==
              ((is_held && p == Bad && a == PlaceInBin) ? 1.0 : 0.0));
        CHECK(env.features.phi[4](s, a) ==
              ((focus_done(s) && a == Claim) ? 1.0 : 0.0));
        CHECK(env.features.phi[5](s, a) ==
              ((onion_loc(s) == Conveyor && p == Unknown && a == Pick) ? 1.0 : 0.0));
      }
    }
  }

  SUBCASE("perception flips only the prediction component") {
    for (int s = 0; s < 48; ++s) {
      const int p = prediction(s);
      for (int a = 0; a < 5; ++a) {
        const int row = encode_state_action(s, a, 5);
        if (p == Unknown) {
          CHECK(env.observation.prob(row, row) == 1.0);
        } else {
          const int flipped = encode(onion_loc(s), ee_loc(s), p == Good ? Bad : Good);
          CHECK(env.observation.prob(row, row) == doctest::Approx(0.7));
          CHECK(env.observation.prob(row, encode_state_action(flipped, a, 5)) ==
                doctest::Approx(0.3));
        }
      }
    }
  }

  SUBCASE("the optimal expert runs the sort cycle") {
    const SolveResult solve =
        solve_optimal(env.mdp, reward_of(env.true_weights, env.features));
    CHECK(solve.policy.action_of[encode(Conveyor, Conveyor, Unknown)] == Pick);
    CHECK(solve.policy.action_of[encode(Hover, Hover, Unknown)] == Inspect);
    CHECK(solve.policy.action_of[encode(AtFace, AtFace, Bad)] == PlaceInBin);
    CHECK(solve.policy.action_of[encode(AtFace, AtFace, Good)] == PlaceOnConveyor);
    CHECK(solve.policy.action_of[encode(Bin, Bin, Bad)] == Claim);
    CHECK(solve.policy.action_of[encode(Conveyor, Conveyor, Good)] == Claim);
  }
}

TEST_CASE("environment files round-trip exactly") {
  const Environment original = build_forestworld();
  const std::string path = "tmp_env_forest.txt";
  save_environment_file(path, original);
  const Environment loaded = load_environment_file(path);

  CHECK(loaded.mdp.num_states == original.mdp.num_states);
  CHECK(loaded.mdp.num_actions == original.mdp.num_actions);
  CHECK(loaded.mdp.discount == original.mdp.discount);
  for (int a = 0; a < 4; ++a) {
    CHECK(loaded.mdp.transitions[a] == original.mdp.transitions[a]);
  }
  CHECK(loaded.mdp.initial_distribution == original.mdp.initial_distribution);
  for (int k = 0; k < 3; ++k) CHECK(loaded.features.phi[k] == original.features.phi[k]);
  CHECK(loaded.observation.prob == original.observation.prob);
  CHECK(loaded.true_weights.theta == original.true_weights.theta);
  std::remove(path.c_str());
}

TEST_CASE("environment file errors carry line numbers") {
  const std::string path = "tmp_env_bad.txt";
  {
    std::ofstream out(path);
    out << "states 2\ntransition 0 0 1 1.0\n";
  }
  CHECK_THROWS_WITH_AS(load_environment_file(path),
                       doctest::Contains(":2: counts must precede"),
                       ValidationError);
  {
    std::ofstream out(path);
    out << "states 2\nactions 1\nfeatures 1\nobservations 2\nwobble 3\n";
  }
  CHECK_THROWS_WITH_AS(load_environment_file(path),
                       doctest::Contains("unknown directive 'wobble'"),
                       ValidationError);
  std::remove(path.c_str());
}

TEST_CASE("make_environment dispatches names and paths") {
  const Environment noisier = make_environment("forestworld", 0.1, 0.95, 0.5);
  const int goal_row = encode_state_action(forest::cell_index(3, 3), 0, 4);
  CHECK(noisier.observation.prob(goal_row, goal_row) == doctest::Approx(0.9));
  CHECK(noisier.mdp.discount == 0.95);

  const Environment onion_env = make_environment("onionworld", 0.2, 0.99, 0.25);
  CHECK(onion_env.blemish_rate == 0.25);

  const std::string path = "tmp_env_dispatch.txt";
  save_environment_file(path, build_forestworld());
  CHECK_NOTHROW(make_environment(path, 0.0, 0.99, 0.5));
  CHECK_THROWS_AS(make_environment(path, 0.3, 0.99, 0.5), ValidationError);
  CHECK_THROWS_AS(make_environment("no_such_file.txt", 0.0, 0.99, 0.5),
                  ValidationError);
  std::remove(path.c_str());
}
