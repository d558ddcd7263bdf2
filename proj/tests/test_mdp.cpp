#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>

#include "mmapirl/mdp.hpp"
#include "mmapirl/rng.hpp"
#include "oracles.hpp"

using namespace mmapirl;

namespace {

// s0 can stay put or step to the absorbing goal s1. Goal pays 1 per step,
// so with discount g: v(s1) = 1/(1-g) and v(s0) = g * v(s1).
DiscountedMdp two_state_chain(double discount) {
  DiscountedMdp mdp;
  mdp.num_states = 2;
  mdp.num_actions = 2;
  mdp.discount = discount;
  Eigen::MatrixXd stay(2, 2), go(2, 2);
  stay << 1, 0, 0, 1;
  go << 0, 1, 0, 1;
  mdp.transitions = {stay, go};
  mdp.initial_distribution = Eigen::Vector2d(1.0, 0.0);
  return mdp;
}

RewardTable goal_reward() {
  RewardTable reward;
  reward.values = Eigen::MatrixXd::Zero(2, 2);
  reward.values.row(1).setOnes();
  return reward;
}

}  // namespace

TEST_CASE("validate rejects malformed mdps") {
  DiscountedMdp mdp = two_state_chain(0.9);
  CHECK_NOTHROW(mdp.validate());

  DiscountedMdp bad_discount = mdp;
  bad_discount.discount = 1.0;
  CHECK_THROWS_AS(bad_discount.validate(), ValidationError);
  bad_discount.discount = -0.1;
  CHECK_THROWS_AS(bad_discount.validate(), ValidationError);

  DiscountedMdp bad_rows = mdp;
  bad_rows.transitions[0](0, 0) = 0.5;
  CHECK_THROWS_AS(bad_rows.validate(), ValidationError);

  DiscountedMdp bad_initial = mdp;
  bad_initial.initial_distribution = Eigen::Vector2d(0.7, 0.7);
  CHECK_THROWS_AS(bad_initial.validate(), ValidationError);

  DiscountedMdp bad_shape = mdp;
  bad_shape.transitions.pop_back();
  CHECK_THROWS_AS(bad_shape.validate(), ValidationError);
}

TEST_CASE("two-state chain has closed-form optimal values") {
  const double g = 0.9;
  const DiscountedMdp mdp = two_state_chain(g);
  const SolveResult solve = solve_optimal(mdp, goal_reward());

  CHECK(solve.values.v[1] == doctest::Approx(1.0 / (1.0 - g)).epsilon(1e-10));
  CHECK(solve.values.v[0] == doctest::Approx(g / (1.0 - g)).epsilon(1e-10));
  CHECK(solve.policy.action_of[0] == 1);  // step to the goal
  // q(s0, stay) = g * v(s0), q(s0, go) = g * v(s1)
  CHECK(solve.values.q(0, 0) == doctest::Approx(g * g / (1.0 - g)).epsilon(1e-10));
  CHECK(solve.values.q(0, 1) == doctest::Approx(g / (1.0 - g)).epsilon(1e-10));
}

TEST_CASE("solve_optimal matches q-value iteration on random mdps") {
  for (int trial = 0; trial < 20; ++trial) {
    const int s_count = 3 + trial % 6;
    const int a_count = 2 + trial % 3;
    const DiscountedMdp mdp = oracles::random_mdp(s_count, a_count, 0.9, 100 + trial);
    RewardTable reward{oracles::random_matrix(s_count, a_count, 200 + trial)};

    const SolveResult solve = solve_optimal(mdp, reward);
    const Eigen::MatrixXd q_ref = oracles::value_iteration_q(mdp, reward.values);

    CHECK((solve.values.q - q_ref).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((solve.values.v - q_ref.rowwise().maxCoeff()).cwiseAbs().maxCoeff() < 1e-8);
    for (int s = 0; s < s_count; ++s) {
      int best = 0;
      for (int a = 1; a < a_count; ++a) {
        if (q_ref(s, a) > q_ref(s, best) + 1e-9) best = a;
      }
      CHECK(solve.policy.action_of[s] == best);
    }
  }
}

TEST_CASE("solve_optimal is invariant to the warm start") {
  const DiscountedMdp mdp = oracles::random_mdp(6, 3, 0.95, 7);
  RewardTable reward{oracles::random_matrix(6, 3, 8)};
  const SolveResult base = solve_optimal(mdp, reward);
  Rng rng = make_rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    DeterministicPolicy warm;
    for (int s = 0; s < 6; ++s) warm.action_of.push_back(next_int(rng, 0, 2));
    const SolveResult again = solve_optimal(mdp, reward, warm);
    CHECK(again.policy == base.policy);
    CHECK((again.values.q - base.values.q).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("ties break toward the smallest action index") {
  DiscountedMdp mdp = two_state_chain(0.9);
  // Make both actions identical: duplicate the "go" matrix.
  mdp.transitions[0] = mdp.transitions[1];
  const SolveResult solve = solve_optimal(mdp, goal_reward());
  CHECK(solve.policy.action_of[0] == 0);
  CHECK(solve.policy.action_of[1] == 0);
}

TEST_CASE("evaluate_policy satisfies the fixed-policy Bellman identity") {
  const DiscountedMdp mdp = oracles::random_mdp(7, 3, 0.92, 31);
  RewardTable reward{oracles::random_matrix(7, 3, 32)};

  DeterministicPolicy policy{{0, 1, 2, 0, 1, 2, 0}};
  const Eigen::VectorXd v = evaluate_policy(mdp, reward, policy);
  for (int s = 0; s < 7; ++s) {
    const int a = policy.action_of[s];
    const double rhs =
        reward.values(s, a) + mdp.discount * mdp.transitions[a].row(s).dot(v);
    CHECK(v[s] == doctest::Approx(rhs).epsilon(1e-10));
  }

  StochasticPolicy mixed;
  mixed.probs = Eigen::MatrixXd::Constant(7, 3, 1.0 / 3.0);
  const Eigen::VectorXd vm = evaluate_policy(mdp, reward, mixed);
  for (int s = 0; s < 7; ++s) {
    double rhs = 0.0;
    for (int a = 0; a < 3; ++a) {
      rhs += mixed.probs(s, a) *
             (reward.values(s, a) + mdp.discount * mdp.transitions[a].row(s).dot(vm));
    }
    CHECK(vm[s] == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("evaluate_policy agrees with truncated monte carlo returns") {
  const DiscountedMdp mdp = oracles::random_mdp(5, 3, 0.9, 77);
  RewardTable reward{oracles::random_matrix(5, 3, 78)};
  StochasticPolicy policy;
  policy.probs = Eigen::MatrixXd::Constant(5, 3, 1.0 / 3.0);

  const Eigen::VectorXd v = evaluate_policy(mdp, reward, policy);
  const int horizon = 60;
  // E[truncated return] = E_rho[v] - g^H E_{d_H}[v] exactly, so the MC mean
  // must land within sampling error of that prediction.
  const Eigen::VectorXd d_h = oracles::state_distribution_after(mdp, policy, horizon);
  const double predicted = mdp.initial_distribution.dot(v) -
                           std::pow(mdp.discount, horizon) * d_h.dot(v);
  double se = 0.0;
  const double mc =
      oracles::monte_carlo_return(mdp, policy, reward.values, horizon, 20000, 79, &se);
  CHECK(std::abs(mc - predicted) < 5.0 * se + 1e-12);
}

TEST_CASE("q_from_values reproduces the optimal solve's q table") {
  const DiscountedMdp mdp = oracles::random_mdp(6, 4, 0.9, 55);
  RewardTable reward{oracles::random_matrix(6, 4, 56)};
  const SolveResult solve = solve_optimal(mdp, reward);
  const Eigen::MatrixXd q = q_from_values(mdp, reward, solve.values.v);
  CHECK((q - solve.values.q).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("boltzmann policies are softmax rows") {
  ValueFunctions values;
  values.q = oracles::random_matrix(4, 3, 91, 5.0);
  values.v = values.q.rowwise().maxCoeff();

  const StochasticPolicy uniform = boltzmann(values, 0.0);
  CHECK((uniform.probs.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);

  const StochasticPolicy soft = boltzmann(values, 2.0);
  for (int s = 0; s < 4; ++s) {
    CHECK(soft.probs.row(s).sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        // Probability ratios follow exp(beta * (q_a - q_b)) exactly.
        const double expected = std::exp(2.0 * (values.q(s, a) - values.q(s, b)));
        CHECK(soft.probs(s, a) / soft.probs(s, b) ==
              doctest::Approx(expected).epsilon(1e-9));
      }
    }
  }

  // Row-wise constant shifts cancel in the softmax.
  ValueFunctions shifted = values;
  shifted.q.array() += 1234.5;
  const StochasticPolicy soft_shifted = boltzmann(shifted, 2.0);
  CHECK((soft_shifted.probs - soft.probs).cwiseAbs().maxCoeff() < 1e-12);

  // Extreme magnitudes stay finite thanks to max subtraction.
  ValueFunctions huge;
  huge.q = Eigen::MatrixXd::Zero(1, 3);
  huge.q << 1e6, 0.0, -1e6;
  const StochasticPolicy concentrated = boltzmann(huge, 1.0);
  CHECK(concentrated.probs.allFinite());
  CHECK(concentrated.probs(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

  const StochasticPolicy sharp = boltzmann(values, 1e6);
  for (int s = 0; s < 4; ++s) {
    int best = 0;
    for (int a = 1; a < 3; ++a) {
      if (values.q(s, a) > values.q(s, best)) best = a;
    }
    CHECK(sharp.probs(s, best) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("to_stochastic produces one-hot rows") {
  DeterministicPolicy policy{{2, 0, 1}};
  const StochasticPolicy one_hot = to_stochastic(policy, 3);
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(3, 3);
  expected(0, 2) = expected(1, 0) = expected(2, 1) = 1.0;
  CHECK((one_hot.probs - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("flat_index round-trips states and actions") {
  const int a_count = 5;
  for (int s = 0; s < 4; ++s) {
    for (int a = 0; a < a_count; ++a) {
      const int x = flat_index(s, a, a_count);
      CHECK(x / a_count == s);
      CHECK(x % a_count == a);
    }
  }
}
