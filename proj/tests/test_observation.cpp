#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "mmapirl/observation.hpp"
#include "oracles.hpp"

using namespace mmapirl;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

int hidden_count(const ObservedTrajectory& traj) {
  int n = 0;
  for (const auto& r : traj.records) n += r.occluded();
  return n;
}

// Two symbols per pair: the true code with probability 1 - eps, the flipped
// partner code with probability eps (pairs share a 2-cycle).
ObservationModel noisy_pair_model(int num_states, int num_actions, double eps) {
  ObservationModel model;
  model.num_actions = num_actions;
  model.num_observations = num_states * num_actions;
  model.prob = Eigen::MatrixXd::Zero(model.num_observations, model.num_observations);
  for (int x = 0; x < model.num_observations; ++x) {
    const int partner = x ^ 1;
    model.prob(x, x) = 1.0 - eps;
    model.prob(x, partner) += eps;
  }
  return model;
}

}  // namespace

TEST_CASE("identity observation model emits the true pair code") {
  const ObservationModel model = identity_observation_model(3, 2);
  CHECK_NOTHROW(model.validate(3, 2));
  Rng rng = make_rng(1);
  for (int s = 0; s < 3; ++s) {
    for (int a = 0; a < 2; ++a) {
      CHECK(sample_observation(model, s, a, rng) == encode_state_action(s, a, 2));
    }
  }
}

TEST_CASE("observation model validation") {
  ObservationModel model = identity_observation_model(3, 2);
  CHECK_THROWS_AS(model.validate(4, 2), ValidationError);
  CHECK_THROWS_AS(model.validate(3, 3), ValidationError);

  ObservationModel bad_rows = model;
  bad_rows.prob(0, 0) = 0.5;
  CHECK_THROWS_AS(bad_rows.validate(3, 2), ValidationError);

  ObservationModel negative = model;
  negative.prob(0, 0) = -1.0;
  negative.prob(0, 1) = 2.0;
  CHECK_THROWS_AS(negative.validate(3, 2), ValidationError);
}

TEST_CASE("noisy observation frequencies match the model") {
  const double eps = 0.3;
  const ObservationModel model = noisy_pair_model(2, 2, eps);
  CHECK_NOTHROW(model.validate(2, 2));

  Rng rng = make_rng(12345);
  const int draws = 100000;
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(model.num_observations);
  for (int i = 0; i < draws; ++i) counts[sample_observation(model, 1, 0, rng)] += 1;

  const double stat =
      oracles::chi_square(counts, model.prob.row(encode_state_action(1, 0, 2)));
  // 1 effective degree of freedom (two support points); 10.83 is the 99.9%
  // quantile of chi2(1).
  CHECK(stat < 10.83);
}

TEST_CASE("contiguous block occlusion hides round(rate * horizon) steps in a run") {
  OcclusionSpec spec;
  spec.mode = OcclusionMode::ContiguousBlock;
  const std::vector<int> symbols(8, 3);

  spec.rate = 0.2;  // round(0.2 * 8) = 2
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng = make_rng(400 + trial);
    const ObservedTrajectory traj = apply_occlusion(symbols, spec, rng);
    CHECK(hidden_count(traj) == 2);
    int first = -1, last = -1;
    for (int t = 0; t < traj.length(); ++t) {
      if (traj.records[t].occluded()) {
        if (first < 0) first = t;
        last = t;
      }
    }
    CHECK(last - first + 1 == 2);  // one contiguous run
  }

  spec.rate = 0.0;
  Rng rng0 = make_rng(1);
  CHECK(hidden_count(apply_occlusion(symbols, spec, rng0)) == 0);

  spec.rate = 1.0;
  Rng rng1 = make_rng(1);
  CHECK(hidden_count(apply_occlusion(symbols, spec, rng1)) == 8);

  spec.rate = 1.5;
  Rng rng2 = make_rng(1);
  CHECK_THROWS_AS(apply_occlusion(symbols, spec, rng2), ValidationError);
}

TEST_CASE("iid occlusion hides each step at the configured rate") {
  OcclusionSpec spec;
  spec.mode = OcclusionMode::IidPerStep;
  spec.rate = 0.3;
  const std::vector<int> symbols(20, 0);

  int hidden = 0;
  const int trials = 5000;
  Rng rng = make_rng(7);
  for (int i = 0; i < trials; ++i) hidden += hidden_count(apply_occlusion(symbols, spec, rng));

  const int total = trials * 20;
  const double rate = double(hidden) / total;
  const double se = std::sqrt(0.3 * 0.7 / total);
  CHECK(std::abs(rate - 0.3) < 5.0 * se);
}

TEST_CASE("demonstrations are reproducible and occlusion-toggle stable") {
  const DiscountedMdp mdp = oracles::random_mdp(4, 2, 0.9, 21);
  const ObservationModel model = identity_observation_model(4, 2);
  StochasticPolicy expert;
  expert.probs = Eigen::MatrixXd::Constant(4, 2, 0.5);

  OcclusionSpec none;
  none.rate = 0.0;
  OcclusionSpec half;
  half.mode = OcclusionMode::IidPerStep;
  half.rate = 0.5;

  const DemonstrationSet a = simulate_demonstrations(mdp, expert, model, 12, none, 6, 99);
  const DemonstrationSet b = simulate_demonstrations(mdp, expert, model, 12, none, 6, 99);
  const DemonstrationSet c = simulate_demonstrations(mdp, expert, model, 12, half, 6, 99);

  for (int i = 0; i < 6; ++i) {
    CHECK(a.truth[i].steps == b.truth[i].steps);
    CHECK(a.truth[i].steps == c.truth[i].steps);  // occlusion stream is separate
    for (int t = 0; t < 12; ++t) {
      CHECK(a.observed[i].records[t].observation ==
            b.observed[i].records[t].observation);
      if (!c.observed[i].records[t].occluded()) {
        // Visible symbols are untouched by the occlusion toggle.
        CHECK(*c.observed[i].records[t].observation ==
              *a.observed[i].records[t].observation);
      }
    }
  }

  // Ground truth is dynamically consistent: every step has positive
  // probability under the policy and the transition kernel.
  for (const GroundTruthTrajectory& traj : a.truth) {
    for (std::size_t t = 0; t + 1 < traj.steps.size(); ++t) {
      const auto [s, act] = traj.steps[t];
      const auto [s_next, a_next] = traj.steps[t + 1];
      CHECK(expert.probs(s, act) > 0.0);
      CHECK(mdp.transitions[act](s, s_next) > 0.0);
      CHECK(expert.probs(s_next, a_next) > 0.0);
    }
  }
}

TEST_CASE("trajectory files round-trip bit-exactly") {
  TrajectoryBatch batch;
  batch.horizon = 4;
  batch.num_observations = 9;
  ObservedTrajectory t0, t1;
  t0.records = {TimestepRecord::observed(3), TimestepRecord::hidden(),
                TimestepRecord::observed(8), TimestepRecord::observed(0)};
  t1.records = {TimestepRecord::hidden(), TimestepRecord::hidden(),
                TimestepRecord::hidden(), TimestepRecord::hidden()};
  batch.trajectories = {t0, t1};

  const std::string path = "tmp_obs_batch.txt";
  write_trajectories(path, batch, {"made by the round-trip test"});
  const TrajectoryBatch then = read_trajectories(path);

  CHECK(then.horizon == batch.horizon);
  CHECK(then.num_observations == batch.num_observations);
  REQUIRE(then.trajectories.size() == 2);
  for (int i = 0; i < 2; ++i) {
    for (int t = 0; t < 4; ++t) {
      CHECK(then.trajectories[i].records[t].observation ==
            batch.trajectories[i].records[t].observation);
    }
  }

  const std::string bytes = slurp(path);
  write_trajectories(path, then, {"made by the round-trip test"});
  CHECK(slurp(path) == bytes);
  std::remove(path.c_str());
}

TEST_CASE("trajectory reader reports malformed files with line numbers") {
  const std::string path = "tmp_obs_bad.txt";
  {
    std::ofstream out(path);
    out << "T=2 N=1 O=4\n0 7\n";
  }
  CHECK_THROWS_WITH_AS(read_trajectories(path),
                       doctest::Contains("outside [0, 4)"), ValidationError);
  {
    std::ofstream out(path);
    out << "T=3 N=2 O=4\n0 1 2\n";
  }
  CHECK_THROWS_WITH_AS(read_trajectories(path), doctest::Contains("N=2"),
                       ValidationError);
  {
    std::ofstream out(path);
    out << "T=2 N=1 O=4\n0 x\n";
  }
  CHECK_THROWS_WITH_AS(read_trajectories(path), doctest::Contains("'x'"),
                       ValidationError);
  std::remove(path.c_str());
}

TEST_CASE("ground truth files round-trip") {
  std::vector<GroundTruthTrajectory> truth(2);
  truth[0].steps = {{0, 1}, {2, 0}, {3, 1}};
  truth[1].steps = {{1, 0}, {1, 0}, {0, 1}};

  const std::string path = "tmp_obs_truth.txt";
  write_ground_truth(path, truth, 4, 2, {"sidecar"});
  const auto then = read_ground_truth(path);
  REQUIRE(then.size() == 2);
  CHECK(then[0].steps == truth[0].steps);
  CHECK(then[1].steps == truth[1].steps);

  const std::string bytes = slurp(path);
  write_ground_truth(path, then, 4, 2, {"sidecar"});
  CHECK(slurp(path) == bytes);
  std::remove(path.c_str());
}
