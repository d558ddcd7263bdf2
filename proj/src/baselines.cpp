#include "mmapirl/baselines.hpp"

#include <cmath>
#include <utility>

#include "ascent_core.hpp"
#include "mmapirl/errors.hpp"
#include "mmapirl/parallel.hpp"
#include "mmapirl/rng.hpp"

namespace mmapirl {

namespace {

struct Segment {
  int offset = 0;  // 0-based index of the segment's first step
  ObservedTrajectory part;
};

std::vector<std::vector<Segment>> visible_segments(
    const std::vector<ObservedTrajectory>& trajectories) {
  std::vector<std::vector<Segment>> all(trajectories.size());
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& records = trajectories[i].records;
    std::size_t t = 0;
    while (t < records.size()) {
      if (records[t].occluded()) {
        ++t;
        continue;
      }
      Segment seg;
      seg.offset = static_cast<int>(t);
      while (t < records.size() && !records[t].occluded()) {
        seg.part.records.push_back(records[t]);
        ++t;
      }
      all[i].push_back(std::move(seg));
    }
  }
  return all;
}

// Sum of q * log(p) over the support of q. Zero-probability entries with
// posterior mass produce -inf, which correctly poisons the surrogate.
double masked_entropy_dot(const Eigen::VectorXd& q, const Eigen::VectorXd& p) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (q(i) > 0.0) acc += q(i) * std::log(p(i));
  }
  return acc;
}

double masked_entropy_dot(const Eigen::MatrixXd& q, const Eigen::MatrixXd& p) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      if (q(i, j) > 0.0) acc += q(i, j) * std::log(p(i, j));
    }
  }
  return acc;
}

constexpr double kPosteriorFixedPoint = 1e-12;

}  // namespace

LearnResult ignore_occlusion_map_birl(
    const DiscountedMdp& mdp, const std::vector<ObservedTrajectory>& trajectories,
    const ObservationModel& observation, const FeatureMap& features,
    const GaussianPrior& prior, const AscentConfig& config,
    SegmentStart segment_start) {
  mdp.validate();
  features.validate(mdp.num_states, mdp.num_actions);
  observation.validate(mdp.num_states, mdp.num_actions);

  const auto segments = visible_segments(trajectories);
  int max_offset = 0;
  for (const auto& per_traj : segments) {
    for (const auto& seg : per_traj) max_offset = std::max(max_offset, seg.offset);
  }

  auto data_term = [&](const detail::AscentState& state) {
    const int n = static_cast<int>(state.chain_start.size());
    detail::DataEvaluation eval;
    eval.visits = Eigen::VectorXd::Zero(n);
    const int count = static_cast<int>(segments.size());
    if (count == 0) return eval;

    // Chain occupancy at each time offset under the current policy; segment
    // heads restart from it so the visible evidence stays on-distribution.
    std::vector<Eigen::VectorXd> occupancy(max_offset + 1);
    occupancy[0] = state.chain_start;
    for (int t = 1; t <= max_offset; ++t) {
      occupancy[t] = state.chain.transpose() * occupancy[t - 1];
    }
    Eigen::VectorXd uniform;
    if (segment_start == SegmentStart::UniformStates) {
      uniform.resize(n);
      const int actions = static_cast<int>(state.soft.probs.cols());
      const int states = static_cast<int>(state.soft.probs.rows());
      for (int s = 0; s < states; ++s) {
        for (int a = 0; a < actions; ++a) {
          uniform(flat_index(s, a, actions)) = state.soft.probs(s, a) / states;
        }
      }
    }

    std::vector<double> log_liks(count, 0.0);
    std::vector<Eigen::VectorXd> visit_slots(count, Eigen::VectorXd::Zero(n));
    parallel_for(count, config.jobs, [&](int i) {
      try {
        for (const auto& seg : segments[i]) {
          const Eigen::VectorXd& start =
              segment_start == SegmentStart::PolicyOccupancy ? occupancy[seg.offset]
                                                             : uniform;
          const PosteriorMarginals post = forward_backward_chain(
              start, state.chain, observation, seg.part, false);
          log_liks[i] += post.log_likelihood;
          for (const auto& m : post.single) visit_slots[i] += m;
        }
      } catch (const ZeroLikelihoodError& e) {
        throw ZeroLikelihoodError("trajectory " + std::to_string(i) + ": " + e.what(),
                                  i, e.timestep);
      }
    });
    for (int i = 0; i < count; ++i) {
      eval.log_data += log_liks[i];
      eval.visits += visit_slots[i];
    }
    return eval;
  };

  const Eigen::VectorXd theta0 =
      sample_weights(prior, substream(config.seed, "init")).theta;
  return detail::run_ascent(mdp, features, prior, config, theta0, data_term, false);
}

void EmConfig::validate() const {
  ascent.validate();
  if (max_rounds < 1) throw ValidationError("max_rounds must be at least 1");
  if (!(tolerance > 0.0)) throw ValidationError("tolerance must be positive");
}

namespace {

struct ExpectationStep {
  std::vector<PosteriorMarginals> posteriors;
  double log_likelihood = 0.0;
  Eigen::VectorXd visits;          // sum of single marginals over all steps
  Eigen::VectorXd first_step;      // sum of t = 0 marginals
  Eigen::MatrixXd transition_mass; // sum of pairwise marginals
};

ExpectationStep expectation_step(const detail::AscentState& state,
                                 const ObservationModel& observation,
                                 const std::vector<ObservedTrajectory>& trajectories,
                                 int jobs) {
  const int n = static_cast<int>(state.chain_start.size());
  const int count = static_cast<int>(trajectories.size());
  ExpectationStep e;
  e.posteriors.resize(count);
  e.visits = Eigen::VectorXd::Zero(n);
  e.first_step = Eigen::VectorXd::Zero(n);
  e.transition_mass = Eigen::MatrixXd::Zero(n, n);

  parallel_for(count, jobs, [&](int i) {
    try {
      e.posteriors[i] = forward_backward_chain(state.chain_start, state.chain,
                                               observation, trajectories[i], true);
    } catch (const ZeroLikelihoodError& err) {
      throw ZeroLikelihoodError("trajectory " + std::to_string(i) + ": " + err.what(),
                                i, err.timestep);
    }
  });
  for (int i = 0; i < count; ++i) {
    e.log_likelihood += e.posteriors[i].log_likelihood;
    e.first_step += e.posteriors[i].single.front();
    for (const auto& m : e.posteriors[i].single) e.visits += m;
    for (const auto& p : e.posteriors[i].pairwise) e.transition_mass += p;
  }
  return e;
}

double posterior_change(const std::vector<PosteriorMarginals>& a,
                        const std::vector<PosteriorMarginals>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t t = 0; t < a[i].single.size(); ++t) {
      worst = std::max(worst,
                       (a[i].single[t] - b[i].single[t]).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

}  // namespace

EmResult hidden_data_em(const DiscountedMdp& mdp,
                        const std::vector<ObservedTrajectory>& trajectories,
                        const ObservationModel& observation,
                        const FeatureMap& features, const GaussianPrior& prior,
                        const EmConfig& config) {
  mdp.validate();
  features.validate(mdp.num_states, mdp.num_actions);
  observation.validate(mdp.num_states, mdp.num_actions);
  config.validate();
  if (trajectories.empty()) {
    throw ValidationError("expectation-maximization needs at least one trajectory");
  }

  EmResult result;
  Eigen::VectorXd theta =
      sample_weights(prior, substream(config.ascent.seed, "init")).theta;

  detail::StateBuilder builder(mdp, features, config.ascent.beta,
                               config.ascent.cache_enabled);
  detail::AscentState state = builder.build(theta);
  ExpectationStep e =
      expectation_step(state, observation, trajectories, config.ascent.jobs);

  for (int round = 1; round <= config.max_rounds; ++round) {
    // Expected complete-data log likelihood under the frozen posteriors; the
    // emission terms do not depend on theta and are omitted, which shifts
    // every surrogate value in the round by the same constant.
    auto surrogate_term = [&e](const detail::AscentState& st) {
      detail::DataEvaluation eval;
      eval.log_data = masked_entropy_dot(e.first_step, st.chain_start) +
                      masked_entropy_dot(e.transition_mass, st.chain);
      eval.visits = e.visits;
      return eval;
    };

    LearnResult inner = detail::run_ascent(mdp, features, prior, config.ascent,
                                           theta, surrogate_term, true);

    EmRoundRecord record;
    record.round = round;
    record.surrogate_before = inner.diagnostics.iterations.front().log_posterior;
    record.surrogate_after = record.surrogate_before;
    for (const auto& it : inner.diagnostics.iterations) {
      record.surrogate_after = std::max(record.surrogate_after, it.log_posterior);
    }
    record.theta_delta =
        (inner.weights.theta - theta).cwiseAbs().maxCoeff();
    record.inner = std::move(inner.diagnostics);

    theta = inner.weights.theta;
    state = builder.build(theta);
    ExpectationStep e_next =
        expectation_step(state, observation, trajectories, config.ascent.jobs);
    record.log_posterior =
        e_next.log_likelihood + log_prior(FeatureWeights{theta}, prior);
    const double drift = posterior_change(e.posteriors, e_next.posteriors);
    result.diagnostics.rounds.push_back(std::move(record));

    if (result.diagnostics.rounds.back().theta_delta < config.tolerance ||
        drift <= kPosteriorFixedPoint) {
      result.diagnostics.converged = true;
      break;
    }
    e = std::move(e_next);
  }

  result.weights.theta = theta;
  return result;
}

}  // namespace mmapirl
