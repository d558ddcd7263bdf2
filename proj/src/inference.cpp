#include "mmapirl/inference.hpp"

#include <cmath>
#include <sstream>

#include "ascent_core.hpp"
#include "mmapirl/errors.hpp"
#include "mmapirl/format.hpp"
#include "mmapirl/parallel.hpp"
#include "mmapirl/rng.hpp"

namespace mmapirl {

namespace {

Eigen::MatrixXd solve_square(const Eigen::MatrixXd& lhs, const Eigen::MatrixXd& rhs,
                             const char* what) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(lhs);
  Eigen::MatrixXd x = lu.solve(rhs);
  const double scale = rhs.cwiseAbs().maxCoeff();
  const double residual = (lhs * x - rhs).cwiseAbs().maxCoeff();
  if (!std::isfinite(residual) || residual > 1e-10 * std::max(1.0, scale)) {
    throw NumericalError(std::string("linear solve failed for ") + what);
  }
  return x;
}

// Flat transition matrix: row (s, a) holds the successor-state distribution.
Eigen::MatrixXd flat_transitions(const DiscountedMdp& mdp) {
  const int n = mdp.num_states * mdp.num_actions;
  Eigen::MatrixXd t(n, mdp.num_states);
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      t.row(flat_index(s, a, mdp.num_actions)) = mdp.transitions[a].row(s);
    }
  }
  return t;
}

Eigen::MatrixXd flat_features(const DiscountedMdp& mdp, const FeatureMap& features) {
  const int n = mdp.num_states * mdp.num_actions;
  Eigen::MatrixXd phi(n, features.num_features);
  for (int k = 0; k < features.num_features; ++k) {
    for (int s = 0; s < mdp.num_states; ++s) {
      for (int a = 0; a < mdp.num_actions; ++a) {
        phi(flat_index(s, a, mdp.num_actions), k) = features.phi[k](s, a);
      }
    }
  }
  return phi;
}

Eigen::VectorXd flat_reward(const RewardTable& reward) {
  const int states = static_cast<int>(reward.values.rows());
  const int actions = static_cast<int>(reward.values.cols());
  Eigen::VectorXd r(states * actions);
  for (int s = 0; s < states; ++s) {
    for (int a = 0; a < actions; ++a) {
      r(flat_index(s, a, actions)) = reward.values(s, a);
    }
  }
  return r;
}

Eigen::VectorXd emission_weights(const ObservationModel& observation,
                                 const TimestepRecord& record, int n) {
  if (record.occluded()) return Eigen::VectorXd::Ones(n);
  const int o = *record.observation;
  if (o < 0 || o >= observation.num_observations) {
    throw ValidationError("observation symbol out of range");
  }
  return observation.prob.col(o);
}

constexpr double kRegionTolerance = 1e-9;

}  // namespace

Eigen::MatrixXd chain_transition_matrix(const DiscountedMdp& mdp,
                                        const StochasticPolicy& policy) {
  const int n = mdp.num_states * mdp.num_actions;
  Eigen::MatrixXd m(n, n);
  for (int s2 = 0; s2 < mdp.num_states; ++s2) {
    for (int a2 = 0; a2 < mdp.num_actions; ++a2) {
      const int col = flat_index(s2, a2, mdp.num_actions);
      const double pi = policy.probs(s2, a2);
      for (int s = 0; s < mdp.num_states; ++s) {
        for (int a = 0; a < mdp.num_actions; ++a) {
          m(flat_index(s, a, mdp.num_actions), col) = mdp.transitions[a](s, s2) * pi;
        }
      }
    }
  }
  return m;
}

Eigen::VectorXd chain_initial_distribution(const DiscountedMdp& mdp,
                                           const StochasticPolicy& policy) {
  const int n = mdp.num_states * mdp.num_actions;
  Eigen::VectorXd d(n);
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      d(flat_index(s, a, mdp.num_actions)) =
          mdp.initial_distribution(s) * policy.probs(s, a);
    }
  }
  return d;
}

PosteriorMarginals forward_backward_chain(const Eigen::VectorXd& start,
                                          const Eigen::MatrixXd& chain,
                                          const ObservationModel& observation,
                                          const ObservedTrajectory& trajectory,
                                          bool want_pairwise) {
  const int n = static_cast<int>(start.size());
  const int horizon = trajectory.length();
  if (horizon == 0) throw ValidationError("trajectory has no steps");
  if (chain.rows() != n || chain.cols() != n) {
    throw ValidationError("chain matrix does not match start distribution");
  }
  if (observation.prob.rows() != n) {
    throw ValidationError("observation model does not match chain size");
  }

  std::vector<Eigen::VectorXd> weights(horizon);
  for (int t = 0; t < horizon; ++t) {
    weights[t] = emission_weights(observation, trajectory.records[t], n);
  }

  std::vector<Eigen::VectorXd> alpha(horizon);
  Eigen::VectorXd scale(horizon);
  Eigen::VectorXd cur = start.cwiseProduct(weights[0]);
  for (int t = 0;; ++t) {
    const double c = cur.sum();
    if (c <= 0.0) {
      throw ZeroLikelihoodError(
          "observations at step " + std::to_string(t) +
              " have zero probability under the model",
          -1, t);
    }
    scale(t) = c;
    alpha[t] = cur / c;
    if (t + 1 == horizon) break;
    cur = (chain.transpose() * alpha[t]).cwiseProduct(weights[t + 1]);
  }

  PosteriorMarginals out;
  out.log_likelihood = scale.array().log().sum();
  out.single.resize(horizon);
  if (want_pairwise) out.pairwise.resize(horizon - 1);

  Eigen::VectorXd beta = Eigen::VectorXd::Ones(n);
  out.single[horizon - 1] = alpha[horizon - 1];
  for (int t = horizon - 2; t >= 0; --t) {
    const Eigen::VectorXd wb = weights[t + 1].cwiseProduct(beta) / scale(t + 1);
    if (want_pairwise) {
      out.pairwise[t] = (alpha[t] * wb.transpose()).cwiseProduct(chain);
    }
    beta = chain * wb;
    out.single[t] = alpha[t].cwiseProduct(beta);
  }
  return out;
}

PosteriorMarginals forward_backward(const DiscountedMdp& mdp,
                                    const StochasticPolicy& policy,
                                    const ObservationModel& observation,
                                    const ObservedTrajectory& trajectory,
                                    bool want_pairwise) {
  return forward_backward_chain(chain_initial_distribution(mdp, policy),
                                chain_transition_matrix(mdp, policy), observation,
                                trajectory, want_pairwise);
}

double brute_force_likelihood(const DiscountedMdp& mdp,
                              const StochasticPolicy& policy,
                              const ObservationModel& observation,
                              const ObservedTrajectory& trajectory) {
  const int n = mdp.num_states * mdp.num_actions;
  const int horizon = trajectory.length();
  if (horizon == 0) throw ValidationError("trajectory has no steps");
  double completions = 1.0;
  for (int t = 0; t < horizon; ++t) completions *= n;
  if (completions > 1e7) {
    throw ValidationError("instance too large for exhaustive likelihood");
  }

  const Eigen::VectorXd start = chain_initial_distribution(mdp, policy);
  const Eigen::MatrixXd chain = chain_transition_matrix(mdp, policy);
  std::vector<Eigen::VectorXd> weights(horizon);
  for (int t = 0; t < horizon; ++t) {
    weights[t] = emission_weights(observation, trajectory.records[t], n);
  }

  double total = 0.0;
  std::function<void(int, int, double)> walk = [&](int t, int prev, double p) {
    for (int x = 0; x < n; ++x) {
      const double base = t == 0 ? start(x) : chain(prev, x);
      const double q = p * base * weights[t](x);
      if (q == 0.0) continue;
      if (t + 1 == horizon) {
        total += q;
      } else {
        walk(t + 1, x, q);
      }
    }
  };
  walk(0, -1, 1.0);
  return total;
}

Eigen::MatrixXd q_gradient(const DiscountedMdp& mdp,
                           const StochasticPolicy& policy,
                           const FeatureMap& features) {
  const int n = mdp.num_states * mdp.num_actions;
  const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(n, n) -
                              mdp.discount * chain_transition_matrix(mdp, policy);
  return solve_square(lhs, flat_features(mdp, features), "action-value gradient");
}

Eigen::MatrixXd policy_score(const DiscountedMdp& mdp,
                             const StochasticPolicy& soft_policy,
                             const Eigen::MatrixXd& dq, double beta) {
  Eigen::MatrixXd score(dq.rows(), dq.cols());
  for (int s = 0; s < mdp.num_states; ++s) {
    const auto block = dq.middleRows(s * mdp.num_actions, mdp.num_actions);
    const Eigen::RowVectorXd mean = soft_policy.probs.row(s) * block;
    score.middleRows(s * mdp.num_actions, mdp.num_actions) =
        beta * (block.rowwise() - mean);
  }
  return score;
}

OptimalityRegion reward_optimality_region(const DiscountedMdp& mdp,
                                          const DeterministicPolicy& policy) {
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  const int n = S * A;
  if (static_cast<int>(policy.action_of.size()) != S) {
    throw ValidationError("policy does not match state count");
  }

  Eigen::MatrixXd t_policy(S, S);
  Eigen::MatrixXd selector = Eigen::MatrixXd::Zero(S, n);
  for (int s = 0; s < S; ++s) {
    const int a = policy.action_of[s];
    if (a < 0 || a >= A) throw ValidationError("policy action out of range");
    t_policy.row(s) = mdp.transitions[a].row(s);
    selector(s, flat_index(s, a, A)) = 1.0;
  }
  // v = values_of_reward * r and q = q_of_reward * r for any flattened
  // reward vector r, with the policy held fixed.
  const Eigen::MatrixXd values_of_reward =
      solve_square(Eigen::MatrixXd::Identity(S, S) - mdp.discount * t_policy,
                   selector, "optimality region");
  const Eigen::MatrixXd q_of_reward =
      Eigen::MatrixXd::Identity(n, n) +
      mdp.discount * flat_transitions(mdp) * values_of_reward;

  OptimalityRegion region;
  region.halfspaces.resize(S * (A - 1), n);
  int row = 0;
  for (int s = 0; s < S; ++s) {
    const Eigen::RowVectorXd chosen = q_of_reward.row(flat_index(s, policy.action_of[s], A));
    for (int a = 0; a < A; ++a) {
      if (a == policy.action_of[s]) continue;
      region.halfspaces.row(row++) = chosen - q_of_reward.row(flat_index(s, a, A));
    }
  }
  return region;
}

bool gradient_reusable(const OptimalityRegion& region, const RewardTable& reward) {
  if (region.halfspaces.rows() == 0) return true;
  const Eigen::VectorXd r = flat_reward(reward);
  if (region.halfspaces.cols() != r.size()) {
    throw ValidationError("region and reward shapes disagree");
  }
  const double worst = (region.halfspaces * r).minCoeff();
  return worst >= -kRegionTolerance * std::max(1.0, r.lpNorm<Eigen::Infinity>());
}

void AscentConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw ValidationError("beta must be positive and finite");
  }
  if (!(step_size > 0.0)) throw ValidationError("step_size must be positive");
  if (!(decay > 0.0) || decay > 1.0) {
    throw ValidationError("decay must lie in (0, 1]");
  }
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
  if (discount < 0.0 || discount >= 1.0) {
    throw ValidationError("discount must lie in [0, 1)");
  }
  if (max_iterations < 1) throw ValidationError("max_iterations must be at least 1");
  if (!(prior_gradient_scale > 0.0)) {
    throw ValidationError("prior_gradient_scale must be positive");
  }
  if (jobs < 1) throw ValidationError("jobs must be at least 1");
}

std::string diagnostics_csv(const AscentDiagnostics& diagnostics) {
  std::ostringstream out;
  out << "iter,log_posterior,grad_norm,step_delta,cache_hit,boundary_crossed,wall_us\n";
  for (const auto& r : diagnostics.iterations) {
    out << r.iteration << ',' << format_double(r.log_posterior) << ','
        << format_double(r.gradient_norm) << ',' << format_double(r.step_delta)
        << ',' << (r.cache_hit ? 1 : 0) << ',' << (r.boundary_crossed ? 1 : 0)
        << ',' << r.wall_us << '\n';
  }
  return out.str();
}

namespace detail {

AscentState StateBuilder::build(const Eigen::VectorXd& theta) {
  AscentState state;
  state.theta = theta;
  state.reward = reward_of(FeatureWeights{theta}, features_).values;
  const RewardTable reward{state.reward};

  bool reused = false;
  if (cache_enabled_) {
    if (active_entry_ >= 0 &&
        gradient_reusable(entries_[active_entry_].region, reward)) {
      reused = true;
    } else {
      for (int i = 0; i < static_cast<int>(entries_.size()) && !reused; ++i) {
        if (i == active_entry_) continue;
        if (gradient_reusable(entries_[i].region, reward)) {
          active_entry_ = i;
          reused = true;
        }
      }
    }
  }

  if (reused) {
    ++cache_hits_;
    const DeterministicPolicy& policy = entries_[active_entry_].policy;
    ValueFunctions values;
    values.v = evaluate_policy(mdp_, reward, policy);
    values.q = q_from_values(mdp_, reward, values.v);
    state.solve = SolveResult{policy, std::move(values)};
  } else {
    ++policy_solves_;
    state.solve = solve_optimal(mdp_, reward, last_policy_);
    int found = -1;
    for (int i = 0; i < static_cast<int>(entries_.size()); ++i) {
      if (entries_[i].policy == state.solve.policy) {
        found = i;
        break;
      }
    }
    if (found < 0) {
      Entry entry;
      entry.policy = state.solve.policy;
      entry.region = reward_optimality_region(mdp_, entry.policy);
      entry.gradient = Eigen::VectorXd::Zero(features_.num_features);
      entry.dq =
          q_gradient(mdp_, to_stochastic(entry.policy, mdp_.num_actions), features_);
      if (cache_enabled_) {
        entries_.push_back(std::move(entry));
        found = static_cast<int>(entries_.size()) - 1;
      } else {
        entries_.assign(1, std::move(entry));
        found = 0;
      }
    }
    active_entry_ = found;
  }

  state.cache_hit = reused;
  state.boundary_crossed =
      last_policy_.has_value() && !(state.solve.policy == *last_policy_);
  last_policy_ = state.solve.policy;

  state.soft = boltzmann(state.solve.values, beta_);
  state.chain = chain_transition_matrix(mdp_, state.soft);
  state.chain_start = chain_initial_distribution(mdp_, state.soft);
  state.score = policy_score(mdp_, state.soft, entries_[active_entry_].dq, beta_);
  return state;
}

void StateBuilder::note_gradient(const Eigen::VectorXd& gradient) {
  if (active_entry_ >= 0) entries_[active_entry_].gradient = gradient;
}

DataTerm make_marginal_data_term(const ObservationModel& observation,
                                 const std::vector<ObservedTrajectory>& trajectories,
                                 int jobs) {
  return [&observation, &trajectories, jobs](const AscentState& state) {
    const int n = static_cast<int>(state.chain_start.size());
    const int count = static_cast<int>(trajectories.size());
    DataEvaluation eval;
    eval.visits = Eigen::VectorXd::Zero(n);
    if (count == 0) return eval;

    std::vector<double> log_liks(count, 0.0);
    std::vector<Eigen::VectorXd> visit_slots(count);
    parallel_for(count, jobs, [&](int i) {
      try {
        const PosteriorMarginals post = forward_backward_chain(
            state.chain_start, state.chain, observation, trajectories[i], false);
        log_liks[i] = post.log_likelihood;
        Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
        for (const auto& m : post.single) v += m;
        visit_slots[i] = std::move(v);
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
}

LearnResult run_ascent(const DiscountedMdp& mdp, const FeatureMap& features,
                       const GaussianPrior& prior, const AscentConfig& config,
                       Eigen::VectorXd theta, const DataTerm& data_term,
                       bool return_best) {
  using Clock = std::chrono::steady_clock;
  config.validate();
  prior.validate();
  if (std::abs(config.discount - mdp.discount) > 1e-12) {
    throw ValidationError("ascent discount must match the environment discount");
  }
  if (prior.mean.size() != features.num_features) {
    throw ValidationError("prior dimension does not match feature count");
  }
  if (theta.size() != features.num_features) {
    throw ValidationError("weight dimension does not match feature count");
  }

  const double threshold =
      config.discount > 0.0
          ? config.epsilon * (1.0 - config.discount) / config.discount
          : config.epsilon;

  StateBuilder builder(mdp, features, config.beta, config.cache_enabled);
  LearnResult result;

  auto evaluate = [&](const Eigen::VectorXd& th, AscentState& state,
                      Eigen::VectorXd& gradient) {
    state = builder.build(th);
    const DataEvaluation data = data_term(state);
    gradient = state.score.transpose() * data.visits +
               prior_gradient(FeatureWeights{th}, prior, config.prior_gradient_scale);
    builder.note_gradient(gradient);
    return data.log_data + log_prior(FeatureWeights{th}, prior);
  };

  AscentState state;
  Eigen::VectorXd gradient;
  auto t0 = Clock::now();
  double objective = evaluate(theta, state, gradient);
  auto record = [&](int iteration, double value, double delta) {
    IterationRecord r;
    r.iteration = iteration;
    r.log_posterior = value;
    r.gradient_norm = gradient.norm();
    r.step_delta = delta;
    r.cache_hit = state.cache_hit;
    r.boundary_crossed = state.boundary_crossed;
    r.wall_us =
        std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - t0)
            .count();
    result.diagnostics.iterations.push_back(r);
  };
  record(0, objective, 0.0);

  Eigen::VectorXd best_theta = theta;
  double best_objective = objective;
  Eigen::MatrixXd prev_reward = state.reward;
  double step = config.step_size;

  for (int n = 1; n <= config.max_iterations; ++n) {
    const Eigen::VectorXd proposal = theta + step * gradient;
    if (!proposal.allFinite()) {
      throw NumericalError("ascent diverged to non-finite weights at iteration " +
                           std::to_string(n) + " (last log posterior " +
                           std::to_string(objective) + ")");
    }
    t0 = Clock::now();
    objective = evaluate(proposal, state, gradient);
    const double delta = (state.reward - prev_reward).cwiseAbs().maxCoeff();
    record(n, objective, delta);

    theta = proposal;
    prev_reward = state.reward;
    step *= config.decay;
    if (objective >= best_objective) {
      best_objective = objective;
      best_theta = theta;
    }
    if (delta <= threshold) {
      result.diagnostics.converged = true;
      break;
    }
  }

  result.diagnostics.cache_hits = builder.cache_hits();
  result.diagnostics.policy_solves = builder.policy_solves();
  result.weights.theta = return_best ? best_theta : theta;
  return result;
}

}  // namespace detail

Eigen::VectorXd likelihood_gradient(const DiscountedMdp& mdp,
                                    const Eigen::VectorXd& theta,
                                    const std::vector<ObservedTrajectory>& trajectories,
                                    const ObservationModel& observation,
                                    const FeatureMap& features, double beta,
                                    int jobs) {
  detail::StateBuilder builder(mdp, features, beta, false);
  const detail::AscentState state = builder.build(theta);
  const detail::DataEvaluation data =
      detail::make_marginal_data_term(observation, trajectories, jobs)(state);
  return state.score.transpose() * data.visits;
}

PosteriorEvaluation evaluate_posterior(
    const DiscountedMdp& mdp,
    const std::vector<ObservedTrajectory>& trajectories,
    const ObservationModel& observation, const FeatureMap& features,
    const GaussianPrior& prior, const Eigen::VectorXd& theta,
    const AscentConfig& config) {
  config.validate();
  prior.validate();
  detail::StateBuilder builder(mdp, features, config.beta, false);
  const detail::AscentState state = builder.build(theta);
  const detail::DataEvaluation data =
      detail::make_marginal_data_term(observation, trajectories, config.jobs)(state);

  PosteriorEvaluation out;
  out.log_likelihood = data.log_data;
  out.log_prior = log_prior(FeatureWeights{theta}, prior);
  out.log_posterior = out.log_likelihood + out.log_prior;
  out.gradient = state.score.transpose() * data.visits +
                 prior_gradient(FeatureWeights{theta}, prior, config.prior_gradient_scale);
  return out;
}

LearnResult mmap_birl(const DiscountedMdp& mdp,
                      const std::vector<ObservedTrajectory>& trajectories,
                      const ObservationModel& observation,
                      const FeatureMap& features, const GaussianPrior& prior,
                      const AscentConfig& config) {
  mdp.validate();
  features.validate(mdp.num_states, mdp.num_actions);
  observation.validate(mdp.num_states, mdp.num_actions);
  const Eigen::VectorXd theta0 =
      sample_weights(prior, substream(config.seed, "init")).theta;
  return detail::run_ascent(
      mdp, features, prior, config, theta0,
      detail::make_marginal_data_term(observation, trajectories, config.jobs), false);
}

}  // namespace mmapirl
