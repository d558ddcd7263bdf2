#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mmapirl/mdp.hpp"

namespace mmapirl {

// Binary or bounded state-action features; the reward is linear in them.
struct FeatureMap {
  int num_features = 0;
  std::vector<Eigen::MatrixXd> phi;  // phi[k](s, a) in [0, 1]

  void validate(int num_states, int num_actions) const;
};

struct FeatureWeights {
  Eigen::VectorXd theta;
};

// Independent Gaussian prior per weight.
struct GaussianPrior {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;  // strictly positive

  void validate() const;
};

// r(s,a) = sum_k theta_k phi_k(s,a)
RewardTable reward_of(const FeatureWeights& weights, const FeatureMap& features);

// sum_k [ -log(sqrt(2 pi) sigma_k) - (theta_k - mu_k)^2 / (2 sigma_k^2) ]
double log_prior(const FeatureWeights& weights, const GaussianPrior& prior);

// Gradient of log_prior: -(theta - mu) / sigma^2, scaled by gradient_scale.
// gradient_scale = 0.5 reproduces ascent schedules tuned around a half-sized
// prior pull; 1 is the exact derivative and the default.
Eigen::VectorXd prior_gradient(const FeatureWeights& weights, const GaussianPrior& prior,
                               double gradient_scale = 1.0);

FeatureWeights sample_weights(const GaussianPrior& prior, std::uint64_t seed);

}  // namespace mmapirl
