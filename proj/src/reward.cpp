#include "mmapirl/reward.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mmapirl/errors.hpp"
#include "mmapirl/rng.hpp"

namespace mmapirl {

namespace {

void check_pair(const FeatureWeights& weights, int num_features) {
  if (weights.theta.size() != num_features) {
    throw ValidationError("weight vector length " +
                          std::to_string(weights.theta.size()) +
                          " does not match feature count " +
                          std::to_string(num_features));
  }
  if (!weights.theta.allFinite()) {
    throw ValidationError("weight vector contains non-finite entries");
  }
}

void check_prior_match(const FeatureWeights& weights, const GaussianPrior& prior) {
  prior.validate();
  if (weights.theta.size() != prior.mean.size()) {
    throw ValidationError("prior dimension does not match weight vector");
  }
}

}  // namespace

void FeatureMap::validate(int num_states, int num_actions) const {
  if (num_features <= 0 ||
      static_cast<int>(phi.size()) != num_features) {
    throw ValidationError("feature map must hold num_features matrices");
  }
  for (int k = 0; k < num_features; ++k) {
    if (phi[k].rows() != num_states || phi[k].cols() != num_actions) {
      throw ValidationError("feature " + std::to_string(k) + " has wrong shape");
    }
    if ((phi[k].array() < 0.0).any() || (phi[k].array() > 1.0).any()) {
      throw ValidationError("feature " + std::to_string(k) +
                            " has entries outside [0, 1]");
    }
  }
}

void GaussianPrior::validate() const {
  if (mean.size() == 0 || mean.size() != stddev.size()) {
    throw ValidationError("prior mean/stddev must be non-empty and same length");
  }
  if (!mean.allFinite() || !stddev.allFinite() ||
      (stddev.array() <= 0.0).any()) {
    throw ValidationError("prior stddev entries must be finite and > 0");
  }
}

RewardTable reward_of(const FeatureWeights& weights, const FeatureMap& features) {
  check_pair(weights, features.num_features);
  if (features.phi.empty()) {
    throw ValidationError("feature map is empty");
  }
  RewardTable reward;
  reward.values = Eigen::MatrixXd::Zero(features.phi[0].rows(), features.phi[0].cols());
  for (int k = 0; k < features.num_features; ++k) {
    reward.values += weights.theta(k) * features.phi[k];
  }
  return reward;
}

double log_prior(const FeatureWeights& weights, const GaussianPrior& prior) {
  check_prior_match(weights, prior);
  double total = 0.0;
  for (int k = 0; k < weights.theta.size(); ++k) {
    const double z = (weights.theta(k) - prior.mean(k)) / prior.stddev(k);
    total += -std::log(std::sqrt(2.0 * std::numbers::pi) * prior.stddev(k)) -
             0.5 * z * z;
  }
  return total;
}

Eigen::VectorXd prior_gradient(const FeatureWeights& weights, const GaussianPrior& prior,
                               double gradient_scale) {
  check_prior_match(weights, prior);
  if (gradient_scale <= 0.0 || !std::isfinite(gradient_scale)) {
    throw ValidationError("prior gradient scale must be finite and > 0");
  }
  return gradient_scale *
         (prior.mean - weights.theta).cwiseQuotient(prior.stddev.cwiseAbs2());
}

FeatureWeights sample_weights(const GaussianPrior& prior, std::uint64_t seed) {
  prior.validate();
  Rng rng = make_rng(seed);
  FeatureWeights weights;
  weights.theta.resize(prior.mean.size());
  for (int k = 0; k < prior.mean.size(); ++k) {
    weights.theta(k) = prior.mean(k) + prior.stddev(k) * next_gaussian(rng);
  }
  return weights;
}

}  // namespace mmapirl
