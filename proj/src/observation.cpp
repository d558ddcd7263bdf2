#include "mmapirl/observation.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "mmapirl/errors.hpp"

namespace mmapirl {

namespace {

constexpr double kRowSumTolerance = 1e-9;

[[noreturn]] void file_error(const std::string& path, int line,
                             const std::string& what) {
  throw ValidationError(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

void ObservationModel::validate(int states, int actions) const {
  if (num_actions != actions) {
    throw ValidationError("observation model was built for " +
                          std::to_string(num_actions) + " actions, MDP has " +
                          std::to_string(actions));
  }
  const int pairs = states * actions;
  if (num_observations <= 0) {
    throw ValidationError("observation model must have at least one symbol");
  }
  if (prob.rows() != pairs || prob.cols() != num_observations) {
    throw ValidationError("observation model shape " + std::to_string(prob.rows()) +
                          "x" + std::to_string(prob.cols()) + " does not match " +
                          std::to_string(pairs) + " state-action pairs");
  }
  if ((prob.array() < 0.0).any()) {
    throw ValidationError("observation model has negative entries");
  }
  for (int x = 0; x < pairs; ++x) {
    const double sum = prob.row(x).sum();
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      throw ValidationError("observation row " + std::to_string(x) +
                            " sums to " + std::to_string(sum));
    }
  }
}

ObservationModel identity_observation_model(int num_states, int num_actions) {
  ObservationModel model;
  model.num_actions = num_actions;
  model.num_observations = num_states * num_actions;
  model.prob = Eigen::MatrixXd::Identity(model.num_observations, model.num_observations);
  return model;
}

void OcclusionSpec::validate() const {
  if (rate < 0.0 || rate > 1.0 || !std::isfinite(rate)) {
    throw ValidationError("occlusion rate must lie in [0, 1]");
  }
}

int sample_observation(const ObservationModel& model, int state, int action, Rng& rng) {
  const int row = encode_state_action(state, action, model.num_actions);
  if (row < 0 || row >= model.prob.rows() || action >= model.num_actions) {
    throw ValidationError("state-action pair (" + std::to_string(state) + ", " +
                          std::to_string(action) + ") outside observation model");
  }
  return sample_index(model.prob.row(row), rng);
}

ObservedTrajectory apply_occlusion(const std::vector<int>& observations,
                                   const OcclusionSpec& spec, Rng& rng) {
  spec.validate();
  const int horizon = static_cast<int>(observations.size());
  ObservedTrajectory out;
  out.records.reserve(horizon);
  for (int o : observations) out.records.push_back(TimestepRecord::observed(o));

  if (horizon == 0) return out;
  if (spec.mode == OcclusionMode::ContiguousBlock) {
    const int block = static_cast<int>(std::lround(spec.rate * horizon));
    if (block > 0) {
      const int start = next_int(rng, 0, horizon - block);
      for (int t = start; t < start + block; ++t) {
        out.records[t] = TimestepRecord::hidden();
      }
    }
  } else {
    for (int t = 0; t < horizon; ++t) {
      if (next_unit(rng) < spec.rate) out.records[t] = TimestepRecord::hidden();
    }
  }
  return out;
}

DemonstrationSet simulate_demonstrations(const DiscountedMdp& mdp,
                                         const StochasticPolicy& expert,
                                         const ObservationModel& model,
                                         int horizon, const OcclusionSpec& occlusion,
                                         int num_trajectories, std::uint64_t seed) {
  mdp.validate();
  model.validate(mdp.num_states, mdp.num_actions);
  occlusion.validate();
  if (horizon <= 0) throw ValidationError("horizon must be positive");
  if (num_trajectories <= 0) throw ValidationError("need at least one trajectory");
  if (expert.probs.rows() != mdp.num_states ||
      expert.probs.cols() != mdp.num_actions) {
    throw ValidationError("expert policy has wrong shape");
  }

  DemonstrationSet set;
  set.observed.resize(num_trajectories);
  set.truth.resize(num_trajectories);
  for (int i = 0; i < num_trajectories; ++i) {
    Rng gen = make_rng(substream(seed, "gen", static_cast<std::uint64_t>(i)));
    GroundTruthTrajectory truth;
    std::vector<int> symbols;
    truth.steps.reserve(horizon);
    symbols.reserve(horizon);
    int state = sample_index(mdp.initial_distribution, gen);
    for (int t = 0; t < horizon; ++t) {
      const int action = sample_index(expert.probs.row(state), gen);
      truth.steps.emplace_back(state, action);
      symbols.push_back(sample_observation(model, state, action, gen));
      state = sample_index(mdp.transitions[action].row(state), gen);
    }
    Rng occ = make_rng(substream(seed, "occ", static_cast<std::uint64_t>(i)));
    set.observed[i] = apply_occlusion(symbols, occlusion, occ);
    set.truth[i] = std::move(truth);
  }
  return set;
}

void write_trajectories(const std::string& path, const TrajectoryBatch& batch,
                        const std::vector<std::string>& comments) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path + " for writing");
  for (const std::string& comment : comments) out << "# " << comment << "\n";
  out << "T=" << batch.horizon << " N=" << batch.trajectories.size()
      << " O=" << batch.num_observations << "\n";
  for (const ObservedTrajectory& traj : batch.trajectories) {
    if (traj.length() != batch.horizon) {
      throw ValidationError("trajectory length does not match batch horizon");
    }
    for (int t = 0; t < traj.length(); ++t) {
      if (t) out << ' ';
      if (traj.records[t].occluded()) {
        out << '#';
      } else {
        out << *traj.records[t].observation;
      }
    }
    out << "\n";
  }
  if (!out) throw ValidationError("write failed for " + path);
}

TrajectoryBatch read_trajectories(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  std::string line;
  int line_no = 0;
  for (;;) {
    if (!std::getline(in, line)) file_error(path, line_no + 1, "missing header");
    ++line_no;
    if (!line.empty() && line[0] != '#') break;
  }

  TrajectoryBatch batch;
  int count = -1;
  {
    std::istringstream header(line);
    std::string tok;
    while (header >> tok) {
      if (tok.rfind("T=", 0) == 0) batch.horizon = std::stoi(tok.substr(2));
      else if (tok.rfind("N=", 0) == 0) count = std::stoi(tok.substr(2));
      else if (tok.rfind("O=", 0) == 0) batch.num_observations = std::stoi(tok.substr(2));
      else file_error(path, line_no, "unknown header token '" + tok + "'");
    }
  }
  if (batch.horizon <= 0 || count < 0 || batch.num_observations <= 0) {
    file_error(path, line_no, "header must define positive T, N and O");
  }

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    ObservedTrajectory traj;
    std::string tok;
    while (row >> tok) {
      if (tok == "#") {
        traj.records.push_back(TimestepRecord::hidden());
        continue;
      }
      int symbol = 0;
      try {
        size_t used = 0;
        symbol = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        file_error(path, line_no, "bad token '" + tok + "'");
      }
      if (symbol < 0 || symbol >= batch.num_observations) {
        file_error(path, line_no, "observation " + std::to_string(symbol) +
                                      " outside [0, " +
                                      std::to_string(batch.num_observations) + ")");
      }
      traj.records.push_back(TimestepRecord::observed(symbol));
    }
    if (traj.length() != batch.horizon) {
      file_error(path, line_no, "expected " + std::to_string(batch.horizon) +
                                    " steps, found " + std::to_string(traj.length()));
    }
    batch.trajectories.push_back(std::move(traj));
  }
  if (static_cast<int>(batch.trajectories.size()) != count) {
    throw ValidationError(path + ": header says N=" + std::to_string(count) +
                          " but file has " +
                          std::to_string(batch.trajectories.size()) +
                          " trajectories");
  }
  return batch;
}

void write_ground_truth(const std::string& path,
                        const std::vector<GroundTruthTrajectory>& truth,
                        int num_states, int num_actions,
                        const std::vector<std::string>& comments) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path + " for writing");
  for (const std::string& comment : comments) out << "# " << comment << "\n";
  const size_t horizon = truth.empty() ? 0 : truth.front().steps.size();
  out << "T=" << horizon << " N=" << truth.size() << " S=" << num_states
      << " A=" << num_actions << "\n";
  for (const GroundTruthTrajectory& traj : truth) {
    if (traj.steps.size() != horizon) {
      throw ValidationError("ground-truth trajectory length mismatch");
    }
    for (size_t t = 0; t < traj.steps.size(); ++t) {
      if (t) out << ' ';
      out << traj.steps[t].first << ',' << traj.steps[t].second;
    }
    out << "\n";
  }
  if (!out) throw ValidationError("write failed for " + path);
}

std::vector<GroundTruthTrajectory> read_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  std::string line;
  int line_no = 0;
  for (;;) {
    if (!std::getline(in, line)) file_error(path, line_no + 1, "missing header");
    ++line_no;
    if (!line.empty() && line[0] != '#') break;
  }

  int horizon = -1, count = -1, states = -1, actions = -1;
  {
    std::istringstream header(line);
    std::string tok;
    while (header >> tok) {
      if (tok.rfind("T=", 0) == 0) horizon = std::stoi(tok.substr(2));
      else if (tok.rfind("N=", 0) == 0) count = std::stoi(tok.substr(2));
      else if (tok.rfind("S=", 0) == 0) states = std::stoi(tok.substr(2));
      else if (tok.rfind("A=", 0) == 0) actions = std::stoi(tok.substr(2));
      else file_error(path, line_no, "unknown header token '" + tok + "'");
    }
  }
  if (horizon < 0 || count < 0 || states <= 0 || actions <= 0) {
    file_error(path, line_no, "header must define T, N, S and A");
  }

  std::vector<GroundTruthTrajectory> truth;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    GroundTruthTrajectory traj;
    std::string tok;
    while (row >> tok) {
      const auto comma = tok.find(',');
      if (comma == std::string::npos) file_error(path, line_no, "bad token '" + tok + "'");
      int s = -1, a = -1;
      try {
        s = std::stoi(tok.substr(0, comma));
        a = std::stoi(tok.substr(comma + 1));
      } catch (const std::exception&) {
        file_error(path, line_no, "bad token '" + tok + "'");
      }
      if (s < 0 || s >= states || a < 0 || a >= actions) {
        file_error(path, line_no, "state-action " + tok + " out of range");
      }
      traj.steps.emplace_back(s, a);
    }
    if (static_cast<int>(traj.steps.size()) != horizon) {
      file_error(path, line_no, "expected " + std::to_string(horizon) + " steps");
    }
    truth.push_back(std::move(traj));
  }
  if (static_cast<int>(truth.size()) != count) {
    throw ValidationError(path + ": trajectory count does not match header");
  }
  return truth;
}

}  // namespace mmapirl
