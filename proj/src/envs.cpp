#include "mmapirl/envs.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "mmapirl/errors.hpp"

namespace mmapirl {

namespace {

void finalize(Environment& env) {
  env.mdp.validate();
  env.features.validate(env.mdp.num_states, env.mdp.num_actions);
  env.observation.validate(env.mdp.num_states, env.mdp.num_actions);
  if (env.true_weights.theta.size() != env.features.num_features) {
    throw ValidationError("true weight vector does not match feature count");
  }
}

}  // namespace

Environment build_forestworld(const ForestworldSpec& spec) {
  using namespace forest;
  if (spec.slip < 0.0 || spec.slip > 1.0) {
    throw ValidationError("forestworld slip must lie in [0, 1]");
  }
  if (spec.tunnel_noise < 0.0 || spec.tunnel_noise > 1.0) {
    throw ValidationError("forestworld tunnel_noise must lie in [0, 1]");
  }

  const int S = kWidth * kHeight;
  const int A = 4;
  const int goal = cell_index(3, 3);
  const int avoid_a = cell_index(1, 1);
  const int avoid_b = cell_index(3, 2);
  const int tunnel_alias = cell_index(2, 3);  // goal seen as its west neighbour

  Environment env;
  env.name = "forestworld";
  env.mdp.num_states = S;
  env.mdp.num_actions = A;
  env.mdp.discount = spec.discount;
  env.mdp.transitions.assign(A, Eigen::MatrixXd::Zero(S, S));

  // dx/dy per action; indices follow the Action enum.
  const int dx[4] = {0, 0, 1, -1};
  const int dy[4] = {1, -1, 0, 0};
  auto destination = [&](int s, int a) {
    auto [x, y] = cell_coords(s);
    const int nx = x + dx[a];
    const int ny = y + dy[a];
    if (nx < 1 || nx > kWidth || ny < 1 || ny > kHeight) return s;  // walls reflect
    return cell_index(nx, ny);
  };

  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      if (s == goal) {
        env.mdp.transitions[a](s, s) = 1.0;  // absorbing
        continue;
      }
      env.mdp.transitions[a](s, destination(s, a)) += 1.0 - spec.slip;
      for (int b = 0; b < A; ++b) {
        if (b == a) continue;
        env.mdp.transitions[a](s, destination(s, b)) += spec.slip / 3.0;
      }
    }
  }

  // Start anywhere except the goal and the avoidable cells.
  env.mdp.initial_distribution = Eigen::VectorXd::Zero(S);
  for (int s = 0; s < S; ++s) {
    if (s == goal || s == avoid_a || s == avoid_b) continue;
    env.mdp.initial_distribution(s) = 1.0;
  }
  env.mdp.initial_distribution /= env.mdp.initial_distribution.sum();

  env.features.num_features = 3;
  env.features.phi.assign(3, Eigen::MatrixXd::Zero(S, A));
  env.features.phi[0].row(avoid_a).setOnes();
  env.features.phi[1].row(avoid_b).setOnes();
  env.features.phi[2].row(goal).setOnes();
  env.feature_names = {"avoid_1_1", "avoid_3_2", "goal_3_3"};
  env.true_weights.theta = spec.true_weights;

  env.observation.num_actions = A;
  env.observation.num_observations = S * A;
  env.observation.prob =
      Eigen::MatrixXd::Identity(S * A, S * A);
  for (int a = 0; a < A; ++a) {
    const int row = encode_state_action(goal, a, A);
    env.observation.prob(row, row) = 1.0 - spec.tunnel_noise;
    env.observation.prob(row, encode_state_action(tunnel_alias, a, A)) =
        spec.tunnel_noise;
  }

  finalize(env);
  return env;
}

Environment build_onionworld(const OnionworldSpec& spec) {
  using namespace onion;
  if (spec.prediction_noise < 0.0 || spec.prediction_noise > 1.0) {
    throw ValidationError("onionworld prediction_noise must lie in [0, 1]");
  }
  if (spec.blemish_rate < 0.0 || spec.blemish_rate > 1.0) {
    throw ValidationError("onionworld blemish_rate must lie in [0, 1]");
  }
  if (spec.true_weights.size() != 6) {
    throw ValidationError("onionworld expects 6 feature weights");
  }

  const int S = kNumStates;
  const int A = kNumActions;

  Environment env;
  env.name = "onionworld";
  env.has_positive_class = true;
  env.blemish_rate = spec.blemish_rate;
  env.mdp.num_states = S;
  env.mdp.num_actions = A;
  env.mdp.discount = spec.discount;
  env.mdp.transitions.assign(A, Eigen::MatrixXd::Zero(S, S));

  // A finished onion (binned, or back on the conveyor with a known
  // prediction) is out of focus: Pick only lifts an unclassified conveyor
  // onion, which closes the re-place loop that would otherwise out-earn the
  // sort cycle. Invalid actions leave the state unchanged.
  for (int s = 0; s < S; ++s) {
    const int o = onion_loc(s);
    const int e = ee_loc(s);
    const int p = prediction(s);

    auto set = [&](int a, int next, double prob) {
      env.mdp.transitions[a](s, next) += prob;
    };

    // Claim: refocus on a fresh conveyor onion whenever the gripper is empty.
    set(Claim, held(s) ? s : encode(Conveyor, e, Unknown), 1.0);

    // Pick: lift the focused (still unclassified) onion off the conveyor.
    if (o == Conveyor && p == Unknown) {
      set(Pick, encode(Hover, Hover, p), 1.0);
    } else {
      set(Pick, s, 1.0);
    }

    // Inspect: bring a held onion to the camera; an unknown prediction is
    // revealed, a known one is confirmed.
    if (held(s)) {
      if (p == Unknown) {
        set(Inspect, encode(AtFace, AtFace, Bad), spec.blemish_rate);
        set(Inspect, encode(AtFace, AtFace, Good), 1.0 - spec.blemish_rate);
      } else {
        set(Inspect, encode(AtFace, AtFace, p), 1.0);
      }
    } else {
      set(Inspect, s, 1.0);
    }

    // Placements: only a held onion can be put anywhere.
    set(PlaceOnConveyor, held(s) ? encode(Conveyor, Conveyor, p) : s, 1.0);
    set(PlaceInBin, held(s) ? encode(Bin, Bin, p) : s, 1.0);
  }

  env.mdp.initial_distribution = Eigen::VectorXd::Zero(S);
  env.mdp.initial_distribution(encode(Conveyor, Conveyor, Unknown)) = 1.0;

  env.features.num_features = 6;
  env.features.phi.assign(6, Eigen::MatrixXd::Zero(S, A));
  for (int s = 0; s < S; ++s) {
    const int p = prediction(s);
    if (held(s)) {
      if (p == Good) env.features.phi[0](s, PlaceOnConveyor) = 1.0;
      if (p == Bad) env.features.phi[1](s, PlaceOnConveyor) = 1.0;
      if (p == Good) env.features.phi[2](s, PlaceInBin) = 1.0;
      if (p == Bad) env.features.phi[3](s, PlaceInBin) = 1.0;
    }
    if (focus_done(s)) env.features.phi[4](s, Claim) = 1.0;
    if (onion_loc(s) == Conveyor && p == Unknown) env.features.phi[5](s, Pick) = 1.0;
  }
  env.feature_names = {"good_on_conveyor", "bad_on_conveyor", "good_in_bin",
                       "bad_in_bin",       "claim_new",       "pick_unknown"};
  env.true_weights.theta = spec.true_weights;

  // Perception: locations exact, actions exact, good/bad prediction flipped
  // with probability prediction_noise.
  env.observation.num_actions = A;
  env.observation.num_observations = S * A;
  env.observation.prob = Eigen::MatrixXd::Zero(S * A, S * A);
  for (int s = 0; s < S; ++s) {
    const int p = prediction(s);
    for (int a = 0; a < A; ++a) {
      const int row = encode_state_action(s, a, A);
      if (p == Unknown) {
        env.observation.prob(row, row) = 1.0;
      } else {
        const int flipped = encode(onion_loc(s), ee_loc(s), p == Good ? Bad : Good);
        env.observation.prob(row, row) = 1.0 - spec.prediction_noise;
        env.observation.prob(row, encode_state_action(flipped, a, A)) +=
            spec.prediction_noise;
      }
    }
  }

  finalize(env);
  return env;
}

namespace {

[[noreturn]] void env_error(const std::string& path, int line, const std::string& what) {
  throw ValidationError(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

Environment load_environment_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);

  Environment env;
  env.name = path;
  int S = -1, A = -1, K = -1, O = -1;
  bool have_discount = false;
  std::map<int, double> weights;

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream row(line);
    std::string key;
    if (!(row >> key)) continue;

    auto need_counts = [&]() {
      if (S < 0 || A < 0 || K < 0 || O < 0) {
        env_error(path, line_no, "counts must precede '" + key + "' entries");
      }
    };

    if (key == "states" || key == "actions" || key == "features" ||
        key == "observations") {
      int value = -1;
      if (!(row >> value) || value <= 0) env_error(path, line_no, "bad count");
      if (key == "states") S = value;
      else if (key == "actions") A = value;
      else if (key == "features") K = value;
      else O = value;
      if (S > 0 && A > 0 && K > 0 && O > 0 && env.mdp.transitions.empty()) {
        env.mdp.num_states = S;
        env.mdp.num_actions = A;
        env.mdp.transitions.assign(A, Eigen::MatrixXd::Zero(S, S));
        env.mdp.initial_distribution = Eigen::VectorXd::Zero(S);
        env.features.num_features = K;
        env.features.phi.assign(K, Eigen::MatrixXd::Zero(S, A));
        env.observation.num_actions = A;
        env.observation.num_observations = O;
        env.observation.prob = Eigen::MatrixXd::Zero(S * A, O);
      }
    } else if (key == "discount") {
      if (!(row >> env.mdp.discount)) env_error(path, line_no, "bad discount");
      have_discount = true;
    } else if (key == "initial") {
      need_counts();
      int s;
      double p;
      if (!(row >> s >> p) || s < 0 || s >= S) env_error(path, line_no, "bad initial entry");
      env.mdp.initial_distribution(s) = p;
    } else if (key == "transition") {
      need_counts();
      int s, a, s2;
      double p;
      if (!(row >> s >> a >> s2 >> p) || s < 0 || s >= S || a < 0 || a >= A ||
          s2 < 0 || s2 >= S) {
        env_error(path, line_no, "bad transition entry");
      }
      env.mdp.transitions[a](s, s2) = p;
    } else if (key == "feature") {
      need_counts();
      int k, s, a;
      double v;
      if (!(row >> k >> s >> a >> v) || k < 0 || k >= K || s < 0 || s >= S ||
          a < 0 || a >= A) {
        env_error(path, line_no, "bad feature entry");
      }
      env.features.phi[k](s, a) = v;
    } else if (key == "observation") {
      need_counts();
      int s, a, o;
      double p;
      if (!(row >> s >> a >> o >> p) || s < 0 || s >= S || a < 0 || a >= A ||
          o < 0 || o >= O) {
        env_error(path, line_no, "bad observation entry");
      }
      env.observation.prob(encode_state_action(s, a, A), o) = p;
    } else if (key == "weight") {
      need_counts();
      int k;
      double v;
      if (!(row >> k >> v) || k < 0 || k >= K) env_error(path, line_no, "bad weight entry");
      weights[k] = v;
    } else {
      env_error(path, line_no, "unknown directive '" + key + "'");
    }
  }

  if (S < 0 || A < 0 || K < 0 || O < 0 || !have_discount) {
    throw ValidationError(path + ": missing counts or discount");
  }
  env.true_weights.theta = Eigen::VectorXd::Zero(K);
  for (const auto& [k, v] : weights) env.true_weights.theta(k) = v;
  for (int k = 0; k < K; ++k) env.feature_names.push_back("f" + std::to_string(k));

  finalize(env);
  return env;
}

void save_environment_file(const std::string& path, const Environment& env) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path + " for writing");
  out.precision(17);
  out << "# environment: " << env.name << "\n";
  out << "states " << env.mdp.num_states << "\n";
  out << "actions " << env.mdp.num_actions << "\n";
  out << "features " << env.features.num_features << "\n";
  out << "observations " << env.observation.num_observations << "\n";
  out << "discount " << env.mdp.discount << "\n";
  for (int s = 0; s < env.mdp.num_states; ++s) {
    if (env.mdp.initial_distribution(s) != 0.0) {
      out << "initial " << s << " " << env.mdp.initial_distribution(s) << "\n";
    }
  }
  for (int a = 0; a < env.mdp.num_actions; ++a) {
    for (int s = 0; s < env.mdp.num_states; ++s) {
      for (int s2 = 0; s2 < env.mdp.num_states; ++s2) {
        const double p = env.mdp.transitions[a](s, s2);
        if (p != 0.0) out << "transition " << s << " " << a << " " << s2 << " " << p << "\n";
      }
    }
  }
  for (int k = 0; k < env.features.num_features; ++k) {
    for (int s = 0; s < env.mdp.num_states; ++s) {
      for (int a = 0; a < env.mdp.num_actions; ++a) {
        const double v = env.features.phi[k](s, a);
        if (v != 0.0) out << "feature " << k << " " << s << " " << a << " " << v << "\n";
      }
    }
  }
  for (int s = 0; s < env.mdp.num_states; ++s) {
    for (int a = 0; a < env.mdp.num_actions; ++a) {
      const int row = encode_state_action(s, a, env.mdp.num_actions);
      for (int o = 0; o < env.observation.num_observations; ++o) {
        const double p = env.observation.prob(row, o);
        if (p != 0.0) out << "observation " << s << " " << a << " " << o << " " << p << "\n";
      }
    }
  }
  for (int k = 0; k < env.true_weights.theta.size(); ++k) {
    out << "weight " << k << " " << env.true_weights.theta(k) << "\n";
  }
  if (!out) throw ValidationError("write failed for " + path);
}

Environment make_environment(const std::string& name_or_path, double noise,
                             double discount, double blemish_rate) {
  if (name_or_path == "forestworld") {
    ForestworldSpec spec;
    spec.tunnel_noise = noise;
    spec.discount = discount;
    return build_forestworld(spec);
  }
  if (name_or_path == "onionworld") {
    OnionworldSpec spec;
    spec.prediction_noise = noise;
    spec.discount = discount;
    spec.blemish_rate = blemish_rate;
    return build_onionworld(spec);
  }
  if (noise != 0.0) {
    throw ValidationError(
        "noise overrides only apply to built-in environments; bake the "
        "observation model into the environment file");
  }
  return load_environment_file(name_or_path);
}

}  // namespace mmapirl
