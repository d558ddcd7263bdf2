#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mmapirl/mdp.hpp"
#include "mmapirl/observation.hpp"
#include "mmapirl/reward.hpp"

namespace mmapirl {

// A benchmark domain bundled with everything a learner or evaluator needs.
struct Environment {
  std::string name;
  DiscountedMdp mdp;
  FeatureMap features;
  ObservationModel observation;
  FeatureWeights true_weights;
  std::vector<std::string> feature_names;

  // Set by domains whose task defines a positive class (onionworld: blemished
  // onions routed to the bin). Enables precision/recall reporting.
  bool has_positive_class = false;
  double blemish_rate = 0.5;
};

// --- forestworld -------------------------------------------------------------
//
// 4x4 grid patrolled from above. Cells use 1-based (x, y) coordinates. Moves
// go in the four cardinal directions; the intended move succeeds with
// probability 1 - slip, the remaining slip mass splits equally over the three
// other directions, and any move off the grid stays in place. The goal cell
// is absorbing. Two cells are to be avoided; features mark the two avoidable
// cells and the goal, each active for every action taken in that cell.
//
// Perception is exact except in the goal cell, which sits under tree cover:
// from there the state component of the observation reads as the cell one
// step west with probability tunnel_noise. Actions are always read exactly.

namespace forest {

enum Action { North = 0, South = 1, East = 2, West = 3 };

constexpr int kWidth = 4;
constexpr int kHeight = 4;

inline int cell_index(int x, int y) {  // 1-based coordinates
  return (y - 1) * kWidth + (x - 1);
}
inline std::pair<int, int> cell_coords(int index) {
  return {index % kWidth + 1, index / kWidth + 1};
}

}  // namespace forest

struct ForestworldSpec {
  double slip = 0.1;          // total probability of an unintended direction
  double tunnel_noise = 0.3;  // P(goal cell observed as its west neighbour)
  double discount = 0.99;
  Eigen::Vector3d true_weights{-1.0, -1.0, 1.0};  // avoid(1,1), avoid(3,2), goal(3,3)
};

Environment build_forestworld(const ForestworldSpec& spec = {});

// --- onionworld --------------------------------------------------------------
//
// One-armed sorter working a conveyor of onions. The state factors into the
// focused onion's location, the end-effector's location (both over conveyor /
// hover / at-face / bin) and the sorter's prediction for the onion (good /
// bad / unknown): 4 * 4 * 3 = 48 states. Five actions; dynamics are
// deterministic except Inspect, which reveals the prediction of a held onion
// as bad with probability blemish_rate. Actions on states where they make no
// sense (picking with nothing on the conveyor in focus, placing with no onion
// held) leave the state unchanged.
//
// Perception never corrupts locations or actions; it flips a good/bad
// prediction with probability prediction_noise (unknown stays unknown).

namespace onion {

enum Location { Conveyor = 0, Hover = 1, AtFace = 2, Bin = 3 };
enum Prediction { Good = 0, Bad = 1, Unknown = 2 };
enum Action { Claim = 0, Pick = 1, Inspect = 2, PlaceOnConveyor = 3, PlaceInBin = 4 };

constexpr int kNumStates = 48;
constexpr int kNumActions = 5;

inline int encode(int onion_loc, int ee_loc, int prediction) {
  return (onion_loc * 4 + ee_loc) * 3 + prediction;
}
inline int onion_loc(int state) { return state / 12; }
inline int ee_loc(int state) { return (state / 3) % 4; }
inline int prediction(int state) { return state % 3; }

// The onion is in the gripper: locations agree and are off the conveyor/bin.
inline bool held(int state) {
  const int loc = onion_loc(state);
  return loc == ee_loc(state) && (loc == Hover || loc == AtFace);
}

// The previous onion is finished: binned, or back on the conveyor with a
// known prediction. Claiming from such a state starts a fresh onion.
inline bool focus_done(int state) {
  return onion_loc(state) == Bin ||
         (onion_loc(state) == Conveyor && prediction(state) != Unknown);
}

}  // namespace onion

struct OnionworldSpec {
  double prediction_noise = 0.3;  // P(good read as bad and vice versa)
  double blemish_rate = 0.5;      // P(Inspect reveals a held unknown as bad)
  double discount = 0.99;
  // good->conveyor, bad->conveyor, good->bin, bad->bin, claim-new, pick-unknown
  Eigen::VectorXd true_weights{{1.0, -1.0, -1.0, 1.0, 0.1, 0.1}};
};

Environment build_onionworld(const OnionworldSpec& spec = {});

// --- generic environments ----------------------------------------------------
//
// Line-oriented text format for user-defined domains:
//
//   states 16
//   actions 4
//   features 3
//   observations 64
//   discount 0.99
//   initial <s> <p>                (unlisted states get 0)
//   transition <s> <a> <s'> <p>    (unlisted triples get 0)
//   feature <k> <s> <a> <v>
//   observation <s> <a> <o> <p>
//   weight <k> <v>                 (optional true weights)
//
// '#' starts a comment. Counts must precede the entries that use them.

Environment load_environment_file(const std::string& path);
void save_environment_file(const std::string& path, const Environment& env);

// Dispatcher used by the command-line tool: "forestworld" and "onionworld"
// are built in (noise overriding the perception parameter); anything else is
// treated as a path to an environment file, where noise must be baked in.
Environment make_environment(const std::string& name_or_path, double noise,
                             double discount, double blemish_rate);

}  // namespace mmapirl
