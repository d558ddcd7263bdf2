#include "mmapirl/eval.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "mmapirl/errors.hpp"
#include "mmapirl/format.hpp"
#include "mmapirl/rng.hpp"

namespace mmapirl {

namespace {

constexpr int kSortStepCap = 25;

double sample_se(const std::vector<double>& xs, double mean) {
  const int n = static_cast<int>(xs.size());
  if (n < 2) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (n - 1)) / std::sqrt(static_cast<double>(n));
}

std::string one_line(std::string text) {
  for (char& c : text) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return text;
}

}  // namespace

double inverse_learning_error(const DiscountedMdp& mdp, const RewardTable& true_reward,
                              const DeterministicPolicy& expert_policy,
                              const DeterministicPolicy& learned_policy,
                              IleNorm norm) {
  const Eigen::VectorXd expert_v = evaluate_policy(mdp, true_reward, expert_policy);
  const Eigen::VectorXd learned_v = evaluate_policy(mdp, true_reward, learned_policy);
  const Eigen::ArrayXd gap = (expert_v - learned_v).array().abs();
  return norm == IleNorm::AbsolutePerState ? gap.sum() : gap.square().sum();
}

void ConfusionCounts::validate() const {
  if (tp < 0 || fp < 0 || tn < 0 || fn < 0) {
    throw ValidationError("confusion counts must be non-negative");
  }
}

PrecisionRecall precision_recall(const ConfusionCounts& counts) {
  counts.validate();
  PrecisionRecall out;
  if (counts.tp + counts.fp > 0) {
    out.precision = static_cast<double>(counts.tp) / (counts.tp + counts.fp);
  }
  if (counts.tp + counts.fn > 0) {
    out.recall = static_cast<double>(counts.tp) / (counts.tp + counts.fn);
  }
  return out;
}

ConfusionCounts simulate_sort(const Environment& env,
                              const DeterministicPolicy& policy, int num_onions,
                              std::uint64_t seed) {
  using namespace onion;
  if (!env.has_positive_class) {
    throw ValidationError("environment does not define a positive class to sort");
  }
  if (static_cast<int>(policy.action_of.size()) != env.mdp.num_states) {
    throw ValidationError("policy does not match environment state count");
  }
  if (num_onions < 1) throw ValidationError("num_onions must be at least 1");

  Rng rng = make_rng(substream(seed, "sort"));
  ConfusionCounts counts;
  int ee = Conveyor;

  for (int i = 0; i < num_onions; ++i) {
    const bool truly_bad = next_unit(rng) < env.blemish_rate;
    int state = encode(Conveyor, ee, Unknown);
    bool binned = false;
    bool placed = false;

    for (int step = 0; step < kSortStepCap && !placed; ++step) {
      const int a = policy.action_of[state];
      int next;
      if (a == Inspect && held(state) && prediction(state) == Unknown) {
        // Inspection reveals this onion's actual class, not a fresh draw.
        next = encode(AtFace, AtFace, truly_bad ? Bad : Good);
      } else {
        next = sample_index(env.mdp.transitions[a].row(state), rng);
      }
      if (held(state) && (a == PlaceInBin || a == PlaceOnConveyor)) {
        placed = true;
        binned = a == PlaceInBin;
      }
      state = next;
    }

    ee = ee_loc(state);
    if (binned) {
      truly_bad ? ++counts.tp : ++counts.fp;
    } else {
      truly_bad ? ++counts.fn : ++counts.tn;
    }
  }
  return counts;
}

void SweepConfig::validate() const {
  if (occlusion_levels.empty()) throw ValidationError("occlusion_levels is empty");
  if (noise_levels.empty()) throw ValidationError("noise_levels is empty");
  if (methods.empty()) throw ValidationError("methods is empty");
  for (double r : occlusion_levels) {
    if (r < 0.0 || r > 1.0) throw ValidationError("occlusion level outside [0, 1]");
  }
  for (double r : noise_levels) {
    if (r < 0.0 || r > 1.0) throw ValidationError("noise level outside [0, 1]");
  }
  for (const auto& m : methods) {
    if (m != "mmap" && m != "ignore" && m != "em") {
      throw ValidationError("unknown method '" + m + "'");
    }
  }
  if (batches < 1) throw ValidationError("batches must be at least 1");
  if (trajectories_per_batch < 1) {
    throw ValidationError("trajectories_per_batch must be at least 1");
  }
  if (horizon < 1) throw ValidationError("horizon must be at least 1");
  if (em_max_rounds < 1) throw ValidationError("em_max_rounds must be at least 1");
  if (!(em_tolerance > 0.0)) throw ValidationError("em_tolerance must be positive");
  if (em_inner_iterations < 1) {
    throw ValidationError("em_inner_iterations must be at least 1");
  }
  if (!(prior_variance > 0.0)) throw ValidationError("prior_variance must be positive");
  if (blemish_rate < 0.0 || blemish_rate > 1.0) {
    throw ValidationError("blemish_rate outside [0, 1]");
  }
  ascent.validate();
}

GaussianPrior broadcast_prior(int num_features, double mean, double variance) {
  if (num_features < 1) throw ValidationError("num_features must be at least 1");
  if (!(variance > 0.0)) throw ValidationError("prior variance must be positive");
  GaussianPrior prior;
  prior.mean = Eigen::VectorXd::Constant(num_features, mean);
  prior.stddev = Eigen::VectorXd::Constant(num_features, std::sqrt(variance));
  return prior;
}

MethodResult learn_with_method(const std::string& method, const Environment& env,
                               const std::vector<ObservedTrajectory>& trajectories,
                               const GaussianPrior& prior, const AscentConfig& ascent,
                               int em_max_rounds, double em_tolerance,
                               int em_inner_iterations, SegmentStart segment_start) {
  MethodResult out;
  if (method == "mmap") {
    LearnResult r = mmap_birl(env.mdp, trajectories, env.observation, env.features,
                              prior, ascent);
    out.weights = std::move(r.weights);
    out.converged = r.diagnostics.converged;
    out.ascent = std::move(r.diagnostics);
  } else if (method == "ignore") {
    LearnResult r = ignore_occlusion_map_birl(env.mdp, trajectories, env.observation,
                                              env.features, prior, ascent,
                                              segment_start);
    out.weights = std::move(r.weights);
    out.converged = r.diagnostics.converged;
    out.ascent = std::move(r.diagnostics);
  } else if (method == "em") {
    EmConfig config;
    config.ascent = ascent;
    config.ascent.max_iterations = em_inner_iterations;
    config.max_rounds = em_max_rounds;
    config.tolerance = em_tolerance;
    EmResult r = hidden_data_em(env.mdp, trajectories, env.observation, env.features,
                                prior, config);
    out.weights = std::move(r.weights);
    out.converged = r.diagnostics.converged;
    out.em = std::move(r.diagnostics);
  } else {
    throw ValidationError("unknown method '" + method + "'");
  }
  return out;
}

SweepTable run_sweep(const SweepConfig& config, const std::vector<SweepRow>& skip) {
  using Clock = std::chrono::steady_clock;
  config.validate();

  struct NoiseLevel {
    Environment env;
    RewardTable true_reward;
    DeterministicPolicy expert;
    StochasticPolicy expert_soft;
    GaussianPrior prior;
  };
  std::vector<NoiseLevel> levels;
  levels.reserve(config.noise_levels.size());
  for (double noise : config.noise_levels) {
    NoiseLevel level{make_environment(config.environment, noise,
                                      config.ascent.discount, config.blemish_rate),
                     {}, {}, {}, {}};
    level.true_reward = reward_of(level.env.true_weights, level.env.features);
    level.expert = solve_optimal(level.env.mdp, level.true_reward).policy;
    level.expert_soft = to_stochastic(level.expert, level.env.mdp.num_actions);
    level.prior = broadcast_prior(level.env.features.num_features, config.prior_mean,
                                  config.prior_variance);
    levels.push_back(std::move(level));
  }

  auto find_skip = [&](const std::string& method, double occlusion, double noise)
      -> const SweepRow* {
    for (const auto& row : skip) {
      if (row.failed) continue;
      if (row.method == method &&
          format_double(row.occlusion) == format_double(occlusion) &&
          format_double(row.noise) == format_double(noise)) {
        return &row;
      }
    }
    return nullptr;
  };

  SweepTable table;
  for (const auto& method : config.methods) {
    for (std::size_t oi = 0; oi < config.occlusion_levels.size(); ++oi) {
      const double occlusion = config.occlusion_levels[oi];
      for (std::size_t ni = 0; ni < config.noise_levels.size(); ++ni) {
        const double noise = config.noise_levels[ni];
        if (const SweepRow* done = find_skip(method, occlusion, noise)) {
          table.rows.push_back(*done);
          continue;
        }

        const NoiseLevel& level = levels[ni];
        SweepRow row;
        row.method = method;
        row.occlusion = occlusion;
        row.noise = noise;
        row.batch_count = config.batches;
        try {
          std::vector<double> iles, times;
          iles.reserve(config.batches);
          times.reserve(config.batches);
          for (int b = 0; b < config.batches; ++b) {
            // Batch seeds never see the method name, so every method learns
            // from identical demonstrations and identical starting weights.
            const std::uint64_t cell_key =
                (static_cast<std::uint64_t>(oi) << 16) | static_cast<std::uint64_t>(ni);
            const std::uint64_t batch_seed =
                substream(config.seed, "batch", cell_key, static_cast<std::uint64_t>(b));

            OcclusionSpec occ;
            occ.mode = config.occlusion_mode;
            occ.rate = occlusion;
            const DemonstrationSet demos = simulate_demonstrations(
                level.env.mdp, level.expert_soft, level.env.observation,
                config.horizon, occ, config.trajectories_per_batch,
                substream(batch_seed, "demos"));

            AscentConfig ascent = config.ascent;
            ascent.seed = batch_seed;
            ascent.discount = level.env.mdp.discount;

            const auto start = Clock::now();
            const MethodResult learned = learn_with_method(
                method, level.env, demos.observed, level.prior, ascent,
                config.em_max_rounds, config.em_tolerance,
                config.em_inner_iterations, config.segment_start);
            times.push_back(std::chrono::duration<double>(Clock::now() - start).count());

            const DeterministicPolicy learned_policy =
                solve_optimal(level.env.mdp,
                              reward_of(learned.weights, level.env.features))
                    .policy;
            iles.push_back(inverse_learning_error(level.env.mdp, level.true_reward,
                                                  level.expert, learned_policy));
          }
          double ile_sum = 0.0, time_sum = 0.0;
          for (double x : iles) ile_sum += x;
          for (double x : times) time_sum += x;
          row.ile_mean = ile_sum / config.batches;
          row.time_mean_s = time_sum / config.batches;
          row.ile_se = sample_se(iles, row.ile_mean);
          row.time_se_s = sample_se(times, row.time_mean_s);
        } catch (const std::exception& e) {
          row.failed = true;
          row.error = one_line(e.what());
          row.ile_mean = row.ile_se = std::numeric_limits<double>::quiet_NaN();
          row.time_mean_s = row.time_se_s = std::numeric_limits<double>::quiet_NaN();
        }
        table.rows.push_back(std::move(row));
      }
    }
  }
  return table;
}

std::string sweep_csv(const SweepTable& table,
                      const std::vector<std::string>& config_comments) {
  std::ostringstream out;
  for (const auto& line : config_comments) out << "# " << line << '\n';
  out << "method,occlusion,noise,batch_count,ile_mean,ile_se,time_mean_s,time_se_s\n";
  for (const auto& row : table.rows) {
    if (row.failed) {
      out << "# failed " << row.method << " occlusion=" << format_double(row.occlusion)
          << " noise=" << format_double(row.noise) << ": " << row.error << '\n';
    }
    out << row.method << ',' << format_double(row.occlusion) << ','
        << format_double(row.noise) << ',' << row.batch_count << ','
        << format_double(row.ile_mean) << ',' << format_double(row.ile_se) << ','
        << format_double(row.time_mean_s) << ',' << format_double(row.time_se_s)
        << '\n';
  }
  return out.str();
}

SweepTable parse_sweep_csv(const std::string& text) {
  SweepTable table;
  std::istringstream in(text);
  std::string line;
  bool saw_header = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!saw_header) {
      if (line !=
          "method,occlusion,noise,batch_count,ile_mean,ile_se,time_mean_s,time_se_s") {
        throw ValidationError("line " + std::to_string(line_no) +
                              ": unexpected sweep table header");
      }
      saw_header = true;
      continue;
    }
    std::vector<std::string> fields;
    std::string field;
    std::istringstream row(line);
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() != 8) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": expected 8 comma-separated fields");
    }
    SweepRow r;
    r.method = fields[0];
    try {
      r.occlusion = std::stod(fields[1]);
      r.noise = std::stod(fields[2]);
      r.batch_count = std::stoi(fields[3]);
      r.ile_mean = std::stod(fields[4]);
      r.ile_se = std::stod(fields[5]);
      r.time_mean_s = std::stod(fields[6]);
      r.time_se_s = std::stod(fields[7]);
    } catch (const std::exception&) {
      throw ValidationError("line " + std::to_string(line_no) + ": malformed number");
    }
    r.failed = std::isnan(r.ile_mean);
    table.rows.push_back(std::move(r));
  }
  if (!saw_header) throw ValidationError("sweep table has no header line");
  return table;
}

}  // namespace mmapirl
