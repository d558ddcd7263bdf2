#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "mmapirl/config.hpp"
#include "mmapirl/errors.hpp"
#include "mmapirl/format.hpp"

namespace {

using namespace mmapirl;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw ValidationError("write failed for " + path);
}

bool file_exists(const std::string& path) {
  return std::ifstream(path).good();
}

std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string hex(16, '0');
  for (int i = 15; i >= 0; --i) {
    hex[i] = digits[h & 0xf];
    h >>= 4;
  }
  return hex;
}

void print_digest(const std::string& path) {
  std::cout << path << " fnv1a64=" << fnv1a64_hex(read_file(path)) << "\n";
}

// The resolved configuration every output embeds. The jobs key is dropped:
// job count affects scheduling only, never results, and including it would
// make otherwise identical runs differ byte-wise.
std::vector<std::string> config_comments(const ExperimentConfig& config) {
  std::vector<std::string> lines;
  std::istringstream in(serialize_config(config));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("jobs = ", 0) == 0) continue;
    lines.push_back(line);
  }
  return lines;
}

std::string comment_block(const std::vector<std::string>& comments) {
  std::string out;
  for (const auto& line : comments) {
    out += "# ";
    out += line;
    out += '\n';
  }
  return out;
}

struct CommandOptions {
  std::string config_path;
  std::string out;
  std::string method;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 0;
  bool jobs_set = false;
  int restarts = 1;
};

void add_common_flags(CLI::App* cmd, CommandOptions& opts, bool needs_out) {
  cmd->add_option("--config", opts.config_path, "experiment config file")
      ->required();
  auto* seed = cmd->add_option("--seed", opts.seed, "override the config seed");
  seed->each([&opts](const std::string&) { opts.seed_set = true; });
  auto* jobs = cmd->add_option("--jobs", opts.jobs, "worker thread cap")
                   ->check(CLI::PositiveNumber);
  jobs->each([&opts](const std::string&) { opts.jobs_set = true; });
  auto* out = cmd->add_option("--out", opts.out, "output path");
  if (needs_out) out->required();
}

ExperimentConfig load_config(const CommandOptions& opts) {
  ExperimentConfig config = parse_config(read_file(opts.config_path));
  if (opts.seed_set) config.seed = opts.seed;
  if (opts.jobs_set) config.jobs = opts.jobs;
  if (!opts.method.empty()) config.method = opts.method;
  config.validate();
  return config;
}

Environment environment_of(const ExperimentConfig& config) {
  return make_environment(config.environment, config.noise, config.ascent.discount,
                          config.blemish_rate);
}

// --- weight / reward / policy files ----------------------------------------

std::string weights_text(const Eigen::VectorXd& theta,
                         const std::vector<std::string>& comments) {
  std::string out = comment_block(comments);
  out += "K=" + std::to_string(theta.size()) + "\n";
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    out += format_double(theta[k]);
    out += '\n';
  }
  return out;
}

Eigen::VectorXd parse_weights(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  int line_no = 0;
  long k = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("K=", 0) != 0) {
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": expected K=<count> header");
    }
    k = std::stol(line.substr(2));
    break;
  }
  if (k < 1) throw ValidationError(path + ": missing or empty K= header");
  Eigen::VectorXd theta(k);
  long i = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (i >= k) throw ValidationError(path + ": more than K weight lines");
    try {
      theta[i++] = std::stod(line);
    } catch (const std::exception&) {
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": bad weight '" + line + "'");
    }
  }
  if (i != k) {
    throw ValidationError(path + ": header says K=" + std::to_string(k) +
                          " but file has " + std::to_string(i) + " weights");
  }
  return theta;
}

std::string reward_text(const RewardTable& reward, int num_states, int num_actions,
                        const std::vector<std::string>& comments) {
  std::string out = comment_block(comments);
  out += "S=" + std::to_string(num_states) + " A=" + std::to_string(num_actions) + "\n";
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      if (a) out += ' ';
      out += format_double(reward.values(s, a));
    }
    out += '\n';
  }
  return out;
}

std::string policy_text(const DeterministicPolicy& policy,
                        const std::vector<std::string>& comments) {
  std::string out = comment_block(comments);
  out += "S=" + std::to_string(policy.action_of.size()) + "\n";
  for (int a : policy.action_of) {
    out += std::to_string(a);
    out += '\n';
  }
  return out;
}

// --- subcommands -------------------------------------------------------------

int cmd_generate(const CommandOptions& opts) {
  const ExperimentConfig config = load_config(opts);
  const Environment env = environment_of(config);

  const RewardTable true_reward = reward_of(env.true_weights, env.features);
  const StochasticPolicy expert =
      to_stochastic(solve_optimal(env.mdp, true_reward).policy, env.mdp.num_actions);
  OcclusionSpec occlusion;
  occlusion.mode = config.occlusion_mode;
  occlusion.rate = config.occlusion_rate;

  const DemonstrationSet demos = simulate_demonstrations(
      env.mdp, expert, env.observation, config.horizon, occlusion, config.count,
      substream(config.seed, "demos"));

  TrajectoryBatch batch;
  batch.horizon = config.horizon;
  batch.num_observations = env.observation.num_observations;
  batch.trajectories = demos.observed;

  const std::vector<std::string> comments = config_comments(config);
  write_trajectories(opts.out, batch, comments);
  const std::string truth_path = opts.out + ".truth";
  write_ground_truth(truth_path, demos.truth, env.mdp.num_states,
                     env.mdp.num_actions, comments);
  print_digest(opts.out);
  print_digest(truth_path);
  return 0;
}

int cmd_learn(const CommandOptions& opts, const std::string& batch_path) {
  const ExperimentConfig config = load_config(opts);
  const Environment env = environment_of(config);

  const TrajectoryBatch batch = read_trajectories(batch_path);
  if (batch.trajectories.empty()) {
    throw ValidationError(batch_path + ": batch has no trajectories");
  }
  if (batch.num_observations != env.observation.num_observations) {
    throw ValidationError(batch_path + ": batch uses " +
                          std::to_string(batch.num_observations) +
                          " observation symbols, environment '" + env.name +
                          "' defines " +
                          std::to_string(env.observation.num_observations));
  }

  const GaussianPrior prior = make_prior(config, env.features.num_features);
  const AscentConfig base_ascent = resolved_ascent(config);
  const auto final_posterior = [](const MethodResult& r) {
    return r.em ? r.em->rounds.back().log_posterior
                : r.ascent.iterations.back().log_posterior;
  };

  // Posterior ascent is non-concave; extra restarts redraw the initial weights
  // and keep the run with the highest final log posterior.
  MethodResult result;
  int picked = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < opts.restarts; ++r) {
    AscentConfig ascent = base_ascent;
    if (r > 0) ascent.seed = substream(base_ascent.seed, "restart", r);
    MethodResult candidate = learn_with_method(
        config.method, env, batch.trajectories, prior, ascent,
        config.em_max_rounds, config.em_tolerance, config.em_inner_iterations,
        config.segment_start);
    const double posterior = final_posterior(candidate);
    if (posterior > best) {
      best = posterior;
      picked = r;
      result = std::move(candidate);
    }
  }

  const std::vector<std::string> comments = config_comments(config);
  const RewardTable reward = reward_of(result.weights, env.features);
  const DeterministicPolicy policy = solve_optimal(env.mdp, reward).policy;

  write_file(opts.out + ".weights", weights_text(result.weights.theta, comments));
  write_file(opts.out + ".reward",
             reward_text(reward, env.mdp.num_states, env.mdp.num_actions, comments));
  write_file(opts.out + ".policy", policy_text(policy, comments));

  std::string diag = comment_block(comments);
  if (result.em) {
    for (const EmRoundRecord& round : result.em->rounds) {
      diag += "# round " + std::to_string(round.round) +
              " surrogate_before=" + format_double(round.surrogate_before) +
              " surrogate_after=" + format_double(round.surrogate_after) +
              " log_posterior=" + format_double(round.log_posterior) +
              " theta_delta=" + format_double(round.theta_delta) + "\n";
      diag += diagnostics_csv(round.inner);
    }
  } else {
    diag += diagnostics_csv(result.ascent);
  }
  write_file(opts.out + ".diag.csv", diag);

  std::cout << "method=" << config.method
            << " converged=" << (result.converged ? "yes" : "no");
  if (opts.restarts > 1) {
    std::cout << " restart=" << picked << "/" << opts.restarts
              << " log_posterior=" << format_double(best);
  }
  std::cout << "\n";
  print_digest(opts.out + ".weights");
  print_digest(opts.out + ".reward");
  print_digest(opts.out + ".policy");
  return result.converged ? 0 : 3;
}

int cmd_evaluate(const CommandOptions& opts, const std::string& weights_path,
                 const std::string& expert_path) {
  const ExperimentConfig config = load_config(opts);
  const Environment env = environment_of(config);
  const int k = env.features.num_features;

  const Eigen::VectorXd learned = parse_weights(weights_path);
  if (learned.size() != k) {
    throw ValidationError(weights_path + ": " + std::to_string(learned.size()) +
                          " weights, environment '" + env.name + "' has " +
                          std::to_string(k) + " features");
  }
  Eigen::VectorXd expert_theta = env.true_weights.theta;
  if (!expert_path.empty()) {
    expert_theta = parse_weights(expert_path);
    if (expert_theta.size() != k) {
      throw ValidationError(expert_path + ": " + std::to_string(expert_theta.size()) +
                            " weights, environment '" + env.name + "' has " +
                            std::to_string(k) + " features");
    }
  }

  const RewardTable true_reward = reward_of(FeatureWeights{expert_theta}, env.features);
  const DeterministicPolicy expert_policy = solve_optimal(env.mdp, true_reward).policy;
  const DeterministicPolicy learned_policy =
      solve_optimal(env.mdp, reward_of(FeatureWeights{learned}, env.features)).policy;

  std::ostringstream report;
  report << "metric,value\n";
  report << "ile,"
         << format_double(inverse_learning_error(env.mdp, true_reward, expert_policy,
                                                 learned_policy))
         << "\n";
  if (env.has_positive_class) {
    const ConfusionCounts counts =
        simulate_sort(env, learned_policy, config.onions, config.seed);
    const PrecisionRecall pr = precision_recall(counts);
    report << "precision,"
           << (pr.precision ? format_double(*pr.precision) : "undefined") << "\n";
    report << "recall," << (pr.recall ? format_double(*pr.recall) : "undefined")
           << "\n";
    report << "tp," << counts.tp << "\nfp," << counts.fp << "\ntn," << counts.tn
           << "\nfn," << counts.fn << "\n";
  }

  std::cout << report.str();
  if (!opts.out.empty()) {
    write_file(opts.out, comment_block(config_comments(config)) + report.str());
  }
  return 0;
}

int cmd_sweep(const CommandOptions& opts) {
  const ExperimentConfig config = load_config(opts);
  const SweepConfig sweep = to_sweep(config);

  std::vector<SweepRow> skip;
  if (file_exists(opts.out)) {
    skip = parse_sweep_csv(read_file(opts.out)).rows;
  }

  const SweepTable table = run_sweep(sweep, skip);
  write_file(opts.out, sweep_csv(table, config_comments(config)));

  // Best method per (occlusion, noise) cell.
  int failed = 0;
  for (std::size_t oi = 0; oi < sweep.occlusion_levels.size(); ++oi) {
    for (std::size_t ni = 0; ni < sweep.noise_levels.size(); ++ni) {
      const SweepRow* best = nullptr;
      for (const SweepRow& row : table.rows) {
        if (format_double(row.occlusion) != format_double(sweep.occlusion_levels[oi]) ||
            format_double(row.noise) != format_double(sweep.noise_levels[ni])) {
          continue;
        }
        if (row.failed) continue;
        if (!best || row.ile_mean < best->ile_mean) best = &row;
      }
      std::cout << "occlusion=" << format_double(sweep.occlusion_levels[oi])
                << " noise=" << format_double(sweep.noise_levels[ni]);
      if (best) {
        std::cout << " best=" << best->method
                  << " ile=" << format_double(best->ile_mean) << "\n";
      } else {
        std::cout << " best=none (all methods failed)\n";
      }
    }
  }
  for (const SweepRow& row : table.rows) {
    if (row.failed) ++failed;
  }
  print_digest(opts.out);
  return failed == static_cast<int>(table.rows.size()) ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward learning from occluded, noisily perceived demonstrations"};
  app.require_subcommand(1);

  CommandOptions gen_opts, learn_opts, eval_opts, sweep_opts;
  std::string batch_path, weights_path, expert_path;
  int exit_code = 0;

  CLI::App* generate =
      app.add_subcommand("generate", "simulate a demonstration batch");
  add_common_flags(generate, gen_opts, true);
  generate->callback([&] { exit_code = cmd_generate(gen_opts); });

  CLI::App* learn = app.add_subcommand("learn", "recover reward weights from a batch");
  add_common_flags(learn, learn_opts, true);
  learn->add_option("--method", learn_opts.method, "learning method")
      ->check(CLI::IsMember({"mmap", "ignore", "em"}));
  learn->add_option("--restarts", learn_opts.restarts,
                    "independent initializations; the fit with the best final "
                    "log posterior is kept")
      ->check(CLI::PositiveNumber);
  learn->add_option("batch", batch_path, "trajectory batch file")->required();
  learn->callback([&] { exit_code = cmd_learn(learn_opts, batch_path); });

  CLI::App* evaluate =
      app.add_subcommand("evaluate", "score learned weights against the expert");
  add_common_flags(evaluate, eval_opts, false);
  evaluate->add_option("--weights", weights_path, "learned weights file")->required();
  evaluate->add_option("--expert", expert_path,
                       "expert weights file (default: the environment's true weights)");
  evaluate->callback([&] { exit_code = cmd_evaluate(eval_opts, weights_path, expert_path); });

  CLI::App* sweep = app.add_subcommand("sweep", "run the occlusion/noise grid");
  add_common_flags(sweep, sweep_opts, true);
  sweep->callback([&] { exit_code = cmd_sweep(sweep_opts); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}
