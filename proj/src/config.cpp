#include "mmapirl/config.hpp"

#include <charconv>
#include <sstream>

#include "mmapirl/errors.hpp"
#include "mmapirl/format.hpp"

namespace mmapirl {

namespace {

[[noreturn]] void fail(int line, const std::string& what) {
  throw ValidationError("config line " + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double to_double(const std::string& value, int line, const std::string& key) {
  try {
    std::size_t used = 0;
    const double x = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return x;
  } catch (const std::exception&) {
    fail(line, key + ": expected a number, got '" + value + "'");
  }
}

int to_int(const std::string& value, int line, const std::string& key) {
  int x = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), x);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    fail(line, key + ": expected an integer, got '" + value + "'");
  }
  return x;
}

std::uint64_t to_u64(const std::string& value, int line, const std::string& key) {
  std::uint64_t x = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), x);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    fail(line, key + ": expected a non-negative integer, got '" + value + "'");
  }
  return x;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::istringstream in(value);
  std::string item;
  while (in >> item) items.push_back(item);
  return items;
}

std::vector<double> to_doubles(const std::string& value, int line,
                               const std::string& key) {
  std::vector<double> xs;
  for (const auto& item : split_list(value)) xs.push_back(to_double(item, line, key));
  if (xs.empty()) fail(line, key + ": expected at least one number");
  return xs;
}

bool to_switch(const std::string& value, int line, const std::string& key) {
  if (value == "on") return true;
  if (value == "off") return false;
  fail(line, key + ": expected on|off, got '" + value + "'");
}

const char* mode_name(OcclusionMode mode) {
  return mode == OcclusionMode::ContiguousBlock ? "block" : "iid";
}

const char* segment_name(SegmentStart start) {
  return start == SegmentStart::PolicyOccupancy ? "occupancy" : "uniform";
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ' ';
    out += items[i];
  }
  return out;
}

std::string join_doubles(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ' ';
    out += format_double(xs[i]);
  }
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (environment.empty()) throw ValidationError("environment name is empty");
  if (noise < 0.0 || noise > 1.0) throw ValidationError("noise outside [0, 1]");
  if (blemish_rate < 0.0 || blemish_rate > 1.0) {
    throw ValidationError("blemish_rate outside [0, 1]");
  }
  if (count < 1) throw ValidationError("count must be at least 1");
  if (horizon < 1) throw ValidationError("horizon must be at least 1");
  if (occlusion_rate < 0.0 || occlusion_rate > 1.0) {
    throw ValidationError("occlusion_rate outside [0, 1]");
  }
  ascent.validate();
  if (em_max_rounds < 1) throw ValidationError("em max_rounds must be at least 1");
  if (!(em_tolerance > 0.0)) throw ValidationError("em tolerance must be positive");
  if (em_inner_iterations < 1) {
    throw ValidationError("em inner_iterations must be at least 1");
  }
  if (!(prior_variance > 0.0)) throw ValidationError("prior variance must be positive");
  if (method != "mmap" && method != "ignore" && method != "em") {
    throw ValidationError("unknown method '" + method + "'");
  }
  if (jobs < 1) throw ValidationError("jobs must be at least 1");
  if (onions < 1) throw ValidationError("onions must be at least 1");
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  bool saw_seed = false;
  int line_no = 0;

  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "unterminated section header");
      section = line.substr(1, line.size() - 2);
      if (section != "environment" && section != "demonstrations" &&
          section != "ascent" && section != "em" && section != "prior" &&
          section != "run" && section != "sweep") {
        fail(line_no, "unknown section [" + section + "]");
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(line_no, "empty key");
    if (value.empty()) fail(line_no, key + ": empty value");
    if (section.empty()) fail(line_no, "key '" + key + "' appears before any section");

    if (section == "environment") {
      if (key == "name") config.environment = value;
      else if (key == "noise") config.noise = to_double(value, line_no, key);
      else if (key == "blemish_rate") config.blemish_rate = to_double(value, line_no, key);
      else fail(line_no, "unknown key '" + key + "' in [environment]");
    } else if (section == "demonstrations") {
      if (key == "count") config.count = to_int(value, line_no, key);
      else if (key == "horizon") config.horizon = to_int(value, line_no, key);
      else if (key == "occlusion_mode") {
        if (value == "block") config.occlusion_mode = OcclusionMode::ContiguousBlock;
        else if (value == "iid") config.occlusion_mode = OcclusionMode::IidPerStep;
        else fail(line_no, "occlusion_mode: expected block|iid, got '" + value + "'");
      } else if (key == "occlusion_rate") {
        config.occlusion_rate = to_double(value, line_no, key);
      } else fail(line_no, "unknown key '" + key + "' in [demonstrations]");
    } else if (section == "ascent") {
      if (key == "beta") config.ascent.beta = to_double(value, line_no, key);
      else if (key == "step_size") config.ascent.step_size = to_double(value, line_no, key);
      else if (key == "decay") config.ascent.decay = to_double(value, line_no, key);
      else if (key == "epsilon") config.ascent.epsilon = to_double(value, line_no, key);
      else if (key == "discount") config.ascent.discount = to_double(value, line_no, key);
      else if (key == "max_iterations") {
        config.ascent.max_iterations = to_int(value, line_no, key);
      } else if (key == "prior_gradient_scale") {
        config.ascent.prior_gradient_scale = to_double(value, line_no, key);
      } else if (key == "cache") {
        config.ascent.cache_enabled = to_switch(value, line_no, key);
      } else if (key == "segment_start") {
        if (value == "occupancy") config.segment_start = SegmentStart::PolicyOccupancy;
        else if (value == "uniform") config.segment_start = SegmentStart::UniformStates;
        else fail(line_no, "segment_start: expected occupancy|uniform, got '" + value + "'");
      } else fail(line_no, "unknown key '" + key + "' in [ascent]");
    } else if (section == "em") {
      if (key == "max_rounds") config.em_max_rounds = to_int(value, line_no, key);
      else if (key == "tolerance") config.em_tolerance = to_double(value, line_no, key);
      else if (key == "inner_iterations") {
        config.em_inner_iterations = to_int(value, line_no, key);
      } else fail(line_no, "unknown key '" + key + "' in [em]");
    } else if (section == "prior") {
      if (key == "mean") config.prior_mean = to_double(value, line_no, key);
      else if (key == "variance") config.prior_variance = to_double(value, line_no, key);
      else fail(line_no, "unknown key '" + key + "' in [prior]");
    } else if (section == "run") {
      if (key == "seed") {
        config.seed = to_u64(value, line_no, key);
        saw_seed = true;
      } else if (key == "method") config.method = value;
      else if (key == "jobs") config.jobs = to_int(value, line_no, key);
      else if (key == "onions") config.onions = to_int(value, line_no, key);
      else fail(line_no, "unknown key '" + key + "' in [run]");
    } else if (section == "sweep") {
      if (key == "occlusion_levels") {
        config.occlusion_levels = to_doubles(value, line_no, key);
      } else if (key == "noise_levels") {
        config.noise_levels = to_doubles(value, line_no, key);
      } else if (key == "batches") config.batches = to_int(value, line_no, key);
      else if (key == "trajectories") config.trajectories = to_int(value, line_no, key);
      else if (key == "methods") config.methods = split_list(value);
      else fail(line_no, "unknown key '" + key + "' in [sweep]");
    }
  }

  if (!saw_seed) throw ValidationError("config is missing the mandatory [run] seed key");
  config.validate();
  return config;
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "[environment]\n"
      << "name = " << c.environment << '\n'
      << "noise = " << format_double(c.noise) << '\n'
      << "blemish_rate = " << format_double(c.blemish_rate) << '\n'
      << '\n'
      << "[demonstrations]\n"
      << "count = " << c.count << '\n'
      << "horizon = " << c.horizon << '\n'
      << "occlusion_mode = " << mode_name(c.occlusion_mode) << '\n'
      << "occlusion_rate = " << format_double(c.occlusion_rate) << '\n'
      << '\n'
      << "[ascent]\n"
      << "beta = " << format_double(c.ascent.beta) << '\n'
      << "step_size = " << format_double(c.ascent.step_size) << '\n'
      << "decay = " << format_double(c.ascent.decay) << '\n'
      << "epsilon = " << format_double(c.ascent.epsilon) << '\n'
      << "discount = " << format_double(c.ascent.discount) << '\n'
      << "max_iterations = " << c.ascent.max_iterations << '\n'
      << "prior_gradient_scale = " << format_double(c.ascent.prior_gradient_scale)
      << '\n'
      << "cache = " << (c.ascent.cache_enabled ? "on" : "off") << '\n'
      << "segment_start = " << segment_name(c.segment_start) << '\n'
      << '\n'
      << "[em]\n"
      << "max_rounds = " << c.em_max_rounds << '\n'
      << "tolerance = " << format_double(c.em_tolerance) << '\n'
      << "inner_iterations = " << c.em_inner_iterations << '\n'
      << '\n'
      << "[prior]\n"
      << "mean = " << format_double(c.prior_mean) << '\n'
      << "variance = " << format_double(c.prior_variance) << '\n'
      << '\n'
      << "[run]\n"
      << "seed = " << c.seed << '\n'
      << "method = " << c.method << '\n'
      << "jobs = " << c.jobs << '\n'
      << "onions = " << c.onions << '\n'
      << '\n'
      << "[sweep]\n"
      << "occlusion_levels = " << join_doubles(c.occlusion_levels) << '\n'
      << "noise_levels = " << join_doubles(c.noise_levels) << '\n'
      << "batches = " << c.batches << '\n'
      << "trajectories = " << c.trajectories << '\n'
      << "methods = " << join(c.methods) << '\n';
  return out.str();
}

AscentConfig resolved_ascent(const ExperimentConfig& config) {
  AscentConfig ascent = config.ascent;
  ascent.seed = config.seed;
  ascent.jobs = config.jobs;
  return ascent;
}

GaussianPrior make_prior(const ExperimentConfig& config, int num_features) {
  return broadcast_prior(num_features, config.prior_mean, config.prior_variance);
}

SweepConfig to_sweep(const ExperimentConfig& config) {
  SweepConfig sweep;
  sweep.environment = config.environment;
  sweep.occlusion_levels = config.occlusion_levels;
  sweep.noise_levels = config.noise_levels;
  sweep.methods = config.methods;
  sweep.batches = config.batches;
  sweep.trajectories_per_batch = config.trajectories;
  sweep.horizon = config.horizon;
  sweep.occlusion_mode = config.occlusion_mode;
  sweep.seed = config.seed;
  sweep.ascent = resolved_ascent(config);
  sweep.em_max_rounds = config.em_max_rounds;
  sweep.em_tolerance = config.em_tolerance;
  sweep.em_inner_iterations = config.em_inner_iterations;
  sweep.prior_mean = config.prior_mean;
  sweep.prior_variance = config.prior_variance;
  sweep.segment_start = config.segment_start;
  sweep.blemish_rate = config.blemish_rate;
  return sweep;
}

}  // namespace mmapirl
