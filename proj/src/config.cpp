#include "mfgpi/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string_view>

#include "mfgpi/errors.hpp"

namespace mfgpi {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string format_double(double value) {
  std::ostringstream out;
  out << std::setprecision(17) << value;
  return out.str();
}

double parse_double(const std::string& text) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + text + "'");
  }
  if (used != text.size()) throw ConfigError("expected a number, got '" + text + "'");
  return value;
}

template <typename Int>
Int parse_int(const std::string& text) {
  Int value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size())
    throw ConfigError("expected an integer, got '" + text + "'");
  return value;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("expected a boolean, got '" + text + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& trainer_setters() {
  static const std::map<std::string, Setter> setters = {
      {"iterations", [](RunConfig& c, const std::string& v) { c.trainer.iterations = parse_int<int>(v); }},
      {"inner_steps", [](RunConfig& c, const std::string& v) { c.trainer.inner_steps = parse_int<int>(v); }},
      {"adversarial_steps",
       [](RunConfig& c, const std::string& v) { c.trainer.adversarial_steps = parse_int<int>(v); }},
      {"ensemble_size", [](RunConfig& c, const std::string& v) { c.trainer.ensemble_size = parse_int<int>(v); }},
      {"batch_size", [](RunConfig& c, const std::string& v) { c.trainer.batch_size = parse_int<int>(v); }},
      {"lr_base", [](RunConfig& c, const std::string& v) { c.trainer.lr_base = parse_double(v); }},
      {"lr_value_factor", [](RunConfig& c, const std::string& v) { c.trainer.lr_value_factor = parse_double(v); }},
      {"lr_control_factor",
       [](RunConfig& c, const std::string& v) { c.trainer.lr_control_factor = parse_double(v); }},
      {"lr_test_factor", [](RunConfig& c, const std::string& v) { c.trainer.lr_test_factor = parse_double(v); }},
      {"lr_decay", [](RunConfig& c, const std::string& v) { c.trainer.lr_decay = parse_double(v); }},
      {"rmsprop_smoothing",
       [](RunConfig& c, const std::string& v) { c.trainer.rmsprop.smoothing = parse_double(v); }},
      {"rmsprop_epsilon", [](RunConfig& c, const std::string& v) { c.trainer.rmsprop.epsilon = parse_double(v); }},
      {"test_outputs", [](RunConfig& c, const std::string& v) { c.trainer.test_outputs = parse_int<int>(v); }},
      {"test_scale", [](RunConfig& c, const std::string& v) { c.trainer.test_scale = parse_double(v); }},
      {"width", [](RunConfig& c, const std::string& v) { c.trainer.width = parse_int<int>(v); }},
      {"depth", [](RunConfig& c, const std::string& v) { c.trainer.depth = parse_int<int>(v); }},
      {"kernel_cap", [](RunConfig& c, const std::string& v) { c.trainer.kernel_cap = parse_int<int>(v); }},
      {"fresh_noise", [](RunConfig& c, const std::string& v) { c.trainer.fresh_noise = parse_bool(v); }},
      {"initial_guess",
       [](RunConfig& c, const std::string& v) { c.trainer.initial_guess = initial_guess_from_string(v); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.trainer.seed = parse_int<std::uint64_t>(v); }},
  };
  return setters;
}

const std::map<std::string, Setter>& output_setters() {
  static const std::map<std::string, Setter> setters = {
      {"directory", [](RunConfig& c, const std::string& v) { c.output_dir = v; }},
      {"metrics_every", [](RunConfig& c, const std::string& v) { c.metrics_every = parse_int<int>(v); }},
      {"checkpoint_every", [](RunConfig& c, const std::string& v) { c.checkpoint_every = parse_int<int>(v); }},
      {"snapshot_every", [](RunConfig& c, const std::string& v) { c.snapshot_every = parse_int<int>(v); }},
  };
  return setters;
}

const std::map<std::string, Setter>& metrics_setters() {
  static const std::map<std::string, Setter> setters = {
      {"seed", [](RunConfig& c, const std::string& v) { c.metrics_seed = parse_int<std::uint64_t>(v); }},
      {"cost_mean", [](RunConfig& c, const std::string& v) { c.cost_mean = cost_mean_from_string(v); }},
  };
  return setters;
}

}  // namespace

const char* to_string(CostMean mode) { return mode == CostMean::kReference ? "reference" : "empirical"; }

CostMean cost_mean_from_string(const std::string& name) {
  if (name == "empirical") return CostMean::kEmpirical;
  if (name == "reference") return CostMean::kReference;
  throw ConfigError("unknown cost_mean '" + name + "'");
}

void RunConfig::validate() const {
  if (d <= 0) throw ConfigError("d must be positive");
  if (steps <= 0) throw ConfigError("steps must be positive");
  if (metrics_every <= 0) throw ConfigError("metrics_every must be positive");
  if (checkpoint_every < 0 || snapshot_every < 0) throw ConfigError("cadences must be nonnegative");
  if (output_dir.empty()) throw ConfigError("output directory must be nonempty");
  if (cost_mean == CostMean::kReference && !has_reference_solution(variant))
    throw ConfigError("cost_mean = reference needs a variant with a reference solution");
  trainer.validate();
  make_problem();  // rejects dimension and constant mismatches
}

MfgProblem RunConfig::make_problem() const { return mfgpi::make_problem(variant, d, constants, steps); }

RunConfig parse_run_config(std::istream& in, const std::string& source) {
  RunConfig config;
  std::string section;
  bool have_variant = false;
  bool have_d = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto where = source + ":" + std::to_string(line_no) + ": ";
    const auto comment = line.find_first_of("#;");
    const std::string text = trim(std::string_view(line).substr(0, comment));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(std::string_view(text).substr(1, text.size() - 2));
      if (section != "problem" && section != "constants" && section != "trainer" && section != "output" &&
          section != "metrics")
        throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(std::string_view(text).substr(0, eq));
    const std::string value = trim(std::string_view(text).substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(where + "empty key or value");
    try {
      if (section.empty()) {
        throw ConfigError("key '" + key + "' outside of any section");
      } else if (section == "problem") {
        if (key == "variant") {
          config.variant = variant_from_string(value);
          have_variant = true;
        } else if (key == "d") {
          config.d = parse_int<int>(value);
          have_d = true;
        } else if (key == "steps") {
          config.steps = parse_int<int>(value);
        } else {
          throw ConfigError("unknown key '" + key + "' in [problem]");
        }
      } else if (section == "constants") {
        config.constants[key] = parse_double(value);
      } else {
        const auto& setters = section == "trainer" ? trainer_setters()
                              : section == "output" ? output_setters()
                                                    : metrics_setters();
        const auto it = setters.find(key);
        if (it == setters.end()) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
        it->second(config, value);
      }
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  if (!have_variant) throw ConfigError(source + ": missing required field 'variant' in [problem]");
  if (!have_d) throw ConfigError(source + ": missing required field 'd' in [problem]");
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_run_config(in, path);
}

void write_run_config(std::ostream& out, const RunConfig& config) {
  const auto& t = config.trainer;
  out << "[problem]\n"
      << "variant = " << to_string(config.variant) << "\n"
      << "d = " << config.d << "\n"
      << "steps = " << config.steps << "\n";
  if (!config.constants.empty()) {
    out << "\n[constants]\n";
    for (const auto& [name, value] : config.constants) out << name << " = " << format_double(value) << "\n";
  }
  out << "\n[trainer]\n"
      << "iterations = " << t.iterations << "\n"
      << "inner_steps = " << t.inner_steps << "\n"
      << "adversarial_steps = " << t.adversarial_steps << "\n"
      << "ensemble_size = " << t.ensemble_size << "\n"
      << "batch_size = " << t.batch_size << "\n"
      << "lr_base = " << format_double(t.lr_base) << "\n"
      << "lr_value_factor = " << format_double(t.lr_value_factor) << "\n"
      << "lr_control_factor = " << format_double(t.lr_control_factor) << "\n"
      << "lr_test_factor = " << format_double(t.lr_test_factor) << "\n"
      << "lr_decay = " << format_double(t.lr_decay) << "\n"
      << "rmsprop_smoothing = " << format_double(t.rmsprop.smoothing) << "\n"
      << "rmsprop_epsilon = " << format_double(t.rmsprop.epsilon) << "\n"
      << "test_outputs = " << t.test_outputs << "\n"
      << "test_scale = " << format_double(t.test_scale) << "\n"
      << "width = " << t.width << "\n"
      << "depth = " << t.depth << "\n"
      << "kernel_cap = " << t.kernel_cap << "\n"
      << "fresh_noise = " << (t.fresh_noise ? "true" : "false") << "\n"
      << "initial_guess = " << to_string(t.initial_guess) << "\n"
      << "seed = " << t.seed << "\n"
      << "\n[output]\n"
      << "directory = " << config.output_dir << "\n"
      << "metrics_every = " << config.metrics_every << "\n"
      << "checkpoint_every = " << config.checkpoint_every << "\n"
      << "snapshot_every = " << config.snapshot_every << "\n"
      << "\n[metrics]\n"
      << "seed = " << config.metrics_seed << "\n"
      << "cost_mean = " << to_string(config.cost_mean) << "\n";
}

}  // namespace mfgpi
