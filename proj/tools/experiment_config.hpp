#ifndef SCRN_TOOLS_EXPERIMENT_CONFIG_HPP_
#define SCRN_TOOLS_EXPERIMENT_CONFIG_HPP_

// Flat key=value experiment files. Every key can also be given on the
// command line as --key value; precedence is defaults < file < flags.

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "scrn/trainer.hpp"

namespace scrn::tools {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  TrainConfig train;
  std::string train_path;
  std::string valid_path;
  std::string test_path;
  std::string vocab_path;  // optional cache: loaded if present, written otherwise
  std::string checkpoint_dir = "run";
  bool eos = true;
  std::uint64_t min_count = 1;
  std::string log_format = "text";  // console epoch lines: text | json
  bool resume = false;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("invalid value for " + key + ": '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + v + "'");
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline const std::vector<ConfigKey>& config_keys() {
  using detail::fmt;
  using detail::parse_bool;
  using detail::parse_number;
  using E = ExperimentConfig;
  using S = const std::string&;
  auto size_key = [](const char* name, const char* help, std::size_t TrainConfig::*field) {
    return ConfigKey{name, help,
                     [=](E& c, S v) { c.train.*field = parse_number<std::size_t>(name, v); },
                     [=](const E& c) { return std::to_string(c.train.*field); }};
  };
  auto real_key = [](const char* name, const char* help, double TrainConfig::*field) {
    return ConfigKey{name, help, [=](E& c, S v) { c.train.*field = parse_number<double>(name, v); },
                     [=](const E& c) { return fmt(c.train.*field); }};
  };
  auto path_key = [](const char* name, const char* help, std::string E::*field) {
    return ConfigKey{name, help, [=](E& c, S v) { c.*field = v; }, [=](const E& c) { return c.*field; }};
  };
  static const std::vector<ConfigKey> keys = {
      {"arch", "srn | scrn | scrn-adaptive | lstm",
       [](E& c, S v) {
         try {
           c.train.arch = parse_architecture(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(e.what());
         }
       },
       [](const E& c) { return std::string(to_string(c.train.arch)); }},
      size_key("hidden", "hidden units m", &TrainConfig::hidden),
      size_key("context", "context units p (ignored for srn and lstm)", &TrainConfig::context),
      {"hsm", "hierarchical softmax on/off", [](E& c, S v) { c.train.hsm = parse_bool("hsm", v); },
       [](const E& c) { return std::string(c.train.hsm ? "true" : "false"); }},
      size_key("classes", "softmax classes K (0: ceil(sqrt(d)))", &TrainConfig::classes),
      real_key("alpha", "fixed context decay", &TrainConfig::alpha),
      size_key("bptt_span", "steps kept for backpropagation (0: 10 for srn, 50 otherwise)",
               &TrainConfig::bptt_span),
      size_key("update_interval", "forward steps between updates", &TrainConfig::update_interval),
      size_key("num_streams", "parallel training streams", &TrainConfig::num_streams),
      real_key("learning_rate", "initial learning rate", &TrainConfig::learning_rate),
      real_key("lr_decay_divisor", "learning-rate divisor on non-improving epochs",
               &TrainConfig::lr_decay_divisor),
      real_key("clip_norm", "gradient renormalization threshold", &TrainConfig::clip_norm),
      size_key("max_epochs", "epoch limit", &TrainConfig::max_epochs),
      {"seed", "initialization seed",
       [](E& c, S v) { c.train.seed = parse_number<std::uint64_t>("seed", v); },
       [](const E& c) { return std::to_string(c.train.seed); }},
      {"precision", "32 | 64",
       [](E& c, S v) {
         if (v == "32") c.train.precision = Precision::kFloat32;
         else if (v == "64") c.train.precision = Precision::kFloat64;
         else throw ConfigError("precision must be 32 or 64");
       },
       [](const E& c) { return std::string(c.train.precision == Precision::kFloat32 ? "32" : "64"); }},
      {"truncation", "sliding | tiled",
       [](E& c, S v) {
         if (v == "sliding") c.train.truncation = Truncation::kSliding;
         else if (v == "tiled") c.train.truncation = Truncation::kTiled;
         else throw ConfigError("truncation must be sliding or tiled");
       },
       [](const E& c) { return std::string(c.train.truncation == Truncation::kSliding ? "sliding" : "tiled"); }},
      size_key("workers", "worker threads", &TrainConfig::workers),
      real_key("init_half_width", "uniform init half-width", &TrainConfig::init_half_width),
      real_key("improvement_threshold", "relative validation gain that counts as improvement",
               &TrainConfig::improvement_threshold),
      {"average_streams", "average (true) or sum (false) per-stream gradients",
       [](E& c, S v) { c.train.average_streams = parse_bool("average_streams", v); },
       [](const E& c) { return std::string(c.train.average_streams ? "true" : "false"); }},
      path_key("train", "training text", &E::train_path),
      path_key("valid", "validation text", &E::valid_path),
      path_key("test", "test text (optional)", &E::test_path),
      path_key("vocab", "vocabulary cache (optional)", &E::vocab_path),
      path_key("checkpoint_dir", "output directory", &E::checkpoint_dir),
      {"eos", "append an end-of-sentence token per line", [](E& c, S v) { c.eos = parse_bool("eos", v); },
       [](const E& c) { return std::string(c.eos ? "true" : "false"); }},
      {"min_count", "tokens rarer than this map to <unk>",
       [](E& c, S v) { c.min_count = parse_number<std::uint64_t>("min_count", v); },
       [](const E& c) { return std::to_string(c.min_count); }},
      {"log_format", "console epoch lines: text | json",
       [](E& c, S v) {
         if (v != "text" && v != "json") throw ConfigError("log_format must be text or json");
         c.log_format = v;
       },
       [](const E& c) { return c.log_format; }},
      {"resume", "continue from checkpoint_dir/checkpoint.bin if present",
       [](E& c, S v) { c.resume = parse_bool("resume", v); },
       [](const E& c) { return std::string(c.resume ? "true" : "false"); }},
  };
  return keys;
}

inline const ConfigKey& find_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name) return k;
  throw ConfigError("unknown config key '" + name + "'");
}

inline void set_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  find_key(key).set(cfg, value);
}

// Lines are `key = value`; blank lines and lines starting with '#' are
// skipped.
inline void apply_config_stream(ExperimentConfig& cfg, std::istream& is, const std::string& origin) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    // A '#' after whitespace starts a trailing comment.
    for (std::size_t i = 1; i < t.size(); ++i)
      if (t[i] == '#' && (t[i - 1] == ' ' || t[i - 1] == '\t')) {
        t = detail::trim(t.substr(0, i));
        break;
      }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    try {
      set_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  apply_config_stream(cfg, is, path);
}

inline std::string dump_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

}  // namespace scrn::tools

#endif  // SCRN_TOOLS_EXPERIMENT_CONFIG_HPP_
