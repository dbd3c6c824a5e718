#ifndef PBP_CONFIG_HPP
#define PBP_CONFIG_HPP

// Run configuration and the flat key = value config file parser.

#include <charconv>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pbp/common.hpp"
#include "pbp/env.hpp"
#include "pbp/mpc.hpp"

namespace pbp {

enum class ModelKind { kPbpRnn, kMde };

struct RunConfig {
  uint64_t seed = 1;
  ModelKind model_kind = ModelKind::kPbpRnn;
  int seed_episodes = 100;
  int retrain_interval = 10;
  int initial_epochs_pbp = 5;
  int subsequent_epochs_pbp = 2;
  int initial_epochs_mde = 100;
  int subsequent_epochs_mde = 10;
  int eval_episodes = 20;
  int repetitions = 10;
  int sweep_episodes = 10;
  int batch_size = 500;
  int window_length = 8;
  int hidden_dim = 16;
  int ensemble_size = 5;
  int passes_per_member = 20;
  double dropout_rate = 0.3;
  double learning_rate = 0.001;
  std::vector<double> noise_levels{0.0, 0.0025, 0.005, 0.0075, 0.01};
  std::vector<int> drop_levels{0, 1, 2, 3, 4, 5, 6, 7, 8};
  ctrl::CostWeights weights{};
  sim::WorldConfig world{};

  int initial_epochs() const {
    return model_kind == ModelKind::kPbpRnn ? initial_epochs_pbp
                                            : initial_epochs_mde;
  }
  int subsequent_epochs() const {
    return model_kind == ModelKind::kPbpRnn ? subsequent_epochs_pbp
                                            : subsequent_epochs_mde;
  }

  void validate() const {
    if (seed_episodes < 1 || retrain_interval < 1 || eval_episodes < 1 ||
        repetitions < 1 || batch_size < 2 || window_length < 1 ||
        hidden_dim < 1 || ensemble_size < 1 || sweep_episodes < 1)
      throw ContractError("RunConfig: counts must be >= 1");
    for (double lv : noise_levels)
      if (lv < 0.0) throw ContractError("RunConfig: negative noise level");
    for (int d : drop_levels)
      if (d < 0 || d > window_length)
        throw ContractError("RunConfig: drop level out of range");
  }
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline double parse_real(std::string_view v, int line, const std::string& key) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                      "': cannot parse number '" + std::string(v) + "'");
  return out;
}

inline long parse_int(std::string_view v, int line, const std::string& key) {
  long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                      "': cannot parse integer '" + std::string(v) + "'");
  return out;
}

template <class F>
void parse_list(std::string_view v, F&& each) {
  size_t start = 0;
  while (start <= v.size()) {
    size_t comma = v.find(',', start);
    if (comma == std::string_view::npos) comma = v.size();
    each(trim(v.substr(start, comma - start)));
    start = comma + 1;
  }
}

}  // namespace detail

// Flat key = value document, one pair per line, '#' comments. Unknown keys
// are an error naming the key; missing keys keep RunConfig defaults.
inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view sv = detail::trim(raw);
    if (auto hash = sv.find('#'); hash != std::string_view::npos)
      sv = detail::trim(sv.substr(0, hash));
    if (sv.empty()) continue;
    const size_t eq = sv.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line) +
                        ": expected 'key = value'");
    const std::string key(detail::trim(sv.substr(0, eq)));
    const std::string_view val = detail::trim(sv.substr(eq + 1));

    if (key == "seed") cfg.seed = uint64_t(detail::parse_int(val, line, key));
    else if (key == "seed_episodes")
      cfg.seed_episodes = int(detail::parse_int(val, line, key));
    else if (key == "retrain_interval")
      cfg.retrain_interval = int(detail::parse_int(val, line, key));
    else if (key == "initial_epochs_pbp")
      cfg.initial_epochs_pbp = int(detail::parse_int(val, line, key));
    else if (key == "subsequent_epochs_pbp")
      cfg.subsequent_epochs_pbp = int(detail::parse_int(val, line, key));
    else if (key == "initial_epochs_mde")
      cfg.initial_epochs_mde = int(detail::parse_int(val, line, key));
    else if (key == "subsequent_epochs_mde")
      cfg.subsequent_epochs_mde = int(detail::parse_int(val, line, key));
    else if (key == "eval_episodes")
      cfg.eval_episodes = int(detail::parse_int(val, line, key));
    else if (key == "repetitions")
      cfg.repetitions = int(detail::parse_int(val, line, key));
    else if (key == "sweep_episodes")
      cfg.sweep_episodes = int(detail::parse_int(val, line, key));
    else if (key == "batch_size")
      cfg.batch_size = int(detail::parse_int(val, line, key));
    else if (key == "window_length")
      cfg.window_length = int(detail::parse_int(val, line, key));
    else if (key == "hidden_dim")
      cfg.hidden_dim = int(detail::parse_int(val, line, key));
    else if (key == "ensemble_size")
      cfg.ensemble_size = int(detail::parse_int(val, line, key));
    else if (key == "passes_per_member")
      cfg.passes_per_member = int(detail::parse_int(val, line, key));
    else if (key == "dropout_rate")
      cfg.dropout_rate = detail::parse_real(val, line, key);
    else if (key == "learning_rate")
      cfg.learning_rate = detail::parse_real(val, line, key);
    else if (key == "lambda_c")
      cfg.weights.lambda_c = detail::parse_real(val, line, key);
    else if (key == "lambda_v")
      cfg.weights.lambda_v_base = detail::parse_real(val, line, key);
    else if (key == "lambda_d")
      cfg.weights.lambda_d = detail::parse_real(val, line, key);
    else if (key == "max_steps")
      cfg.world.max_steps = int(detail::parse_int(val, line, key));
    else if (key == "obstacle_speed")
      cfg.world.obstacle_speed = detail::parse_real(val, line, key);
    else if (key == "noise_levels") {
      cfg.noise_levels.clear();
      detail::parse_list(val, [&](std::string_view item) {
        if (!item.empty())
          cfg.noise_levels.push_back(detail::parse_real(item, line, key));
      });
    } else if (key == "drop_levels") {
      cfg.drop_levels.clear();
      detail::parse_list(val, [&](std::string_view item) {
        if (!item.empty())
          cfg.drop_levels.push_back(int(detail::parse_int(item, line, key)));
      });
    } else {
      throw ConfigError("line " + std::to_string(line) + ": unknown key '" +
                        key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

}  // namespace pbp

#endif  // PBP_CONFIG_HPP
