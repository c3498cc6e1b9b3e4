#pragma once

#include <charconv>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "matchopt/experiments.hpp"

namespace matchopt {

// Schema violation in a config file; carries the offending line.
struct ConfigError : InvalidInput {
  ConfigError(std::size_t line, const std::string& what)
      : InvalidInput("config line " + std::to_string(line) + ": " + what),
        line_number(line) {}
  std::size_t line_number;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline double config_double(std::string_view v, std::size_t line) {
  double out;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
    throw ConfigError(line, "expected a number, got '" + std::string(v) + "'");
  return out;
}

inline std::uint64_t config_u64(std::string_view v, std::size_t line) {
  std::uint64_t out;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
    throw ConfigError(line, "expected a nonnegative integer, got '" + std::string(v) + "'");
  return out;
}

inline std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> parts;
  while (!v.empty()) {
    const auto comma = v.find(',');
    parts.push_back(trim(v.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return parts;
}

}  // namespace detail

// Key = value text format, one pair per line, '#' comments, lists
// comma-separated. Unknown keys and empty values are schema errors.
//
//   dgp = pam | logistic          n = <market size>
//   gammas = 0.02, 0.06, 0.10     eta_inverse = 0, 0.002, 0.01, 0.05
//   training_sizes = 500, 5000    repetitions = 30
//   base_seed = 1                 mc_draws = 10000
//   sinkhorn_tol = 1e-9           sinkhorn_max_iter = 100000
//   boost_rounds = 200            learning_rate = 0.1
//   max_bins = 256                min_leaf = 0
//   workers = 0
inline ExperimentConfig parse_experiment_config(std::istream& is) {
  ExperimentConfig cfg;
  std::string raw;
  std::size_t line_number = 0;
  while (std::getline(is, raw)) {
    ++line_number;
    std::string_view line{raw};
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(line_number, "expected 'key = value'");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(line_number, "missing key");
    if (value.empty())
      throw ConfigError(line_number, "empty value for '" + std::string(key) + "'");

    if (key == "dgp") {
      cfg.dgp_kind = std::string(value);
    } else if (key == "n") {
      cfg.n = static_cast<std::size_t>(detail::config_u64(value, line_number));
    } else if (key == "gammas" || key == "gamma") {
      cfg.gammas.clear();
      for (auto part : detail::split_list(value))
        cfg.gammas.push_back(detail::config_double(part, line_number));
    } else if (key == "eta_inverse") {
      cfg.eta_inverse_grid.clear();
      for (auto part : detail::split_list(value))
        cfg.eta_inverse_grid.push_back(detail::config_double(part, line_number));
    } else if (key == "training_sizes") {
      cfg.training_sizes.clear();
      for (auto part : detail::split_list(value))
        cfg.training_sizes.push_back(
            static_cast<std::size_t>(detail::config_u64(part, line_number)));
    } else if (key == "repetitions") {
      cfg.repetitions = static_cast<std::size_t>(detail::config_u64(value, line_number));
    } else if (key == "base_seed") {
      cfg.base_seed = detail::config_u64(value, line_number);
    } else if (key == "mc_draws") {
      cfg.mc_draws = static_cast<std::size_t>(detail::config_u64(value, line_number));
    } else if (key == "sinkhorn_tol") {
      cfg.sinkhorn.tol = detail::config_double(value, line_number);
    } else if (key == "sinkhorn_max_iter") {
      cfg.sinkhorn.max_iter =
          static_cast<std::size_t>(detail::config_u64(value, line_number));
    } else if (key == "boost_rounds") {
      cfg.boost.rounds = static_cast<int>(detail::config_u64(value, line_number));
    } else if (key == "learning_rate") {
      cfg.boost.learning_rate = detail::config_double(value, line_number);
    } else if (key == "max_bins") {
      cfg.boost.max_bins = static_cast<int>(detail::config_u64(value, line_number));
    } else if (key == "min_leaf") {
      cfg.boost.min_leaf = static_cast<std::size_t>(detail::config_u64(value, line_number));
    } else if (key == "workers") {
      cfg.workers = static_cast<std::size_t>(detail::config_u64(value, line_number));
    } else if (key == "oracle_inject") {
      if (value == "true" || value == "1")
        cfg.oracle_inject = true;
      else if (value == "false" || value == "0")
        cfg.oracle_inject = false;
      else
        throw ConfigError(line_number, "expected true/false for oracle_inject");
    } else {
      throw ConfigError(line_number, "unknown key '" + std::string(key) + "'");
    }
  }
  return cfg;
}

}  // namespace matchopt
