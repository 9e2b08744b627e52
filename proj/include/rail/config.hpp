#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "rail/trainer.hpp"

namespace rail {

// Run-level settings that are not part of training itself.
struct IoConfig {
  std::string name = "run";
  int expert_trajectories = 25;
  int eval_trajectories = 50;
  std::uint64_t eval_seed = 1000;
};

struct RunConfig {
  TrainConfig train;
  IoConfig io;
};

// Builds a config from a JSON document with namespaced sections (env, policy,
// disc, risk, trpo, baseline, train, io). Missing keys take defaults; unknown
// keys are rejected with ConfigError.
RunConfig config_from_json(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

// Fully resolved document; config_from_json(config_to_json(c)) == c.
nlohmann::json config_to_json(const RunConfig& config);

// Canonical text of a resolved config and its digest.
std::string resolved_text(const RunConfig& config);
std::string config_digest(const RunConfig& config);

// Per-environment lambda_CVaR defaults.
double default_lambda_cvar(const std::string& env_id);

}  // namespace rail
