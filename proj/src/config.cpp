#include "rail/config.hpp"

#include <set>

#include "rail/errors.hpp"
#include "rail/io.hpp"

namespace rail {

using nlohmann::json;

namespace {

const std::set<std::string> kSections{"env", "policy", "disc", "risk", "trpo", "baseline", "train", "io"};

// Reads typed values from one section and remembers which keys were consumed.
class Section {
 public:
  Section(const json& doc, std::string name) : name_(std::move(name)) {
    if (doc.contains(name_)) {
      node_ = doc.at(name_);
      if (!node_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
    } else {
      node_ = json::object();
    }
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!node_.contains(key)) return;
    try {
      out = node_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  bool has(const std::string& key) const { return node_.contains(key); }
  const json& node() const { return node_; }
  void mark(const std::string& key) { seen_.insert(key); }

  void reject_unknown() const {
    for (const auto& [k, _] : node_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config key '" + name_ + "." + k + "'");
  }

 private:
  std::string name_;
  json node_;
  std::set<std::string> seen_;
};

std::string variant_name(DiscCvarVariant v) { return v == DiscCvarVariant::SharedFactor ? "shared_factor" : "per_step"; }

DiscCvarVariant variant_from(const std::string& s) {
  if (s == "shared_factor") return DiscCvarVariant::SharedFactor;
  if (s == "per_step") return DiscCvarVariant::PerStep;
  throw ConfigError("disc.cvar_variant must be shared_factor or per_step");
}

std::string estimate_name(RiskEstimate e) {
  switch (e) {
    case RiskEstimate::Split: return "split";
    case RiskEstimate::Stale: return "stale";
    case RiskEstimate::Fresh: return "fresh";
  }
  return "?";
}

RiskEstimate estimate_from(const std::string& s) {
  if (s == "split") return RiskEstimate::Split;
  if (s == "stale") return RiskEstimate::Stale;
  if (s == "fresh") return RiskEstimate::Fresh;
  throw ConfigError("risk.estimate must be split, stale or fresh");
}

}  // namespace

double default_lambda_cvar(const std::string& env_id) {
  if (env_id == "hazard_corridor") return 0.5;
  return 0.25;
}

RunConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  for (const auto& [k, _] : doc.items())
    if (!kSections.count(k)) throw ConfigError("unknown config section '" + k + "'");

  RunConfig rc;
  TrainConfig& tc = rc.train;

  Section env(doc, "env");
  std::string env_id = "point_goal";
  env.read("id", env_id);
  tc.env = default_env_spec(env_id);
  env.read("gamma", tc.env.gamma);
  env.read("max_steps", tc.env.max_steps);
  env.read("init_spread", tc.env.init_spread);
  for (auto& [key, value] : tc.env.dynamics) env.read(key, value);
  env.reject_unknown();

  Section policy(doc, "policy");
  policy.read("hidden", tc.policy.hidden);
  policy.read("log_std_init", tc.policy.log_std_init);
  policy.read("entropy_coef", tc.policy.entropy_coef);
  policy.reject_unknown();

  Section disc(doc, "disc");
  disc.read("hidden", tc.disc.hidden);
  disc.read("learning_rate", tc.disc.learning_rate);
  disc.read("steps", tc.disc.steps);
  disc.read("std_floor", tc.disc.std_floor);
  std::string variant = variant_name(tc.disc.cvar_variant);
  disc.read("cvar_variant", variant);
  tc.disc.cvar_variant = variant_from(variant);
  disc.reject_unknown();

  Section train(doc, "train");
  std::string mode = "rail";
  train.read("mode", mode);
  tc.mode = train_mode_from_string(mode);
  train.read("iterations", tc.iterations);
  train.read("traj_per_iter", tc.traj_per_iter);
  train.read("seed", tc.seed);
  train.reject_unknown();

  Section risk(doc, "risk");
  tc.risk.lambda_cvar = tc.mode == TrainMode::Rail ? default_lambda_cvar(env_id) : 0.0;
  risk.read("alpha", tc.risk.alpha);
  risk.read("lambda_cvar", tc.risk.lambda_cvar);
  risk.read("nu_lr", tc.risk.nu_lr);
  risk.mark("nu_init");
  if (risk.has("nu_init")) {
    const auto& v = risk.node().at("nu_init");
    if (v.is_string() && v.get<std::string>() == "var")
      tc.risk.nu_init.reset();
    else if (v.is_number())
      tc.risk.nu_init = v.get<double>();
    else
      throw ConfigError("risk.nu_init must be \"var\" or a number");
  }
  std::string estimate = estimate_name(tc.risk.estimate);
  risk.read("estimate", estimate);
  tc.risk.estimate = estimate_from(estimate);
  risk.read("policy_baseline", tc.risk.policy_baseline);
  std::string nu_update = tc.risk.nu_update == NuUpdate::Exact ? "exact" : "gradient";
  risk.read("nu_update", nu_update);
  if (nu_update != "gradient" && nu_update != "exact") throw ConfigError("risk.nu_update must be gradient or exact");
  tc.risk.nu_update = nu_update == "exact" ? NuUpdate::Exact : NuUpdate::Gradient;
  risk.reject_unknown();

  Section trpo(doc, "trpo");
  trpo.read("max_kl", tc.trpo.max_kl);
  trpo.read("cg_iterations", tc.trpo.cg_iterations);
  trpo.read("cg_damping", tc.trpo.cg_damping);
  trpo.read("backtrack_steps", tc.trpo.backtrack_steps);
  trpo.read("backtrack_ratio", tc.trpo.backtrack_ratio);
  trpo.reject_unknown();

  Section baseline(doc, "baseline");
  baseline.read("hidden", tc.baseline.hidden);
  baseline.read("epochs", tc.baseline.epochs);
  baseline.read("minibatch", tc.baseline.minibatch);
  baseline.read("learning_rate", tc.baseline.learning_rate);
  baseline.reject_unknown();

  Section io(doc, "io");
  io.read("name", rc.io.name);
  io.read("expert_trajectories", rc.io.expert_trajectories);
  io.read("eval_trajectories", rc.io.eval_trajectories);
  io.read("eval_seed", rc.io.eval_seed);
  io.reject_unknown();

  tc.validate();
  return rc;
}

RunConfig load_config(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(doc);
}

json config_to_json(const RunConfig& rc) {
  const TrainConfig& tc = rc.train;
  json env = {{"id", tc.env.id}, {"gamma", tc.env.gamma}, {"max_steps", tc.env.max_steps},
              {"init_spread", tc.env.init_spread}};
  for (const auto& [k, v] : tc.env.dynamics) env[k] = v;
  json risk = {{"alpha", tc.risk.alpha},
               {"lambda_cvar", tc.risk.lambda_cvar},
               {"nu_lr", tc.risk.nu_lr},
               {"estimate", estimate_name(tc.risk.estimate)},
               {"policy_baseline", tc.risk.policy_baseline},
               {"nu_update", tc.risk.nu_update == NuUpdate::Exact ? "exact" : "gradient"}};
  if (tc.risk.nu_init)
    risk["nu_init"] = *tc.risk.nu_init;
  else
    risk["nu_init"] = "var";
  return {
      {"env", env},
      {"policy", {{"hidden", tc.policy.hidden}, {"log_std_init", tc.policy.log_std_init}, {"entropy_coef", tc.policy.entropy_coef}}},
      {"disc",
       {{"hidden", tc.disc.hidden},
        {"learning_rate", tc.disc.learning_rate},
        {"steps", tc.disc.steps},
        {"std_floor", tc.disc.std_floor},
        {"cvar_variant", variant_name(tc.disc.cvar_variant)}}},
      {"risk", risk},
      {"trpo",
       {{"max_kl", tc.trpo.max_kl},
        {"cg_iterations", tc.trpo.cg_iterations},
        {"cg_damping", tc.trpo.cg_damping},
        {"backtrack_steps", tc.trpo.backtrack_steps},
        {"backtrack_ratio", tc.trpo.backtrack_ratio}}},
      {"baseline",
       {{"hidden", tc.baseline.hidden},
        {"epochs", tc.baseline.epochs},
        {"minibatch", tc.baseline.minibatch},
        {"learning_rate", tc.baseline.learning_rate}}},
      {"train", {{"mode", to_string(tc.mode)}, {"iterations", tc.iterations}, {"traj_per_iter", tc.traj_per_iter}, {"seed", tc.seed}}},
      {"io",
       {{"name", rc.io.name},
        {"expert_trajectories", rc.io.expert_trajectories},
        {"eval_trajectories", rc.io.eval_trajectories},
        {"eval_seed", rc.io.eval_seed}}},
  };
}

std::string resolved_text(const RunConfig& config) { return config_to_json(config).dump(2); }

std::string config_digest(const RunConfig& config) { return sha256_hex(resolved_text(config)); }

}  // namespace rail
