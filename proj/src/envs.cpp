#include "rail/envs.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rail/errors.hpp"

namespace rail {

void EnvSpec::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("env.gamma must lie in (0, 1]");
  if (max_steps < 1) throw ConfigError("env.max_steps must be >= 1");
  if (obs_dim < 1 || action_dim < 1) throw ConfigError("env dims must be positive");
}

double EnvSpec::param(const std::string& key) const {
  auto it = dynamics.find(key);
  if (it == dynamics.end()) throw ConfigError("env '" + id + "' has no dynamics parameter '" + key + "'");
  return it->second;
}

std::vector<double> Trajectory::true_costs() const {
  std::vector<double> c;
  c.reserve(transitions.size());
  for (const auto& tr : transitions) c.push_back(tr.true_cost);
  return c;
}

double Trajectory::total_true_cost() const {
  double s = 0.0;
  for (const auto& tr : transitions) s += tr.true_cost;
  return s;
}

Environment::Environment(EnvSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

StepResult Environment::step(const Vec& state, const Vec& action, int t, Rng& rng) const {
  require_shape(state.size() == spec_.obs_dim, "env_step: state dim mismatch");
  require_shape(action.size() == spec_.action_dim, "env_step: action dim mismatch");
  if (!action.allFinite()) throw DivergenceError("env_step: non-finite action");
  StepResult r;
  r.true_cost = cost(state, action);
  r.next_state = transition(state, action, rng);
  r.done = t + 1 >= spec_.max_steps;
  return r;
}

namespace {

double distance_to_goal(const Vec& s) { return (s.head<2>() - s.segment<2>(2)).norm(); }

Vec gaussian2(Rng& rng, double scale) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec v(2);
  v(0) = scale * n(rng);
  v(1) = scale * n(rng);
  return v;
}

}  // namespace

// ---- PointGoal ----

EnvSpec PointGoal::default_spec() {
  EnvSpec s;
  s.id = "point_goal";
  s.obs_dim = 4;
  s.action_dim = 2;
  s.gamma = 0.995;
  s.max_steps = 50;
  s.dynamics = {{"noise_std", 0.01}, {"action_cost", 0.1}, {"dt", 0.1}, {"arena", 1.0}};
  return s;
}

PointGoal::PointGoal(EnvSpec spec) : Environment(std::move(spec)) {
  require_shape(spec_.obs_dim == 4 && spec_.action_dim == 2, "point_goal is 4-d obs / 2-d action");
}

Vec PointGoal::reset(Rng& rng) const {
  const double a = spec_.param("arena");
  std::uniform_real_distribution<double> u(-a, a);
  Vec s(4);
  for (int i = 0; i < 4; ++i) s(i) = u(rng);
  return s;
}

double PointGoal::cost(const Vec& state, const Vec& action) const {
  return distance_to_goal(state) + spec_.param("action_cost") * action.squaredNorm();
}

Vec PointGoal::transition(const Vec& state, const Vec& action, Rng& rng) const {
  Vec next = state;
  next.head<2>() += spec_.param("dt") * action + gaussian2(rng, spec_.param("noise_std"));
  return next;
}

// ---- HazardCorridor ----

EnvSpec HazardCorridor::default_spec() {
  EnvSpec s;
  s.id = "hazard_corridor";
  s.obs_dim = 4;
  s.action_dim = 2;
  s.gamma = 0.995;
  s.max_steps = 100;
  s.init_spread = 0.05;
  s.dynamics = {
      {"noise_std", 0.01},      {"action_cost", 0.1},     {"dt", 0.1},
      {"start_x", 0.0},         {"start_y", 0.0},         {"goal_x", 2.0},
      {"goal_y", 0.0},          {"hazard_x_min", 0.4},    {"hazard_x_max", 1.6},
      {"hazard_y_min", -0.8},   {"hazard_y_max", -0.15},  {"gust_prob", 0.02},
      {"gust_magnitude", 0.3},  {"hazard_penalty", 100.0},  {"wall_x_min", -0.5},
      {"wall_x_max", 2.5},      {"wall_y_min", -1.0},     {"wall_y_max", 1.0},
  };
  return s;
}

HazardCorridor::HazardCorridor(EnvSpec spec) : Environment(std::move(spec)) {
  require_shape(spec_.obs_dim == 4 && spec_.action_dim == 2,
                "hazard_corridor is 4-d obs / 2-d action");
}

Vec HazardCorridor::reset(Rng& rng) const {
  Vec s(4);
  s.head<2>() << spec_.param("start_x"), spec_.param("start_y");
  s.head<2>() += gaussian2(rng, spec_.init_spread);
  s(2) = spec_.param("goal_x");
  s(3) = spec_.param("goal_y");
  return s;
}

bool HazardCorridor::in_hazard(const Vec& state) const {
  const double x = state(0);
  const double y = state(1);
  return x >= spec_.param("hazard_x_min") && x <= spec_.param("hazard_x_max") &&
         y >= spec_.param("hazard_y_min") && y <= spec_.param("hazard_y_max");
}

double HazardCorridor::cost(const Vec& state, const Vec& action) const {
  double c = distance_to_goal(state) + spec_.param("action_cost") * action.squaredNorm();
  if (in_hazard(state)) c += spec_.param("hazard_penalty");
  return c;
}

Vec HazardCorridor::transition(const Vec& state, const Vec& action, Rng& rng) const {
  Vec next = state;
  next.head<2>() += spec_.param("dt") * action + gaussian2(rng, spec_.param("noise_std"));
  std::bernoulli_distribution gust(spec_.param("gust_prob"));
  // The hazard lies on the -y side of the corridor.
  if (gust(rng)) next(1) -= spec_.param("gust_magnitude");
  // Walls keep the agent inside the corridor.
  next(0) = std::clamp(next(0), spec_.param("wall_x_min"), spec_.param("wall_x_max"));
  next(1) = std::clamp(next(1), spec_.param("wall_y_min"), spec_.param("wall_y_max"));
  return next;
}

// ---- factory / rollout ----

EnvSpec default_env_spec(const std::string& id) {
  if (id == "point_goal") return PointGoal::default_spec();
  if (id == "hazard_corridor") return HazardCorridor::default_spec();
  throw ConfigError("unknown env id '" + id + "'");
}

std::unique_ptr<Environment> make_env(const EnvSpec& spec) {
  if (spec.id == "point_goal") return std::make_unique<PointGoal>(spec);
  if (spec.id == "hazard_corridor") return std::make_unique<HazardCorridor>(spec);
  throw ConfigError("unknown env id '" + spec.id + "'");
}

Trajectory rollout(const Environment& env, const ActionFn& act, std::uint64_t seed) {
  Rng rng(seed);
  Trajectory traj;
  traj.seed = seed;
  traj.transitions.reserve(static_cast<std::size_t>(env.spec().max_steps));
  Vec state = env.reset(rng);
  for (int t = 0; t < env.spec().max_steps; ++t) {
    Vec action = act(state, rng);
    if (!action.allFinite()) throw DivergenceError("rollout: policy produced a non-finite action");
    StepResult r = env.step(state, action, t, rng);
    traj.transitions.push_back({state, action, r.next_state, r.true_cost});
    state = std::move(r.next_state);
    if (r.done) break;
  }
  return traj;
}

std::vector<Trajectory> rollout_batch(const Environment& env, const ActionFn& act,
                                      std::span<const std::uint64_t> seeds) {
  std::vector<Trajectory> out(seeds.size());
  const auto n = static_cast<long>(seeds.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = rollout(env, act, seeds[static_cast<std::size_t>(i)]);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

double discounted_sum(std::span<const double> costs, double gamma) {
  double total = 0.0;
  double discount = 1.0;
  for (double c : costs) {
    total += discount * c;
    discount *= gamma;
  }
  return total;
}

double discounted_cost(const Trajectory& traj, double gamma, std::span<const double> per_step_costs) {
  require_shape(static_cast<int>(per_step_costs.size()) == traj.length(),
                "discounted_cost: cost sequence length differs from trajectory length");
  return discounted_sum(per_step_costs, gamma);
}

double geometric_factor(double gamma, int length) {
  if (gamma == 1.0) return static_cast<double>(length);
  return (1.0 - std::pow(gamma, length)) / (1.0 - gamma);
}

ActionFn distance_greedy_policy() {
  return [](const Vec& obs, Rng&) -> Vec {
    Vec dir = obs.segment<2>(2) - obs.head<2>();
    const double d = dir.norm();
    // Unit speed, slowing inside the last step so the goal is not overshot.
    return d > 0.1 ? Vec(dir / d) : Vec(dir / 0.1);
  };
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t batch, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(batch), static_cast<std::uint32_t>(batch >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace rail
