#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rail/numerics.hpp"

namespace rail {

struct EnvSpec {
  std::string id;
  int obs_dim = 4;
  int action_dim = 2;
  double gamma = 0.995;
  int max_steps = 50;
  // Initial position ~ start + init_spread * N(0, I).
  double init_spread = 0.0;
  // Everything environment-specific (noise, gust, hazard geometry).
  std::map<std::string, double> dynamics;

  void validate() const;
  double param(const std::string& key) const;
};

struct Transition {
  Vec state;
  Vec action;
  Vec next_state;
  double true_cost = 0.0;
};

struct Trajectory {
  std::vector<Transition> transitions;
  std::uint64_t seed = 0;

  int length() const { return static_cast<int>(transitions.size()); }
  std::vector<double> true_costs() const;
  double total_true_cost() const;
};

struct StepResult {
  Vec next_state;
  double true_cost = 0.0;
  bool done = false;
};

class Environment {
 public:
  explicit Environment(EnvSpec spec);
  virtual ~Environment() = default;

  const EnvSpec& spec() const { return spec_; }

  virtual Vec reset(Rng& rng) const = 0;
  // Deterministic c(s, a).
  virtual double cost(const Vec& state, const Vec& action) const = 0;
  // Samples s' ~ T(.|s, a). `t` is the index of this step within the episode.
  StepResult step(const Vec& state, const Vec& action, int t, Rng& rng) const;

 protected:
  virtual Vec transition(const Vec& state, const Vec& action, Rng& rng) const = 0;

  EnvSpec spec_;
};

// 2D point mass. Observation (pos, goal); action is a velocity.
class PointGoal final : public Environment {
 public:
  explicit PointGoal(EnvSpec spec);
  static EnvSpec default_spec();

  Vec reset(Rng& rng) const override;
  double cost(const Vec& state, const Vec& action) const override;

 protected:
  Vec transition(const Vec& state, const Vec& action, Rng& rng) const override;
};

// 2D navigation from the start to a fixed goal past a rectangular hazard
// strip. A rare gust shoves the agent toward the strip; every step spent
// inside it costs `hazard_penalty`.
class HazardCorridor final : public Environment {
 public:
  explicit HazardCorridor(EnvSpec spec);
  static EnvSpec default_spec();

  Vec reset(Rng& rng) const override;
  double cost(const Vec& state, const Vec& action) const override;
  bool in_hazard(const Vec& state) const;

 protected:
  Vec transition(const Vec& state, const Vec& action, Rng& rng) const override;
};

EnvSpec default_env_spec(const std::string& id);
std::unique_ptr<Environment> make_env(const EnvSpec& spec);

// Action sampler: observation + the rollout's rng -> action.
using ActionFn = std::function<Vec(const Vec& obs, Rng& rng)>;

Trajectory rollout(const Environment& env, const ActionFn& act, std::uint64_t seed);

// One trajectory per seed, in seed order. Rollouts run under OpenMP; each
// owns its generator, so the result is independent of the thread count.
std::vector<Trajectory> rollout_batch(const Environment& env, const ActionFn& act,
                                      std::span<const std::uint64_t> seeds);

// Sum_t gamma^t cost_t. Throws ShapeError when the lengths differ.
double discounted_cost(const Trajectory& traj, double gamma, std::span<const double> per_step_costs);
double discounted_sum(std::span<const double> costs, double gamma);

// Sum_{t<L} gamma^t, with the gamma == 1 limit L.
double geometric_factor(double gamma, int length);

// Heads straight for the goal at unit speed; used as the reference policy
// for the heavy-tail check.
ActionFn distance_greedy_policy();

// Seed for trajectory `index` of batch `batch` under run seed `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t batch, std::uint64_t index);

}  // namespace rail
