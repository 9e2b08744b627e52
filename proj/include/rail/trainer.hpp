#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rail/discriminator.hpp"
#include "rail/envs.hpp"
#include "rail/policy.hpp"
#include "rail/risk.hpp"
#include "rail/trpo.hpp"

namespace rail {

enum class TrainMode { Expert, Gail, Rail };

// How the discriminator's CVaR gradient distributes a tail trajectory's weight
// over its steps. SharedFactor: one factor sum_t gamma^t times the mean
// per-step gradient. PerStep: gamma^t on each step's gradient (the exact
// derivative of h_alpha).
enum class DiscCvarVariant { SharedFactor, PerStep };

// Which discriminator the surrogate trajectory costs are evaluated with.
// Split: the discriminator update uses w_i, policy and nu use w_{i+1}.
// Stale: everything uses w_i. Fresh: costs are re-evaluated at the current
// parameters before every use, including each discriminator Adam step.
enum class RiskEstimate { Split, Stale, Fresh };

// How nu moves each iteration. Gradient: one descent step on h_alpha with
// rate nu_lr. Exact: nu is set to the batch VaR, the minimizer of h_alpha.
enum class NuUpdate { Gradient, Exact };

struct PolicyConfig {
  std::vector<int> hidden{100, 100};
  double log_std_init = 0.0;
  double entropy_coef = 0.0;
};

struct DiscConfig {
  std::vector<int> hidden{100, 100};
  double learning_rate = 3e-3;
  int steps = 1;
  double std_floor = 1e-2;
  DiscCvarVariant cvar_variant = DiscCvarVariant::SharedFactor;
};

struct RiskConfig {
  double alpha = 0.9;
  double lambda_cvar = 0.0;
  double nu_lr = 0.01;
  NuUpdate nu_update = NuUpdate::Gradient;
  // nullopt: warm-start nu at the VaR of the first batch.
  std::optional<double> nu_init;
  RiskEstimate estimate = RiskEstimate::Split;
  // Subtract the batch mean of the CVaR coefficients (optional variance reduction).
  bool policy_baseline = false;
};

struct TrainConfig {
  EnvSpec env;
  TrainMode mode = TrainMode::Rail;
  int iterations = 300;
  int traj_per_iter = 20;
  std::uint64_t seed = 0;
  PolicyConfig policy;
  DiscConfig disc;
  RiskConfig risk;
  TrpoConfig trpo;
  BaselineConfig baseline;

  void validate() const;
};

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);

struct IterationLog {
  int iteration = 0;
  double mean_true_cost = 0.0;
  double mean_surrogate_cost = 0.0;
  double nu = 0.0;
  double disc_objective = 0.0;
  double kl = 0.0;
  double cvar_true = 0.0;
  bool step_accepted = false;
  double loss_before = 0.0;
  double loss_after = 0.0;
  std::string policy_checksum;
  std::string disc_checksum;
};

enum class Phase { Sample, EstimateRisk, DiscUpdate, PolicyUpdate, NuUpdate };

class Trainer;
struct TrainHooks {
  // Called after each phase of an iteration completes.
  std::function<void(int iteration, Phase phase, const Trainer& trainer)> on_phase;
};

struct ExpertData {
  std::vector<Trajectory> trajectories;
  Mat states;
  Mat actions;
};
ExpertData stack_expert(std::vector<Trajectory> trajectories);

// Runs expert TRPO training on the true cost, or the imitation loop
// (GAIL/RAIL) against a fixed expert data set.
class Trainer {
 public:
  Trainer(TrainConfig config, std::optional<ExpertData> expert = std::nullopt, TrainHooks hooks = {});

  void run();
  void run_iteration(int iteration);

  const TrainConfig& config() const { return config_; }
  const GaussianPolicy& policy() const { return policy_; }
  const Discriminator& disc() const { return disc_; }
  const ValueBaseline& baseline() const { return baseline_; }
  const RiskState& risk() const { return risk_; }
  const std::vector<IterationLog>& logs() const { return logs_; }
  const std::vector<StepStats>& step_stats() const { return step_stats_; }
  // Trajectories sampled in the current (or latest) iteration.
  const std::vector<Trajectory>& batch() const { return batch_; }
  // Surrogate trajectory costs the policy and nu steps of the latest
  // iteration use (set before the policy update).
  const std::vector<double>& last_surrogate_costs() const { return last_costs_; }

  // For resuming from a checkpoint or test setups.
  void set_policy(const GaussianPolicy& p) { policy_ = p; }

 private:
  void expert_iteration(int iteration, const std::vector<Trajectory>& trajs);
  void imitation_iteration(int iteration, const std::vector<Trajectory>& trajs);
  void phase(int iteration, Phase p) const;

  TrainConfig config_;
  std::unique_ptr<Environment> env_;
  std::optional<ExpertData> expert_;
  TrainHooks hooks_;
  GaussianPolicy policy_;
  Discriminator disc_;
  ValueBaseline baseline_;
  AdamState disc_adam_;
  RiskState risk_;
  bool nu_initialized_ = false;
  Rng fit_rng_;
  std::vector<IterationLog> logs_;
  std::vector<StepStats> step_stats_;
  std::vector<double> last_costs_;
  std::vector<Trajectory> batch_;
};

struct EvalResult {
  std::vector<double> costs;  // undiscounted total true cost per trajectory
  double mean = 0.0;
  double stddev = 0.0;
  double var = 0.0;
  double cvar = 0.0;
  double alpha = 0.9;
};

EvalResult summarize_costs(std::vector<double> costs, double alpha);
EvalResult evaluate(const GaussianPolicy& policy, const Environment& env, int n_trajectories,
                    std::uint64_t seed, double alpha = 0.9);

// Stochastic-policy rollouts (expert demonstrations).
std::vector<Trajectory> sample_trajectories(const GaussianPolicy& policy, const Environment& env,
                                            int n, std::uint64_t seed);

ActionFn policy_sampler(const GaussianPolicy& policy);

// Short hex digest of a parameter vector for logs.
std::string param_checksum(const ParamVector& p);

}  // namespace rail
