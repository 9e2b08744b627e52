#include "rail/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rail/errors.hpp"
#include "rail/io.hpp"

namespace rail {

namespace {

// Seed-derivation tags keep the random streams of different purposes apart.
constexpr std::uint64_t kEvalTag = 0x45564131ULL;
constexpr std::uint64_t kSampleTag = 0x53414d50ULL;
constexpr std::uint64_t kFitTag = 0x46495431ULL;

std::vector<std::uint64_t> batch_seeds(std::uint64_t seed, std::uint64_t batch, int n) {
  std::vector<std::uint64_t> s(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) s[static_cast<std::size_t>(j)] = derive_seed(seed, batch, static_cast<std::uint64_t>(j));
  return s;
}

struct StackedBatch {
  Mat states;
  Mat actions;
  std::vector<Eigen::Index> offsets;
};

StackedBatch stack(const std::vector<Trajectory>& trajs) {
  StackedBatch b;
  Eigen::Index n = 0;
  b.offsets.push_back(0);
  for (const auto& t : trajs) {
    n += t.length();
    b.offsets.push_back(n);
  }
  const auto& first = trajs.front().transitions.front();
  b.states.resize(n, first.state.size());
  b.actions.resize(n, first.action.size());
  Eigen::Index row = 0;
  for (const auto& t : trajs)
    for (const auto& tr : t.transitions) {
      b.states.row(row) = tr.state.transpose();
      b.actions.row(row) = tr.action.transpose();
      ++row;
    }
  return b;
}

std::vector<double> trajectory_sums(const Vec& per_step, const std::vector<Eigen::Index>& offsets, double gamma) {
  std::vector<double> out(offsets.size() - 1);
  for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
    const auto seg = per_step.segment(offsets[i], offsets[i + 1] - offsets[i]);
    out[i] = discounted_sum({seg.data(), static_cast<std::size_t>(seg.size())}, gamma);
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<double> total_true_costs(const std::vector<Trajectory>& trajs) {
  std::vector<double> c;
  c.reserve(trajs.size());
  for (const auto& t : trajs) c.push_back(t.total_true_cost());
  return c;
}

// Weights for the policy surrogate: (A_raw - mean(A_raw) + extra) / std(A_raw).
// The CVaR contribution shares the advantage scale so that lambda keeps its
// relative meaning after standardization.
Vec standardized_weights(const Vec& raw_advantage, const Vec* extra) {
  const double mean = raw_advantage.mean();
  Vec centered = raw_advantage.array() - mean;
  const double sd = std::sqrt(centered.squaredNorm() / static_cast<double>(centered.size()));
  const double scale = 1.0 / std::max(sd, 1e-8);
  if (extra != nullptr) centered += *extra;
  return centered * scale;
}

}  // namespace

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::Expert: return "expert";
    case TrainMode::Gail: return "gail";
    case TrainMode::Rail: return "rail";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "expert") return TrainMode::Expert;
  if (s == "gail") return TrainMode::Gail;
  if (s == "rail") return TrainMode::Rail;
  throw ConfigError("train.mode must be expert, gail or rail (got '" + s + "')");
}

void TrainConfig::validate() const {
  env.validate();
  if (iterations < 0) throw ConfigError("train.iterations must be >= 0");
  if (traj_per_iter < 1) throw ConfigError("train.traj_per_iter must be >= 1");
  RiskState{risk.alpha, 0.0, risk.lambda_cvar, risk.nu_lr}.validate();
  if (mode == TrainMode::Gail && risk.lambda_cvar != 0.0)
    throw ConfigError("gail mode requires risk.lambda_cvar = 0");
  if (disc.steps < 1) throw ConfigError("disc.steps must be >= 1");
  if (!(disc.learning_rate > 0.0)) throw ConfigError("disc.learning_rate must be > 0");
  trpo.validate();
}

ExpertData stack_expert(std::vector<Trajectory> trajectories) {
  if (trajectories.empty()) throw ConfigError("expert data set is empty");
  ExpertData d;
  auto b = stack(trajectories);
  d.states = std::move(b.states);
  d.actions = std::move(b.actions);
  d.trajectories = std::move(trajectories);
  return d;
}

Trainer::Trainer(TrainConfig config, std::optional<ExpertData> expert, TrainHooks hooks)
    : config_(std::move(config)), expert_(std::move(expert)), hooks_(std::move(hooks)) {
  config_.validate();
  env_ = make_env(config_.env);
  Rng init(config_.seed);
  const int obs = config_.env.obs_dim;
  const int act = config_.env.action_dim;
  policy_ = GaussianPolicy(obs, act, config_.policy.hidden, config_.policy.log_std_init, init);
  disc_ = Discriminator(obs, act, config_.disc.hidden, init);
  baseline_ = ValueBaseline(obs, config_.baseline, init);
  fit_rng_ = Rng(derive_seed(config_.seed, kFitTag, 0));
  disc_adam_ = AdamState::zeros(disc_.net().param_count(), config_.disc.learning_rate);
  risk_ = RiskState{config_.risk.alpha, config_.risk.nu_init.value_or(0.0), config_.risk.lambda_cvar,
                    config_.risk.nu_lr};
  nu_initialized_ = config_.risk.nu_init.has_value();

  if (config_.mode != TrainMode::Expert) {
    if (!expert_) throw ConfigError("imitation requires expert trajectories");
    require_shape(expert_->states.cols() == obs && expert_->actions.cols() == act,
                  "expert trajectories do not match the environment dimensions");
    disc_.fit_normalization(expert_->states, expert_->actions, config_.disc.std_floor);
  }
}

void Trainer::phase(int iteration, Phase p) const {
  if (hooks_.on_phase) hooks_.on_phase(iteration, p, *this);
}

void Trainer::run() {
  for (int i = static_cast<int>(logs_.size()); i < config_.iterations; ++i) run_iteration(i);
}

void Trainer::run_iteration(int iteration) {
  const auto seeds = batch_seeds(config_.seed, static_cast<std::uint64_t>(iteration), config_.traj_per_iter);
  batch_ = rollout_batch(*env_, policy_sampler(policy_), seeds);
  phase(iteration, Phase::Sample);
  if (config_.mode == TrainMode::Expert)
    expert_iteration(iteration, batch_);
  else
    imitation_iteration(iteration, batch_);
}

void Trainer::expert_iteration(int iteration, const std::vector<Trajectory>& trajs) {
  const double gamma = config_.env.gamma;
  const auto batch = stack(trajs);
  Vec per_step(batch.states.rows());
  {
    Eigen::Index row = 0;
    for (const auto& t : trajs)
      for (const auto& tr : t.transitions) per_step(row++) = tr.true_cost;
  }
  Vec q(per_step.size());
  for (std::size_t i = 0; i + 1 < batch.offsets.size(); ++i) {
    const auto len = batch.offsets[i + 1] - batch.offsets[i];
    q.segment(batch.offsets[i], len) = discounted_to_go(per_step.segment(batch.offsets[i], len), gamma);
  }
  const Mat features = baseline_features(trajs, config_.env.max_steps);
  const Vec raw = q - baseline_.predict(features);
  baseline_.fit(features, q, fit_rng_);

  PolicyBatch pb{batch.states, batch.actions, standardized_weights(raw, nullptr),
                 policy_.log_prob_batch(batch.states, batch.actions), config_.policy.entropy_coef};
  const StepStats st = natural_step(policy_, pb, config_.trpo);
  step_stats_.push_back(st);
  phase(iteration, Phase::PolicyUpdate);

  const auto totals = total_true_costs(trajs);
  IterationLog log;
  log.iteration = iteration;
  log.mean_true_cost = mean_of(totals);
  log.mean_surrogate_cost = 0.0;
  log.nu = 0.0;
  log.kl = st.kl;
  log.cvar_true = empirical_cvar(totals, config_.risk.alpha);
  log.step_accepted = st.accepted;
  log.loss_before = st.loss_before;
  log.loss_after = st.loss_after;
  log.policy_checksum = param_checksum(policy_.params());
  log.disc_checksum = "";
  logs_.push_back(std::move(log));
}

void Trainer::imitation_iteration(int iteration, const std::vector<Trajectory>& trajs) {
  const bool rail = config_.mode == TrainMode::Rail;
  const double gamma = config_.env.gamma;
  const double alpha = config_.risk.alpha;
  const double lambda = config_.risk.lambda_cvar;
  const auto batch = stack(trajs);
  const auto n_traj = static_cast<double>(trajs.size());
  const auto& offsets = batch.offsets;

  DiscBatch db{batch.states, batch.actions, expert_->states, expert_->actions, offsets};

  auto surrogate_costs = [&] {
    return trajectory_sums(disc_.cost_batch(batch.states, batch.actions), offsets, gamma);
  };

  // Risk estimate with the current discriminator w_i.
  std::vector<double> costs_pre;
  if (rail) {
    costs_pre = surrogate_costs();
    if (config_.risk.nu_update == NuUpdate::Exact) {
      risk_.nu = empirical_var(costs_pre, alpha);
      nu_initialized_ = true;
    } else if (!nu_initialized_) {
      risk_.nu = empirical_var(costs_pre, alpha);
      nu_initialized_ = true;
    }
    phase(iteration, Phase::EstimateRisk);
  }

  // Discriminator ascent. GAIL expectations are taken in discounted
  // trajectory units (per-pair mean times sum_t gamma^t), matching the units
  // of the CVaR term.
  const double traj_scale = geometric_factor(gamma, config_.env.max_steps);
  ParamVector w = disc_.params();
  for (int s = 0; s < config_.disc.steps; ++s) {
    ParamVector grad = traj_scale * disc_.gail_gradient(db);
    if (rail) {
      const auto& costs =
          config_.risk.estimate == RiskEstimate::Fresh && s > 0 ? surrogate_costs() : costs_pre;
      Vec pair_w(batch.states.rows());
      for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
        const auto len = offsets[i + 1] - offsets[i];
        const double r = costs[i];
        if (config_.disc.cvar_variant == DiscCvarVariant::SharedFactor) {
          const double wt = disc_cvar_weight(r, risk_.nu, alpha, gamma, static_cast<int>(len)) /
                            (n_traj * static_cast<double>(len));
          pair_w.segment(offsets[i], len).setConstant(wt);
        } else {
          const double ind = r >= risk_.nu ? 1.0 / ((1.0 - alpha) * n_traj) : 0.0;
          double disc_t = 1.0;
          for (Eigen::Index t = 0; t < len; ++t, disc_t *= gamma) pair_w(offsets[i] + t) = ind * disc_t;
        }
      }
      grad += lambda * disc_.weighted_log_score_grad(batch.states, batch.actions, pair_w);
    }
    adam_step(disc_adam_, w, grad, Direction::Ascent);
    disc_.set_params(w);
  }
  phase(iteration, Phase::DiscUpdate);

  // Q from the updated discriminator w_{i+1}.
  const Vec per_step = disc_.cost_batch(batch.states, batch.actions);
  Vec q(per_step.size());
  for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
    const auto len = offsets[i + 1] - offsets[i];
    q.segment(offsets[i], len) = discounted_to_go(per_step.segment(offsets[i], len), gamma);
  }
  const std::vector<double> costs_post = trajectory_sums(per_step, offsets, gamma);
  const auto& risk_costs = rail && config_.risk.estimate == RiskEstimate::Stale ? costs_pre : costs_post;
  last_costs_ = risk_costs;

  const Mat features = baseline_features(trajs, config_.env.max_steps);
  const Vec raw = q - baseline_.predict(features);
  baseline_.fit(features, q, fit_rng_);

  if (rail && config_.risk.nu_update == NuUpdate::Exact) risk_.nu = empirical_var(risk_costs, alpha);

  Vec weights;
  if (rail) {
    Vec coeff(static_cast<Eigen::Index>(trajs.size()));
    for (std::size_t i = 0; i < trajs.size(); ++i)
      coeff(static_cast<Eigen::Index>(i)) = policy_cvar_coeff(risk_costs[i], risk_.nu, alpha);
    if (config_.risk.policy_baseline) coeff.array() -= coeff.mean();
    Vec extra(raw.size());
    for (std::size_t i = 0; i + 1 < offsets.size(); ++i)
      extra.segment(offsets[i], offsets[i + 1] - offsets[i]).setConstant(lambda * coeff(static_cast<Eigen::Index>(i)));
    weights = standardized_weights(raw, &extra);
  } else {
    weights = standardized_weights(raw, nullptr);
  }
  PolicyBatch pb{batch.states, batch.actions, weights, policy_.log_prob_batch(batch.states, batch.actions),
                 config_.policy.entropy_coef};
  const StepStats st = natural_step(policy_, pb, config_.trpo);
  step_stats_.push_back(st);
  phase(iteration, Phase::PolicyUpdate);

  // nu descent on the same batch.
  if (rail) {
    if (config_.risk.nu_update == NuUpdate::Gradient) update_nu(risk_, risk_costs);
    phase(iteration, Phase::NuUpdate);
  }
  const auto totals = total_true_costs(trajs);
  IterationLog log;
  log.iteration = iteration;
  log.mean_true_cost = mean_of(totals);
  log.mean_surrogate_cost = mean_of(costs_post);
  log.nu = rail ? risk_.nu : 0.0;
  log.disc_objective = disc_.gail_objective(db);
  log.kl = st.kl;
  log.cvar_true = empirical_cvar(totals, alpha);
  log.step_accepted = st.accepted;
  log.loss_before = st.loss_before;
  log.loss_after = st.loss_after;
  log.policy_checksum = param_checksum(policy_.params());
  log.disc_checksum = param_checksum(disc_.params());
  logs_.push_back(std::move(log));
}

ActionFn policy_sampler(const GaussianPolicy& policy) {
  return [&policy](const Vec& obs, Rng& rng) { return policy.sample_action(obs, rng); };
}

EvalResult summarize_costs(std::vector<double> costs, double alpha) {
  if (costs.empty()) throw ShapeError("summarize_costs: empty sample");
  EvalResult r;
  r.alpha = alpha;
  r.mean = mean_of(costs);
  double ss = 0.0;
  for (double c : costs) ss += (c - r.mean) * (c - r.mean);
  r.stddev = std::sqrt(ss / static_cast<double>(costs.size()));
  r.var = empirical_var(costs, alpha);
  r.cvar = empirical_cvar(costs, alpha);
  r.costs = std::move(costs);
  return r;
}

EvalResult evaluate(const GaussianPolicy& policy, const Environment& env, int n_trajectories,
                    std::uint64_t seed, double alpha) {
  if (n_trajectories < 1) throw ConfigError("evaluate: n_trajectories must be >= 1");
  const auto seeds = batch_seeds(seed, kEvalTag, n_trajectories);
  const auto trajs = rollout_batch(env, policy_sampler(policy), seeds);
  return summarize_costs(total_true_costs(trajs), alpha);
}

std::vector<Trajectory> sample_trajectories(const GaussianPolicy& policy, const Environment& env, int n,
                                            std::uint64_t seed) {
  const auto seeds = batch_seeds(seed, kSampleTag, n);
  return rollout_batch(env, policy_sampler(policy), seeds);
}

std::string param_checksum(const ParamVector& p) {
  return sha256_hex({reinterpret_cast<const std::byte*>(p.data()),
                     static_cast<std::size_t>(p.size()) * sizeof(double)})
      .substr(0, 16);
}

}  // namespace rail
