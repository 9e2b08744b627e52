#include "rail/trpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rail/errors.hpp"

namespace rail {

void TrpoConfig::validate() const {
  if (!(max_kl > 0.0)) throw ConfigError("trpo.max_kl must be > 0");
  if (cg_iterations < 1) throw ConfigError("trpo.cg_iterations must be >= 1");
  if (!(cg_damping >= 0.0)) throw ConfigError("trpo.cg_damping must be >= 0");
  if (backtrack_steps < 1) throw ConfigError("trpo.backtrack_steps must be >= 1");
  if (!(backtrack_ratio > 0.0 && backtrack_ratio < 1.0))
    throw ConfigError("trpo.backtrack_ratio must lie in (0, 1)");
}

Vec conjugate_gradient(const std::function<Vec(const Vec&)>& matvec, const Vec& b, int iterations,
                       double residual_tol) {
  Vec x = Vec::Zero(b.size());
  Vec r = b;
  Vec p = r;
  double rr = r.squaredNorm();
  const double stop = residual_tol * residual_tol * std::max(rr, 1e-300);
  for (int i = 0; i < iterations && rr > stop; ++i) {
    const Vec ap = matvec(p);
    const double pap = p.dot(ap);
    if (!std::isfinite(pap) || pap <= 0.0) {
      if (!std::isfinite(pap)) throw DivergenceError("conjugate_gradient: non-finite curvature");
      break;
    }
    const double step = rr / pap;
    x += step * p;
    r -= step * ap;
    const double rr_next = r.squaredNorm();
    if (!x.allFinite() || !std::isfinite(rr_next))
      throw DivergenceError("conjugate_gradient: non-finite iterate");
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  return x;
}

StepStats natural_step(Vec& params, const Vec& loss_grad, const TrustRegionProblem& problem,
                       const TrpoConfig& config) {
  StepStats stats;
  stats.loss_before = problem.loss(params);
  stats.loss_after = stats.loss_before;
  if (!loss_grad.allFinite() || loss_grad.isZero(0.0)) return stats;

  const Vec direction = conjugate_gradient(problem.curvature, -loss_grad, config.cg_iterations);
  const double curvature = direction.dot(problem.curvature(direction));
  if (!std::isfinite(curvature) || curvature <= 0.0) return stats;
  const Vec full_step = std::sqrt(2.0 * config.max_kl / curvature) * direction;
  if (!full_step.allFinite()) return stats;

  double fraction = 1.0;
  for (int k = 0; k < config.backtrack_steps; ++k, fraction *= config.backtrack_ratio) {
    const Vec candidate = params + fraction * full_step;
    const double loss = problem.loss(candidate);
    const double kl = problem.divergence(candidate);
    if (std::isfinite(loss) && std::isfinite(kl) && loss < stats.loss_before && kl <= config.max_kl) {
      params = candidate;
      stats.accepted = true;
      stats.loss_after = loss;
      stats.kl = kl;
      stats.backtracks = k;
      return stats;
    }
  }
  stats.backtracks = config.backtrack_steps;
  return stats;
}

double surrogate_loss(const GaussianPolicy& policy, const PolicyBatch& batch) {
  const Vec lp = policy.log_prob_batch(batch.states, batch.actions);
  const Vec ratio = (lp - batch.old_log_prob).array().exp();
  return ratio.dot(batch.weights) / static_cast<double>(batch.weights.size()) -
         batch.entropy_coef * policy.entropy();
}

ParamVector surrogate_grad(const GaussianPolicy& policy, const PolicyBatch& batch) {
  const Vec lp = policy.log_prob_batch(batch.states, batch.actions);
  const Vec ratio = (lp - batch.old_log_prob).array().exp();
  const Vec w = ratio.cwiseProduct(batch.weights) / static_cast<double>(batch.weights.size());
  return policy.weighted_log_prob_grad(batch.states, batch.actions, w) -
         batch.entropy_coef * policy.entropy_grad();
}

StepStats natural_step(GaussianPolicy& policy, const PolicyBatch& batch, const TrpoConfig& config) {
  require_shape(batch.states.rows() > 0 && batch.weights.size() == batch.states.rows() &&
                    batch.old_log_prob.size() == batch.states.rows(),
                "natural_step: malformed policy batch");
  const GaussianPolicy old_policy = policy;
  GaussianPolicy probe = policy;
  auto at = [&](const Vec& p) -> const GaussianPolicy& {
    probe.set_params(p);
    return probe;
  };
  TrustRegionProblem problem{
      [&](const Vec& p) { return surrogate_loss(at(p), batch); },
      [&](const Vec& p) { return kl_divergence(old_policy, at(p), batch.states); },
      [&](const Vec& v) { return old_policy.fisher_vector_product(batch.states, v, config.cg_damping); },
  };
  const ParamVector grad = surrogate_grad(policy, batch);
  if (!grad.allFinite()) return StepStats{false, surrogate_loss(policy, batch), surrogate_loss(policy, batch), 0.0, 0};
  Vec params = policy.params();
  StepStats stats = natural_step(params, grad, problem, config);
  if (stats.accepted) policy.set_params(params);
  return stats;
}

Vec discounted_to_go(const Vec& per_step_costs, double gamma) {
  Vec q(per_step_costs.size());
  double acc = 0.0;
  for (Eigen::Index t = per_step_costs.size(); t-- > 0;) {
    acc = per_step_costs(t) + gamma * acc;
    q(t) = acc;
  }
  return q;
}

namespace {

void stack_pairs(const std::vector<Trajectory>& trajectories, Mat& states, Mat& actions) {
  Eigen::Index n = 0;
  for (const auto& t : trajectories) n += t.length();
  if (trajectories.empty() || n == 0) {
    states.resize(0, 0);
    actions.resize(0, 0);
    return;
  }
  const auto& first = trajectories.front().transitions.front();
  states.resize(n, first.state.size());
  actions.resize(n, first.action.size());
  Eigen::Index row = 0;
  for (const auto& t : trajectories)
    for (const auto& tr : t.transitions) {
      states.row(row) = tr.state.transpose();
      actions.row(row) = tr.action.transpose();
      ++row;
    }
}

}  // namespace

Vec estimate_q(const std::vector<Trajectory>& trajectories, const Discriminator& disc, double gamma) {
  Mat states, actions;
  stack_pairs(trajectories, states, actions);
  if (states.rows() == 0) return Vec();
  const Vec cost = disc.cost_batch(states, actions);
  Vec q(cost.size());
  Eigen::Index offset = 0;
  for (const auto& t : trajectories) {
    q.segment(offset, t.length()) = discounted_to_go(cost.segment(offset, t.length()), gamma);
    offset += t.length();
  }
  return q;
}

ValueBaseline::ValueBaseline(int obs_dim, BaselineConfig config, Rng& rng)
    : net_(MlpSpec{obs_dim + 1, config.hidden, 1}, rng), config_(std::move(config)) {
  adam_ = AdamState::zeros(net_.param_count(), config_.learning_rate);
}

void ValueBaseline::set_target_stats(double mean, double stddev) {
  target_mean_ = mean;
  target_std_ = stddev;
}

Vec ValueBaseline::predict(const Mat& features) const {
  return (net_.forward_batch(features).col(0).array() * target_std_ + target_mean_).matrix();
}

void ValueBaseline::fit(const Mat& features, const Vec& targets, Rng& rng) {
  require_shape(features.rows() == targets.size() && features.rows() > 0, "ValueBaseline::fit: shape mismatch");
  target_mean_ = targets.mean();
  target_std_ = std::max(std::sqrt((targets.array() - target_mean_).square().mean()), 1e-8);
  const Vec y = (targets.array() - target_mean_) / target_std_;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(features.rows()));
  std::iota(order.begin(), order.end(), 0);
  const Eigen::Index mb = std::max(1, config_.minibatch);
  ParamVector params = net_.params();
  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(mb)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(mb));
      const auto rows = static_cast<Eigen::Index>(end - begin);
      Mat x(rows, features.cols());
      Vec yb(rows);
      for (Eigen::Index i = 0; i < rows; ++i) {
        x.row(i) = features.row(order[begin + static_cast<std::size_t>(i)]);
        yb(i) = y(order[begin + static_cast<std::size_t>(i)]);
      }
      // d/dparams of mean squared error
      const ParamVector grad = net_.accumulate_gradient(x, [&](Eigen::Index first, const Mat& out) {
        Mat g(out.rows(), 1);
        for (Eigen::Index r = 0; r < out.rows(); ++r)
          g(r, 0) = 2.0 * (out(r, 0) - yb(first + r)) / static_cast<double>(rows);
        return g;
      });
      adam_step(adam_, params, grad, Direction::Descent);
      net_.set_params(params);
    }
  }
}

Mat baseline_features(const std::vector<Trajectory>& trajectories, int horizon) {
  Eigen::Index n = 0;
  for (const auto& t : trajectories) n += t.length();
  if (n == 0) return Mat();
  const auto obs_dim = trajectories.front().transitions.front().state.size();
  Mat f(n, obs_dim + 1);
  Eigen::Index row = 0;
  for (const auto& t : trajectories)
    for (int k = 0; k < t.length(); ++k) {
      f.row(row).head(obs_dim) = t.transitions[static_cast<std::size_t>(k)].state.transpose();
      f(row, obs_dim) = static_cast<double>(k) / static_cast<double>(horizon);
      ++row;
    }
  return f;
}

}  // namespace rail
