#pragma once

#include <functional>
#include <vector>

#include "rail/discriminator.hpp"
#include "rail/envs.hpp"
#include "rail/numerics.hpp"
#include "rail/policy.hpp"

namespace rail {

struct TrpoConfig {
  double max_kl = 0.01;
  int cg_iterations = 10;
  double cg_damping = 0.1;
  int backtrack_steps = 10;
  double backtrack_ratio = 0.8;

  void validate() const;
};

// Solves A x = b for symmetric positive-definite A given as a matvec.
// Stops early once the residual norm falls below residual_tol * |b|.
Vec conjugate_gradient(const std::function<Vec(const Vec&)>& matvec, const Vec& b, int iterations,
                       double residual_tol = 1e-12);

struct StepStats {
  bool accepted = false;
  double loss_before = 0.0;
  double loss_after = 0.0;
  double kl = 0.0;
  int backtracks = 0;
};

// A trust-region subproblem around the current parameters: the loss to
// decrease, the divergence from the current point, and the curvature of that
// divergence as a matvec (damping included).
struct TrustRegionProblem {
  std::function<double(const Vec&)> loss;
  std::function<double(const Vec&)> divergence;
  std::function<Vec(const Vec&)> curvature;
};

// Natural-gradient step with backtracking. On acceptance `params` is
// replaced; when every candidate fails they are left untouched.
StepStats natural_step(Vec& params, const Vec& loss_grad, const TrustRegionProblem& problem,
                       const TrpoConfig& config);

// Importance-weighted surrogate for the policy:
//   L(theta) = mean_j [pi_theta(a_j|s_j) / pi_old(a_j|s_j)] * weights_j - entropy_coef * H(pi_theta)
struct PolicyBatch {
  Mat states;
  Mat actions;
  Vec weights;
  Vec old_log_prob;
  double entropy_coef = 0.0;
};

double surrogate_loss(const GaussianPolicy& policy, const PolicyBatch& batch);
ParamVector surrogate_grad(const GaussianPolicy& policy, const PolicyBatch& batch);

StepStats natural_step(GaussianPolicy& policy, const PolicyBatch& batch, const TrpoConfig& config);

// Sum_{k>=t} gamma^(k-t) cost_k for every t.
Vec discounted_to_go(const Vec& per_step_costs, double gamma);

// Single-sample Q estimates with c = log D, flattened over all pairs of all
// trajectories in order.
Vec estimate_q(const std::vector<Trajectory>& trajectories, const Discriminator& disc, double gamma);

struct BaselineConfig {
  std::vector<int> hidden{100, 100};
  int epochs = 5;
  int minibatch = 128;
  double learning_rate = 1e-3;
};

// State-value estimate used to center the policy-gradient weights. The net
// sees the observation plus the fraction of the horizon already elapsed and
// predicts standardized returns.
class ValueBaseline {
 public:
  ValueBaseline() = default;
  ValueBaseline(int obs_dim, BaselineConfig config, Rng& rng);

  const Mlp& net() const { return net_; }
  void set_params(const ParamVector& p) { net_.set_params(p); }
  double target_mean() const { return target_mean_; }
  double target_std() const { return target_std_; }
  void set_target_stats(double mean, double stddev);

  Vec predict(const Mat& features) const;
  void fit(const Mat& features, const Vec& targets, Rng& rng);

 private:
  Mlp net_;
  BaselineConfig config_;
  AdamState adam_;
  double target_mean_ = 0.0;
  double target_std_ = 1.0;
};

// Rows of (state, t / horizon) for every pair, in trajectory order.
Mat baseline_features(const std::vector<Trajectory>& trajectories, int horizon);

}  // namespace rail
