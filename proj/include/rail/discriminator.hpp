#pragma once

#include <vector>

#include "rail/numerics.hpp"

namespace rail {

inline constexpr double kLogitClamp = 10.0;

// Agent and expert (state, action) pairs for one discriminator update.
// traj_offsets partitions agent rows by sampled trajectory: trajectory i owns
// rows [traj_offsets[i], traj_offsets[i+1]).
struct DiscBatch {
  Mat agent_states, agent_actions;
  Mat expert_states, expert_actions;
  std::vector<Eigen::Index> traj_offsets;

  Eigen::Index num_trajectories() const {
    return traj_offsets.empty() ? 0 : static_cast<Eigen::Index>(traj_offsets.size()) - 1;
  }
  void validate() const;
};

// D_w(s, a) in (0, 1): probability that a pair came from the agent rather
// than the expert. Inputs are standardized with statistics frozen from the
// expert data.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(int obs_dim, int action_dim, std::vector<int> hidden, Rng& rng);
  explicit Discriminator(MlpSpec spec);

  const Mlp& net() const { return net_; }
  const ParamVector& params() const { return net_.params(); }
  void set_params(const ParamVector& p) { net_.set_params(p); }
  int obs_dim() const { return obs_dim_; }

  void fit_normalization(const Mat& expert_states, const Mat& expert_actions, double std_floor);
  void set_normalization(Vec mean, Vec stddev);
  const Vec& input_mean() const { return input_mean_; }
  const Vec& input_std() const { return input_std_; }

  Mat inputs(const Mat& states, const Mat& actions) const;

  double score(const Vec& state, const Vec& action) const;
  Vec logits(const Mat& states, const Mat& actions) const;
  Vec score_batch(const Mat& states, const Mat& actions) const;
  // Per-pair surrogate cost c(D) = log D.
  Vec cost_batch(const Mat& states, const Mat& actions) const;

  // Sum_j weights_j * grad_w log D(s_j, a_j).
  ParamVector weighted_log_score_grad(const Mat& states, const Mat& actions, const Vec& weights) const;

  // E_agent[log D] + E_expert[log(1 - D)].
  double gail_objective(const DiscBatch& batch) const;
  // Gradient of gail_objective w.r.t. w (the ascent direction).
  ParamVector gail_gradient(const DiscBatch& batch) const;

 private:
  Mlp net_;
  int obs_dim_ = 0;
  Vec input_mean_;
  Vec input_std_;
};

double clamped_sigmoid(double logit);
// c(D) = log D: strictly increasing, hence order-preserving.
double cost_surrogate(double score);

}  // namespace rail
