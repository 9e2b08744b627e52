#pragma once

#include <span>
#include <vector>

#include "rail/numerics.hpp"

namespace rail {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

// Diagonal Gaussian over actions: the mean comes from a tanh MLP, the
// log-standard-deviation is a free state-independent vector. The flat
// parameter vector is mean-net params followed by log_std.
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(int obs_dim, int action_dim, std::vector<int> hidden, double log_std_init, Rng& rng);
  GaussianPolicy(MlpSpec mean_spec, double log_std_init);

  int obs_dim() const { return mean_net_.spec().input_dim; }
  int action_dim() const { return mean_net_.spec().output_dim; }
  const Mlp& mean_net() const { return mean_net_; }
  const Vec& log_std() const { return log_std_; }
  std::size_t param_count() const { return mean_net_.param_count() + static_cast<std::size_t>(log_std_.size()); }

  ParamVector params() const;
  // log_std entries are clamped into [kLogStdMin, kLogStdMax].
  void set_params(const ParamVector& p);

  Vec mean(const Vec& obs) const;
  Mat mean_batch(const Mat& obs) const;
  Vec sample_action(const Vec& obs, Rng& rng) const;

  double log_prob(const Vec& obs, const Vec& action) const;
  Vec log_prob_batch(const Mat& obs, const Mat& actions) const;
  // Sum_i weights_i * grad log pi(a_i | s_i).
  ParamVector weighted_log_prob_grad(const Mat& obs, const Mat& actions, const Vec& weights) const;

  double entropy() const;
  ParamVector entropy_grad() const;

  // (H + damping I) v, H the Hessian at this policy of the mean KL from this
  // policy to a perturbed one over `states`.
  ParamVector fisher_vector_product(const Mat& states, const ParamVector& v, double damping) const;

 private:
  Mlp mean_net_;
  Vec log_std_;
};

// Mean over states of KL(old(.|s) || new(.|s)).
double kl_divergence(const GaussianPolicy& old_policy, const GaussianPolicy& new_policy, const Mat& states);

}  // namespace rail
