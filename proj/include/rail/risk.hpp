#pragma once

#include <span>
#include <vector>

namespace rail {

struct RiskState {
  double alpha = 0.9;
  double nu = 0.0;
  double lambda_cvar = 0.0;
  double nu_learning_rate = 0.01;

  void validate() const;
};

// Per-trajectory surrogate costs R(xi | c(D)) of one sampled batch.
struct CostSample {
  std::vector<double> costs;
  std::vector<int> lengths;
  double gamma = 1.0;
};

// Order statistic of rank ceil(alpha * N), rank 1 being the minimum.
double empirical_var(std::span<const double> costs, double alpha);

// min over nu of h_alpha(costs, nu, alpha).
double empirical_cvar(std::span<const double> costs, double alpha);

// E[Z | Z >= VaR]. Agrees with empirical_cvar for continuous samples, not on
// atomic ones; kept as a diagnostic.
double conditional_tail_mean(std::span<const double> costs, double alpha);

// nu + mean((Z - nu)^+) / (1 - alpha)
double h_alpha(std::span<const double> costs, double nu, double alpha);

// d h_alpha / d nu. Samples equal to nu count in the tail.
double grad_nu(std::span<const double> costs, double nu, double alpha);

// Weight of trajectory xi in the discriminator's CVaR gradient:
// 1(R >= nu) / (1 - alpha) * sum_{t<L} gamma^t.
double disc_cvar_weight(double trajectory_cost, double nu, double alpha, double gamma, int length);

// (R - nu)^+ / (1 - alpha), multiplying sum_t grad log pi(a_t | s_t).
double policy_cvar_coeff(double trajectory_cost, double nu, double alpha);

// One batch gradient-descent step on nu.
void update_nu(RiskState& state, std::span<const double> costs);

}  // namespace rail
