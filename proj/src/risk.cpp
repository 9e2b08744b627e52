#include "rail/risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rail/errors.hpp"
#include "rail/envs.hpp"

namespace rail {

namespace {

void require_sample(std::span<const double> costs, const char* what) {
  if (costs.empty()) throw ShapeError(std::string(what) + ": empty sample");
}

void require_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in [0, 1)");
}

std::size_t var_rank(std::size_t n, double alpha) {
  // 1-based rank; a tiny tolerance keeps alpha * N = 9.000000000000002 at 9.
  const double x = alpha * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
  return std::clamp<std::size_t>(k, 1, n);
}

std::vector<double> sorted_copy(std::span<const double> costs) {
  std::vector<double> s(costs.begin(), costs.end());
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace

void RiskState::validate() const {
  require_alpha(alpha);
  if (!(lambda_cvar >= 0.0)) throw ConfigError("risk.lambda_cvar must be >= 0");
  if (!(nu_learning_rate >= 0.0)) throw ConfigError("risk.nu_lr must be >= 0");
}

double empirical_var(std::span<const double> costs, double alpha) {
  require_sample(costs, "empirical_var");
  require_alpha(alpha);
  const auto s = sorted_copy(costs);
  return s[var_rank(s.size(), alpha) - 1];
}

double empirical_cvar(std::span<const double> costs, double alpha) {
  require_sample(costs, "empirical_cvar");
  require_alpha(alpha);
  const auto s = sorted_copy(costs);
  // h_alpha is convex and piecewise linear with kinks at the sample values;
  // its minimum sits at the VaR order statistic. When alpha * N is integral
  // the next order statistic is also a minimizer, so both ends of the flat
  // piece (and the one below, for rounding in the rank) are evaluated.
  const std::size_t k = var_rank(s.size(), alpha) - 1;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = k == 0 ? 0 : k - 1; j <= std::min(k + 1, s.size() - 1); ++j)
    best = std::min(best, h_alpha(costs, s[j], alpha));
  return best;
}

double conditional_tail_mean(std::span<const double> costs, double alpha) {
  const double var = empirical_var(costs, alpha);
  double sum = 0.0;
  int n = 0;
  for (double c : costs) {
    if (c >= var) {
      sum += c;
      ++n;
    }
  }
  return sum / n;
}

double h_alpha(std::span<const double> costs, double nu, double alpha) {
  require_sample(costs, "h_alpha");
  require_alpha(alpha);
  double excess = 0.0;
  for (double c : costs) excess += std::max(c - nu, 0.0);
  return nu + excess / (static_cast<double>(costs.size()) * (1.0 - alpha));
}

double grad_nu(std::span<const double> costs, double nu, double alpha) {
  require_sample(costs, "grad_nu");
  require_alpha(alpha);
  const auto tail = std::count_if(costs.begin(), costs.end(), [nu](double c) { return c >= nu; });
  return 1.0 - static_cast<double>(tail) / (static_cast<double>(costs.size()) * (1.0 - alpha));
}

double disc_cvar_weight(double trajectory_cost, double nu, double alpha, double gamma, int length) {
  require_alpha(alpha);
  if (length < 1) throw ShapeError("disc_cvar_weight: length must be >= 1");
  if (trajectory_cost < nu) return 0.0;
  return geometric_factor(gamma, length) / (1.0 - alpha);
}

double policy_cvar_coeff(double trajectory_cost, double nu, double alpha) {
  require_alpha(alpha);
  return std::max(trajectory_cost - nu, 0.0) / (1.0 - alpha);
}

void update_nu(RiskState& state, std::span<const double> costs) {
  state.nu -= state.nu_learning_rate * grad_nu(costs, state.nu, state.alpha);
}

}  // namespace rail
