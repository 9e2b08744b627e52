#pragma once

#include <span>
#include <string>
#include <vector>

namespace rail {

// 100 * (expert - agent) / |expert|. Positive means less tail risk than the
// expert. Throws std::domain_error when expert_value == 0.
double relative_risk(double expert_value, double agent_value);

// rail_relative - gail_relative
double gain_reliability(double rail_relative, double gail_relative);

// Centered moving average; near the ends the window is truncated to the
// available neighbours. Throws std::invalid_argument for even windows.
std::vector<double> smooth_series(std::span<const double> values, int window);

struct AgentSummary {
  std::string label;
  double mean = 0.0;
  double stddev = 0.0;
  double var = 0.0;
  double cvar = 0.0;
  int n_trajectories = 0;
};

struct TailRiskReport {
  std::string name;
  double alpha = 0.9;
  AgentSummary expert, gail, rail;
  double gail_rel_var = 0.0, rail_rel_var = 0.0, gr_var = 0.0;
  double gail_rel_cvar = 0.0, rail_rel_cvar = 0.0, gr_cvar = 0.0;
};

TailRiskReport make_report(std::string name, double alpha, AgentSummary expert, AgentSummary gail,
                           AgentSummary rail);

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<int> counts;
  // mean + 2 sigma of the pooled sample
  double tail_marker = 0.0;
};

// Equal-width bins over [min, max] of `values`.
Histogram histogram(std::span<const double> values, int bins = 40);

struct PublishedRow {
  std::string environment;
  double var_expert, var_gail, var_rail;
  double cvar_expert, cvar_gail, cvar_rail;
};

// Published VaR_0.9 / CVaR_0.9 absolutes of the five MuJoCo tasks.
const std::vector<PublishedRow>& published_absolute();

struct PublishedDerivedRow {
  std::string environment;
  double gail_rel_var, rail_rel_var, gr_var;
  double gail_rel_cvar, rail_rel_cvar, gr_cvar;
};

// The printed relative-risk and gain-in-reliability values for the same tasks.
const std::vector<PublishedDerivedRow>& published_relative();

}  // namespace rail
