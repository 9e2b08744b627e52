#include "rail/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rail {

double relative_risk(double expert_value, double agent_value) {
  if (expert_value == 0.0) throw std::domain_error("relative_risk: expert value is zero");
  return 100.0 * (expert_value - agent_value) / std::abs(expert_value);
}

double gain_reliability(double rail_relative, double gail_relative) { return rail_relative - gail_relative; }

std::vector<double> smooth_series(std::span<const double> values, int window) {
  if (window < 1 || window % 2 == 0) throw std::invalid_argument("smooth_series: window must be odd and >= 1");
  const auto n = static_cast<long>(values.size());
  const long half = window / 2;
  std::vector<double> out(values.size());
  for (long i = 0; i < n; ++i) {
    const long lo = std::max(0L, i - half);
    const long hi = std::min(n - 1, i + half);
    double s = 0.0;
    for (long j = lo; j <= hi; ++j) s += values[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

TailRiskReport make_report(std::string name, double alpha, AgentSummary expert, AgentSummary gail,
                           AgentSummary rail) {
  TailRiskReport r;
  r.name = std::move(name);
  r.alpha = alpha;
  r.gail_rel_var = relative_risk(expert.var, gail.var);
  r.rail_rel_var = relative_risk(expert.var, rail.var);
  r.gr_var = gain_reliability(r.rail_rel_var, r.gail_rel_var);
  r.gail_rel_cvar = relative_risk(expert.cvar, gail.cvar);
  r.rail_rel_cvar = relative_risk(expert.cvar, rail.cvar);
  r.gr_cvar = gain_reliability(r.rail_rel_cvar, r.gail_rel_cvar);
  r.expert = std::move(expert);
  r.gail = std::move(gail);
  r.rail = std::move(rail);
  return r;
}

Histogram histogram(std::span<const double> values, int bins) {
  if (values.empty() || bins < 1) throw std::invalid_argument("histogram: empty sample or no bins");
  Histogram h;
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  h.lo = *mn;
  h.hi = *mx;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  const double width = (h.hi - h.lo) / bins;
  for (double v : values) {
    int b = width > 0.0 ? static_cast<int>((v - h.lo) / width) : 0;
    b = std::clamp(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  h.tail_marker = mean + 2.0 * std::sqrt(ss / n);
  return h;
}

const std::vector<PublishedRow>& published_absolute() {
  static const std::vector<PublishedRow> rows{
      {"Reacher-v1", 5.88, 9.55, 7.28, 6.34, 13.25, 9.41},
      {"Hopper-v1", -3754.71, -1758.19, -3745.90, -2674.65, -1347.60, -3727.94},
      {"HalfCheetah-v1", -3431.59, -2688.34, -3150.31, -3356.67, -2220.64, -2945.76},
      {"Walker-v1", -5402.52, -5314.05, -5404.00, -2310.54, -3359.29, -3939.99},
      {"Humanoid-v1", -9839.79, -2641.14, -9252.29, -4591.43, -1298.80, -4640.42},
  };
  return rows;
}

const std::vector<PublishedDerivedRow>& published_relative() {
  static const std::vector<PublishedDerivedRow> rows{
      {"Reacher-v1", -62.41, -23.81, 38.61, -108.99, -48.42, 60.57},
      {"Hopper-v1", -53.17, -0.23, 52.94, -49.62, 39.38, 89.00},
      {"HalfCheetah-v1", -21.66, -8.20, 13.46, -33.84, -12.24, 21.60},
      {"Walker-v1", -1.64, 0.03, 1.66, 45.39, 70.52, 25.13},
      {"Humanoid-v1", -73.16, -5.97, 67.19, -71.71, 1.07, 72.78},
  };
  return rows;
}

}  // namespace rail
