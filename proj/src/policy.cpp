#include "rail/policy.hpp"

#include <cmath>
#include <numbers>

#include "rail/errors.hpp"

namespace rail {

namespace {
const double kLog2Pi = std::log(2.0 * std::numbers::pi);
}

GaussianPolicy::GaussianPolicy(int obs_dim, int action_dim, std::vector<int> hidden,
                               double log_std_init, Rng& rng)
    : mean_net_(MlpSpec{obs_dim, std::move(hidden), action_dim}, rng),
      log_std_(Vec::Constant(action_dim, std::clamp(log_std_init, kLogStdMin, kLogStdMax))) {}

GaussianPolicy::GaussianPolicy(MlpSpec mean_spec, double log_std_init)
    : mean_net_(std::move(mean_spec)),
      log_std_(Vec::Constant(mean_net_.spec().output_dim,
                             std::clamp(log_std_init, kLogStdMin, kLogStdMax))) {}

ParamVector GaussianPolicy::params() const {
  ParamVector p(static_cast<Eigen::Index>(param_count()));
  p << mean_net_.params(), log_std_;
  return p;
}

void GaussianPolicy::set_params(const ParamVector& p) {
  require_shape(static_cast<std::size_t>(p.size()) == param_count(),
                "GaussianPolicy::set_params: length mismatch");
  const auto n = static_cast<Eigen::Index>(mean_net_.param_count());
  mean_net_.set_params(p.head(n));
  log_std_ = p.tail(log_std_.size()).cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

Vec GaussianPolicy::mean(const Vec& obs) const {
  return mean_net_.forward(obs);
}

Mat GaussianPolicy::mean_batch(const Mat& obs) const { return mean_net_.forward_batch(obs); }

Vec GaussianPolicy::sample_action(const Vec& obs, Rng& rng) const {
  Vec mu = mean(obs);
  if (!mu.allFinite()) throw DivergenceError("policy: non-finite action mean");
  std::normal_distribution<double> n(0.0, 1.0);
  for (Eigen::Index i = 0; i < mu.size(); ++i) mu(i) += std::exp(log_std_(i)) * n(rng);
  return mu;
}

double GaussianPolicy::log_prob(const Vec& obs, const Vec& action) const {
  require_shape(action.size() == action_dim(), "log_prob: action dim mismatch");
  const Vec mu = mean(obs);
  double lp = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double z = (action(i) - mu(i)) * std::exp(-log_std_(i));
    lp += -0.5 * z * z - log_std_(i) - 0.5 * kLog2Pi;
  }
  return lp;
}

Vec GaussianPolicy::log_prob_batch(const Mat& obs, const Mat& actions) const {
  require_shape(actions.rows() == obs.rows() && actions.cols() == action_dim(),
                "log_prob_batch: action batch shape mismatch");
  const Mat mu = mean_batch(obs);
  const Eigen::RowVectorXd inv_std = (-log_std_).array().exp().transpose();
  const Mat z = (actions - mu).array().rowwise() * inv_std.array();
  const double norm = log_std_.sum() + 0.5 * kLog2Pi * static_cast<double>(action_dim());
  return (-0.5 * z.rowwise().squaredNorm()).array() - norm;
}

ParamVector GaussianPolicy::weighted_log_prob_grad(const Mat& obs, const Mat& actions,
                                                   const Vec& weights) const {
  require_shape(actions.rows() == obs.rows() && weights.size() == obs.rows(),
                "weighted_log_prob_grad: batch shape mismatch");
  const Eigen::RowVectorXd inv_var = (-2.0 * log_std_).array().exp().transpose();
  Vec log_std_grad = Vec::Zero(log_std_.size());
  ParamVector mean_grad = mean_net_.accumulate_gradient(obs, [&](Eigen::Index first, const Mat& mu) {
    const auto rows = mu.rows();
    Mat diff = actions.middleRows(first, rows) - mu;
    Mat g = diff.array().rowwise() * inv_var.array();
    g.array().colwise() *= weights.segment(first, rows).array();
    return g;
  });
  const Mat mu = mean_batch(obs);
  const Mat z2 = ((actions - mu).array().square().rowwise() * inv_var.array()).matrix();
  // d/d log_std: -1 + z^2
  log_std_grad = ((z2.array() - 1.0).colwise() * weights.array()).colwise().sum().transpose();
  ParamVector g(static_cast<Eigen::Index>(param_count()));
  g << mean_grad, log_std_grad;
  return g;
}

double GaussianPolicy::entropy() const {
  return log_std_.sum() + 0.5 * static_cast<double>(action_dim()) * (1.0 + kLog2Pi);
}

ParamVector GaussianPolicy::entropy_grad() const {
  ParamVector g = ParamVector::Zero(static_cast<Eigen::Index>(param_count()));
  g.tail(log_std_.size()).setOnes();
  return g;
}

ParamVector GaussianPolicy::fisher_vector_product(const Mat& states, const ParamVector& v,
                                                  double damping) const {
  require_shape(static_cast<std::size_t>(v.size()) == param_count(), "fisher_vector_product: length mismatch");
  require_shape(states.rows() > 0, "fisher_vector_product: empty state batch");
  const auto n_mean = static_cast<Eigen::Index>(mean_net_.param_count());
  const double inv_n = 1.0 / static_cast<double>(states.rows());
  const Eigen::RowVectorXd inv_var = (-2.0 * log_std_).array().exp().transpose();

  // Mean block: J^T diag(1/sigma^2) J / N, via a forward-mode pass then a reverse pass.
  const ParamVector v_mean = v.head(n_mean);
  Mat jv = mean_net_.jvp_batch(states, v_mean);
  jv.array().rowwise() *= inv_var.array();
  const ParamVector mean_part = mean_net_.backward_batch(states, jv) * inv_n;

  ParamVector out(v.size());
  // log-std block: d^2 KL / d log_std^2 = 2 at the reference point; no cross terms.
  out << mean_part, 2.0 * v.tail(log_std_.size());
  return out + damping * v;
}

double kl_divergence(const GaussianPolicy& old_policy, const GaussianPolicy& new_policy, const Mat& states) {
  require_shape(old_policy.action_dim() == new_policy.action_dim() &&
                    old_policy.obs_dim() == new_policy.obs_dim(),
                "kl_divergence: policy dims differ");
  require_shape(states.rows() > 0, "kl_divergence: empty state batch");
  const Mat mu_old = old_policy.mean_batch(states);
  const Mat mu_new = new_policy.mean_batch(states);
  const Vec& ls_old = old_policy.log_std();
  const Vec& ls_new = new_policy.log_std();
  const Eigen::RowVectorXd var_old = (2.0 * ls_old).array().exp().transpose();
  const Eigen::RowVectorXd inv_2var_new = (0.5 * (-2.0 * ls_new).array().exp()).transpose();
  const double log_ratio = (ls_new - ls_old).sum();
  const double d = static_cast<double>(old_policy.action_dim());
  const Mat sq = (mu_old - mu_new).array().square().rowwise() + var_old.array();
  const Vec per_state = (sq.array().rowwise() * inv_2var_new.array()).rowwise().sum();
  return per_state.mean() + log_ratio - 0.5 * d;
}

}  // namespace rail
