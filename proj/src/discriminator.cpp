#include "rail/discriminator.hpp"

#include <algorithm>
#include <cmath>

#include "rail/errors.hpp"

namespace rail {

namespace {

double clamp_logit(double l) { return std::clamp(l, -kLogitClamp, kLogitClamp); }

// log sigmoid(l) and log(1 - sigmoid(l)) without cancellation.
double log_sigmoid(double l) { return l >= 0 ? -std::log1p(std::exp(-l)) : l - std::log1p(std::exp(l)); }
double log_one_minus_sigmoid(double l) { return log_sigmoid(-l); }

bool clamp_active(double l) { return l <= -kLogitClamp || l >= kLogitClamp; }

}  // namespace

void DiscBatch::validate() const {
  require_shape(agent_states.rows() > 0 && expert_states.rows() > 0, "DiscBatch: empty batch");
  require_shape(agent_states.rows() == agent_actions.rows() &&
                    expert_states.rows() == expert_actions.rows(),
                "DiscBatch: state/action row counts differ");
  if (!traj_offsets.empty()) {
    require_shape(traj_offsets.front() == 0 && traj_offsets.back() == agent_states.rows() &&
                      std::is_sorted(traj_offsets.begin(), traj_offsets.end()),
                  "DiscBatch: trajectory offsets do not partition the agent pairs");
  }
}

double clamped_sigmoid(double logit) { return 1.0 / (1.0 + std::exp(-clamp_logit(logit))); }

double cost_surrogate(double score) { return std::log(score); }

Discriminator::Discriminator(int obs_dim, int action_dim, std::vector<int> hidden, Rng& rng)
    : net_(MlpSpec{obs_dim + action_dim, std::move(hidden), 1}, rng),
      obs_dim_(obs_dim),
      input_mean_(Vec::Zero(obs_dim + action_dim)),
      input_std_(Vec::Ones(obs_dim + action_dim)) {}

Discriminator::Discriminator(MlpSpec spec)
    : net_(std::move(spec)),
      obs_dim_(0),
      input_mean_(Vec::Zero(net_.spec().input_dim)),
      input_std_(Vec::Ones(net_.spec().input_dim)) {}

void Discriminator::fit_normalization(const Mat& expert_states, const Mat& expert_actions, double std_floor) {
  const Mat x = [&] {
    Mat m(expert_states.rows(), expert_states.cols() + expert_actions.cols());
    m << expert_states, expert_actions;
    return m;
  }();
  require_shape(x.cols() == net_.spec().input_dim && x.rows() > 0,
                "fit_normalization: expert data shape mismatch");
  input_mean_ = x.colwise().mean().transpose();
  const Mat centered = x.rowwise() - input_mean_.transpose();
  input_std_ = (centered.array().square().colwise().sum() / static_cast<double>(x.rows()))
                   .sqrt()
                   .transpose()
                   .cwiseMax(std_floor);
}

void Discriminator::set_normalization(Vec mean, Vec stddev) {
  require_shape(mean.size() == net_.spec().input_dim && stddev.size() == mean.size(),
                "set_normalization: length mismatch");
  input_mean_ = std::move(mean);
  input_std_ = std::move(stddev);
}

Mat Discriminator::inputs(const Mat& states, const Mat& actions) const {
  require_shape(states.rows() == actions.rows() &&
                    states.cols() + actions.cols() == net_.spec().input_dim,
                "discriminator: input shape mismatch");
  Mat x(states.rows(), states.cols() + actions.cols());
  x << states, actions;
  x.rowwise() -= input_mean_.transpose();
  x.array().rowwise() /= input_std_.transpose().array();
  return x;
}

double Discriminator::score(const Vec& state, const Vec& action) const {
  return clamped_sigmoid(logits(state.transpose(), action.transpose())(0));
}

Vec Discriminator::logits(const Mat& states, const Mat& actions) const {
  return net_.forward_batch(inputs(states, actions)).col(0);
}

Vec Discriminator::score_batch(const Mat& states, const Mat& actions) const {
  return logits(states, actions).unaryExpr([](double l) { return clamped_sigmoid(l); });
}

Vec Discriminator::cost_batch(const Mat& states, const Mat& actions) const {
  return logits(states, actions).unaryExpr([](double l) { return log_sigmoid(clamp_logit(l)); });
}

ParamVector Discriminator::weighted_log_score_grad(const Mat& states, const Mat& actions,
                                                   const Vec& weights) const {
  require_shape(weights.size() == states.rows(), "weighted_log_score_grad: weight count mismatch");
  return net_.accumulate_gradient(inputs(states, actions), [&](Eigen::Index first, const Mat& out) {
    Mat g(out.rows(), 1);
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double l = out(r, 0);
      // d log sigmoid(l) / dl = 1 - sigmoid(l); zero where the clamp binds.
      g(r, 0) = clamp_active(l) ? 0.0 : weights(first + r) * (1.0 - clamped_sigmoid(l));
    }
    return g;
  });
}

double Discriminator::gail_objective(const DiscBatch& batch) const {
  batch.validate();
  const Vec la = logits(batch.agent_states, batch.agent_actions);
  const Vec le = logits(batch.expert_states, batch.expert_actions);
  const double agent = la.unaryExpr([](double l) { return log_sigmoid(clamp_logit(l)); }).mean();
  const double expert = le.unaryExpr([](double l) { return log_one_minus_sigmoid(clamp_logit(l)); }).mean();
  return agent + expert;
}

ParamVector Discriminator::gail_gradient(const DiscBatch& batch) const {
  batch.validate();
  const double inv_a = 1.0 / static_cast<double>(batch.agent_states.rows());
  const double inv_e = 1.0 / static_cast<double>(batch.expert_states.rows());
  const ParamVector agent = net_.accumulate_gradient(
      inputs(batch.agent_states, batch.agent_actions), [&](Eigen::Index, const Mat& out) {
        return Mat(out.unaryExpr([&](double l) {
          return clamp_active(l) ? 0.0 : inv_a * (1.0 - clamped_sigmoid(l));
        }));
      });
  const ParamVector expert = net_.accumulate_gradient(
      inputs(batch.expert_states, batch.expert_actions), [&](Eigen::Index, const Mat& out) {
        // d log(1 - sigmoid(l)) / dl = -sigmoid(l)
        return Mat(out.unaryExpr([&](double l) {
          return clamp_active(l) ? 0.0 : -inv_e * clamped_sigmoid(l);
        }));
      });
  ParamVector g = agent + expert;
  if (!g.allFinite()) throw DivergenceError("discriminator: non-finite gradient");
  return g;
}

}  // namespace rail
