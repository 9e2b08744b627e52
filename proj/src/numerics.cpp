#include "rail/numerics.hpp"

#include <omp.h>

#include <cmath>
#include <string>

#include "rail/errors.hpp"

namespace rail {

std::vector<int> MlpSpec::widths() const {
  std::vector<int> w;
  w.reserve(hidden_dims.size() + 2);
  w.push_back(input_dim);
  w.insert(w.end(), hidden_dims.begin(), hidden_dims.end());
  w.push_back(output_dim);
  return w;
}

std::size_t MlpSpec::param_count() const {
  const auto w = widths();
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l)
    n += static_cast<std::size_t>(w[l] + 1) * static_cast<std::size_t>(w[l + 1]);
  return n;
}

void MlpSpec::validate() const {
  for (int d : widths())
    require_shape(d >= 1, "MlpSpec: every layer width must be >= 1");
}

namespace {

struct LayerView {
  Eigen::Map<const Mat> weight;  // out x in
  Eigen::Map<const Vec> bias;
};

struct MutableLayerView {
  Eigen::Map<Mat> weight;
  Eigen::Map<Vec> bias;
};

std::vector<LayerView> layer_views(const MlpSpec& spec, const double* data) {
  const auto w = spec.widths();
  std::vector<LayerView> out;
  out.reserve(w.size() - 1);
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const int in = w[l];
    const int o = w[l + 1];
    Eigen::Map<const Mat> wm(data + offset, o, in);
    offset += static_cast<std::size_t>(o) * in;
    Eigen::Map<const Vec> bm(data + offset, o);
    offset += o;
    out.push_back({wm, bm});
  }
  return out;
}

std::vector<MutableLayerView> mutable_layer_views(const MlpSpec& spec, double* data) {
  const auto w = spec.widths();
  std::vector<MutableLayerView> out;
  out.reserve(w.size() - 1);
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const int in = w[l];
    const int o = w[l + 1];
    Eigen::Map<Mat> wm(data + offset, o, in);
    offset += static_cast<std::size_t>(o) * in;
    Eigen::Map<Vec> bm(data + offset, o);
    offset += o;
    out.push_back({wm, bm});
  }
  return out;
}

// activations[l] is the output of layer l; the input batch is not copied.
template <class Derived>
void tanh_dense(Eigen::PlainObjectBase<Derived>& m) {
  // std::tanh is scalar and slow for doubles; 1 - 2 / (exp(2x) + 1) runs on
  // Eigen's vectorized exp and is accurate to a few ulp in absolute terms.
  // Near zero the odd Taylor polynomial keeps the relative error small too.
  auto x = m.array();
  const auto x2 = x.square();
  const auto poly = x * (1.0 + x2 * (-1.0 / 3.0 + x2 * (2.0 / 15.0 - x2 * (17.0 / 315.0))));
  const auto wide = 1.0 - 2.0 / ((2.0 * x).exp() + 1.0);
  m = (x.abs() < 0.02).select(poly, wide).eval();
}

std::vector<Mat> forward_cached(const std::vector<LayerView>& layers, const Mat& inputs) {
  std::vector<Mat> acts(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Mat& prev = l == 0 ? inputs : acts[l - 1];
    Mat z = prev * layers[l].weight.transpose();
    z.rowwise() += layers[l].bias.transpose();
    if (l + 1 < layers.size()) tanh_inplace(z);
    acts[l] = std::move(z);
  }
  return acts;
}

void backward_into(const std::vector<LayerView>& layers, std::vector<MutableLayerView>& grads,
                   const Mat& inputs, const std::vector<Mat>& acts, Mat g) {
  for (std::size_t k = layers.size(); k-- > 0;) {
    const Mat& layer_in = k == 0 ? inputs : acts[k - 1];
    grads[k].weight.noalias() += g.transpose() * layer_in;
    grads[k].bias += g.colwise().sum().transpose();
    if (k > 0) {
      Mat upstream = g * layers[k].weight;
      g = upstream.cwiseProduct((1.0 - acts[k - 1].array().square()).matrix());
    }
  }
}

void check_params(const MlpSpec& spec, Eigen::Index n) {
  require_shape(static_cast<std::size_t>(n) == spec.param_count(),
                "parameter vector length " + std::to_string(n) + " does not match MlpSpec (" +
                    std::to_string(spec.param_count()) + ")");
}

}  // namespace

Vec chunked_sum(Eigen::Index rows, Eigen::Index result_size,
                const std::function<Vec(Eigen::Index, Eigen::Index)>& chunk_fn) {
  const Eigen::Index n_chunks = (rows + kChunkRows - 1) / kChunkRows;
  std::vector<Vec> partial(static_cast<std::size_t>(n_chunks));
#pragma omp parallel for schedule(static)
  for (Eigen::Index c = 0; c < n_chunks; ++c) {
    const Eigen::Index begin = c * kChunkRows;
    const Eigen::Index end = std::min(rows, begin + kChunkRows);
    partial[static_cast<std::size_t>(c)] = chunk_fn(begin, end);
  }
  Vec total = Vec::Zero(result_size);
  for (const auto& p : partial) total += p;
  return total;
}

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  params_ = ParamVector::Zero(static_cast<Eigen::Index>(spec_.param_count()));
}

Mlp::Mlp(MlpSpec spec, Rng& rng) : Mlp(std::move(spec)) {
  auto views = mutable_layer_views(spec_, params_.data());
  for (auto& layer : views) {
    const double fan_in = static_cast<double>(layer.weight.cols());
    const double fan_out = static_cast<double>(layer.weight.rows());
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = u(rng);
  }
}

void Mlp::set_params(const ParamVector& p) {
  check_params(spec_, p.size());
  params_ = p;
}

Vec Mlp::forward(std::span<const double> input) const {
  require_shape(static_cast<int>(input.size()) == spec_.input_dim, "forward: input length mismatch");
  const auto layers = layer_views(spec_, params_.data());
  Vec act = Eigen::Map<const Vec>(input.data(), static_cast<Eigen::Index>(input.size()));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Vec z = layers[l].weight * act + layers[l].bias;
    if (l + 1 < layers.size()) tanh_inplace(z);
    act = std::move(z);
  }
  return act;
}

Mat Mlp::forward_batch(const Mat& inputs) const {
  require_shape(inputs.cols() == spec_.input_dim, "forward_batch: input width mismatch");
  if (inputs.rows() == 0) return Mat(0, spec_.output_dim);
  const auto layers = layer_views(spec_, params_.data());
  auto acts = forward_cached(layers, inputs);
  return std::move(acts.back());
}

ParamVector Mlp::accumulate_gradient(const Mat& inputs, const OutputGradFn& output_grad_fn) const {
  require_shape(inputs.cols() == spec_.input_dim, "accumulate_gradient: input width mismatch");
  const auto layers = layer_views(spec_, params_.data());
  const auto n = params_.size();
  return chunked_sum(inputs.rows(), n, [&](Eigen::Index begin, Eigen::Index end) {
    const Mat chunk = inputs.middleRows(begin, end - begin);
    const auto acts = forward_cached(layers, chunk);
    Mat g = output_grad_fn(begin, acts.back());
    require_shape(g.rows() == chunk.rows() && g.cols() == spec_.output_dim,
                  "accumulate_gradient: output gradient shape mismatch");
    Vec grad = Vec::Zero(n);
    auto views = mutable_layer_views(spec_, grad.data());
    backward_into(layers, views, chunk, acts, std::move(g));
    return grad;
  });
}

ParamVector Mlp::backward_batch(const Mat& inputs, const Mat& output_grads) const {
  require_shape(output_grads.rows() == inputs.rows() && output_grads.cols() == spec_.output_dim,
                "backward_batch: output gradient shape mismatch");
  return accumulate_gradient(inputs, [&](Eigen::Index first, const Mat& out) -> Mat {
    return output_grads.middleRows(first, out.rows());
  });
}

Mat Mlp::jvp_batch(const Mat& inputs, const ParamVector& v) const {
  require_shape(inputs.cols() == spec_.input_dim, "jvp_batch: input width mismatch");
  check_params(spec_, v.size());
  const auto layers = layer_views(spec_, params_.data());
  const auto dirs = layer_views(spec_, v.data());
  Mat result(inputs.rows(), spec_.output_dim);
  const Eigen::Index n_chunks = (inputs.rows() + kChunkRows - 1) / kChunkRows;
#pragma omp parallel for schedule(static)
  for (Eigen::Index c = 0; c < n_chunks; ++c) {
    const Eigen::Index begin = c * kChunkRows;
    const Eigen::Index rows = std::min(inputs.rows(), begin + kChunkRows) - begin;
    const Mat chunk = inputs.middleRows(begin, rows);
    const auto acts = forward_cached(layers, chunk);
    Mat tangent;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const Mat& prev = l == 0 ? chunk : acts[l - 1];
      Mat dz = prev * dirs[l].weight.transpose();
      if (l > 0) dz.noalias() += tangent * layers[l].weight.transpose();
      dz.rowwise() += dirs[l].bias.transpose();
      if (l + 1 < layers.size())
        tangent = dz.cwiseProduct((1.0 - acts[l].array().square()).matrix());
      else
        tangent = std::move(dz);
    }
    result.middleRows(begin, rows) = tangent;
  }
  return result;
}

void tanh_inplace(Mat& m) { tanh_dense(m); }
void tanh_inplace(Vec& v) { tanh_dense(v); }

namespace reference {

std::vector<double> mlp_forward(const MlpSpec& spec, std::span<const double> params,
                                std::span<const double> input) {
  const auto w = spec.widths();
  std::vector<double> act(input.begin(), input.end());
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const int in = w[l];
    const int out = w[l + 1];
    const double* weight = params.data() + offset;
    const double* bias = weight + static_cast<std::size_t>(in) * out;
    std::vector<double> next(out);
    for (int o = 0; o < out; ++o) {
      double z = bias[o];
      for (int i = 0; i < in; ++i) z += weight[static_cast<std::size_t>(o) * in + i] * act[i];
      next[o] = l + 2 < w.size() ? std::tanh(z) : z;
    }
    act = std::move(next);
    offset += static_cast<std::size_t>(in + 1) * out;
  }
  return act;
}

std::vector<double> mlp_backward(const MlpSpec& spec, std::span<const double> params,
                                 std::span<const double> input,
                                 std::span<const double> output_grad) {
  const auto w = spec.widths();
  const std::size_t n_layers = w.size() - 1;
  std::vector<std::size_t> offsets(n_layers);
  std::vector<std::vector<double>> acts(n_layers + 1);
  acts[0].assign(input.begin(), input.end());
  std::size_t offset = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    offsets[l] = offset;
    const int in = w[l];
    const int out = w[l + 1];
    const double* weight = params.data() + offset;
    const double* bias = weight + static_cast<std::size_t>(in) * out;
    acts[l + 1].resize(out);
    for (int o = 0; o < out; ++o) {
      double z = bias[o];
      for (int i = 0; i < in; ++i) z += weight[static_cast<std::size_t>(o) * in + i] * acts[l][i];
      acts[l + 1][o] = l + 1 < n_layers ? std::tanh(z) : z;
    }
    offset += static_cast<std::size_t>(in + 1) * out;
  }

  std::vector<double> grad(params.size(), 0.0);
  std::vector<double> g(output_grad.begin(), output_grad.end());
  for (std::size_t l = n_layers; l-- > 0;) {
    const int in = w[l];
    const int out = w[l + 1];
    const double* weight = params.data() + offsets[l];
    double* gw = grad.data() + offsets[l];
    double* gb = gw + static_cast<std::size_t>(in) * out;
    for (int o = 0; o < out; ++o) {
      for (int i = 0; i < in; ++i) gw[static_cast<std::size_t>(o) * in + i] = g[o] * acts[l][i];
      gb[o] = g[o];
    }
    if (l == 0) break;
    std::vector<double> prev(in, 0.0);
    for (int i = 0; i < in; ++i) {
      double s = 0.0;
      for (int o = 0; o < out; ++o) s += g[o] * weight[static_cast<std::size_t>(o) * in + i];
      prev[i] = s * (1.0 - acts[l][i] * acts[l][i]);
    }
    g = std::move(prev);
  }
  return grad;
}

}  // namespace reference

Vec mlp_forward(const MlpSpec& spec, const ParamVector& params, std::span<const double> input) {
  check_params(spec, params.size());
  require_shape(static_cast<int>(input.size()) == spec.input_dim,
                "mlp_forward: input length " + std::to_string(input.size()) + " != " +
                    std::to_string(spec.input_dim));
  const auto out = reference::mlp_forward(spec, {params.data(), static_cast<std::size_t>(params.size())}, input);
  return Eigen::Map<const Vec>(out.data(), static_cast<Eigen::Index>(out.size()));
}

ParamVector mlp_backward(const MlpSpec& spec, const ParamVector& params,
                         std::span<const double> input, std::span<const double> output_grad) {
  check_params(spec, params.size());
  require_shape(static_cast<int>(input.size()) == spec.input_dim, "mlp_backward: input length mismatch");
  require_shape(static_cast<int>(output_grad.size()) == spec.output_dim,
                "mlp_backward: output gradient length mismatch");
  const auto g = reference::mlp_backward(
      spec, {params.data(), static_cast<std::size_t>(params.size())}, input, output_grad);
  return Eigen::Map<const Vec>(g.data(), static_cast<Eigen::Index>(g.size()));
}

AdamState AdamState::zeros(std::size_t n, double lr) {
  AdamState s;
  s.first_moment = Vec::Zero(static_cast<Eigen::Index>(n));
  s.second_moment = Vec::Zero(static_cast<Eigen::Index>(n));
  s.learning_rate = lr;
  return s;
}

void adam_step(AdamState& state, ParamVector& params, const ParamVector& grad, Direction dir) {
  require_shape(params.size() == grad.size() && state.first_moment.size() == grad.size() &&
                    state.second_moment.size() == grad.size(),
                "adam_step: vector lengths differ");
  if (!all_finite(grad)) throw DivergenceError("adam_step: non-finite gradient");
  state.step_count += 1;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad;
  state.second_moment =
      state.beta2 * state.second_moment + (1.0 - state.beta2) * grad.cwiseProduct(grad);
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double sign = dir == Direction::Ascent ? 1.0 : -1.0;
  params.array() += sign * state.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

bool all_finite(const Vec& v) { return v.allFinite(); }
bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace rail
