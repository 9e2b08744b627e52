#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace rail {

using Vec = Eigen::VectorXd;
// Batches are stored one sample per row.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ParamVector = Eigen::VectorXd;
using Rng = std::mt19937_64;

struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden_dims{100, 100};
  int output_dim = 1;

  // Layer widths including input and output.
  std::vector<int> widths() const;
  std::size_t param_count() const;
  void validate() const;
  bool operator==(const MlpSpec&) const = default;
};

// tanh MLP with an affine output layer. Parameters live in one flat vector,
// layer-major: row-major weights (out x in) followed by biases.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpSpec spec);
  Mlp(MlpSpec spec, Rng& rng);  // Glorot-uniform weights, zero biases

  const MlpSpec& spec() const { return spec_; }
  const ParamVector& params() const { return params_; }
  void set_params(const ParamVector& p);
  std::size_t param_count() const { return static_cast<std::size_t>(params_.size()); }

  Vec forward(std::span<const double> input) const;
  Vec forward(const Vec& input) const { return forward(std::span<const double>(input.data(), static_cast<std::size_t>(input.size()))); }
  Mat forward_batch(const Mat& inputs) const;

  // Sum over rows of d(output_grad . output)/d(params). `output_grad_fn`
  // receives (first_row, outputs_of_chunk) and returns the chunk's output
  // gradients, so callers can make the gradient depend on the forward pass.
  using OutputGradFn = std::function<Mat(Eigen::Index first_row, const Mat& outputs)>;
  ParamVector accumulate_gradient(const Mat& inputs, const OutputGradFn& output_grad_fn) const;
  ParamVector backward_batch(const Mat& inputs, const Mat& output_grads) const;

  // Directional derivative of every output row along parameter direction v.
  Mat jvp_batch(const Mat& inputs, const ParamVector& v) const;

 private:
  MlpSpec spec_;
  ParamVector params_;
};

// Elementwise tanh used by the batched kernels (vectorized; absolute error
// within a few 1e-16 of std::tanh).
void tanh_inplace(Mat& m);
void tanh_inplace(Vec& v);

// Rows per work item in the chunked kernels. Fixed so that the reduction
// order does not depend on the thread count.
inline constexpr Eigen::Index kChunkRows = 256;

// Deterministic parallel sum of per-chunk vectors: chunks run under OpenMP,
// partial results are added in chunk order.
Vec chunked_sum(Eigen::Index rows, Eigen::Index result_size,
                const std::function<Vec(Eigen::Index begin, Eigen::Index end)>& chunk_fn);

// Per-sample loops with no Eigen products; kept as the oracle for the batched
// kernels and as the benchmark baseline.
namespace reference {
std::vector<double> mlp_forward(const MlpSpec& spec, std::span<const double> params,
                                std::span<const double> input);
std::vector<double> mlp_backward(const MlpSpec& spec, std::span<const double> params,
                                 std::span<const double> input,
                                 std::span<const double> output_grad);
}  // namespace reference

Vec mlp_forward(const MlpSpec& spec, const ParamVector& params, std::span<const double> input);
ParamVector mlp_backward(const MlpSpec& spec, const ParamVector& params,
                         std::span<const double> input, std::span<const double> output_grad);
inline Vec mlp_forward(const MlpSpec& spec, const ParamVector& params, const Vec& input) {
  return mlp_forward(spec, params, std::span<const double>(input.data(), static_cast<std::size_t>(input.size())));
}
inline ParamVector mlp_backward(const MlpSpec& spec, const ParamVector& params, const Vec& input,
                                const Vec& output_grad) {
  return mlp_backward(spec, params, std::span<const double>(input.data(), static_cast<std::size_t>(input.size())),
                      std::span<const double>(output_grad.data(), static_cast<std::size_t>(output_grad.size())));
}

enum class Direction { Ascent, Descent };

struct AdamState {
  long step_count = 0;
  Vec first_moment;
  Vec second_moment;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState zeros(std::size_t n, double lr);
};

// One bias-corrected Adam update, in place. Throws DivergenceError on a
// non-finite gradient, leaving state and params untouched.
void adam_step(AdamState& state, ParamVector& params, const ParamVector& grad, Direction dir);

bool all_finite(const Vec& v);
bool all_finite(const Mat& m);

}  // namespace rail
