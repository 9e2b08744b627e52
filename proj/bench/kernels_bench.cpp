// Serial reference loops vs the batched OpenMP kernels on the network shapes
// used in training (100-100 tanh, disc input 6, one output).

#include <benchmark/benchmark.h>

#include "rail/envs.hpp"
#include "rail/numerics.hpp"
#include "rail/policy.hpp"

using namespace rail;

namespace {

struct Fixture {
  Mlp net;
  Mat x;
  Mat g;
  explicit Fixture(Eigen::Index rows) {
    Rng rng(7);
    net = Mlp(MlpSpec{6, {100, 100}, 1}, rng);
    std::normal_distribution<double> n(0.0, 1.0);
    x.resize(rows, 6);
    g.resize(rows, 1);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n(rng);
  }
};

void BM_ForwardReference(benchmark::State& state) {
  const Fixture f(state.range(0));
  for (auto _ : state) {
    double acc = 0.0;
    for (Eigen::Index r = 0; r < f.x.rows(); ++r)
      acc += reference::mlp_forward(f.net.spec(), {f.net.params().data(), f.net.param_count()},
                                    {f.x.row(r).data(), 6})[0];
    benchmark::DoNotOptimize(acc);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ForwardBatched(benchmark::State& state) {
  const Fixture f(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(f.net.forward_batch(f.x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_BackwardReference(benchmark::State& state) {
  const Fixture f(state.range(0));
  for (auto _ : state) {
    std::vector<double> acc(f.net.param_count(), 0.0);
    for (Eigen::Index r = 0; r < f.x.rows(); ++r) {
      const auto g = reference::mlp_backward(f.net.spec(), {f.net.params().data(), f.net.param_count()},
                                             {f.x.row(r).data(), 6}, {f.g.row(r).data(), 1});
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
    }
    benchmark::DoNotOptimize(acc.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_BackwardBatched(benchmark::State& state) {
  const Fixture f(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(f.net.backward_batch(f.x, f.g));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Rollouts(benchmark::State& state) {
  Rng rng(3);
  const GaussianPolicy policy(4, 2, {100, 100}, 0.0, rng);
  const auto env = make_env(default_env_spec("hazard_corridor"));
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = i;
  const ActionFn act = [&](const Vec& obs, Rng& r) { return policy.sample_action(obs, r); };
  for (auto _ : state) benchmark::DoNotOptimize(rollout_batch(*env, act, seeds));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_ForwardReference)->Arg(256)->Arg(2048);
BENCHMARK(BM_ForwardBatched)->Arg(256)->Arg(2048);
BENCHMARK(BM_BackwardReference)->Arg(256)->Arg(2048);
BENCHMARK(BM_BackwardBatched)->Arg(256)->Arg(2048);
BENCHMARK(BM_Rollouts)->Arg(20);

BENCHMARK_MAIN();
