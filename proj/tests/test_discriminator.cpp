#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "rail/discriminator.hpp"
#include "rail/errors.hpp"

using namespace rail;
using rail::test::rel_error;

namespace {

DiscBatch random_batch(Rng& rng, int obs_dim, int act_dim, int n_agent, int n_expert) {
  DiscBatch b;
  b.agent_states = test::random_mat(n_agent, obs_dim, rng);
  b.agent_actions = test::random_mat(n_agent, act_dim, rng);
  b.expert_states = test::random_mat(n_expert, obs_dim, rng, 0.5);
  b.expert_actions = test::random_mat(n_expert, act_dim, rng, 0.5);
  return b;
}

}  // namespace

TEST_CASE("zero-parameter discriminator scores 0.5") {
  Discriminator d(MlpSpec{3, {4}, 1});
  Rng rng(0);
  const Mat s = test::random_mat(5, 2, rng), a = test::random_mat(5, 1, rng);
  CHECK((d.score_batch(s, a).array() == 0.5).all());
  CHECK(d.score(s.row(0).transpose(), a.row(0).transpose()) == 0.5);
}

TEST_CASE("clamped sigmoid and the log surrogate") {
  CHECK(clamped_sigmoid(10.0) == doctest::Approx(0.9999546).epsilon(1e-7));
  CHECK(clamped_sigmoid(60.0) == clamped_sigmoid(10.0));
  CHECK(clamped_sigmoid(-60.0) == clamped_sigmoid(-10.0));
  CHECK(cost_surrogate(0.5) == doctest::Approx(-0.69315).epsilon(1e-5));
  CHECK(cost_surrogate(clamped_sigmoid(10.0)) == doctest::Approx(-4.54e-5).epsilon(1e-3));
  Rng rng(1);
  std::uniform_real_distribution<double> u(-12.0, 12.0);
  for (int i = 0; i < 1000; ++i) {
    double x = u(rng), y = u(rng);
    if (x > y) std::swap(x, y);
    CHECK(clamped_sigmoid(x) <= clamped_sigmoid(y));
    const double sa = clamped_sigmoid(x), sb = clamped_sigmoid(y);
    if (sa < sb) CHECK(cost_surrogate(sa) < cost_surrogate(sb));
  }
}

TEST_CASE("cost_batch is log of the score") {
  Rng rng(2);
  Discriminator d(2, 1, {5}, rng);
  const Mat s = test::random_mat(20, 2, rng), a = test::random_mat(20, 1, rng);
  const Vec c = d.cost_batch(s, a);
  const Vec sc = d.score_batch(s, a);
  for (int i = 0; i < 20; ++i) CHECK(c[i] == doctest::Approx(std::log(sc[i])).epsilon(1e-12));
}

TEST_CASE("gail gradient cancels at the symmetric saddle") {
  Discriminator d(MlpSpec{3, {4}, 1});
  Rng rng(3);
  DiscBatch b = random_batch(rng, 2, 1, 6, 6);
  b.expert_states = b.agent_states;
  b.expert_actions = b.agent_actions;
  CHECK(d.gail_gradient(b).isZero(0.0));
  CHECK(d.gail_objective(b) == doctest::Approx(2 * std::log(0.5)).epsilon(1e-15));
}

TEST_CASE("gail gradient of a linear discriminator is the logistic gradient") {
  Discriminator d(MlpSpec{3, {}, 1});
  const ParamVector w{{0.4, -0.2, 0.7, 0.1}};
  d.set_params(w);
  DiscBatch b;
  b.agent_states = Mat{{0.5, -1.0}};
  b.agent_actions = Mat{{2.0}};
  b.expert_states = Mat{{-0.3, 0.2}};
  b.expert_actions = Mat{{1.0}};
  const Vec xa{{0.5, -1.0, 2.0, 1.0}}, xe{{-0.3, 0.2, 1.0, 1.0}};
  const double la = w.dot(xa), le = w.dot(xe);
  const double sa = 1 / (1 + std::exp(-la)), se = 1 / (1 + std::exp(-le));
  const Vec expected = (1 - sa) * xa - se * xe;
  CHECK(rel_error(d.gail_gradient(b), expected) <= 1e-14);
}

TEST_CASE("gail gradient against central differences") {
  Rng rng(4);
  for (int trial = 0; trial < 4; ++trial) {
    Discriminator d(3, 2, {6, 4}, rng);
    const DiscBatch b = random_batch(rng, 3, 2, 9, 7);
    const Vec numeric = test::numeric_gradient(
        [&](const Vec& q) {
          Discriminator probe = d;
          probe.set_params(q);
          return probe.gail_objective(b);
        },
        d.params());
    CHECK(rel_error(d.gail_gradient(b), numeric) <= 1e-5);
  }
}

TEST_CASE("weighted log-score gradient against central differences") {
  Rng rng(5);
  Discriminator d(3, 2, {6}, rng);
  d.set_normalization(Vec{{0.1, -0.2, 0.0, 0.3, 0.3}}, Vec{{1.5, 0.5, 1.0, 2.0, 0.7}});
  const Mat s = test::random_mat(11, 3, rng), a = test::random_mat(11, 2, rng);
  const Vec w = test::random_vec(11, rng);
  const Vec numeric = test::numeric_gradient(
      [&](const Vec& q) {
        Discriminator probe = d;
        probe.set_params(q);
        return probe.cost_batch(s, a).dot(w);
      },
      d.params());
  CHECK(rel_error(d.weighted_log_score_grad(s, a, w), numeric) <= 1e-5);
}

TEST_CASE("gradient ascent separates a toy batch") {
  Rng rng(6);
  Discriminator d(1, 1, {8}, rng);
  DiscBatch b;
  b.agent_states = Mat::Constant(8, 1, 1.0);
  b.agent_actions = test::random_mat(8, 1, rng, 0.1).array() + 1.0;
  b.expert_states = Mat::Constant(8, 1, -1.0);
  b.expert_actions = test::random_mat(8, 1, rng, 0.1).array() - 1.0;
  double prev = d.gail_objective(b);
  for (int step = 0; step < 5; ++step) {
    d.set_params(d.params() + 0.1 * d.gail_gradient(b));
    const double now = d.gail_objective(b);
    CHECK(now > prev);
    prev = now;
  }
}

TEST_CASE("normalization uses expert statistics with a floor") {
  Discriminator d(MlpSpec{2, {}, 1});
  const Mat s{{1.0}, {3.0}}, a{{5.0}, {5.0}};
  d.fit_normalization(s, a, 1e-2);
  CHECK(d.input_mean()[0] == 2.0);
  CHECK(d.input_std()[0] == 1.0);
  CHECK(d.input_std()[1] == 1e-2);
  CHECK_THROWS_AS(d.fit_normalization(s, Mat::Zero(2, 2), 1e-2), ShapeError);
}

TEST_CASE("batch validation") {
  Rng rng(7);
  DiscBatch b = random_batch(rng, 2, 1, 4, 3);
  b.traj_offsets = {0, 2, 4};
  CHECK_NOTHROW(b.validate());
  CHECK(b.num_trajectories() == 2);
  b.traj_offsets = {0, 3};
  CHECK_THROWS_AS(b.validate(), ShapeError);
}
