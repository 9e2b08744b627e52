// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "helpers.hpp"
#include "rail/cli.hpp"
#include "rail/config.hpp"
#include "rail/io.hpp"
#include "rail/metrics.hpp"
#include "rail/risk.hpp"
#include "rail/trainer.hpp"

using namespace rail;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rail_acceptance_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int cli(const fs::path& root, const std::vector<std::string>& args) {
  ::setenv("RAIL_RUNS_ROOT", root.c_str(), 1);
  std::ostringstream out, err;
  const int code = command_dispatch(args, out, err);
  if (code != 0) std::fprintf(stderr, "rail %s failed (%d): %s\n", args[0].c_str(), code, err.str().c_str());
  return code;
}

// ---- 1: gradients of the empirical H_alpha against central differences ----

struct SmallBatch {
  Mat states, actions;
  std::vector<Eigen::Index> offsets;
};

SmallBatch random_batch(int n_traj, int obs, int act, Rng& rng) {
  std::uniform_int_distribution<int> len(1, 8);
  SmallBatch b;
  b.offsets.push_back(0);
  for (int i = 0; i < n_traj; ++i) b.offsets.push_back(b.offsets.back() + len(rng));
  b.states = test::random_mat(b.offsets.back(), obs, rng);
  b.actions = test::random_mat(b.offsets.back(), act, rng);
  return b;
}

std::vector<double> traj_costs(const Vec& per_step, const std::vector<Eigen::Index>& offsets, double gamma) {
  std::vector<double> r;
  for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
    const auto seg = per_step.segment(offsets[i], offsets[i + 1] - offsets[i]);
    r.push_back(discounted_sum({seg.data(), static_cast<std::size_t>(seg.size())}, gamma));
  }
  return r;
}

bool near_kink(const std::vector<double>& costs, double nu) {
  return std::any_of(costs.begin(), costs.end(), [nu](double c) { return std::abs(c - nu) < 1e-6; });
}

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  std::uniform_int_distribution<int> dim(1, 4), ntraj(2, 20), width(2, 16);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double alphas[] = {0.5, 0.9, 0.95};
  const double tol = 1e-4;
  double worst_disc = 0.0, worst_policy = 0.0, worst_nu = 0.0;
  int cases = 0, resampled = 0;

  for (int trial = 0; trial < 60; ++trial) {
    const int obs = dim(rng), act = dim(rng);
    const double alpha = alphas[trial % 3];
    // Even trials: exact per-step weights at gamma < 1. Odd trials: the
    // shared-factor weights, which coincide with the exact ones at gamma = 1.
    const bool per_step = trial % 2 == 0;
    const double gamma = per_step ? 0.9 + 0.09 * unit(rng) : 1.0;
    const int n = ntraj(rng);
    const auto batch = random_batch(n, obs, act, rng);
    Discriminator disc(obs, act, {width(rng), width(rng)}, rng);
    GaussianPolicy policy(obs, act, {width(rng), width(rng)}, -0.3, rng);

    const auto disc_costs = [&](const ParamVector& w) {
      Discriminator d = disc;
      d.set_params(w);
      return traj_costs(d.cost_batch(batch.states, batch.actions), batch.offsets, gamma);
    };
    const auto costs = disc_costs(disc.params());
    // nu somewhere inside the sample so both sides of the indicator occur.
    std::vector<double> sorted = costs;
    std::sort(sorted.begin(), sorted.end());
    const double nu = 0.5 * (sorted[sorted.size() / 2] + sorted[(sorted.size() - 1) / 2]) + 1e-3 * unit(rng);
    if (near_kink(costs, nu)) {
      ++resampled;
      --trial;
      continue;
    }

    // Discriminator (weights on grad log D).
    Vec pair_w(batch.states.rows());
    for (int i = 0; i < n; ++i) {
      const auto len = batch.offsets[i + 1] - batch.offsets[i];
      if (per_step) {
        const double ind = costs[i] >= nu ? 1.0 / ((1.0 - alpha) * n) : 0.0;
        double g = 1.0;
        for (Eigen::Index t = 0; t < len; ++t, g *= gamma) pair_w(batch.offsets[i] + t) = ind * g;
      } else {
        pair_w.segment(batch.offsets[i], len)
            .setConstant(disc_cvar_weight(costs[i], nu, alpha, gamma, static_cast<int>(len)) /
                         (static_cast<double>(n) * static_cast<double>(len)));
      }
    }
    const Vec disc_analytic = disc.weighted_log_score_grad(batch.states, batch.actions, pair_w);
    const Vec disc_fd = test::numeric_gradient(
        [&](const Vec& w) { return h_alpha(disc_costs(w), nu, alpha); }, disc.params(), 1e-6);
    worst_disc = std::max(worst_disc, test::rel_error(disc_analytic, disc_fd));

    // Policy: likelihood-ratio form of H_alpha over the fixed sample, whose
    // gradient at the sampling policy is the score-function estimator.
    const Vec lp0 = policy.log_prob_batch(batch.states, batch.actions);
    const auto policy_objective = [&](const Vec& theta) {
      GaussianPolicy p = policy;
      p.set_params(theta);
      const Vec dlp = p.log_prob_batch(batch.states, batch.actions) - lp0;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        const auto len = batch.offsets[i + 1] - batch.offsets[i];
        acc += std::exp(dlp.segment(batch.offsets[i], len).sum()) * std::max(costs[i] - nu, 0.0);
      }
      return nu + acc / (n * (1.0 - alpha));
    };
    Vec score_w(batch.states.rows());
    for (int i = 0; i < n; ++i)
      score_w.segment(batch.offsets[i], batch.offsets[i + 1] - batch.offsets[i])
          .setConstant(policy_cvar_coeff(costs[i], nu, alpha) / n);
    const Vec pol_analytic = policy.weighted_log_prob_grad(batch.states, batch.actions, score_w);
    const Vec pol_fd = test::numeric_gradient(policy_objective, policy.params(), 1e-6);
    worst_policy = std::max(worst_policy, test::rel_error(pol_analytic, pol_fd));

    // nu. The slope 1 - k / (N (1 - alpha)) can be exactly zero, so errors are
    // measured against a unit floor.
    const double h = 1e-7;
    const double nu_fd = (h_alpha(costs, nu + h, alpha) - h_alpha(costs, nu - h, alpha)) / (2 * h);
    worst_nu = std::max(worst_nu, test::rel_error(grad_nu(costs, nu, alpha), nu_fd, 1.0));
    ++cases;
  }
  const double secs = seconds_since(t0);
  const bool ok = worst_disc <= tol && worst_policy <= tol && worst_nu <= tol && secs < 60.0;
  return {ok, fmt("%d instances (%d resampled near the kink), max rel err disc %.2e policy %.2e nu %.2e, %.1f s",
                  cases, resampled, worst_disc, worst_policy, worst_nu, secs)};
}

// ---- 2: CVaR estimator against brute force ----

Outcome criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(202);
  std::uniform_int_distribution<int> size(1, 1000);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> family(0, 2);
  const double alphas[] = {0.5, 0.9, 0.95};
  double worst_scan = 0.0, worst_tail = 0.0;
  int tail_cases = 0;
  for (int s = 0; s < 1000; ++s) {
    const int n = size(rng);
    const double alpha = alphas[s % 3];
    std::vector<double> z(static_cast<std::size_t>(n));
    const int f = family(rng);
    for (auto& x : z) {
      const double g = normal(rng);
      x = f == 0 ? g : f == 1 ? std::exp(2.0 * g) : std::round(4.0 * g);  // light, heavy, atomic
    }
    const double cvar = empirical_cvar(z, alpha);
    double scan = std::numeric_limits<double>::infinity();
    for (double nu : z) scan = std::min(scan, h_alpha(z, nu, alpha));
    worst_scan = std::max(worst_scan, std::abs(cvar - scan) / std::max(1.0, std::abs(scan)));

    const double tail = (1.0 - alpha) * n;
    if (std::abs(tail - std::round(tail)) < 1e-9 && std::round(tail) >= 1) {
      const auto k = static_cast<std::size_t>(std::round(tail));
      std::vector<double> sorted = z;
      std::sort(sorted.begin(), sorted.end(), std::greater<>());
      double sum = 0.0;
      for (std::size_t i = 0; i < k; ++i) sum += sorted[i];
      worst_tail = std::max(worst_tail, std::abs(cvar - sum / k) / std::max(1.0, std::abs(sum / k)));
      ++tail_cases;
    }
  }
  // Equality up to floating-point rounding of the two summation orders.
  const double tol = 1e-12;
  const double secs = seconds_since(t0);
  return {worst_scan <= tol && worst_tail <= tol && tail_cases > 0,
          fmt("1000 samples, max rel diff vs scan %.1e, vs worst-tail mean %.1e (%d integral cases), %.1f s",
              worst_scan, worst_tail, tail_cases, secs)};
}

// ---- 3: Normal identity ----

Outcome criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::pair<double, double> cases[] = {{0.0, 1.0}, {5.0, 2.0}, {-3.0, 0.5}};
  double worst = 0.0;
  Rng rng(303);
  for (const auto& [mu, sigma] : cases) {
    std::normal_distribution<double> d(mu, sigma);
    std::vector<double> z(1000000);
    for (auto& x : z) x = d(rng);
    const double expected = mu + 1.7550 * sigma;
    worst = std::max(worst, std::abs(empirical_cvar(z, 0.9) - expected) / std::abs(expected));
  }
  return {worst <= 0.01, fmt("3 (mu, sigma) pairs, max rel err %.2e, %.1f s", worst, seconds_since(t0))};
}

// ---- 4: lambda = 0 reduces to GAIL ----

Outcome criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig cfg;
  cfg.env = default_env_spec("point_goal");
  cfg.iterations = 50;
  cfg.traj_per_iter = 10;
  cfg.seed = 44;
  Rng rng(404);
  GaussianPolicy demo(4, 2, {32, 32}, -1.0, rng);
  const auto env = make_env(cfg.env);
  const auto expert = stack_expert(sample_trajectories(demo, *env, 10, 9));

  cfg.mode = TrainMode::Gail;
  Trainer gail(cfg, expert);
  gail.run();
  cfg.mode = TrainMode::Rail;
  cfg.risk.lambda_cvar = 0.0;
  Trainer rail(cfg, expert);
  rail.run();
  int same = 0;
  for (int i = 0; i < cfg.iterations; ++i) {
    const auto& a = gail.logs()[static_cast<std::size_t>(i)];
    const auto& b = rail.logs()[static_cast<std::size_t>(i)];
    same += a.policy_checksum == b.policy_checksum && a.disc_checksum == b.disc_checksum;
  }
  const double secs = seconds_since(t0);
  return {same == cfg.iterations && secs < 300.0,
          fmt("%d/%d iterations with identical policy and discriminator checksums, %.1f s", same, cfg.iterations,
              secs)};
}

// ---- 5: relative costs from the published absolutes ----

Outcome criterion5() {
  const auto& absolute = published_absolute();
  const auto& relative = published_relative();
  double worst = 0.0;
  int values = 0;
  for (std::size_t i = 0; i < absolute.size(); ++i) {
    const auto& r = absolute[i];
    const auto rep = make_report(r.environment, 0.9, {"expert", 0, 0, r.var_expert, r.cvar_expert, 0},
                                 {"gail", 0, 0, r.var_gail, r.cvar_gail, 0}, {"rail", 0, 0, r.var_rail, r.cvar_rail, 0});
    const double got[] = {rep.gail_rel_var, rep.rail_rel_var, rep.gr_var, rep.gail_rel_cvar, rep.rail_rel_cvar, rep.gr_cvar};
    const double want[] = {relative[i].gail_rel_var, relative[i].rail_rel_var, relative[i].gr_var, relative[i].gail_rel_cvar,
                           relative[i].rail_rel_cvar, relative[i].gr_cvar};
    for (int k = 0; k < 6; ++k) {
      worst = std::max(worst, std::abs(got[k] - want[k]));
      ++values;
    }
  }
  // 20 relative values plus the 10 gains in reliability derived from them.
  return {worst <= 0.02 && values == 30, fmt("%d printed values, max abs diff %.4f points", values, worst)};
}

// ---- 6: TRPO step contract ----

Outcome criterion6() {
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig cfg;
  cfg.env = default_env_spec("point_goal");
  cfg.mode = TrainMode::Expert;
  cfg.iterations = 120;
  cfg.traj_per_iter = 10;
  cfg.seed = 6;
  GaussianPolicy before;
  double worst_kl = 0.0;
  int accepted = 0, violations = 0;
  TrainHooks hooks;
  hooks.on_phase = [&](int, Phase p, const Trainer& t) {
    if (p == Phase::Sample) before = t.policy();
    if (p != Phase::PolicyUpdate) return;
    const auto& st = t.step_stats().back();
    if (!st.accepted) return;
    ++accepted;
    Mat states(0, 4);
    Eigen::Index n = 0;
    for (const auto& tr : t.batch()) n += tr.length();
    states.resize(n, 4);
    Eigen::Index row = 0;
    for (const auto& tr : t.batch())
      for (const auto& x : tr.transitions) states.row(row++) = x.state.transpose();
    const double kl = kl_divergence(before, t.policy(), states);
    worst_kl = std::max(worst_kl, kl / cfg.trpo.max_kl);
    if (kl > 1.05 * cfg.trpo.max_kl || st.loss_after > st.loss_before) ++violations;
  };
  Trainer trainer(cfg, std::nullopt, hooks);
  trainer.run();
  return {accepted >= 100 && violations == 0,
          fmt("%d accepted steps, max KL / max_kl = %.3f, %d violations, %.1f s", accepted, worst_kl, violations,
              seconds_since(t0))};
}

// ---- 7: HazardCorridor tail risk, RAIL vs GAIL over five seeds ----

Outcome criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path root = scratch("hazard");
  const fs::path configs = RAIL_CONFIG_DIR;
  const auto cfg = [&](const char* name) { return (configs / name).string(); };
  if (cli(root, {"expert", "--config", cfg("hazard_corridor_expert.json")}) != 0) return {false, "expert run failed"};
  const auto expert_ckpt = (root / "hazard_corridor_expert/checkpoints/policy.ckpt").string();
  const auto expert_trj = (root / "expert.trj").string();
  if (cli(root, {"sample", "--checkpoint", expert_ckpt, "--out", expert_trj}) != 0) return {false, "sampling failed"};

  const auto eval = [&](const std::string& run) -> json {
    const auto out = root / (run + ".eval.json");
    if (cli(root, {"evaluate", "--checkpoint", (root / run / "checkpoints/policy.ckpt").string(), "--out",
                   out.string(), "-n", "50"}) != 0)
      return {};
    return json::parse(slurp(out));
  };
  const json expert_eval = eval("hazard_corridor_expert");

  int rail_better = 0;
  double gail_mean_sum = 0.0, rail_mean_sum = 0.0;
  std::string rows;
  for (int seed = 0; seed < 5; ++seed) {
    const auto s = std::to_string(seed);
    for (const char* mode : {"gail", "rail"}) {
      const std::string config = std::string("hazard_corridor_") + mode + ".json";
      if (cli(root, {"imitate", "--config", cfg(config.c_str()), "--expert", expert_trj, "--name",
                     std::string(mode) + "_s" + s, "--seed", s}) != 0)
        return {false, std::string(mode) + " seed " + s + " failed"};
    }
    const json g = eval("gail_s" + s), r = eval("rail_s" + s);
    if (g.is_null() || r.is_null()) return {false, "evaluation failed"};
    const double gc = g["cvar"], rc = r["cvar"], gm = g["mean"], rm = r["mean"];
    rail_better += rc < gc;
    gail_mean_sum += gm;
    rail_mean_sum += rm;
    rows += fmt(" [s%d cvar %.1f/%.1f mean %.1f/%.1f]", seed, gc, rc, gm, rm);
  }
  // "within 10%" is read as: RAIL's average cost is not more than 10% above GAIL's.
  const double mean_ratio = rail_mean_sum / gail_mean_sum;
  const double minutes = seconds_since(t0) / 60.0;
  const bool ok = rail_better >= 4 && mean_ratio <= 1.10 && minutes < 30.0;
  return {ok, fmt("expert cvar %.1f mean %.1f; RAIL CVaR below GAIL in %d/5 seeds; mean ratio RAIL/GAIL %.3f; "
                  "%.1f min; gail/rail:",
                  expert_eval.value("cvar", 0.0), expert_eval.value("mean", 0.0), rail_better, mean_ratio, minutes) +
              rows};
}

// ---- 8: byte-identical reruns ----

Outcome criterion8() {
  const auto t0 = std::chrono::steady_clock::now();
  const json doc = {
      {"env", {{"id", "point_goal"}}},
      {"policy", {{"hidden", {32, 32}}}},
      {"disc", {{"hidden", {32, 32}}}},
      {"baseline", {{"hidden", {32, 32}}}},
      {"train", {{"mode", "expert"}, {"iterations", 5}, {"traj_per_iter", 8}, {"seed", 8}}},
      {"io", {{"name", "expert"}, {"expert_trajectories", 10}, {"eval_trajectories", 20}}}};
  std::vector<fs::path> roots = {scratch("det_a"), scratch("det_b")};
  for (const auto& root : roots) {
    std::ofstream(root / "expert.json") << doc.dump(2);
    json imitation = doc;
    imitation["train"]["mode"] = "rail";
    imitation["io"]["name"] = "rail";
    std::ofstream(root / "rail.json") << imitation.dump(2);
    const auto p = [&](const char* rel) { return (root / rel).string(); };
    const std::vector<std::vector<std::string>> commands = {
        {"expert", "--config", p("expert.json")},
        {"sample", "--checkpoint", p("expert/checkpoints/policy.ckpt"), "--out", p("expert.trj")},
        {"imitate", "--config", p("rail.json"), "--expert", p("expert.trj")},
        {"evaluate", "--checkpoint", p("expert/checkpoints/policy.ckpt"), "--out", p("e.json")},
        {"evaluate", "--checkpoint", p("rail/checkpoints/policy.ckpt"), "--out", p("r.json")},
        {"report", "--expert", p("e.json"), "--gail", p("r.json"), "--rail", p("r.json"), "--rail-logs",
         p("rail/logs.csv"), "--out", p("report.json")}};
    for (const auto& c : commands)
      if (cli(root, c) != 0) return {false, "command " + c[0] + " failed"};
  }
  int compared = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(roots[0])) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), roots[0]);
    ++compared;
    differing += slurp(entry.path()) != slurp(roots[1] / rel);
  }
  // The files embed their own paths only through the run root, which is not
  // written anywhere, so the two trees must match exactly.
  return {compared >= 15 && differing == 0,
          fmt("%d files across expert/sample/imitate/evaluate/report, %d differ, %.1f s", compared, differing,
              seconds_since(t0))};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria = {
      {"gradient fidelity", criterion1}, {"CVaR estimator oracle", criterion2},
      {"normal identity", criterion3},   {"lambda = 0 matches GAIL", criterion4},
      {"published relative costs", criterion5},           {"TRPO contract", criterion6},
      {"hazard corridor tail risk", criterion7}, {"determinism", criterion8}};
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %d (%s): %s - %s\n", id, criteria[k].first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
