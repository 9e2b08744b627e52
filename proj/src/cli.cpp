#include "rail/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <ostream>
#include <sstream>

#include "rail/config.hpp"
#include "rail/errors.hpp"
#include "rail/io.hpp"
#include "rail/metrics.hpp"

namespace rail {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path runs_root() {
  if (const char* root = std::getenv("RAIL_RUNS_ROOT"); root != nullptr && *root != '\0') return root;
  return "runs";
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json summary_json(const EvalResult& r) {
  return {{"n", r.costs.size()}, {"alpha", r.alpha}, {"mean", r.mean}, {"std", r.stddev},
          {"var", r.var},        {"cvar", r.cvar},   {"costs", r.costs}};
}

void save_checkpoint(const fs::path& path, Checkpoint ckpt, const RunConfig& rc, const std::string& rng_state) {
  ckpt.config = config_to_json(rc);
  ckpt.config_digest = config_digest(rc);
  ckpt.rng_state = rng_state;
  write_checkpoint(path, ckpt);
}

std::string rng_state_of(std::uint64_t seed) {
  std::ostringstream ss;
  ss << Rng(seed);
  return ss.str();
}

void write_run_outputs(const fs::path& dir, const RunConfig& rc, const Trainer& trainer) {
  write_text(dir / "config.resolved", resolved_text(rc));
  write_text(dir / "logs.csv", logs_csv(trainer.logs()));
  const std::string rng = rng_state_of(rc.train.seed);
  save_checkpoint(dir / "checkpoints" / "policy.ckpt", policy_checkpoint(trainer.policy()), rc, rng);
  save_checkpoint(dir / "checkpoints" / "baseline.ckpt", baseline_checkpoint(trainer.baseline()), rc, rng);
  if (rc.train.mode != TrainMode::Expert)
    save_checkpoint(dir / "checkpoints" / "discriminator.ckpt", disc_checkpoint(trainer.disc()), rc, rng);
}

std::string effective_mode(const TrainConfig& tc) {
  if (tc.mode == TrainMode::Rail && tc.risk.lambda_cvar == 0.0) return "gail";
  return to_string(tc.mode);
}

int run_training(const RunConfig& rc, std::optional<ExpertData> expert, std::ostream& out) {
  const fs::path dir = runs_root() / rc.io.name;
  Trainer trainer(rc.train, std::move(expert));
  try {
    trainer.run();
  } catch (const DivergenceError&) {
    write_run_outputs(dir, rc, trainer);
    throw;
  }
  write_run_outputs(dir, rc, trainer);
  const auto env = make_env(rc.train.env);
  const EvalResult eval = evaluate(trainer.policy(), *env, rc.io.eval_trajectories, rc.io.eval_seed, rc.train.risk.alpha);
  json report = {{"mode", effective_mode(rc.train)},
                 {"env_id", rc.train.env.id},
                 {"iterations", rc.train.iterations},
                 {"seed", rc.train.seed},
                 {"eval_seed", rc.io.eval_seed},
                 {"final", summary_json(eval)}};
  write_text(dir / "report.json", report.dump(2));
  out << effective_mode(rc.train) << " run '" << rc.io.name << "': " << rc.train.iterations
      << " iterations, eval mean " << eval.mean << ", CVaR_" << eval.alpha << " " << eval.cvar << "\n";
  return kExitOk;
}

RunConfig apply_overrides(RunConfig rc, const std::string& name, int iterations, long long seed) {
  if (!name.empty()) rc.io.name = name;
  if (iterations >= 0) rc.train.iterations = iterations;
  if (seed >= 0) rc.train.seed = static_cast<std::uint64_t>(seed);
  rc.train.validate();
  return rc;
}

struct LoadedPolicy {
  RunConfig rc;
  GaussianPolicy policy;
  std::string digest;
};

LoadedPolicy load_policy_checkpoint(const fs::path& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  LoadedPolicy lp;
  try {
    lp.rc = config_from_json(ckpt.config);
  } catch (const ConfigError& e) {
    throw FormatError("checkpoint '" + path.string() + "' carries an unusable config: " + e.what());
  }
  lp.policy = policy_from_checkpoint(ckpt, lp.rc.train.env.obs_dim, lp.rc.train.env.action_dim);
  lp.digest = file_digest(path);
  return lp;
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw FormatError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

AgentSummary agent_summary(const json& j, const std::string& label, std::vector<double>* costs) {
  AgentSummary s;
  s.label = label;
  try {
    s.var = j.at("var").get<double>();
    s.cvar = j.at("cvar").get<double>();
    s.mean = j.value("mean", 0.0);
    s.stddev = j.value("std", 0.0);
    s.n_trajectories = j.value("n", 0);
    if (costs && j.contains("costs")) *costs = j.at("costs").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw FormatError("cost summary for " + label + " is malformed: " + e.what());
  }
  return s;
}

json report_json(const TailRiskReport& r) {
  auto agent = [](const AgentSummary& a) {
    return json{{"mean", a.mean}, {"std", a.stddev}, {"var", a.var}, {"cvar", a.cvar}, {"n", a.n_trajectories}};
  };
  return {{"name", r.name},
          {"alpha", r.alpha},
          {"expert", agent(r.expert)},
          {"gail", agent(r.gail)},
          {"rail", agent(r.rail)},
          {"relative_var", {{"gail", r.gail_rel_var}, {"rail", r.rail_rel_var}}},
          {"relative_cvar", {{"gail", r.gail_rel_cvar}, {"rail", r.rail_rel_cvar}}},
          {"gr_var", r.gr_var},
          {"gr_cvar", r.gr_cvar}};
}

json convergence_json(const fs::path& logs_path, int window) {
  const auto logs = parse_logs_csv(read_text(logs_path));
  std::vector<double> mean_cost;
  for (const auto& l : logs) mean_cost.push_back(l.mean_true_cost);
  return {{"raw", mean_cost}, {"smoothed", smooth_series(mean_cost, window)}, {"window", window}};
}

}  // namespace

std::string logs_csv(const std::vector<IterationLog>& logs) {
  std::ostringstream ss;
  ss << "iteration,mean_true_cost,mean_surrogate_cost,nu,disc_objective,kl,cvar_true,step_accepted,"
        "loss_before,loss_after,policy_checksum,disc_checksum\n";
  for (const auto& l : logs) {
    ss << l.iteration << ',' << fmt(l.mean_true_cost) << ',' << fmt(l.mean_surrogate_cost) << ',' << fmt(l.nu)
       << ',' << fmt(l.disc_objective) << ',' << fmt(l.kl) << ',' << fmt(l.cvar_true) << ','
       << (l.step_accepted ? 1 : 0) << ',' << fmt(l.loss_before) << ',' << fmt(l.loss_after) << ','
       << l.policy_checksum << ',' << l.disc_checksum << '\n';
  }
  return ss.str();
}

std::vector<IterationLog> parse_logs_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  if (line.rfind("iteration,", 0) != 0) throw FormatError("logs.csv: missing header");
  std::vector<IterationLog> logs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 12) throw FormatError("logs.csv: expected 12 columns");
    try {
      IterationLog l;
      l.iteration = std::stoi(f[0]);
      l.mean_true_cost = std::stod(f[1]);
      l.mean_surrogate_cost = std::stod(f[2]);
      l.nu = std::stod(f[3]);
      l.disc_objective = std::stod(f[4]);
      l.kl = std::stod(f[5]);
      l.cvar_true = std::stod(f[6]);
      l.step_accepted = f[7] == "1";
      l.loss_before = std::stod(f[8]);
      l.loss_after = std::stod(f[9]);
      l.policy_checksum = f[10];
      l.disc_checksum = f[11];
      logs.push_back(std::move(l));
    } catch (const std::exception&) {
      throw FormatError("logs.csv: malformed row");
    }
  }
  return logs;
}

int command_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Risk-averse adversarial imitation learning lab"};
  app.require_subcommand(1);

  std::string config_path, name, expert_path, checkpoint_path, out_path;
  std::string expert_summary, gail_summary, rail_summary, gail_logs, rail_logs;
  int iterations = -1;
  long long seed = -1;
  int n = -1;
  double alpha = 0.9;
  int window = 21;
  std::string label;
  bool use_published = false;

  auto* expert = app.add_subcommand("expert", "Train an expert policy by TRPO on the true cost");
  expert->add_option("--config", config_path, "Run config (JSON)")->required();
  expert->add_option("--name", name, "Run name (overrides io.name)");
  expert->add_option("--iterations", iterations, "Override train.iterations");
  expert->add_option("--seed", seed, "Override train.seed");

  auto* sample = app.add_subcommand("sample", "Roll out an expert checkpoint into a trajectory file");
  sample->add_option("--checkpoint", checkpoint_path, "Expert policy checkpoint")->required();
  sample->add_option("--out", out_path, "Trajectory file to write")->required();
  sample->add_option("-n,--n", n, "Number of trajectories (default io.expert_trajectories)");
  sample->add_option("--seed", seed, "Sampling seed (default train.seed)");

  auto* imitate = app.add_subcommand("imitate", "Train GAIL or RAIL from an expert trajectory file");
  imitate->add_option("--config", config_path, "Run config (JSON), train.mode gail or rail")->required();
  imitate->add_option("--expert", expert_path, "Expert trajectory file")->required();
  imitate->add_option("--name", name, "Run name (overrides io.name)");
  imitate->add_option("--iterations", iterations, "Override train.iterations");
  imitate->add_option("--seed", seed, "Override train.seed");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Sample true trajectory costs of a policy checkpoint");
  evaluate_cmd->add_option("--checkpoint", checkpoint_path, "Policy checkpoint")->required();
  evaluate_cmd->add_option("--out", out_path, "Cost summary (JSON) to write")->required();
  evaluate_cmd->add_option("-n,--n", n, "Number of trajectories (default io.eval_trajectories)");
  evaluate_cmd->add_option("--seed", seed, "Evaluation seed (default io.eval_seed)");
  evaluate_cmd->add_option("--alpha", alpha, "VaR/CVaR level (default 0.9)");
  evaluate_cmd->add_option("--label", label, "Label stored in the summary");

  auto* report = app.add_subcommand("report", "Tail-risk report from expert/GAIL/RAIL cost samples");
  report->add_option("--expert", expert_summary, "Expert cost summary (from evaluate)");
  report->add_option("--gail", gail_summary, "GAIL cost summary");
  report->add_option("--rail", rail_summary, "RAIL cost summary");
  report->add_option("--gail-logs", gail_logs, "GAIL logs.csv for convergence curves");
  report->add_option("--rail-logs", rail_logs, "RAIL logs.csv for convergence curves");
  report->add_option("--window", window, "Smoothing window for convergence curves");
  report->add_option("--out", out_path, "Report (JSON) to write")->required();
  report->add_option("--name", name, "Report name");
  report->add_flag("--paper-table3", use_published, "Use the published MuJoCo VaR/CVaR values as input");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (expert->parsed()) {
      RunConfig rc = load_config(config_path);
      rc.train.mode = TrainMode::Expert;
      rc.train.risk.lambda_cvar = 0.0;
      return run_training(apply_overrides(rc, name, iterations, seed), std::nullopt, out);
    }

    if (sample->parsed()) {
      const LoadedPolicy lp = load_policy_checkpoint(checkpoint_path);
      const auto env = make_env(lp.rc.train.env);
      const int count = n >= 0 ? n : lp.rc.io.expert_trajectories;
      const auto s = seed >= 0 ? static_cast<std::uint64_t>(seed) : lp.rc.train.seed;
      const auto trajs = sample_trajectories(lp.policy, *env, count, s);
      TrajectoryFileHeader h;
      h.env_id = lp.rc.train.env.id;
      h.obs_dim = lp.rc.train.env.obs_dim;
      h.action_dim = lp.rc.train.env.action_dim;
      h.gamma = lp.rc.train.env.gamma;
      h.generator_seed = s;
      h.policy_checkpoint_hash = lp.digest;
      write_trajectories(out_path, h, trajs);
      out << "wrote " << trajs.size() << " trajectories to " << out_path << "\n";
      return kExitOk;
    }

    if (imitate->parsed()) {
      RunConfig rc = apply_overrides(load_config(config_path), name, iterations, seed);
      if (rc.train.mode == TrainMode::Expert) throw ConfigError("imitate needs train.mode gail or rail");
      TrajectoryFileHeader h;
      auto trajs = read_trajectories(expert_path, &h);
      if (h.env_id != rc.train.env.id || h.obs_dim != rc.train.env.obs_dim ||
          h.action_dim != rc.train.env.action_dim)
        throw ConfigError("expert trajectories were generated on '" + h.env_id + "', config selects '" +
                          rc.train.env.id + "'");
      return run_training(rc, stack_expert(std::move(trajs)), out);
    }

    if (evaluate_cmd->parsed()) {
      const LoadedPolicy lp = load_policy_checkpoint(checkpoint_path);
      const auto env = make_env(lp.rc.train.env);
      const int count = n >= 0 ? n : lp.rc.io.eval_trajectories;
      const auto s = seed >= 0 ? static_cast<std::uint64_t>(seed) : lp.rc.io.eval_seed;
      const EvalResult r = evaluate(lp.policy, *env, count, s, alpha);
      json j = summary_json(r);
      j["label"] = label.empty() ? effective_mode(lp.rc.train) : label;
      j["env_id"] = lp.rc.train.env.id;
      j["seed"] = s;
      j["checkpoint_digest"] = lp.digest;
      write_text(out_path, j.dump(2));
      out << "mean " << r.mean << "  VaR " << r.var << "  CVaR " << r.cvar << "\n";
      return kExitOk;
    }

    if (report->parsed()) {
      json doc;
      if (use_published) {
        json rows = json::array();
        for (const auto& row : published_absolute()) {
          const auto rep = make_report(row.environment, 0.9, {"expert", 0, 0, row.var_expert, row.cvar_expert, 50},
                                       {"gail", 0, 0, row.var_gail, row.cvar_gail, 50},
                                       {"rail", 0, 0, row.var_rail, row.cvar_rail, 50});
          rows.push_back(report_json(rep));
          out << row.environment << ": VaR(GAIL|E) " << fmt(rep.gail_rel_var) << "  VaR(RAIL|E) "
              << fmt(rep.rail_rel_var) << "  GR-VaR " << fmt(rep.gr_var) << "  CVaR(GAIL|E) "
              << fmt(rep.gail_rel_cvar) << "  CVaR(RAIL|E) " << fmt(rep.rail_rel_cvar) << "  GR-CVaR "
              << fmt(rep.gr_cvar) << "\n";
        }
        doc = {{"source", "published MuJoCo VaR/CVaR values"}, {"reports", rows}};
      } else {
        if (expert_summary.empty() || gail_summary.empty() || rail_summary.empty())
          throw ConfigError("report needs --expert, --gail and --rail (or --paper-table3)");
        std::vector<double> ce, cg, cr;
        const auto e = agent_summary(read_json(expert_summary), "expert", &ce);
        const auto g = agent_summary(read_json(gail_summary), "gail", &cg);
        const auto r = agent_summary(read_json(rail_summary), "rail", &cr);
        const double a = read_json(expert_summary).value("alpha", 0.9);
        const auto rep = make_report(name.empty() ? "report" : name, a, e, g, r);
        doc = report_json(rep);
        if (!ce.empty() && !cg.empty() && !cr.empty()) {
          std::vector<double> pooled = ce;
          pooled.insert(pooled.end(), cg.begin(), cg.end());
          pooled.insert(pooled.end(), cr.begin(), cr.end());
          const auto h = histogram(pooled, 40);
          json per_agent;
          for (const auto& [lbl, c] : {std::pair{"expert", &ce}, std::pair{"gail", &cg}, std::pair{"rail", &cr}}) {
            std::vector<int> counts(40, 0);
            const double width = (h.hi - h.lo) / 40.0;
            for (double v : *c) {
              int b = width > 0 ? static_cast<int>((v - h.lo) / width) : 0;
              counts[static_cast<std::size_t>(std::clamp(b, 0, 39))]++;
            }
            per_agent[lbl] = counts;
          }
          doc["histogram"] = {{"lo", h.lo}, {"hi", h.hi}, {"bins", 40}, {"pooled", h.counts},
                              {"per_agent", per_agent}, {"tail_marker", h.tail_marker}};
        }
        if (!gail_logs.empty() || !rail_logs.empty()) {
          json conv;
          if (!gail_logs.empty()) conv["gail"] = convergence_json(gail_logs, window);
          if (!rail_logs.empty()) conv["rail"] = convergence_json(rail_logs, window);
          doc["convergence"] = conv;
        }
        out << "GR-VaR " << fmt(rep.gr_var) << "  GR-CVaR " << fmt(rep.gr_cvar) << "\n";
      }
      write_text(out_path, doc.dump(2));
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace rail
