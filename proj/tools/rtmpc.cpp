// Command-line front end: offline artifact synthesis, single episodes,
// benchmark sweeps, and trace audits over one JSON project config.
//
// Exit codes: 0 success, 1 domain failure (episode infeasible or timed out,
// synthesis failed, audit found violations), 2 usage or config error.
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "rtmpc/io.hpp"

using namespace rtmpc;
namespace fs = std::filesystem;

namespace {

void print_controller(const char* name, const std::optional<TubeController>& c,
                      const std::string& error) {
  if (c) {
    std::printf(
        "%s controller: rho=%.4f rho_tilde=%.4f delta_f=%.6g delta_bar=%.6g "
        "r_p=%.6g w_bar=%.6g%s\n",
        name, c->rho, c->rho_tilde, c->delta_f, c->delta_bar, c->r_p, c->w_bar,
        c->contractive ? "" : " [not contractive]");
  } else {
    std::printf("%s controller: synthesis failed — %s\n", name, error.c_str());
  }
}

int cmd_synth(const io::ProjectConfig& cfg, double scale,
              const std::string& out_dir) {
  std::printf("synthesizing offline artifacts at uncertainty scale %g\n",
              scale);
  const OfflineArtifacts art = synthesize_offline(cfg.setup, scale);
  io::save_artifacts(art, cfg.setup, out_dir);

  std::printf(
      "error-bound constants: a=%.6g b=%.6g c=%.6g (%ld samples, margin "
      "%g)\n",
      art.consts.a, art.consts.b, art.consts.c, art.consts.samples_used,
      art.consts.margin);
  std::printf("acceleration set halfwidth: [%.6g", art.accel_set.box_halfwidth[0]);
  for (int i = 1; i < art.accel_set.box_halfwidth.size(); ++i)
    std::printf(", %.6g", art.accel_set.box_halfwidth[i]);
  std::printf("] after %d shrink iterations\n", art.accel_set.shrink_iterations);
  print_controller("flexible", art.flexible, art.flexible_error);
  print_controller("rigid", art.rigid, art.rigid_error);
  std::printf("artifacts written to %s\n", out_dir.c_str());

  if (!art.flexible || !art.rigid) {
    std::printf(
        "hint: synthesis tends to become infeasible as the uncertainty "
        "grows; try a lower --scale\n");
    return 1;
  }
  return 0;
}

int cmd_run(const io::ProjectConfig& cfg, uint64_t seed, RunMode mode,
            double scale, const std::string& out_dir) {
  const OfflineArtifacts art = io::load_artifacts(out_dir);
  RunConfig rc = cfg.run;
  rc.mode = mode;
  rc.uncertainty_scale = scale;
  rc.validate(cfg.setup.mpc.horizon);

  const ProblemInstance inst = generate_instance(seed, cfg.setup, cfg.instances);
  io::StoredEpisode ep;
  ep.instance = inst;
  ep.run = rc;
  ep.theta_seed = seed;
  ep.trace = run_episode(inst, rc, cfg.setup, art, ep.theta_seed);

  const std::string trace_path =
      (fs::path(out_dir) /
       ("trace_seed" + std::to_string(seed) + "_" + to_string(mode) + ".json"))
          .string();
  io::save_trace(ep, trace_path);

  const SimTrace& t = ep.trace;
  std::printf("outcome=%s steps=%d time_to_goal=%d max_tube=%.6g solves=%zu\n",
              to_string(t.outcome), t.steps, t.time_to_goal, t.max_tube,
              t.solves.size());
  if (!t.diagnostic.empty())
    std::printf("diagnostic: %s\n", t.diagnostic.c_str());
  if (!t.audit.clean())
    std::printf("audit violations: %s (first at step %d)\n",
                t.audit.flags().c_str(), t.audit.first_violation_step);
  std::printf("trace written to %s\n", trace_path.c_str());
  return t.outcome == Outcome::reached ? 0 : 1;
}

int cmd_bench(const io::ProjectConfig& cfg, std::optional<int> jobs,
              std::optional<uint64_t> seed, const std::string& out_dir) {
  BenchmarkPlan plan = cfg.bench;
  if (jobs) plan.jobs = *jobs;
  if (seed) plan.base_seed = *seed;
  plan.validate();

  const BenchmarkResults res = run_benchmark(cfg.setup, plan);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const std::string results_path = (fs::path(out_dir) / "results.csv").string();
  const std::string plot_path = (fs::path(out_dir) / "plotdata.csv").string();
  io::write_results_csv(res, results_path);
  io::write_plotdata_csv(res, plot_path);

  bool partial = false;
  for (const ScaleModeStats& st : res.stats) {
    std::printf(
        "scale=%-5g mode=%-8s episodes=%d reached=%d success=%.0f%% "
        "mean_ratio=%.4f sd2=%.4f%s\n",
        st.scale, to_string(st.mode), st.episodes, st.reached,
        100.0 * st.success_rate, st.mean_ratio, st.sd2_ratio,
        st.synthesis_failed ? " [synthesis failed]" : "");
    partial = partial || st.synthesis_failed || st.reached == 0;
  }
  if (partial)
    std::printf(
        "note: some scale/mode combinations produced no successful episodes; "
        "see the partial footer in plotdata.csv\n");
  std::printf("results written to %s and %s\n", results_path.c_str(),
              plot_path.c_str());
  return 0;
}

int cmd_audit(const io::ProjectConfig& cfg, const std::string& trace_path) {
  const io::StoredEpisode ep = io::load_trace(trace_path);
  const AuditCounters audit =
      audit_trace(ep.trace, ep.instance, cfg.setup.geom, cfg.setup.state_box,
                  cfg.setup.torque_set);
  std::printf(
      "audit of %s: states=%zu torques=%zu collision=%ld velocity=%ld "
      "configuration=%ld torque=%ld\n",
      trace_path.c_str(), ep.trace.states.size(), ep.trace.torques.size(),
      audit.collision, audit.velocity, audit.configuration, audit.torque);
  if (audit.clean()) {
    std::printf("audit clean: every state and torque satisfies the original "
                "constraints\n");
    return 0;
  }
  std::printf("audit violations: %s (first at step %d)\n",
              audit.flags().c_str(), audit.first_violation_step);
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Robust tube MPC toolkit for planar manipulators under parametric "
      "uncertainty"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  double scale = 1.0;
  uint64_t seed = 0;
  std::string mode_name;
  int jobs = 0;
  std::string trace_path;

  CLI::App* synth =
      app.add_subcommand("synth", "Synthesize offline artifacts (error-bound "
                                  "constants, acceleration set, tube "
                                  "controllers) into --out");
  synth->add_option("--config", config_path, "project config JSON")
      ->required();
  CLI::Option* synth_scale =
      synth->add_option("--scale", scale, "uncertainty scale (default: the "
                                          "config's run.uncertainty_scale)");
  synth->add_option("--out", out_dir, "artifact directory (default .)");

  CLI::App* run = app.add_subcommand(
      "run", "Run one closed-loop episode against artifacts in --out and "
             "write its trace there");
  run->add_option("--config", config_path, "project config JSON")->required();
  CLI::Option* run_seed =
      run->add_option("--seed", seed, "instance seed (default: config seed)");
  CLI::Option* run_mode = run->add_option(
      "--mode", mode_name, "flexible | rigid | nominal | oracle (default: "
                           "the config's run.mode)");
  CLI::Option* run_scale = run->add_option(
      "--scale", scale,
      "uncertainty scale; must match the artifacts (default: config)");
  run->add_option("--out", out_dir,
                  "artifact directory; the trace lands here too (default .)");

  CLI::App* bench = app.add_subcommand(
      "bench", "Run the config's benchmark plan and write results.csv and "
               "plotdata.csv into --out");
  bench->add_option("--config", config_path, "project config JSON")
      ->required();
  CLI::Option* bench_jobs =
      bench->add_option("--jobs", jobs, "worker threads (default: config)");
  CLI::Option* bench_seed = bench->add_option(
      "--seed", seed, "benchmark seed chain root (default: config seed)");
  bench->add_option("--out", out_dir, "output directory (default .)");

  CLI::App* audit = app.add_subcommand(
      "audit", "Replay a stored trace through the independent constraint "
               "audit");
  audit->add_option("--config", config_path, "project config JSON")
      ->required();
  audit->add_option("trace", trace_path, "trace JSON written by run")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const io::ProjectConfig cfg = io::load_project_config(config_path);
    if (synth->parsed()) {
      const double s = synth_scale->count() ? scale : cfg.run.uncertainty_scale;
      return cmd_synth(cfg, s, out_dir);
    }
    if (run->parsed()) {
      const uint64_t sd = run_seed->count() ? seed : cfg.seed;
      const RunMode m =
          run_mode->count() ? parse_run_mode(mode_name) : cfg.run.mode;
      const double s = run_scale->count() ? scale : cfg.run.uncertainty_scale;
      return cmd_run(cfg, sd, m, s, out_dir);
    }
    if (bench->parsed()) {
      return cmd_bench(cfg,
                       bench_jobs->count() ? std::optional<int>(jobs)
                                           : std::nullopt,
                       bench_seed->count() ? std::optional<uint64_t>(seed)
                                           : std::nullopt,
                       out_dir);
    }
    return cmd_audit(cfg, trace_path);
  } catch (const io::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid argument: %s\n", e.what());
    return 2;
  } catch (const SynthesisFailed& e) {
    std::fprintf(stderr, "synthesis failed: %s\n", e.what());
    std::fprintf(stderr, "hint: try a lower uncertainty scale\n");
    return 1;
  } catch (const PlanningFailed& e) {
    std::fprintf(stderr, "planning failed: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
