#include "rtmpc/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <sstream>
#include <thread>

namespace rtmpc {

namespace {

// Salt folded into the instance seed so the path planner gets its own
// deterministic stream, identical across modes and theta draws.
constexpr uint64_t kPlannerSalt = 0x636f727269646f72ull;

// Node budget for the instance generator's confirmation plan. Tree growth is
// a deterministic function of the rng stream, so a plan found within this
// budget is reproduced verbatim by any episode running a larger budget.
constexpr long kConfirmNodeBudget = 8000;

// Absolute grace on box audits, covering solver feasibility tolerances.
constexpr double kBoxAuditTol = 1e-7;

// Interpolation intervals per simulation step in the collision audit.
constexpr int kCollisionSubsteps = 5;

double nan_double() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

const char* to_string(RunMode mode) {
  switch (mode) {
    case RunMode::flexible: return "flexible";
    case RunMode::rigid: return "rigid";
    case RunMode::nominal: return "nominal";
    case RunMode::oracle: return "oracle";
  }
  return "?";
}

RunMode parse_run_mode(const std::string& name) {
  if (name == "flexible") return RunMode::flexible;
  if (name == "rigid") return RunMode::rigid;
  if (name == "nominal") return RunMode::nominal;
  if (name == "oracle") return RunMode::oracle;
  throw std::invalid_argument("unknown run mode: " + name);
}

const char* to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::reached: return "reached";
    case Outcome::timeout: return "timeout";
    case Outcome::infeasible: return "infeasible";
    case Outcome::collision: return "collision";
  }
  return "?";
}

UncertaintySet SystemSetup::family_at(double scale) const {
  UncertaintySet family = base_family;
  family.scale = base_family.scale * scale;
  return family;
}

void SystemSetup::validate() const {
  arm.validate();
  geom.validate();
  if (geom.dof() != arm.dof()) {
    throw std::invalid_argument("arm geometry and dynamics disagree on dof");
  }
  base_family.validate(arm.dof());
  state_box.validate(arm.dof());
  torque_set.validate(arm.dof());
  if (dyn.dt <= 0.0) throw std::invalid_argument("discrete dynamics not set");
  mpc.validate(2 * arm.dof(), arm.dof());
  if (constant_samples < 10000) {
    throw std::invalid_argument("constant estimation needs >= 1e4 samples");
  }
  if (rho_grid.size() == 0) {
    throw std::invalid_argument("empty contraction-rate grid");
  }
}

const TubeController* OfflineArtifacts::controller_for(RunMode mode) const {
  switch (mode) {
    case RunMode::flexible:
      return flexible ? &*flexible : nullptr;
    case RunMode::rigid:
      return rigid ? &*rigid : nullptr;
    case RunMode::nominal:
    case RunMode::oracle:
      // Only the gain K and the projection constants are used; borrow the
      // flexible design, or the rigid one when that is all that exists.
      if (flexible) return &*flexible;
      return rigid ? &*rigid : nullptr;
  }
  return nullptr;
}

OfflineArtifacts synthesize_offline(const SystemSetup& setup, double scale,
                                    const std::optional<AccelSet>& accel_set) {
  setup.validate();
  if (scale < 0.0) throw std::invalid_argument("negative uncertainty scale");

  OfflineArtifacts out;
  out.scale = scale;
  const UncertaintySet family = setup.family_at(scale);
  out.consts =
      estimate_constants(setup.arm, family, setup.state_box,
                         setup.constant_samples, setup.constant_margin,
                         setup.offline_seed);
  if (accel_set) {
    out.accel_set = *accel_set;  // independent of the uncertainty scale
  } else {
    out.accel_set = convexify_accel_set(setup.arm, setup.torque_set,
                                        setup.state_box, setup.convexify,
                                        setup.offline_seed + 1);
  }

  const SynthesisConfig cfg = make_synthesis_config(
      setup.state_box, out.accel_set, setup.dyn, out.consts, setup.rho_grid);
  try {
    out.flexible = select_candidate(cfg, setup.dyn, out.consts, false);
  } catch (const SynthesisFailed& e) {
    out.flexible_error = e.what();
  }
  try {
    out.rigid = select_candidate(cfg, setup.dyn, out.consts, true);
  } catch (const SynthesisFailed& e) {
    out.rigid_error = e.what();
  }
  return out;
}

namespace {

// Reachable annulus of a planar chain: outer radius is the total length,
// inner radius is what the fully folded chain cannot get closer than.
void reach_annulus(const ArmGeometry& geom, double* lo, double* hi) {
  const double total = geom.link_lengths.sum();
  const double longest = geom.link_lengths.maxCoeff();
  *hi = total;
  *lo = std::max(0.0, 2.0 * longest - total);
}

// Optimistic connectivity pre-filter: BFS over a C-space grid whose cells
// are marked free when the cell center keeps the planning clearance. Scenes
// that fail this cannot be planned, so the expensive tree search is skipped.
bool grid_connected(const ArmGeometry& geom, const Scene& scene, const Vec& a,
                    const Vec& b, double clearance) {
  constexpr int N = 140;
  const double pi = std::numbers::pi;
  std::vector<char> free_cell(static_cast<std::size_t>(N) * N, 0);
  Vec q(2);
  for (int i = 0; i < N; ++i) {
    q[0] = -pi + 2.0 * pi * (i + 0.5) / N;
    for (int j = 0; j < N; ++j) {
      q[1] = -pi + 2.0 * pi * (j + 0.5) / N;
      if (scdf(geom, scene, q) >= clearance) free_cell[i * N + j] = 1;
    }
  }
  auto cell_of = [&](const Vec& p) {
    const int i = std::clamp(
        static_cast<int>((p[0] + pi) / (2.0 * pi) * N), 0, N - 1);
    const int j = std::clamp(
        static_cast<int>((p[1] + pi) / (2.0 * pi) * N), 0, N - 1);
    return i * N + j;
  };
  const int start = cell_of(a);
  const int goal = cell_of(b);
  // The endpoints themselves are verified clear by the caller; make sure
  // their cells participate even if the cell center sits closer to an
  // obstacle than the center-sampled threshold allows.
  free_cell[start] = 1;
  free_cell[goal] = 1;
  std::vector<char> seen(free_cell.size(), 0);
  std::queue<int> bfs;
  bfs.push(start);
  seen[start] = 1;
  while (!bfs.empty()) {
    const int c = bfs.front();
    bfs.pop();
    if (c == goal) return true;
    const int ci = c / N, cj = c % N;
    constexpr int di[4] = {1, -1, 0, 0};
    constexpr int dj[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const int ni = ci + di[k], nj = cj + dj[k];
      if (ni < 0 || nj < 0 || ni >= N || nj >= N) continue;
      const int nc = ni * N + nj;
      if (free_cell[nc] && !seen[nc]) {
        seen[nc] = 1;
        bfs.push(nc);
      }
    }
  }
  return false;
}

}  // namespace

ProblemInstance generate_instance(uint64_t seed, const SystemSetup& setup,
                                  const InstanceParams& params) {
  if (setup.arm.dof() != 2) {
    throw std::invalid_argument(
        "instance generation supports the planar 2-dof arm");
  }
  if (params.n_obstacles < 1 || params.radius_lo <= 0.0 ||
      params.radius_hi < params.radius_lo || params.clearance <= 0.0 ||
      params.line_check_points < 2) {
    throw std::invalid_argument("invalid instance generation parameters");
  }
  Rng rng(seed);
  double annulus_lo = 0.0, annulus_hi = 0.0;
  reach_annulus(setup.geom, &annulus_lo, &annulus_hi);
  const double q_hw =
      setup.state_box.q_halfwidth.minCoeff() - params.q_margin;
  const double endpoint_floor = params.clearance + params.endpoint_margin;

  PlannerParams confirm = params.planner;
  confirm.node_budget = std::min(confirm.node_budget, kConfirmNodeBudget);

  for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
    Scene scene;
    for (int i = 0; i < params.n_obstacles; ++i) {
      Circle c;
      const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double dist = rng.uniform(annulus_lo, annulus_hi);
      c.center = Vec2(dist * std::cos(ang), dist * std::sin(ang));
      c.radius = rng.uniform(params.radius_lo, params.radius_hi);
      scene.obstacles.push_back(c);
    }

    auto sample_endpoint = [&](Vec* q_out) {
      Vec q(2);
      for (int tries = 0; tries < 60; ++tries) {
        q[0] = rng.uniform(-q_hw, q_hw);
        q[1] = rng.uniform(-q_hw, q_hw);
        if (scdf(setup.geom, scene, q) > endpoint_floor) {
          *q_out = q;
          return true;
        }
      }
      return false;
    };
    Vec q_start(2), q_goal(2);
    if (!sample_endpoint(&q_start) || !sample_endpoint(&q_goal)) continue;

    // Reject pairs whose straight segment already keeps the clearance.
    bool line_clear = true;
    for (int k = 0; k < params.line_check_points; ++k) {
      const double t =
          static_cast<double>(k) / (params.line_check_points - 1);
      const Vec q = q_start + (q_goal - q_start) * t;
      if (scdf(setup.geom, scene, q) < params.clearance) {
        line_clear = false;
        break;
      }
    }
    if (line_clear) continue;

    if (!grid_connected(setup.geom, scene, q_start, q_goal, params.clearance)) {
      continue;
    }

    // Confirm with the exact planner stream an episode will use, so every
    // accepted instance is plannable in-episode by construction.
    Rng plan_rng(seed ^ kPlannerSalt);
    try {
      plan_path(setup.geom, scene, q_start, q_goal, params.clearance,
                plan_rng, confirm);
    } catch (const PlanningFailed&) {
      continue;
    }
    ProblemInstance instance;
    instance.scene = scene;
    instance.q_start = q_start;
    instance.q_goal = q_goal;
    instance.seed = seed;
    return instance;
  }
  std::ostringstream msg;
  msg << "instance generation rejected " << params.max_attempts
      << " candidate scenes (seed " << seed << ")";
  throw PlanningFailed(msg.str());
}

void RunConfig::validate(int horizon) const {
  if (n_a < 1 || n_a > horizon) {
    throw std::invalid_argument("auxiliary step count must be in [1, H]");
  }
  if (step_cap < 1) throw std::invalid_argument("step cap must be positive");
  if (goal_radius <= 0.0) {
    throw std::invalid_argument("goal radius must be positive");
  }
  if (uncertainty_scale < 0.0) {
    throw std::invalid_argument("uncertainty scale must be non-negative");
  }
  if (clearance <= 0.0 || corridor_step <= 0.0) {
    throw std::invalid_argument("clearance and corridor step must be positive");
  }
}

std::string AuditCounters::flags() const {
  std::string out;
  auto add = [&out](const char* name) {
    if (!out.empty()) out += ',';
    out += name;
  };
  if (collision > 0) add("collision");
  if (velocity > 0) add("velocity");
  if (configuration > 0) add("configuration");
  if (torque > 0) add("torque");
  return out;
}

AuditCounters audit_trace(const SimTrace& trace,
                          const ProblemInstance& instance,
                          const ArmGeometry& geom, const StateBox& state_box,
                          const TorqueSet& torque_set) {
  AuditCounters audit;
  auto flag = [&audit](int step) {
    if (audit.first_violation_step < 0 || step < audit.first_violation_step) {
      audit.first_violation_step = step;
    }
  };

  for (std::size_t s = 0; s < trace.states.size(); ++s) {
    const State& x = trace.states[s];
    const bool vel_bad =
        (x.qd.array().abs() > state_box.qd_halfwidth.array() + kBoxAuditTol)
            .any();
    const bool cfg_bad =
        (x.q.array().abs() > state_box.q_halfwidth.array() + kBoxAuditTol)
            .any();
    if (vel_bad) {
      ++audit.velocity;
      flag(static_cast<int>(s));
    }
    if (cfg_bad) {
      ++audit.configuration;
      flag(static_cast<int>(s));
    }
  }

  for (std::size_t j = 0; j < trace.torques.size(); ++j) {
    const bool bad = (trace.torques[j].array().abs() >
                      torque_set.torque_limits.array() + kBoxAuditTol)
                         .any();
    if (bad) {
      ++audit.torque;
      flag(static_cast<int>(j));
    }
  }

  // Exact-oracle collision checks on linear sub-step interpolations.
  for (std::size_t s = 0; s + 1 < trace.states.size(); ++s) {
    const Vec& qa = trace.states[s].q;
    const Vec& qb = trace.states[s + 1].q;
    bool hit = false;
    for (int k = 0; k <= kCollisionSubsteps && !hit; ++k) {
      const double t = static_cast<double>(k) / kCollisionSubsteps;
      const Vec q = qa + (qb - qa) * t;
      if (workspace_clearance(geom, instance.scene, q) <= 0.0) hit = true;
    }
    if (hit) {
      ++audit.collision;
      flag(static_cast<int>(s));
    }
  }
  if (!trace.states.empty() && trace.torques.empty()) {
    // Single-state traces (reached at step 0) still get the start checked.
    const Vec& q0 = trace.states.front().q;
    if (workspace_clearance(geom, instance.scene, q0) <= 0.0) {
      ++audit.collision;
      flag(0);
    }
  }
  return audit;
}

SimTrace run_episode(const ProblemInstance& instance, const RunConfig& run_cfg,
                     const SystemSetup& setup,
                     const OfflineArtifacts& artifacts, uint64_t theta_seed) {
  setup.validate();
  const int horizon = setup.mpc.horizon;
  run_cfg.validate(horizon);
  if (run_cfg.uncertainty_scale != artifacts.scale) {
    throw std::invalid_argument(
        "run config and offline artifacts disagree on the uncertainty scale");
  }
  const TubeController* ctrl = artifacts.controller_for(run_cfg.mode);
  if (ctrl == nullptr) {
    const std::string& why = run_cfg.mode == RunMode::rigid
                                 ? artifacts.rigid_error
                                 : artifacts.flexible_error;
    throw SynthesisFailed("no controller available for mode " +
                          std::string(to_string(run_cfg.mode)) +
                          (why.empty() ? "" : ": " + why));
  }

  SimTrace trace;
  const int dof = setup.arm.dof();
  State x;
  x.q = instance.q_start;
  x.qd = Vec::Zero(dof);
  trace.states.push_back(x);

  State goal;
  goal.q = instance.q_goal;
  goal.qd = Vec::Zero(dof);
  const Vec x_goal = goal.to_x();
  auto at_goal = [&](const State& s) {
    return (s.to_x() - x_goal).norm() <= run_cfg.goal_radius;
  };

  auto finish = [&](Outcome outcome, int time_to_goal, std::string why) {
    trace.outcome = outcome;
    trace.time_to_goal = time_to_goal;
    trace.diagnostic = std::move(why);
    trace.audit = audit_trace(trace, instance, setup.geom, setup.state_box,
                              setup.torque_set);
    return trace;
  };

  if (at_goal(x)) return finish(Outcome::reached, 0, "");

  // Plan and discretize the corridor. The planner stream depends only on
  // the instance, so every mode and theta draw shares one corridor.
  Rng plan_rng(instance.seed ^ kPlannerSalt);
  const std::vector<Vec> path =
      plan_path(setup.geom, instance.scene, instance.q_start, instance.q_goal,
                run_cfg.clearance, plan_rng, run_cfg.planner);
  const Corridor corridor =
      build_corridor(setup.geom, instance.scene, path, run_cfg.corridor_step);

  // One theta draw per episode, held for its whole duration.
  Vec theta = Vec::Zero(setup.base_family.n_params());
  if (run_cfg.mode != RunMode::oracle) {
    Rng theta_rng(theta_seed);
    theta = setup.family_at(run_cfg.uncertainty_scale)
                .sample(setup.arm, theta_rng);
  }
  const ArmModel plant(setup.arm, theta);

  MpcConfig cfg = setup.mpc;
  switch (run_cfg.mode) {
    case RunMode::flexible: cfg.mode = MpcMode::flexible; break;
    case RunMode::rigid: cfg.mode = MpcMode::rigid; break;
    case RunMode::nominal:
    case RunMode::oracle: cfg.mode = MpcMode::nominal; break;
  }
  const MpcModel model{setup.dyn, *ctrl, artifacts.consts, setup.state_box,
                       artifacts.accel_set};
  const bool ancillary =
      run_cfg.mode == RunMode::flexible || run_cfg.mode == RunMode::rigid;

  // Virtual-goal tightening: the terminal tube of the mode plus the endpoint
  // margin, projected to configuration space.
  const double terminal_tube = run_cfg.mode == RunMode::flexible
                                   ? ctrl->delta_f
                                   : run_cfg.mode == RunMode::rigid
                                         ? ctrl->delta_bar
                                         : 0.0;
  const double tighten = ctrl->r_p * (cfg.epsilon + terminal_tube);

  std::vector<State> feasible(static_cast<std::size_t>(horizon) + 1, x);

  while (true) {
    if (trace.steps >= run_cfg.step_cap) {
      return finish(Outcome::timeout, -1, "step cap reached short of goal");
    }

    BallAssignment assignment;
    try {
      assignment = assign_balls(corridor, feasible);
    } catch (const TrajectoryLeftCorridor& e) {
      return finish(Outcome::infeasible, -1, e.what());
    }
    const int vg_index =
        select_virtual_goal(corridor, assignment.indices.back(), tighten);

    MpcProblemInputs inputs;
    inputs.x_now = x;
    inputs.x_goal.q = corridor.centers[vg_index];
    inputs.x_goal.qd = Vec::Zero(dof);
    inputs.balls = assignment.balls;

    const MpcSolution sol = build_and_solve(cfg, model, inputs);

    SolveRecord rec;
    rec.step = trace.steps;
    rec.status = sol.status;
    rec.inaccurate = sol.inaccurate;
    rec.cost = sol.cost;
    rec.delta_max = sol.status == MpcStatus::optimal && sol.deltas.size() > 0
                        ? sol.deltas.maxCoeff()
                        : 0.0;
    rec.virtual_goal_index = vg_index;
    rec.last_ball_index = assignment.indices.back();
    trace.solves.push_back(rec);

    if (sol.status != MpcStatus::optimal) {
      trace.solver_error = sol.status == MpcStatus::solver_error;
      return finish(Outcome::infeasible, -1,
                    trace.solver_error
                        ? "conic solver failed to converge"
                        : "MPC problem infeasible at the measured state");
    }
    trace.max_tube = std::max(trace.max_tube, rec.delta_max);

    for (int i = 0; i < run_cfg.n_a && trace.steps < run_cfg.step_cap; ++i) {
      // The tube modes close the loop with the ancillary gain between
      // re-solves; the nominal baseline (and the oracle, which is the same
      // controller on the exact model) trusts its plan and executes the
      // optimized accelerations open-loop, re-planning from the measured
      // state every n_a steps. The ancillary feedback is part of the robust
      // design, so the baseline must not inherit it.
      const Vec a = ancillary
                        ? aux_control(*ctrl, x,
                                      sol.X_bar[static_cast<std::size_t>(i)],
                                      sol.A_bar[static_cast<std::size_t>(i)])
                        : sol.A_bar[static_cast<std::size_t>(i)];
      const Vec u = feedback_linearize(plant, x, a);
      x = step_true(plant, setup.dyn, x, a);
      trace.states.push_back(x);
      trace.torques.push_back(u);
      trace.accelerations.push_back(a);
      ++trace.steps;
      if (workspace_clearance(setup.geom, instance.scene, x.q) <= 0.0) {
        return finish(Outcome::collision, -1,
                      "exact collision check failed during execution");
      }
    }
    if (at_goal(x)) return finish(Outcome::reached, trace.steps, "");

    feasible = shift_warm_start(sol, run_cfg.n_a).X_bar;
  }
}

void BenchmarkPlan::validate() const {
  if (scales.empty()) throw std::invalid_argument("empty scale list");
  for (double s : scales) {
    if (s < 0.0) throw std::invalid_argument("negative scale in benchmark");
  }
  if (n_instances < 1 || theta_draws < 1) {
    throw std::invalid_argument("benchmark needs instances and theta draws");
  }
  if (jobs < 1) throw std::invalid_argument("benchmark needs >= 1 job");
}

namespace {

struct EpisodeTask {
  int scale_index = 0;
  int instance_index = 0;
  RunMode mode = RunMode::oracle;
  uint64_t theta_seed = 0;
};

struct EpisodeOutcome {
  Outcome outcome = Outcome::infeasible;
  int steps = 0;
  double max_tube = 0.0;
  std::string flags;
};

void append_flag(std::string* flags, const char* name) {
  if (!flags->empty()) *flags += ',';
  *flags += name;
}

}  // namespace

BenchmarkResults run_benchmark(const SystemSetup& setup,
                               const BenchmarkPlan& plan) {
  setup.validate();
  plan.validate();
  plan.base_run.validate(setup.mpc.horizon);

  // Deterministic seed schedule: instance seeds first, then per-instance
  // theta seeds, all from one fork chain.
  Rng seed_rng(plan.base_seed);
  std::vector<uint64_t> instance_seeds;
  instance_seeds.reserve(static_cast<std::size_t>(plan.n_instances));
  for (int i = 0; i < plan.n_instances; ++i) {
    instance_seeds.push_back(seed_rng.fork_seed());
  }
  std::vector<std::vector<uint64_t>> theta_seeds(
      static_cast<std::size_t>(plan.n_instances));
  for (auto& per_instance : theta_seeds) {
    for (int r = 0; r < plan.theta_draws; ++r) {
      per_instance.push_back(seed_rng.fork_seed());
    }
  }

  BenchmarkResults results;
  InstanceParams instance_params = plan.instance_params;
  instance_params.clearance = plan.base_run.clearance;
  instance_params.planner = plan.base_run.planner;
  for (int i = 0; i < plan.n_instances; ++i) {
    results.instances.push_back(
        generate_instance(instance_seeds[i], setup, instance_params));
  }

  // Offline artifacts per scale; the acceleration set is scale-independent
  // and computed once.
  std::vector<OfflineArtifacts> artifacts;
  std::optional<AccelSet> shared_accel;
  for (double scale : plan.scales) {
    artifacts.push_back(synthesize_offline(setup, scale, shared_accel));
    shared_accel = artifacts.back().accel_set;
  }

  // Modes to benchmark on top of the always-run oracle denominator.
  std::vector<RunMode> modes;
  for (RunMode m : plan.modes) {
    if (m == RunMode::oracle) continue;
    if (std::find(modes.begin(), modes.end(), m) == modes.end()) {
      modes.push_back(m);
    }
  }

  std::vector<EpisodeTask> tasks;
  for (int s = 0; s < static_cast<int>(plan.scales.size()); ++s) {
    for (int i = 0; i < plan.n_instances; ++i) {
      tasks.push_back({s, i, RunMode::oracle, 0});
    }
    for (RunMode mode : modes) {
      for (int i = 0; i < plan.n_instances; ++i) {
        for (int r = 0; r < plan.theta_draws; ++r) {
          tasks.push_back({s, i, mode, theta_seeds[i][r]});
        }
      }
    }
  }

  std::vector<EpisodeOutcome> outcomes(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t t = next.fetch_add(1);
      if (t >= tasks.size()) return;
      const EpisodeTask& task = tasks[t];
      EpisodeOutcome& out = outcomes[t];
      const OfflineArtifacts& art =
          artifacts[static_cast<std::size_t>(task.scale_index)];
      if (art.controller_for(task.mode) == nullptr) {
        out.outcome = Outcome::infeasible;
        append_flag(&out.flags, "synthesis_failed");
        continue;
      }
      RunConfig rc = plan.base_run;
      rc.uncertainty_scale = plan.scales[static_cast<std::size_t>(task.scale_index)];
      rc.mode = task.mode;
      try {
        const SimTrace trace = run_episode(
            results.instances[static_cast<std::size_t>(task.instance_index)],
            rc, setup, art, task.theta_seed);
        out.outcome = trace.outcome;
        out.steps = trace.steps;
        out.max_tube = trace.max_tube;
        out.flags = trace.audit.flags();
        if (trace.solver_error) append_flag(&out.flags, "solver_error");
      } catch (const PlanningFailed&) {
        out.outcome = Outcome::infeasible;
        append_flag(&out.flags, "planning_failed");
      } catch (const std::exception& e) {
        out.outcome = Outcome::infeasible;
        append_flag(&out.flags, "error");
        out.flags += ':';
        out.flags += e.what();
      }
    }
  };
  {
    const int n_workers = std::max(
        1, std::min<int>(plan.jobs, static_cast<int>(tasks.size())));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // Oracle step counts per (scale, instance) feed every ratio.
  std::vector<std::vector<int>> oracle_steps(
      plan.scales.size(),
      std::vector<int>(static_cast<std::size_t>(plan.n_instances), -1));
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (tasks[t].mode != RunMode::oracle) continue;
    if (outcomes[t].outcome == Outcome::reached) {
      oracle_steps[static_cast<std::size_t>(tasks[t].scale_index)]
                  [static_cast<std::size_t>(tasks[t].instance_index)] =
                      outcomes[t].steps;
    }
  }

  results.rows.reserve(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const EpisodeTask& task = tasks[t];
    const EpisodeOutcome& out = outcomes[t];
    EpisodeRow row;
    row.instance_seed =
        instance_seeds[static_cast<std::size_t>(task.instance_index)];
    row.theta_seed = task.theta_seed;
    row.scale = plan.scales[static_cast<std::size_t>(task.scale_index)];
    row.mode = task.mode;
    row.outcome = out.outcome;
    row.steps = out.steps;
    row.max_tube = out.max_tube;
    row.audit_flags = out.flags;
    const int denom =
        oracle_steps[static_cast<std::size_t>(task.scale_index)]
                    [static_cast<std::size_t>(task.instance_index)];
    row.ratio_vs_oracle = (out.outcome == Outcome::reached && denom > 0)
                              ? static_cast<double>(out.steps) /
                                    static_cast<double>(denom)
                              : nan_double();
    results.rows.push_back(std::move(row));
  }

  // Aggregates per (scale, mode), oracle first, in the scale order given.
  std::vector<RunMode> stat_modes;
  stat_modes.push_back(RunMode::oracle);
  stat_modes.insert(stat_modes.end(), modes.begin(), modes.end());
  for (std::size_t s = 0; s < plan.scales.size(); ++s) {
    for (RunMode mode : stat_modes) {
      ScaleModeStats st;
      st.scale = plan.scales[s];
      st.mode = mode;
      double sum = 0.0, sum2 = 0.0;
      bool all_synth_failed = true;
      for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (tasks[t].scale_index != static_cast<int>(s) ||
            tasks[t].mode != mode) {
          continue;
        }
        ++st.episodes;
        if (outcomes[t].flags.find("synthesis_failed") == std::string::npos) {
          all_synth_failed = false;
        }
        if (outcomes[t].outcome == Outcome::reached) ++st.reached;
        const double ratio = results.rows[t].ratio_vs_oracle;
        if (std::isfinite(ratio)) {
          ++st.ratio_count;
          sum += ratio;
          sum2 += ratio * ratio;
        }
      }
      st.success_rate =
          st.episodes > 0
              ? static_cast<double>(st.reached) / st.episodes
              : 0.0;
      if (st.ratio_count > 0) {
        st.mean_ratio = sum / st.ratio_count;
        const double var =
            std::max(0.0, sum2 / st.ratio_count - st.mean_ratio * st.mean_ratio);
        st.sd2_ratio = 2.0 * std::sqrt(var);
      } else {
        st.mean_ratio = nan_double();
        st.sd2_ratio = nan_double();
      }
      st.synthesis_failed = st.episodes > 0 && all_synth_failed;
      results.stats.push_back(std::move(st));
    }
  }
  return results;
}

}  // namespace rtmpc
