#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rtmpc/arm.hpp"
#include "rtmpc/common.hpp"
#include "rtmpc/corridor.hpp"
#include "rtmpc/error_bounds.hpp"
#include "rtmpc/geometry.hpp"
#include "rtmpc/mpc.hpp"
#include "rtmpc/rng.hpp"
#include "rtmpc/synthesis.hpp"

namespace rtmpc {

/// Closed-loop control strategy for an episode. flexible/rigid/nominal map
/// onto the MPC modes of the same name; oracle is the nominal MPC run on a
/// plant without model error (the benchmark's time denominator).
enum class RunMode { flexible, rigid, nominal, oracle };

const char* to_string(RunMode mode);
RunMode parse_run_mode(const std::string& name);  // throws std::invalid_argument

/// Everything about the plant, its constraint sets, and the MPC weights that
/// does not depend on the uncertainty scale.
struct SystemSetup {
  ArmParams arm;
  ArmGeometry geom;
  UncertaintySet base_family;  // relative parameter bounds at scale 1.0
  StateBox state_box;
  TorqueSet torque_set;
  DiscreteDynamics dyn;
  MpcConfig mpc;  // weights, horizon, epsilon; mode is overwritten per run

  // Offline-stage knobs.
  long constant_samples = 200000;   // Monte-Carlo draws for the error bound
  double constant_margin = 1.1;     // inflation on the fitted constants
  uint64_t offline_seed = 2024;     // seeds constant estimation / convexify
  Vec rho_grid;                     // contraction-rate candidates
  ConvexifyParams convexify;        // acceleration-set shrink procedure

  UncertaintySet family_at(double scale) const;
  void validate() const;
};

/// Products of the offline stage at one uncertainty scale. A missing
/// controller means synthesis failed for that variant; the episode runner
/// reports this instead of crashing, so benchmarks can chart the failure.
struct OfflineArtifacts {
  double scale = 1.0;
  ErrorBoundConstants consts;
  AccelSet accel_set;
  std::optional<TubeController> flexible;
  std::optional<TubeController> rigid;
  std::string flexible_error;  // set when flexible is missing
  std::string rigid_error;     // set when rigid is missing

  /// Controller used by the given mode: the matching tube controller for
  /// flexible/rigid; nominal and oracle borrow the flexible gain (falling
  /// back to rigid). Null when synthesis failed for everything needed.
  const TubeController* controller_for(RunMode mode) const;
};

/// Runs constant estimation, acceleration-set convexification, and both
/// controller syntheses at the given scale. Synthesis failures are captured
/// in the result rather than thrown. An already-convexified acceleration set
/// may be passed in to skip that (scale-independent) step.
OfflineArtifacts synthesize_offline(
    const SystemSetup& setup, double scale,
    const std::optional<AccelSet>& accel_set = std::nullopt);

/// A start/goal query in one fixed scene.
struct ProblemInstance {
  Scene scene;
  Vec q_start;
  Vec q_goal;
  uint64_t seed = 0;  // also derives the episode's path-planner stream
};

struct InstanceParams {
  int n_obstacles = 6;
  double radius_lo = 0.05;        // [m]
  double radius_hi = 0.2;         // [m]
  double clearance = 0.1;         // [rad] planning clearance
  double endpoint_margin = 0.02;  // [rad] extra scdf margin at start/goal
  double q_margin = 0.2;          // [rad] shrink of the endpoint sampling box
  int line_check_points = 100;    // straight-line rejection resolution
  int max_attempts = 400;
  PlannerParams planner;  // must match the episode's planner parameters
};

/// Samples a scene of random discs in the arm's reachable annulus plus a
/// start/goal pair that (a) keeps clearance at both endpoints, (b) is NOT
/// connectable by a clearance-free straight line, and (c) is connected in
/// configuration space, confirmed by planning with the episode's exact
/// planner stream. Deterministic in `seed`. Throws PlanningFailed when
/// max_attempts scenes were rejected.
ProblemInstance generate_instance(uint64_t seed, const SystemSetup& setup,
                                  const InstanceParams& params = {});

struct RunConfig {
  int n_a = 4;                     // auxiliary steps per MPC solve
  int step_cap = 4000;             // simulation steps before giving up
  double goal_radius = 0.01;       // ||x - x_g|| threshold
  double uncertainty_scale = 1.0;  // must match the artifacts' scale
  RunMode mode = RunMode::flexible;
  double clearance = 0.1;      // [rad] path planning clearance
  double corridor_step = 0.005;  // [rad] corridor discretization
  PlannerParams planner;

  void validate(int horizon) const;
};

enum class Outcome { reached, timeout, infeasible, collision };

const char* to_string(Outcome outcome);

/// Independent post-hoc safety audit: counts of states/steps violating each
/// original constraint, by exact re-checks (no solver quantities involved).
struct AuditCounters {
  long collision = 0;      // interpolated sub-step exact collision checks
  long velocity = 0;       // states with some |qd_i| over the box
  long configuration = 0;  // states with some |q_i| over the box
  long torque = 0;         // steps with some |u_i| over the limit
  int first_violation_step = -1;

  bool clean() const {
    return collision + velocity + configuration + torque == 0;
  }
  /// Comma-joined violated categories, empty when clean.
  std::string flags() const;
};

struct SolveRecord {
  int step = 0;  // simulation step count when this solve happened
  MpcStatus status = MpcStatus::solver_error;
  bool inaccurate = false;
  double cost = 0.0;
  double delta_max = 0.0;       // largest tube size in the returned plan
  int virtual_goal_index = -1;  // corridor index of the virtual goal
  int last_ball_index = -1;     // corridor ball assigned to the plan's end
};

struct SimTrace {
  std::vector<State> states;       // length steps+1, starts at x(0)
  std::vector<Vec> torques;        // commanded linearizing torque per step
  std::vector<Vec> accelerations;  // commanded acceleration per step
  std::vector<SolveRecord> solves;
  Outcome outcome = Outcome::timeout;
  int steps = 0;            // executed simulation steps
  int time_to_goal = -1;    // == steps when reached, -1 otherwise
  double max_tube = 0.0;    // max tube size over all solves
  bool solver_error = false;  // termination was a solver failure, not model
  std::string diagnostic;     // human-readable reason when not reached
  AuditCounters audit;        // filled by run_episode before returning
};

/// Executes one closed-loop episode: plan a path, build the ball corridor,
/// then alternate MPC solves with n_a auxiliary feedback-linearized steps on
/// the true (theta-perturbed) plant until the goal ball, the step cap, or
/// infeasibility. theta is drawn once from the scaled family using
/// theta_seed (forced to zero in oracle mode). The returned trace carries
/// the independent audit. Planner failures propagate.
SimTrace run_episode(const ProblemInstance& instance, const RunConfig& run_cfg,
                     const SystemSetup& setup,
                     const OfflineArtifacts& artifacts, uint64_t theta_seed);

/// The audit used inside run_episode, exposed for replay of stored traces:
/// exact collision checks on sub-step interpolations, velocity/configuration
/// box checks on every state, torque box checks on every step.
AuditCounters audit_trace(const SimTrace& trace, const ProblemInstance& instance,
                          const ArmGeometry& geom, const StateBox& state_box,
                          const TorqueSet& torque_set);

/// One benchmark episode's result row (the results CSV schema).
struct EpisodeRow {
  uint64_t instance_seed = 0;
  uint64_t theta_seed = 0;
  double scale = 1.0;
  RunMode mode = RunMode::flexible;
  Outcome outcome = Outcome::timeout;
  int steps = 0;
  double ratio_vs_oracle = 0.0;  // NaN when oracle or episode failed
  double max_tube = 0.0;
  std::string audit_flags;  // audit categories plus termination markers
};

struct ScaleModeStats {
  double scale = 1.0;
  RunMode mode = RunMode::flexible;
  int episodes = 0;
  int reached = 0;
  double success_rate = 0.0;
  double mean_ratio = 0.0;  // over reached episodes with a defined ratio
  double sd2_ratio = 0.0;   // 2 * population standard deviation
  int ratio_count = 0;
  bool synthesis_failed = false;
};

struct BenchmarkPlan {
  std::vector<double> scales;
  std::vector<RunMode> modes;  // oracle always runs; listing it adds no work
  int n_instances = 10;
  int theta_draws = 5;
  int jobs = 1;
  uint64_t base_seed = 1;
  RunConfig base_run;  // scale/mode overwritten per episode
  InstanceParams instance_params;

  void validate() const;
};

struct BenchmarkResults {
  std::vector<EpisodeRow> rows;       // deterministic order
  std::vector<ScaleModeStats> stats;  // per (scale, mode), oracle included
  std::vector<ProblemInstance> instances;
};

/// Shared-instance benchmark sweep: generates n_instances once, synthesizes
/// artifacts per scale, runs an oracle episode per (scale, instance) as the
/// time denominator, and every requested mode x theta draw on top. Episodes
/// run in a pool of `jobs` workers; results are slotted by task index, so
/// output is byte-identical regardless of scheduling. Per-episode failures
/// (planning, corridor escape, solver) are recorded in their rows, not fatal.
BenchmarkResults run_benchmark(const SystemSetup& setup,
                               const BenchmarkPlan& plan);

}  // namespace rtmpc
