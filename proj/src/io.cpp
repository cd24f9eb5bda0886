#include "rtmpc/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rtmpc/rng.hpp"

namespace rtmpc::io {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// small helpers

[[noreturn]] void fail(const std::string& what) { throw ConfigError(what); }

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(path + ": " + e.what());
  }
  return j;
}

void check_schema(const json& j, const std::string& path) {
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
    fail(path + ": missing schema_version");
  const int v = j["schema_version"].get<int>();
  if (v != kSchemaVersion)
    fail(path + ": schema_version " + std::to_string(v) + ", expected " +
         std::to_string(kSchemaVersion));
}

void dump_file(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) fail("write failed for " + path);
}

json vec_to_json(const Vec& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec vec_from_json(const json& j, const std::string& key) {
  if (!j.is_array()) fail(key + ": expected an array");
  Vec v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number())
      fail(key + ": expected numbers");
    v[i] = j[static_cast<std::size_t>(i)].get<double>();
  }
  return v;
}

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from_json(const json& j, const std::string& key) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    fail(key + ": expected an array of rows");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (static_cast<int>(row.size()) != cols) fail(key + ": ragged rows");
    for (int c = 0; c < cols; ++c)
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

Vec2 vec2_from_json(const json& j, const std::string& key) {
  const Vec v = vec_from_json(j, key);
  if (v.size() != 2) fail(key + ": expected exactly 2 numbers");
  return Vec2(v[0], v[1]);
}

/// Weight matrices in config files are diagonal arrays; full matrices are
/// accepted too (array of rows).
Mat weight_from_json(const json& j, const std::string& key) {
  if (!j.is_array() || j.empty()) fail(key + ": expected a non-empty array");
  if (j[0].is_number()) {
    const Vec d = vec_from_json(j, key);
    return Mat(d.asDiagonal());
  }
  return mat_from_json(j, key);
}

json weight_to_json(const Mat& m) {
  if (m.isDiagonal(0.0)) return vec_to_json(m.diagonal());
  return mat_to_json(m);
}

const json& at(const json& j, const std::string& key,
               const std::string& context) {
  if (!j.contains(key)) fail(context + ": missing key \"" + key + "\"");
  return j[key];
}

double num(const json& j, const std::string& key, const std::string& ctx) {
  const json& v = at(j, key, ctx);
  if (!v.is_number()) fail(ctx + "." + key + ": expected a number");
  return v.get<double>();
}

const char* to_string(MpcStatus s) {
  switch (s) {
    case MpcStatus::optimal: return "optimal";
    case MpcStatus::infeasible: return "infeasible";
    case MpcStatus::solver_error: return "solver_error";
  }
  return "solver_error";
}

MpcStatus parse_status(const std::string& s, const std::string& ctx) {
  if (s == "optimal") return MpcStatus::optimal;
  if (s == "infeasible") return MpcStatus::infeasible;
  if (s == "solver_error") return MpcStatus::solver_error;
  fail(ctx + ": unknown solve status \"" + s + "\"");
}

Outcome parse_outcome(const std::string& s, const std::string& ctx) {
  if (s == "reached") return Outcome::reached;
  if (s == "timeout") return Outcome::timeout;
  if (s == "infeasible") return Outcome::infeasible;
  if (s == "collision") return Outcome::collision;
  fail(ctx + ": unknown outcome \"" + s + "\"");
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// ---------------------------------------------------------------------------
// config blocks

json planner_to_json(const PlannerParams& p) {
  json j;
  j["step"] = p.step;
  j["edge_resolution"] = p.edge_resolution;
  j["node_budget"] = p.node_budget;
  j["shortcut_rounds"] = p.shortcut_rounds;
  if (p.sample_halfwidth.size() > 0)
    j["sample_halfwidth"] = vec_to_json(p.sample_halfwidth);
  return j;
}

PlannerParams planner_from_json(const json& j) {
  PlannerParams p;
  p.step = num(j, "step", "planner");
  p.edge_resolution = num(j, "edge_resolution", "planner");
  p.node_budget = at(j, "node_budget", "planner").get<long>();
  p.shortcut_rounds = at(j, "shortcut_rounds", "planner").get<int>();
  if (j.contains("sample_halfwidth"))
    p.sample_halfwidth = vec_from_json(j["sample_halfwidth"], "planner");
  return p;
}

json run_to_json(const RunConfig& r) {
  json j;
  j["n_a"] = r.n_a;
  j["step_cap"] = r.step_cap;
  j["goal_radius"] = r.goal_radius;
  j["uncertainty_scale"] = r.uncertainty_scale;
  j["mode"] = rtmpc::to_string(r.mode);
  j["clearance"] = r.clearance;
  j["corridor_step"] = r.corridor_step;
  j["planner"] = planner_to_json(r.planner);
  return j;
}

RunConfig run_from_json(const json& j) {
  RunConfig r;
  r.n_a = at(j, "n_a", "run").get<int>();
  r.step_cap = at(j, "step_cap", "run").get<int>();
  r.goal_radius = num(j, "goal_radius", "run");
  r.uncertainty_scale = num(j, "uncertainty_scale", "run");
  try {
    r.mode = parse_run_mode(at(j, "mode", "run").get<std::string>());
  } catch (const std::invalid_argument& e) {
    fail(std::string("run.mode: ") + e.what());
  }
  r.clearance = num(j, "clearance", "run");
  r.corridor_step = num(j, "corridor_step", "run");
  r.planner = planner_from_json(at(j, "planner", "run"));
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// project config

ProjectConfig load_project_config(const std::string& path) {
  const json j = parse_file(path);
  check_schema(j, path);
  ProjectConfig cfg;
  try {
    cfg.seed = at(j, "seed", path).get<uint64_t>();

    const json& arm = at(j, "arm", path);
    ArmParams& a = cfg.setup.arm;
    a.link_masses = vec_from_json(at(arm, "link_masses", "arm"), "arm");
    a.link_lengths = vec_from_json(at(arm, "link_lengths", "arm"), "arm");
    a.com_offsets = vec_from_json(at(arm, "com_offsets", "arm"), "arm");
    a.link_inertias = vec_from_json(at(arm, "link_inertias", "arm"), "arm");
    a.damping_diag = vec_from_json(at(arm, "damping_diag", "arm"), "arm");
    a.gravity_accel = num(arm, "gravity_accel", "arm");

    const json& geom = at(j, "geometry", path);
    cfg.setup.geom.link_lengths = a.link_lengths;
    cfg.setup.geom.link_radii =
        vec_from_json(at(geom, "link_radii", "geometry"), "geometry");

    const json& unc = at(j, "uncertainty", path);
    cfg.setup.base_family.relative_bounds =
        vec_from_json(at(unc, "relative_bounds", "uncertainty"), "uncertainty");
    cfg.setup.base_family.scale = 1.0;

    const json& box = at(j, "state_box", path);
    cfg.setup.state_box.q_halfwidth =
        vec_from_json(at(box, "q_halfwidth", "state_box"), "state_box");
    cfg.setup.state_box.qd_halfwidth =
        vec_from_json(at(box, "qd_halfwidth", "state_box"), "state_box");

    cfg.setup.torque_set.torque_limits =
        vec_from_json(at(j, "torque_limits", path), "torque_limits");

    const double dt = num(j, "dt", path);
    const std::string disc =
        j.value("discretization", std::string("zero_order_hold"));
    DiscreteDynamics::Variant variant;
    if (disc == "zero_order_hold") {
      variant = DiscreteDynamics::Variant::zero_order_hold;
    } else if (disc == "forward_euler") {
      variant = DiscreteDynamics::Variant::forward_euler;
    } else {
      fail(path + ": unknown discretization \"" + disc + "\"");
    }
    cfg.setup.dyn =
        DiscreteDynamics::make(static_cast<int>(a.link_masses.size()), dt,
                               variant);

    const json& mpc = at(j, "mpc", path);
    cfg.setup.mpc.horizon = at(mpc, "horizon", "mpc").get<int>();
    cfg.setup.mpc.Q = weight_from_json(at(mpc, "Q", "mpc"), "mpc.Q");
    cfg.setup.mpc.Q_e = weight_from_json(at(mpc, "Q_e", "mpc"), "mpc.Q_e");
    cfg.setup.mpc.R = weight_from_json(at(mpc, "R", "mpc"), "mpc.R");
    cfg.setup.mpc.epsilon = num(mpc, "epsilon", "mpc");

    const json& syn = at(j, "synthesis", path);
    cfg.setup.constant_samples =
        at(syn, "constant_samples", "synthesis").get<long>();
    cfg.setup.constant_margin = num(syn, "constant_margin", "synthesis");
    cfg.setup.offline_seed = at(syn, "offline_seed", "synthesis").get<uint64_t>();
    const json& grid = at(syn, "rho_grid", "synthesis");
    cfg.setup.rho_grid =
        Vec::LinSpaced(at(grid, "count", "rho_grid").get<int>(),
                       num(grid, "lo", "rho_grid"), num(grid, "hi", "rho_grid"));
    const json& cvx = at(syn, "convexify", "synthesis");
    cfg.setup.convexify.initial_halfwidth =
        num(cvx, "initial_halfwidth", "convexify");
    cfg.setup.convexify.shrink_factor = num(cvx, "shrink_factor", "convexify");
    cfg.setup.convexify.n_samples = at(cvx, "n_samples", "convexify").get<long>();
    cfg.setup.convexify.n_validation =
        at(cvx, "n_validation", "convexify").get<long>();
    cfg.setup.convexify.floor = num(cvx, "floor", "convexify");

    cfg.run = run_from_json(at(j, "run", path));

    const json& inst = at(j, "instances", path);
    cfg.instances.n_obstacles = at(inst, "n_obstacles", "instances").get<int>();
    cfg.instances.radius_lo = num(inst, "radius_lo", "instances");
    cfg.instances.radius_hi = num(inst, "radius_hi", "instances");
    cfg.instances.endpoint_margin = num(inst, "endpoint_margin", "instances");
    cfg.instances.q_margin = num(inst, "q_margin", "instances");
    cfg.instances.line_check_points =
        at(inst, "line_check_points", "instances").get<int>();
    cfg.instances.max_attempts = at(inst, "max_attempts", "instances").get<int>();
    // One source of truth: instance generation confirms plans with the same
    // clearance and planner the episodes use.
    cfg.instances.clearance = cfg.run.clearance;
    cfg.instances.planner = cfg.run.planner;

    const json& bench = at(j, "bench", path);
    cfg.bench.scales.clear();
    for (const json& s : at(bench, "scales", "bench")) {
      if (!s.is_number()) fail("bench.scales: expected numbers");
      cfg.bench.scales.push_back(s.get<double>());
    }
    cfg.bench.modes.clear();
    for (const json& m : at(bench, "modes", "bench")) {
      try {
        cfg.bench.modes.push_back(parse_run_mode(m.get<std::string>()));
      } catch (const std::invalid_argument& e) {
        fail(std::string("bench.modes: ") + e.what());
      }
    }
    cfg.bench.n_instances = at(bench, "n_instances", "bench").get<int>();
    cfg.bench.theta_draws = at(bench, "theta_draws", "bench").get<int>();
    cfg.bench.jobs = at(bench, "jobs", "bench").get<int>();
    cfg.bench.base_seed = cfg.seed;
    cfg.bench.base_run = cfg.run;
    cfg.bench.instance_params = cfg.instances;
  } catch (const json::exception& e) {
    fail(path + ": " + e.what());
  }

  try {
    cfg.setup.validate();
    cfg.run.validate(cfg.setup.mpc.horizon);
    cfg.bench.validate();
  } catch (const std::invalid_argument& e) {
    fail(path + ": " + e.what());
  }
  return cfg;
}

void save_project_config(const ProjectConfig& cfg, const std::string& path) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = cfg.seed;

  json arm;
  arm["link_masses"] = vec_to_json(cfg.setup.arm.link_masses);
  arm["link_lengths"] = vec_to_json(cfg.setup.arm.link_lengths);
  arm["com_offsets"] = vec_to_json(cfg.setup.arm.com_offsets);
  arm["link_inertias"] = vec_to_json(cfg.setup.arm.link_inertias);
  arm["damping_diag"] = vec_to_json(cfg.setup.arm.damping_diag);
  arm["gravity_accel"] = cfg.setup.arm.gravity_accel;
  j["arm"] = std::move(arm);

  j["geometry"]["link_radii"] = vec_to_json(cfg.setup.geom.link_radii);
  j["uncertainty"]["relative_bounds"] =
      vec_to_json(cfg.setup.base_family.relative_bounds);
  j["state_box"]["q_halfwidth"] = vec_to_json(cfg.setup.state_box.q_halfwidth);
  j["state_box"]["qd_halfwidth"] =
      vec_to_json(cfg.setup.state_box.qd_halfwidth);
  j["torque_limits"] = vec_to_json(cfg.setup.torque_set.torque_limits);
  j["dt"] = cfg.setup.dyn.dt;
  j["discretization"] = cfg.setup.dyn.B.col(0).head(1)[0] == 0.0
                            ? "forward_euler"
                            : "zero_order_hold";

  json mpc;
  mpc["horizon"] = cfg.setup.mpc.horizon;
  mpc["Q"] = weight_to_json(cfg.setup.mpc.Q);
  mpc["Q_e"] = weight_to_json(cfg.setup.mpc.Q_e);
  mpc["R"] = weight_to_json(cfg.setup.mpc.R);
  mpc["epsilon"] = cfg.setup.mpc.epsilon;
  j["mpc"] = std::move(mpc);

  json syn;
  syn["constant_samples"] = cfg.setup.constant_samples;
  syn["constant_margin"] = cfg.setup.constant_margin;
  syn["offline_seed"] = cfg.setup.offline_seed;
  syn["rho_grid"] = {{"count", cfg.setup.rho_grid.size()},
                     {"lo", cfg.setup.rho_grid[0]},
                     {"hi", cfg.setup.rho_grid[cfg.setup.rho_grid.size() - 1]}};
  syn["convexify"] = {{"initial_halfwidth", cfg.setup.convexify.initial_halfwidth},
                      {"shrink_factor", cfg.setup.convexify.shrink_factor},
                      {"n_samples", cfg.setup.convexify.n_samples},
                      {"n_validation", cfg.setup.convexify.n_validation},
                      {"floor", cfg.setup.convexify.floor}};
  j["synthesis"] = std::move(syn);

  j["run"] = run_to_json(cfg.run);

  json inst;
  inst["n_obstacles"] = cfg.instances.n_obstacles;
  inst["radius_lo"] = cfg.instances.radius_lo;
  inst["radius_hi"] = cfg.instances.radius_hi;
  inst["endpoint_margin"] = cfg.instances.endpoint_margin;
  inst["q_margin"] = cfg.instances.q_margin;
  inst["line_check_points"] = cfg.instances.line_check_points;
  inst["max_attempts"] = cfg.instances.max_attempts;
  j["instances"] = std::move(inst);

  json bench;
  bench["scales"] = cfg.bench.scales;
  json modes = json::array();
  for (RunMode m : cfg.bench.modes) modes.push_back(rtmpc::to_string(m));
  bench["modes"] = std::move(modes);
  bench["n_instances"] = cfg.bench.n_instances;
  bench["theta_draws"] = cfg.bench.theta_draws;
  bench["jobs"] = cfg.bench.jobs;
  j["bench"] = std::move(bench);

  dump_file(j, path);
}

// ---------------------------------------------------------------------------
// offline artifacts

namespace {

json controller_to_json(const TubeController& c) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["P"] = mat_to_json(c.P);
  j["K"] = mat_to_json(c.K);
  j["P_sqrt"] = mat_to_json(c.P_sqrt);
  j["rho"] = c.rho;
  j["d"] = c.d;
  j["L_beta"] = c.L_beta;
  j["rho_tilde"] = c.rho_tilde;
  j["delta_f"] = c.delta_f;
  j["tightening_x"] = vec_to_json(c.tightening_x);
  j["tightening_u"] = vec_to_json(c.tightening_u);
  j["r_p"] = c.r_p;
  j["w_bar"] = c.w_bar;
  j["delta_bar"] = c.delta_bar;
  j["contractive"] = c.contractive;
  return j;
}

TubeController controller_from_json(const json& j, const std::string& path) {
  check_schema(j, path);
  TubeController c;
  c.P = mat_from_json(at(j, "P", path), path);
  c.K = mat_from_json(at(j, "K", path), path);
  c.P_sqrt = mat_from_json(at(j, "P_sqrt", path), path);
  c.rho = num(j, "rho", path);
  c.d = num(j, "d", path);
  c.L_beta = num(j, "L_beta", path);
  c.rho_tilde = num(j, "rho_tilde", path);
  c.delta_f = num(j, "delta_f", path);
  c.tightening_x = vec_from_json(at(j, "tightening_x", path), path);
  c.tightening_u = vec_from_json(at(j, "tightening_u", path), path);
  c.r_p = num(j, "r_p", path);
  c.w_bar = num(j, "w_bar", path);
  c.delta_bar = num(j, "delta_bar", path);
  c.contractive = at(j, "contractive", path).get<bool>();
  return c;
}

/// Fresh-draw soundness check embedded into the constants artifact: the
/// maximum of ||Delta|| / beta over newly sampled (theta, state, accel).
json validate_constants(const OfflineArtifacts& art, const SystemSetup& setup) {
  const long n = 20000;
  const uint64_t seed = setup.offline_seed ^ 0x76616c6964617465ull;
  Rng rng(seed);
  const UncertaintySet family = setup.family_at(art.scale);
  double max_ratio = 0.0;
  long violations = 0;
  for (long i = 0; i < n; ++i) {
    const Vec theta = family.sample(setup.arm, rng);
    const ArmModel model(setup.arm, theta);
    const State s = setup.state_box.sample(rng);
    const Vec a = art.accel_set.sample(rng);
    const double err = (true_acceleration(model, s, a) - a).norm();
    const double bound = art.consts.beta(s, a);
    const double ratio = bound > 0.0 ? err / bound : (err > 0.0 ? 2.0 : 0.0);
    max_ratio = std::max(max_ratio, ratio);
    if (ratio > 1.0) ++violations;
  }
  json j;
  j["n_samples"] = n;
  j["seed"] = seed;
  j["max_normalized_error"] = max_ratio;
  j["violations"] = violations;
  return j;
}

}  // namespace

void save_artifacts(const OfflineArtifacts& art, const SystemSetup& setup,
                    const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail("cannot create " + dir + ": " + ec.message());

  json consts;
  consts["schema_version"] = kSchemaVersion;
  consts["scale"] = art.scale;
  consts["a"] = art.consts.a;
  consts["b"] = art.consts.b;
  consts["c"] = art.consts.c;
  consts["samples_used"] = art.consts.samples_used;
  consts["margin"] = art.consts.margin;
  consts["offline_seed"] = setup.offline_seed;
  consts["validation"] = validate_constants(art, setup);
  const std::string consts_path = (fs::path(dir) / "consts.json").string();
  dump_file(consts, consts_path);
  const std::string consts_hash = file_hash(consts_path);

  json accel;
  accel["schema_version"] = kSchemaVersion;
  accel["box_halfwidth"] = vec_to_json(art.accel_set.box_halfwidth);
  accel["shrink_iterations"] = art.accel_set.shrink_iterations;
  dump_file(accel, (fs::path(dir) / "accel_set.json").string());

  const auto save_ctrl = [&](const std::optional<TubeController>& c,
                             const char* name) {
    if (!c) return;
    json j = controller_to_json(*c);
    j["provenance"] = {{"offline_seed", setup.offline_seed},
                       {"scale", art.scale},
                       {"consts_hash", consts_hash}};
    dump_file(j, (fs::path(dir) / name).string());
  };
  save_ctrl(art.flexible, "controller_flexible.json");
  save_ctrl(art.rigid, "controller_rigid.json");
}

OfflineArtifacts load_artifacts(const std::string& dir) {
  OfflineArtifacts art;
  const std::string consts_path = (fs::path(dir) / "consts.json").string();
  const json consts = parse_file(consts_path);
  check_schema(consts, consts_path);
  art.scale = num(consts, "scale", consts_path);
  art.consts.a = num(consts, "a", consts_path);
  art.consts.b = num(consts, "b", consts_path);
  art.consts.c = num(consts, "c", consts_path);
  art.consts.samples_used = at(consts, "samples_used", consts_path).get<long>();
  art.consts.margin = num(consts, "margin", consts_path);

  const std::string accel_path = (fs::path(dir) / "accel_set.json").string();
  const json accel = parse_file(accel_path);
  check_schema(accel, accel_path);
  art.accel_set.box_halfwidth =
      vec_from_json(at(accel, "box_halfwidth", accel_path), accel_path);
  art.accel_set.shrink_iterations =
      at(accel, "shrink_iterations", accel_path).get<int>();

  const auto load_ctrl = [&](const char* name, std::string& error)
      -> std::optional<TubeController> {
    const std::string path = (fs::path(dir) / name).string();
    if (!fs::exists(path)) {
      error = std::string(name) + " not present (synthesis failed or not exported)";
      return std::nullopt;
    }
    return controller_from_json(parse_file(path), path);
  };
  art.flexible = load_ctrl("controller_flexible.json", art.flexible_error);
  art.rigid = load_ctrl("controller_rigid.json", art.rigid_error);
  return art;
}

// ---------------------------------------------------------------------------
// traces

void save_trace(const StoredEpisode& episode, const std::string& path) {
  json j;
  j["schema_version"] = kSchemaVersion;

  json inst;
  inst["seed"] = episode.instance.seed;
  inst["q_start"] = vec_to_json(episode.instance.q_start);
  inst["q_goal"] = vec_to_json(episode.instance.q_goal);
  json scene;
  scene["workspace_lo"] = vec_to_json(episode.instance.scene.workspace_lo);
  scene["workspace_hi"] = vec_to_json(episode.instance.scene.workspace_hi);
  json obstacles = json::array();
  for (const Circle& c : episode.instance.scene.obstacles) {
    obstacles.push_back(
        {{"center", vec_to_json(c.center)}, {"radius", c.radius}});
  }
  scene["obstacles"] = std::move(obstacles);
  inst["scene"] = std::move(scene);
  j["instance"] = std::move(inst);

  j["run"] = run_to_json(episode.run);
  j["theta_seed"] = episode.theta_seed;

  const SimTrace& t = episode.trace;
  j["outcome"] = rtmpc::to_string(t.outcome);
  j["steps"] = t.steps;
  j["time_to_goal"] = t.time_to_goal;
  j["max_tube"] = t.max_tube;
  j["solver_error"] = t.solver_error;
  j["diagnostic"] = t.diagnostic;
  j["audit"] = {{"collision", t.audit.collision},
                {"velocity", t.audit.velocity},
                {"configuration", t.audit.configuration},
                {"torque", t.audit.torque},
                {"first_violation_step", t.audit.first_violation_step}};

  json states = json::array();
  for (const State& s : t.states) states.push_back(vec_to_json(s.to_x()));
  j["states"] = std::move(states);
  json torques = json::array();
  for (const Vec& u : t.torques) torques.push_back(vec_to_json(u));
  j["torques"] = std::move(torques);
  json accels = json::array();
  for (const Vec& a : t.accelerations) accels.push_back(vec_to_json(a));
  j["accelerations"] = std::move(accels);

  json solves = json::array();
  for (const SolveRecord& s : t.solves) {
    solves.push_back({{"step", s.step},
                      {"status", to_string(s.status)},
                      {"inaccurate", s.inaccurate},
                      {"cost", s.cost},
                      {"delta_max", s.delta_max},
                      {"virtual_goal_index", s.virtual_goal_index},
                      {"last_ball_index", s.last_ball_index}});
  }
  j["solves"] = std::move(solves);

  dump_file(j, path);
}

StoredEpisode load_trace(const std::string& path) {
  const json j = parse_file(path);
  check_schema(j, path);
  StoredEpisode ep;
  try {
    const json& inst = at(j, "instance", path);
    ep.instance.seed = at(inst, "seed", path).get<uint64_t>();
    ep.instance.q_start = vec_from_json(at(inst, "q_start", path), path);
    ep.instance.q_goal = vec_from_json(at(inst, "q_goal", path), path);
    const json& scene = at(inst, "scene", path);
    ep.instance.scene.workspace_lo =
        vec2_from_json(at(scene, "workspace_lo", path), path);
    ep.instance.scene.workspace_hi =
        vec2_from_json(at(scene, "workspace_hi", path), path);
    for (const json& o : at(scene, "obstacles", path)) {
      Circle c;
      c.center = vec2_from_json(at(o, "center", path), path);
      c.radius = num(o, "radius", path);
      ep.instance.scene.obstacles.push_back(c);
    }

    ep.run = run_from_json(at(j, "run", path));
    ep.theta_seed = at(j, "theta_seed", path).get<uint64_t>();

    SimTrace& t = ep.trace;
    t.outcome = parse_outcome(at(j, "outcome", path).get<std::string>(), path);
    t.steps = at(j, "steps", path).get<int>();
    t.time_to_goal = at(j, "time_to_goal", path).get<int>();
    t.max_tube = num(j, "max_tube", path);
    t.solver_error = at(j, "solver_error", path).get<bool>();
    t.diagnostic = at(j, "diagnostic", path).get<std::string>();
    const json& audit = at(j, "audit", path);
    t.audit.collision = at(audit, "collision", path).get<long>();
    t.audit.velocity = at(audit, "velocity", path).get<long>();
    t.audit.configuration = at(audit, "configuration", path).get<long>();
    t.audit.torque = at(audit, "torque", path).get<long>();
    t.audit.first_violation_step =
        at(audit, "first_violation_step", path).get<int>();

    for (const json& s : at(j, "states", path))
      t.states.push_back(State::from_x(vec_from_json(s, path)));
    for (const json& u : at(j, "torques", path))
      t.torques.push_back(vec_from_json(u, path));
    for (const json& a : at(j, "accelerations", path))
      t.accelerations.push_back(vec_from_json(a, path));
    for (const json& s : at(j, "solves", path)) {
      SolveRecord r;
      r.step = at(s, "step", path).get<int>();
      r.status = parse_status(at(s, "status", path).get<std::string>(), path);
      r.inaccurate = at(s, "inaccurate", path).get<bool>();
      r.cost = num(s, "cost", path);
      r.delta_max = num(s, "delta_max", path);
      r.virtual_goal_index = at(s, "virtual_goal_index", path).get<int>();
      r.last_ball_index = at(s, "last_ball_index", path).get<int>();
      t.solves.push_back(r);
    }
  } catch (const json::exception& e) {
    fail(path + ": " + e.what());
  }
  return ep;
}

// ---------------------------------------------------------------------------
// CSV emission

void write_results_csv(const BenchmarkResults& results,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot write " + path);
  out << "instance_seed,theta_seed,scale,mode,outcome,steps,ratio_vs_oracle,"
         "max_tube,audit_flags\n";
  for (const EpisodeRow& r : results.rows) {
    out << r.instance_seed << ',' << r.theta_seed << ',' << fmt(r.scale) << ','
        << rtmpc::to_string(r.mode) << ',' << rtmpc::to_string(r.outcome)
        << ',' << r.steps << ',' << fmt(r.ratio_vs_oracle) << ','
        << fmt(r.max_tube) << ',' << '"' << r.audit_flags << '"' << '\n';
  }
  if (!out) fail("write failed for " + path);
}

void write_plotdata_csv(const BenchmarkResults& results,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot write " + path);
  out << "scale,mode,episodes,reached,success_rate,mean_ratio,sd2_ratio,"
         "band_lo,band_hi\n";
  std::string partial;
  for (const ScaleModeStats& st : results.stats) {
    const bool has_band = st.ratio_count > 0;
    const double lo = has_band ? st.mean_ratio - st.sd2_ratio
                               : std::numeric_limits<double>::quiet_NaN();
    const double hi = has_band ? st.mean_ratio + st.sd2_ratio
                               : std::numeric_limits<double>::quiet_NaN();
    out << fmt(st.scale) << ',' << rtmpc::to_string(st.mode) << ','
        << st.episodes << ',' << st.reached << ',' << fmt(st.success_rate)
        << ',' << fmt(st.mean_ratio) << ',' << fmt(st.sd2_ratio) << ','
        << fmt(lo) << ',' << fmt(hi) << '\n';
    if (st.synthesis_failed || st.reached == 0) {
      if (!partial.empty()) partial += ' ';
      partial += rtmpc::to_string(st.mode);
      partial += '@';
      partial += fmt(st.scale);
    }
  }
  if (!partial.empty()) out << "partial,\"" << partial << "\"\n";
  if (!out) fail("write failed for " + path);
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open " + path);
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64-bit offset basis
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace rtmpc::io
