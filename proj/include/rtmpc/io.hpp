#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "rtmpc/sim.hpp"

namespace rtmpc::io {

/// Schema tag stamped into every JSON artifact this project writes; loaders
/// reject files whose tag does not match.
inline constexpr int kSchemaVersion = 1;

/// Configuration or file-format problem: missing file, malformed JSON,
/// missing key, schema mismatch. The CLI maps this to its usage exit code.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Everything a command needs, read from one JSON config file: the physical
/// system, instance-generation parameters, single-run defaults, and the
/// benchmark plan. `seed` feeds instance generation and the benchmark chain.
struct ProjectConfig {
  SystemSetup setup;
  InstanceParams instances;
  RunConfig run;
  BenchmarkPlan bench;
  uint64_t seed = 1;
};

/// Loads and validates a project config. Throws ConfigError on any file,
/// parse, schema, or consistency problem.
ProjectConfig load_project_config(const std::string& path);

/// Writes the config back out (diagonal MPC weights only). Used by tests to
/// round-trip and by users to template new configs.
void save_project_config(const ProjectConfig& cfg, const std::string& path);

/// Writes consts.json, accel_set.json, and controller_{flexible,rigid}.json
/// into `dir` (created if absent). The constants file embeds a fresh
/// Monte-Carlo validation report drawn from the setup at the artifact scale.
/// Controllers that failed synthesis produce no file; their error strings
/// are returned in the artifact struct as loaded.
void save_artifacts(const OfflineArtifacts& art, const SystemSetup& setup,
                    const std::string& dir);

/// Loads artifacts written by save_artifacts. Missing controller files turn
/// into empty optionals with an explanatory error string; a missing consts
/// or accel-set file is a ConfigError.
OfflineArtifacts load_artifacts(const std::string& dir);

/// A persisted episode: everything needed to replay the audit offline.
struct StoredEpisode {
  ProblemInstance instance;
  RunConfig run;
  uint64_t theta_seed = 0;
  SimTrace trace;
};

/// Writes one episode (instance, run configuration, and full trace) as JSON.
void save_trace(const StoredEpisode& episode, const std::string& path);

/// Loads a trace file written by save_trace. Throws ConfigError on schema
/// or parse problems.
StoredEpisode load_trace(const std::string& path);

/// One row per episode, schema:
/// instance_seed,theta_seed,scale,mode,outcome,steps,ratio_vs_oracle,
/// max_tube,audit_flags
void write_results_csv(const BenchmarkResults& results,
                       const std::string& path);

/// Per (scale, mode) aggregate rows with the mean time ratio and its
/// 2-sigma band. Scale/mode combinations that produced no successful
/// episode (or failed synthesis outright) are listed in a trailing
/// `partial,...` footer row so plots know the curve ends there.
void write_plotdata_csv(const BenchmarkResults& results,
                        const std::string& path);

/// FNV-1a hash of a file's bytes, as fixed-width hex. Used for provenance
/// stamps and the CLI's determinism checks.
std::string file_hash(const std::string& path);

}  // namespace rtmpc::io
