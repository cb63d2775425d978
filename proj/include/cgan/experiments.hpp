#pragma once

// Registry of the six reproduction experiments, configuration overrides,
// end-to-end runs and run summaries.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cgan/extrapolate.hpp"
#include "cgan/gan.hpp"

namespace cgan {

enum class ExperimentId {
  InterpFinal,
  InterpIntermediate,
  InterpCircle,
  ExtrapStateRate,
  ExtrapStateOnly,
  ExtrapConstrained,
};

const std::vector<ExperimentId>& all_experiments();
std::string experiment_name(ExperimentId id);
std::optional<ExperimentId> parse_experiment(const std::string& name);
bool is_extrapolation(ExperimentId id);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Overrides {
  std::optional<bool> constraint;
  std::optional<bool> noise;
  std::optional<bool> projection;
  std::optional<double> residual_noise_c;
  std::optional<Index> samples;
  std::optional<std::size_t> max_iter;
};

// Reads flat `key = value` lines (keys mirror the CLI flags). Values already
// set in `into` are kept, so flags parsed first win over the file.
void merge_config_file(const std::string& path, Overrides& into, std::optional<std::uint64_t>& seed,
                       std::optional<std::string>& out_dir);

struct ResolvedRun {
  ExperimentId id = ExperimentId::InterpFinal;
  GanConfig gan;
  std::optional<RolloutConfig> rollout;  // extrapolation experiments
};

ResolvedRun resolve(ExperimentId id, const Overrides& overrides, std::uint64_t seed);

struct RunManifest {
  std::string experiment;
  std::uint64_t seed = 0;
  bool constraint = false;
  std::optional<bool> noise;
  std::optional<bool> projection;
  std::string config_json;  // resolved configuration snapshot
  std::string outcome;      // converged, stalled, max_iter or aborted
  std::string diagnostic;
  std::size_t iterations = 0;
  std::optional<double> final_re_m;
  std::optional<double> final_d_loss_abs;  // mean over the last parcel
  std::optional<double> final_g_loss_abs;
  std::optional<double> test_re_m;
  std::optional<double> max_trajectory_error;
  std::optional<double> max_constraint_violation;
  std::map<std::string, std::string> files;
};

int exit_code(const RunManifest& manifest);

struct RunOptions {
  std::string out_dir;  // empty: write nothing
  std::function<void(const TrainingState&, const ParcelRecord&)> on_parcel;
};

// Trains, rolls out where applicable, and writes CSVs plus manifest.json.
// Training or rollout failures yield an "aborted" manifest, still written.
RunManifest run_experiment(const ResolvedRun& run, const RunOptions& options);

// Extra results kept in memory for callers that inspect the trained nets.
struct RunArtifacts {
  RunManifest manifest;
  std::optional<TrainResult> training;
  std::optional<Trajectory> raw_rollout;
  std::optional<Trajectory> projected_rollout;
  std::vector<double> constraint_grid;  // interp-circle test-grid violations
};
RunArtifacts run_experiment_full(const ResolvedRun& run, const RunOptions& options);

// |(G1 - R)^2 + (G2 - R)^2 - 1| on n evenly spaced points over the domain.
std::vector<double> circle_constraint_grid(const Mlp<double>& generator, const ConstraintSpec& spec,
                                           Index n_points);

std::string manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const std::string& text);
RunManifest read_manifest(const std::string& path);

struct Summary {
  std::string csv;
  std::string table;
};

// One row per run, ordered by experiment then seed.
Summary emit_summary(std::vector<RunManifest> manifests);

}  // namespace cgan
