#pragma once

#include <optional>
#include <string>
#include <vector>

#include "arft/baselines.hpp"
#include "arft/dataset.hpp"
#include "arft/losses.hpp"
#include "arft/model.hpp"
#include "arft/stats.hpp"
#include "arft/synth.hpp"
#include "arft/train.hpp"

namespace arft {

inline constexpr const char* kToolVersion = "arft 1.0.0";

// Resolved experiment description. Serializes to/from a JSON document; the
// same schema is used for config files and for manifest snapshots, so any
// manifest can be re-run as-is.
struct ExperimentSpec {
  std::vector<std::string> sources;  // CSV paths, all labeled
  std::string target;                // CSV path
  std::string label_column = "label";
  // When set, this column of the target CSV holds ground truth: it is
  // stripped before training (fit never sees it) and used only to score
  // predictions. When absent the run emits predictions without metrics.
  std::optional<std::string> target_label_column;
  std::string variant = "arft";  // arft | baseline | baseline+attent | baseline+focal
  std::string out_dir;           // empty: nothing is written to disk

  ModelConfig model;   // model.p is resolved from the data
  FocalConfig focal;
  MMDConfig mmd;
  LossSchedule sched;
  TrainConfig train;   // train.seed is overridden per seed below
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};

  void validate() const;
};

// Applies the variant switches to a copy of the experiment's configs:
//   arft            attention on,  focal gamma as configured, MMD ramp on
//   baseline        attention off, gamma = 0 (plain CE),      MMD off
//   baseline+focal  attention off, gamma as configured,       MMD off
//   baseline+attent attention on,  gamma = 0,                 MMD off
ExperimentSpec apply_variant(const ExperimentSpec& spec);

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<int> predictions;
  bool has_metrics = false;
  EvalReport report;  // valid only when has_metrics
};

struct RunManifest {
  std::string experiment_id;  // e.g. "linux+httpd=>mysql"
  std::string variant;
  std::string tool_version;
  std::string config_snapshot;  // resolved spec as a JSON document
  std::vector<SeedRun> per_seed;
  bool has_metrics = false;
  Metrics mean;    // arithmetic mean of per-seed pd/pf/bal
  Metrics stddev;  // population standard deviation over seeds
};

// Full pipeline, one pass per seed: concat sources -> global normalize ->
// oversample -> fit -> predict on target (-> score when truth is available).
// Writes manifest.json, metrics.csv and per-seed artifacts when out_dir is
// set. Any stage failure is rethrown with the stage name prefixed.
RunManifest run(const ExperimentSpec& spec);

// Loads and prepares data once (useful to callers that loop over variants).
struct LoadedPair {
  Dataset source;                          // concatenated, labeled
  Dataset target;                          // unlabeled
  std::optional<std::vector<int>> truth;   // target labels when available
};
LoadedPair load_pair(const ExperimentSpec& spec);

// In-memory variant of run() for preloaded datasets (used by the test
// harness and the synthetic acceptance experiment).
RunManifest run_on_data(const ExperimentSpec& spec, const LoadedPair& data);

struct AblateResult {
  std::vector<RunManifest> variants;  // baseline, baseline+focal, baseline+attent, arft
  std::string table;                  // aligned-text summary with Impv. column
};

// Runs the four ablation variants under one shared seed list and reports
// improvement over the baseline as (b - a) / a.
AblateResult ablate(const ExperimentSpec& spec);

struct SweepGroup {
  std::string name;                   // e.g. "L=>M"
  std::vector<std::string> sources;
  std::string target;
};

struct SweepResult {
  std::string axis;                   // "heads" | "gamma"
  std::vector<double> values;
  std::vector<std::string> group_names;
  std::vector<std::vector<RunManifest>> cells;  // [group][value]
  std::string table;                  // values x (groups, Avg.) Bal table
};

// One run per (group, axis value). For the heads axis every value must
// divide d_token; violations are rejected before any training starts.
SweepResult sweep(const ExperimentSpec& base, const std::vector<SweepGroup>& groups,
                  const std::string& axis, const std::vector<double>& values);

// Default sweep grids.
std::vector<double> default_axis_values(const std::string& axis);

// Correlation analysis: load CSV, report, optionally write a CSV listing all
// pairs plus a summary line.
CorrelationReport analyze(const std::string& csv_path,
                          const std::optional<std::string>& label_column, double rho_abs_min,
                          double alpha, const std::string& out_csv);

// Writes source.csv (labeled), target.csv (unlabeled), target_truth.csv
// (row,label) under out_dir.
void gen_synth(const SynthConfig& cfg, const std::string& out_dir);

// Joins a predictions CSV (row,prediction) with a truth CSV (row,label) and
// scores them.
EvalReport evaluate(const std::string& predictions_csv, const std::string& truth_csv);

// Serialization between spec and JSON text (config files, snapshots).
std::string spec_to_json(const ExperimentSpec& spec);
ExperimentSpec spec_from_json(const std::string& json_text);

// Writes predictions as "row,prediction" CSV.
void write_predictions_csv(const std::vector<int>& predictions, const std::string& path);

}  // namespace arft
