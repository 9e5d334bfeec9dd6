#pragma once

// Experiment presets, multi-seed sweeps and result files.

#include <nalm/evaluation.hpp>
#include <nalm/training.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nalm {

// ---- Model variants ----

// A named module configuration. The same kind can appear several times with
// different options (e.g. the original and the modified Real NPU).
struct ModelVariant {
  std::string name;
  ModuleKind kind = ModuleKind::NRU;
  ModuleOptions module;
};

const std::vector<std::string>& variant_names();
ModelVariant find_variant(std::string_view name);

// ---- Presets ----

struct RangePair {
  RangeSpec interpolation;
  RangeSpec extrapolation;
  std::string label;
  // Mixed-sign datasets give each input its own range.
  std::vector<RangeSpec> interpolation_per_input;
  std::vector<RangeSpec> extrapolation_per_input;
};

struct Preset {
  std::string name;
  std::string description;
  std::size_t input_size = 2;
  Operation operation = Operation::Divide;
  std::uint64_t iterations = 50000;
  bool redundancy = false;
  bool regularize = true;
  ThresholdSource threshold = ThresholdSource::Fixed;
  std::vector<RangePair> ranges;
  std::vector<std::string> default_variants;
};

const std::vector<std::string>& preset_names();
const Preset& find_preset(std::string_view name);

// Finds a range of the preset by its label, by a parsed interpolation label
// ("U[1,2)" and "U[1.0,2.0)" are the same range) or, for single-element
// labels, by the interpolation range itself.
const RangePair& find_range(const Preset& preset, std::string_view label);

TaskSpec make_task(const Preset& preset, const RangePair& range);

// Full training configuration of `variant` under the preset's
// hyperparameters (learning rate, regularisation windows, clipping).
TrainConfig preset_config(const Preset& preset, const ModelVariant& variant,
                          const RangePair& range, std::uint64_t seed);

// ---- Golden thresholds ----

struct ThresholdRow {
  std::string preset;
  std::string range_label;
  std::string variant;
  double golden_mse = 0.0;
  double threshold = 0.0;
};

// Golden MSE and threshold of each variant on each range of the presets.
// The test set of every range is drawn from stream 3 of `seed`, as in a run.
std::vector<ThresholdRow> threshold_table(const std::vector<std::string>& presets,
                                          const std::vector<std::string>& variants,
                                          std::uint64_t seed, std::size_t samples,
                                          Precision precision);

// ---- Single-run requests (train subcommand) ----

// Every field can come from a JSON config file and be overridden by flags.
struct TrainRequest {
  std::string preset = "no_redundancy";
  std::string variant = "nru";
  std::string range = "U[1,2)";
  std::optional<std::string> extrapolation;  // required when `range` is not in the preset
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> iterations;
  std::optional<std::uint64_t> eval_every;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::optional<std::string> loss;
  std::optional<std::string> optimizer;
  std::optional<std::size_t> validation_size;
  std::optional<std::size_t> test_size;
  std::optional<bool> regularize;
  std::optional<std::string> threshold;  // "fixed" | "golden"
};

TrainRequest load_train_request(const std::filesystem::path& path);
TrainConfig resolve(const TrainRequest& request);

// Human-readable multi-line summary, and a JSON document with the same data
// plus the best parameters.
std::string format_run_record(const RunRecord& record);
std::string run_record_json(const TrainConfig& config, const RunRecord& record);

// ---- Sweeps ----

struct SweepSpec {
  std::string preset = "no_redundancy";
  std::vector<std::string> variants;  // empty: preset defaults
  std::vector<std::string> ranges;    // empty: all preset ranges
  std::vector<std::uint64_t> seeds;
  std::size_t parallelism = 0;        // 0: hardware concurrency
  std::filesystem::path output_dir = ".";
  // Desk-scale overrides of the preset.
  std::optional<std::uint64_t> iterations;
  std::optional<std::uint64_t> eval_every;
  std::optional<std::size_t> validation_size;
  std::optional<std::size_t> test_size;
  // false writes wall_secs = 0 so result files are reproducible byte for byte.
  bool record_wall_time = true;
};

// Seeds 0..n-1.
std::vector<std::uint64_t> seed_range(std::uint64_t n);

SweepSpec load_sweep_spec(const std::filesystem::path& path);

struct SweepJob {
  std::string run_key;
  std::string variant;
  std::string range_label;
  TrainConfig config;
};

// run_key = <variant>-<fnv1a64(task.canonical()) in hex>-s<seed>
std::string run_key(std::string_view variant, const TaskSpec& task, std::uint64_t seed);
std::vector<SweepJob> plan_sweep(const SweepSpec& spec);

struct ResultRow {
  std::string run_key;
  std::string kind;  // variant name
  std::string range_label;
  std::uint64_t seed = 0;
  bool success = false;
  std::optional<std::uint64_t> solved_at_iter;
  double sparsity_error = 0.0;
  double best_val_loss = 0.0;
  double extrap_mse = 0.0;
  double wall_secs = 0.0;
  std::string status;  // "ok" or "failed: <reason>"
};

inline constexpr std::string_view kResultsHeader =
    "run_key,kind,range_label,seed,success,solved_at_iter,sparsity_error,best_val_loss,"
    "extrap_mse,wall_secs,status";

ResultRow make_result_row(const SweepJob& job, const RunRecord& record, bool record_wall_time);
std::string format_result_row(const ResultRow& row);

struct ParsedResults {
  std::vector<ResultRow> rows;  // duplicates resolved, later rows win
  std::vector<std::string> warnings;
};

// Throws NalmError naming the line of the first malformed row.
ParsedResults read_results(std::istream& in);
ParsedResults read_results(const std::filesystem::path& path);

struct GroupSummary {
  std::string kind;
  std::string range_label;
  std::size_t seeds = 0;
  std::size_t successes = 0;
  std::size_t failures = 0;  // runs with status != ok
  double success_rate = 0.0;
  ConfidenceInterval success_ci;
  // Over successful runs only; empty when there are none.
  std::optional<double> solved_median;
  std::optional<ConfidenceInterval> solved_ci;
  std::optional<double> sparsity_median;
  std::optional<ConfidenceInterval> sparsity_ci;
  std::vector<std::string> failure_reasons;
};

struct SweepSummary {
  std::vector<GroupSummary> groups;  // sorted by (kind, range_label)
  std::vector<std::string> warnings;
};

SweepSummary aggregate(const ParsedResults& results);
SweepSummary aggregate(const std::filesystem::path& results_csv);

void write_summary_csv(std::ostream& out, const SweepSummary& summary);
SweepSummary read_summary_csv(const std::filesystem::path& path);
// Accepts either a results CSV (aggregated on the fly) or a summary CSV.
SweepSummary load_summary(const std::filesystem::path& path);

// Plain-text table, one line per (kind, range).
std::string format_summary(const SweepSummary& summary);

struct SweepOutcome {
  SweepSummary summary;
  std::size_t executed = 0;
  std::size_t skipped = 0;  // already present in results.csv
  std::filesystem::path results_csv;
  std::filesystem::path summary_csv;
};

// Runs every planned job that is not yet in <output_dir>/results.csv, then
// rewrites <output_dir>/summary.csv from the full results file.
SweepOutcome run_sweep(const SweepSpec& spec);

}  // namespace nalm
