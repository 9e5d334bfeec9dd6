// nalm: command-line front end for training, sweeps, surfaces and checks.

#include <nalm/experiment.hpp>
#include <nalm/gradcheck.hpp>
#include <nalm/landscape.hpp>
#include <nalm/nalm_core.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace nalm;

namespace {

fs::path default_output_dir() {
  if (const char* env = std::getenv("NALM_OUT_DIR"); env && *env) return env;
  return ".";
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw NalmError("cannot write " + path.string());
  return out;
}

// ---- train ----

struct TrainArgs {
  std::string config;
  TrainRequest request;
  std::string trace;
  std::string json;
  std::string out_dir;
  bool no_reg = false;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* cmd = app.add_subcommand("train", "Train one module on one range and seed");
  cmd->add_option("--config", a.config, "JSON file with train settings; flags override it");
  cmd->add_option("--preset", a.request.preset, "Hyperparameter preset")->capture_default_str();
  cmd->add_option("--model,--kind", a.request.variant, "Model variant")->capture_default_str();
  cmd->add_option("--range", a.request.range, "Interpolation range, e.g. \"U[1,2)\"")
      ->capture_default_str();
  cmd->add_option("--extrapolation", a.request.extrapolation,
                  "Extrapolation range for a range outside the preset");
  cmd->add_option("--seed", a.request.seed, "Run seed")->capture_default_str();
  cmd->add_option("--iterations", a.request.iterations);
  cmd->add_option("--eval-every", a.request.eval_every);
  cmd->add_option("--batch-size", a.request.batch_size);
  cmd->add_option("--lr", a.request.learning_rate, "Learning rate");
  cmd->add_option("--loss", a.request.loss, "mse, pcc or mape");
  cmd->add_option("--optimizer", a.request.optimizer, "adam or sgd");
  cmd->add_option("--val-size", a.request.validation_size);
  cmd->add_option("--test-size", a.request.test_size);
  cmd->add_option("--threshold", a.request.threshold, "fixed or golden");
  cmd->add_flag("--no-reg", a.no_reg, "Disable all regularisation");
  cmd->add_option("--trace", a.trace, "Trace CSV path (default <out-dir>/<run key>-trace.csv)");
  cmd->add_option("--json", a.json, "Also write the run record as JSON");
  cmd->add_option("--out-dir", a.out_dir, "Output directory (default $NALM_OUT_DIR or .)");
}

// Flags given on the command line win over the config file.
TrainRequest merge(const CLI::App& cmd, const TrainArgs& a) {
  if (a.config.empty()) return a.request;
  TrainRequest r = load_train_request(a.config);
  const TrainRequest& f = a.request;
  auto given = [&](const char* name) { return cmd.count(name) > 0; };
  if (given("--preset")) r.preset = f.preset;
  if (given("--model")) r.variant = f.variant;
  if (given("--range")) r.range = f.range;
  if (given("--extrapolation")) r.extrapolation = f.extrapolation;
  if (given("--seed")) r.seed = f.seed;
  if (given("--iterations")) r.iterations = f.iterations;
  if (given("--eval-every")) r.eval_every = f.eval_every;
  if (given("--batch-size")) r.batch_size = f.batch_size;
  if (given("--lr")) r.learning_rate = f.learning_rate;
  if (given("--loss")) r.loss = f.loss;
  if (given("--optimizer")) r.optimizer = f.optimizer;
  if (given("--val-size")) r.validation_size = f.validation_size;
  if (given("--test-size")) r.test_size = f.test_size;
  if (given("--threshold")) r.threshold = f.threshold;
  return r;
}

int run_train(const CLI::App& cmd, const TrainArgs& a) {
  TrainRequest request = merge(cmd, a);
  if (a.no_reg) request.regularize = false;
  const TrainConfig config = resolve(request);
  const RunRecord record = train_run(config);

  const fs::path out_dir = a.out_dir.empty() ? default_output_dir() : fs::path(a.out_dir);
  const fs::path trace = a.trace.empty()
                             ? out_dir / (run_key(request.variant, config.task, config.seed) +
                                          "-trace.csv")
                             : fs::path(a.trace);
  {
    std::ofstream out = open_output(trace);
    write_trace_csv(out, record);
  }
  if (!a.json.empty()) {
    std::ofstream out = open_output(a.json);
    out << run_record_json(config, record);
  }
  std::cout << "model             " << request.variant << "\n"
            << "task              " << config.task.canonical() << "\n"
            << "seed              " << config.seed << "\n"
            << format_run_record(record) << "trace             " << trace.string() << "\n";
  return 0;
}

// ---- sweep ----

struct SweepArgs {
  std::string config;
  SweepSpec spec;
  std::uint64_t seeds = 25;
  std::vector<std::uint64_t> seed_list;
  std::string out_dir;
  bool no_wall_time = false;
};

void add_sweep(CLI::App& app, SweepArgs& a) {
  auto* cmd = app.add_subcommand("sweep", "Run a preset over models, ranges and seeds");
  cmd->add_option("--config", a.config, "JSON file with sweep settings; flags override it");
  cmd->add_option("--preset", a.spec.preset)->capture_default_str();
  cmd->add_option("--models,--kinds", a.spec.variants, "Model variants (default: preset's)")
      ->delimiter(',');
  cmd->add_option("--ranges", a.spec.ranges, "Range labels (default: all of the preset)")
      ->delimiter(';');
  cmd->add_option("--seeds", a.seeds, "Number of seeds, 0..N-1")->capture_default_str();
  cmd->add_option("--seed-list", a.seed_list, "Explicit seeds")->delimiter(',');
  cmd->add_option("--jobs", a.spec.parallelism, "Worker threads (0: all cores)");
  cmd->add_option("--out-dir", a.out_dir, "Output directory (default $NALM_OUT_DIR or .)");
  cmd->add_option("--iterations", a.spec.iterations, "Override the preset's iterations");
  cmd->add_option("--eval-every", a.spec.eval_every);
  cmd->add_option("--val-size", a.spec.validation_size);
  cmd->add_option("--test-size", a.spec.test_size);
  cmd->add_flag("--no-wall-time", a.no_wall_time, "Write wall_secs = 0");
}

int run_sweep_cmd(const CLI::App& cmd, const SweepArgs& a) {
  SweepSpec spec;
  auto given = [&](const char* name) { return cmd.count(name) > 0; };
  const bool from_file = !a.config.empty();
  if (from_file) spec = load_sweep_spec(a.config);
  if (!from_file || given("--preset")) spec.preset = a.spec.preset;
  if (!from_file || given("--models")) spec.variants = a.spec.variants;
  if (!from_file || given("--ranges")) spec.ranges = a.spec.ranges;
  if (given("--seed-list")) {
    spec.seeds = a.seed_list;
  } else if (!from_file || given("--seeds")) {
    spec.seeds = seed_range(a.seeds);
  }
  if (!from_file || given("--jobs")) spec.parallelism = a.spec.parallelism;
  if (given("--out-dir")) {
    spec.output_dir = a.out_dir;
  } else if (!from_file) {
    spec.output_dir = default_output_dir();
  }
  if (given("--iterations")) spec.iterations = a.spec.iterations;
  if (given("--eval-every")) spec.eval_every = a.spec.eval_every;
  if (given("--val-size")) spec.validation_size = a.spec.validation_size;
  if (given("--test-size")) spec.test_size = a.spec.test_size;
  if (a.no_wall_time) spec.record_wall_time = false;

  const SweepOutcome outcome = run_sweep(spec);
  std::cout << "runs executed " << outcome.executed << ", skipped " << outcome.skipped << "\n"
            << "results " << outcome.results_csv.string() << "\n"
            << "summary " << outcome.summary_csv.string() << "\n\n"
            << format_summary(outcome.summary);
  return 0;
}

// ---- landscape ----

struct LandscapeArgs {
  std::string kind = "nmru";
  std::size_t resolution = 401;
  std::string out;
  std::optional<double> epsilon;
};

void add_landscape(CLI::App& app, LandscapeArgs& a) {
  auto* cmd = app.add_subcommand("landscape", "RMSE surface of a NAU stacked on a module");
  cmd->add_option("--kind", a.kind, "realnpu, nru or nmru")->capture_default_str();
  cmd->add_option("--res", a.resolution, "Grid points per axis")->capture_default_str();
  cmd->add_option("--out", a.out, "CSV path (default <$NALM_OUT_DIR>/surface-<kind>.csv)");
  cmd->add_option("--epsilon", a.epsilon, "Override the module epsilon");
}

int run_landscape(const LandscapeArgs& a) {
  SurfaceSpec spec = SurfaceSpec::defaults(parse_module_kind(a.kind));
  spec.resolution = a.resolution;
  if (a.epsilon) spec.epsilon = *a.epsilon;
  const Surface surface = rmse_surface(spec);
  const fs::path out = a.out.empty() ? default_output_dir() / ("surface-" + a.kind + ".csv")
                                     : fs::path(a.out);
  {
    std::ofstream file = open_output(out);
    write_surface_csv(file, surface);
  }
  std::printf("surface %s: %zu x %zu points, max finite rmse %.6g, %s\n", a.kind.c_str(),
              surface.w1.size(), surface.w2.size(), surface.max_finite(),
              surface.all_finite() ? "all finite" : "contains non-finite values");
  std::printf("written to %s\n", out.string().c_str());
  return 0;
}

// ---- verify-grad ----

struct GradArgs {
  std::string kind = "all";
  std::size_t trials = 100;
  std::uint64_t seed = 0;
};

void add_verify_grad(CLI::App& app, GradArgs& a) {
  auto* cmd = app.add_subcommand("verify-grad", "Finite-difference check of every backward pass");
  cmd->add_option("--kind", a.kind, "Module kind or 'all'")->capture_default_str();
  cmd->add_option("--trials", a.trials)->capture_default_str();
  cmd->add_option("--seed", a.seed)->capture_default_str();
}

int run_verify_grad(const GradArgs& a) {
  std::vector<ModuleKind> kinds;
  if (a.kind == "all") {
    kinds.assign(std::begin(kAllKinds), std::end(kAllKinds));
  } else {
    kinds.push_back(parse_module_kind(a.kind));
  }
  constexpr double kTolerance = 1e-4;
  constexpr double kClosedFormTolerance = 1e-9;
  bool ok = true;
  std::printf("%-8s %7s %9s %14s %s\n", "kind", "trials", "entries", "max rel err", "");
  for (ModuleKind kind : kinds) {
    GradCheckOptions options;
    options.trials = a.trials;
    options.seed = a.seed;
    const GradCheckReport r = check_gradients(kind, options);
    const bool pass = r.max_relative_error < kTolerance &&
                      r.max_closed_form_error < kClosedFormTolerance;
    ok = ok && pass;
    std::printf("%-8s %7zu %9zu %14.3e %s", std::string(to_string(kind)).c_str(), r.trials,
                r.entries_checked, r.max_relative_error, pass ? "ok" : "FAIL");
    if (kind == ModuleKind::NRU) std::printf("  (closed form %.3e)", r.max_closed_form_error);
    std::printf("\n");
  }
  return ok ? 0 : 1;
}

// ---- thresholds ----

struct ThresholdArgs {
  std::vector<std::string> presets{"small_reciprocal_in1", "small_reciprocal_in2",
                                   "small_divide_in2"};
  std::vector<std::string> models{"realnpu", "nru", "nmru"};
  std::uint64_t seed = 0;
  std::size_t samples = 10000;
  std::string precision = "f32";
  std::string out;
};

void add_thresholds(CLI::App& app, ThresholdArgs& a) {
  auto* cmd = app.add_subcommand("thresholds", "Golden-solution thresholds of the small-value tasks");
  cmd->add_option("--presets", a.presets)->delimiter(',');
  cmd->add_option("--models", a.models)->delimiter(',');
  cmd->add_option("--seed", a.seed, "Seed of the test sets")->capture_default_str();
  cmd->add_option("--samples", a.samples, "Test-set size")->capture_default_str();
  cmd->add_option("--precision", a.precision, "f32 or f64")->capture_default_str();
  cmd->add_option("--out", a.out, "Also write the table as CSV");
}

int run_thresholds(const ThresholdArgs& a) {
  Precision precision = Precision::F32;
  if (a.precision == "f64") {
    precision = Precision::F64;
  } else if (a.precision != "f32") {
    throw NalmError("precision must be f32 or f64");
  }
  const auto rows = threshold_table(a.presets, a.models, a.seed, a.samples, precision);
  std::printf("%-22s %-14s %-10s %14s %14s\n", "task", "range", "model", "golden mse",
              "threshold");
  for (const ThresholdRow& r : rows) {
    std::printf("%-22s %-14s %-10s %14.6e %14.6e\n", r.preset.c_str(), r.range_label.c_str(),
                r.variant.c_str(), r.golden_mse, r.threshold);
  }
  if (!a.out.empty()) {
    std::ofstream out = open_output(a.out);
    out << "task,range_label,model,golden_mse,threshold\n";
    char buf[256];
    for (const ThresholdRow& r : rows) {
      std::snprintf(buf, sizeof buf, "%s,%s,%s,%.17g,%.17g\n", r.preset.c_str(),
                    r.range_label.c_str(), r.variant.c_str(), r.golden_mse, r.threshold);
      out << buf;
    }
  }
  return 0;
}

// ---- report ----

struct ReportArgs {
  std::string input;
};

void add_report(CLI::App& app, ReportArgs& a) {
  auto* cmd = app.add_subcommand("report", "Print a summary table from results.csv or summary.csv");
  cmd->add_option("input", a.input, "results.csv or summary.csv")->required();
}

int run_report(const ReportArgs& a) {
  std::cout << format_summary(load_summary(a.input));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural arithmetic module laboratory"};
  app.require_subcommand(1);

  TrainArgs train;
  SweepArgs sweep;
  LandscapeArgs landscape;
  GradArgs grad;
  ThresholdArgs thresholds;
  ReportArgs report;
  add_train(app, train);
  add_sweep(app, sweep);
  add_landscape(app, landscape);
  add_verify_grad(app, grad);
  add_thresholds(app, thresholds);
  add_report(app, report);

  CLI11_PARSE(app, argc, argv);

  try {
    const CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    if (name == "train") return run_train(*cmd, train);
    if (name == "sweep") return run_sweep_cmd(*cmd, sweep);
    if (name == "landscape") return run_landscape(landscape);
    if (name == "verify-grad") return run_verify_grad(grad);
    if (name == "thresholds") return run_thresholds(thresholds);
    if (name == "report") return run_report(report);
  } catch (const NalmError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
