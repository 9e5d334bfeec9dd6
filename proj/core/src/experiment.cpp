#include <nalm/experiment.hpp>

#include "csv.hpp"

#include <nalm/nalm_core.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace nalm {
namespace {

using nlohmann::json;

// ---- Variants ----

std::vector<ModelVariant> build_variants() {
  std::vector<ModelVariant> v;
  ModuleOptions unmodified;
  unmodified.constrained_init = false;
  unmodified.clip_weights = false;
  unmodified.clip_gates = false;

  v.push_back({"realnpu", ModuleKind::RealNPU, {}});
  v.push_back({"realnpu-baseline", ModuleKind::RealNPU, unmodified});
  v.push_back({"npu", ModuleKind::NPU, unmodified});
  ModuleOptions npu_clip;
  npu_clip.clip_imaginary = true;
  v.push_back({"npu-clip-reg", ModuleKind::NPU, npu_clip});
  v.push_back({"nru", ModuleKind::NRU, {}});
  v.push_back({"nru-sep", ModuleKind::NRUSeparateSign, {}});
  v.push_back({"nmru", ModuleKind::NMRU, {}});
  ModuleOptions nosign;
  nosign.nmru_sign = false;
  v.push_back({"nmru-nosign", ModuleKind::NMRU, nosign});
  v.push_back({"nmru-noclip", ModuleKind::NMRU, {}});
  ModuleOptions gated;
  gated.nmru_gate = true;
  v.push_back({"nmru-gate", ModuleKind::NMRU, gated});
  v.push_back({"nmu", ModuleKind::NMU, {}});
  v.push_back({"nau", ModuleKind::NAU, {}});
  return v;
}

const std::vector<ModelVariant>& all_variants() {
  static const std::vector<ModelVariant> variants = build_variants();
  return variants;
}

bool is_npu_family(const ModelVariant& v) {
  return v.kind == ModuleKind::RealNPU || v.kind == ModuleKind::NPU;
}

bool is_unmodified_npu(const ModelVariant& v) {
  return v.name == "realnpu-baseline" || v.name == "npu";
}

// ---- Presets ----

RangePair pair(const char* interpolation, const char* extrapolation) {
  RangePair p;
  p.interpolation = parse_range(interpolation);
  p.extrapolation = parse_range(extrapolation);
  p.label = p.interpolation.label();
  return p;
}

RangePair mixed(int id, const char* a, const char* b, const char* ea, const char* eb) {
  RangePair p;
  p.interpolation_per_input = {parse_range(a), parse_range(b)};
  p.extrapolation_per_input = {parse_range(ea), parse_range(eb)};
  p.interpolation = p.interpolation_per_input.front();
  p.extrapolation = p.extrapolation_per_input.front();
  p.label = "mixed-" + std::to_string(id);
  return p;
}

std::vector<RangePair> uniform_ranges() {
  return {
      pair("U[-20,-10)", "U[-40,-20)"),   pair("U[-2,-1)", "U[-6,-2)"),
      pair("U[-1.2,-1.1)", "U[-6.1,-1.2)"), pair("U[-0.2,-0.1)", "U[-2,-0.2)"),
      pair("U[-2,2)", "U[[-6,-2),[2,6)]"), pair("U[0.1,0.2)", "U[0.2,2)"),
      pair("U[1,2)", "U[2,6)"),           pair("U[1.1,1.2)", "U[1.2,6)"),
      pair("U[10,20)", "U[20,40)"),
  };
}

std::vector<RangePair> distribution_ranges() {
  return {
      pair("TN(-1,3)[-5,10)", "TN(-10,3)[-15,-5)"),
      pair("TN(0,1)[-5,5)", "TN(10,1)[5,15)"),
      pair("TN(1,3)[-10,5)", "TN(10,3)[5,15)"),
      pair("B[10,100)", "B[100,1000)"),
      pair("U[-100,100)", "U[[-200,-100),[100,200)]"),
      pair("U[-50,50)", "U[[-100,-50),[50,100)]"),
  };
}

std::vector<RangePair> small_ranges() {
  std::vector<RangePair> out;
  for (double ub : {1.0, 1e-1, 1e-2, 1e-3, 1e-4}) {
    RangePair p;
    p.interpolation = RangeSpec::uniform_open(0.0, ub);
    p.extrapolation = p.interpolation;
    p.label = p.interpolation.label();
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Preset> build_presets() {
  const std::vector<std::string> main_variants = {"realnpu-baseline", "realnpu", "nru", "nmru"};
  const std::vector<std::string> three = {"realnpu", "nru", "nmru"};
  std::vector<Preset> presets;

  Preset p;
  p.name = "no_redundancy";
  p.description = "a / b with input size 2, 50k iterations, uniform ranges";
  p.input_size = 2;
  p.iterations = 50000;
  p.ranges = uniform_ranges();
  p.default_variants = main_variants;
  presets.push_back(p);

  p.name = "redundancy";
  p.description = "a / b with input size 10 (8 redundant inputs), 100k iterations";
  p.input_size = 10;
  p.iterations = 100000;
  p.redundancy = true;
  presets.push_back(p);

  p = Preset{};
  p.name = "mixed_sign";
  p.description = "a / b with input size 2, each input drawn from its own range";
  p.input_size = 2;
  p.iterations = 50000;
  p.ranges = {
      mixed(1, "U[-2,-0.1)", "U[0.1,2)", "U[-6,-2)", "U[2,6)"),
      mixed(2, "U[-2,-1)", "U[1,2)", "U[-6,-2)", "U[2,6)"),
      mixed(3, "U[-2,2)", "U[-2,2)", "U[-6,-2)", "U[2,6)"),
      mixed(4, "U[0.1,2)", "U[-2,-0.1)", "U[2,6)", "U[-6,-2)"),
      mixed(5, "U[1,2)", "U[-2,-1)", "U[2,6)", "U[-6,-2)"),
  };
  p.default_variants = three;
  presets.push_back(p);

  p = Preset{};
  p.name = "distributions_in2";
  p.description = "a / b with input size 2, truncated normal, Benford and wide uniform";
  p.input_size = 2;
  p.iterations = 50000;
  p.ranges = distribution_ranges();
  p.default_variants = three;
  presets.push_back(p);

  p.name = "distributions_in10";
  p.description = "a / b with input size 10, truncated normal, Benford and wide uniform";
  p.input_size = 10;
  p.iterations = 100000;
  p.redundancy = true;
  presets.push_back(p);

  p = Preset{};
  p.name = "small_reciprocal_in1";
  p.description = "1 / a near zero, input size 1, 5k iterations, no regularisation";
  p.input_size = 1;
  p.operation = Operation::Reciprocal;
  p.iterations = 5000;
  p.regularize = false;
  p.threshold = ThresholdSource::GoldenPlusEps;
  p.ranges = small_ranges();
  p.default_variants = three;
  presets.push_back(p);

  p.name = "small_reciprocal_in2";
  p.description = "1 / a near zero with one redundant input, 50k iterations";
  p.input_size = 2;
  p.iterations = 50000;
  p.regularize = true;
  presets.push_back(p);

  p.name = "small_divide_in2";
  p.description = "a / b near zero, input size 2, 50k iterations";
  p.operation = Operation::Divide;
  presets.push_back(p);

  return presets;
}

const std::vector<Preset>& all_presets() {
  static const std::vector<Preset> presets = build_presets();
  return presets;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
  return out;
}

// ---- JSON helpers ----

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NalmError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw NalmError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw NalmError(std::string("config key '") + key + "' has the wrong type");
  }
}

template <typename T>
void read_field(const json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  T value{};
  read_field(j, key, value);
  out = value;
}

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> known) {
  if (!j.is_object()) throw NalmError("config file must contain a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw NalmError("unknown config key '" + key + "'");
    }
  }
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json params_json(const ModuleParams& p) {
  json j;
  j["kind"] = std::string(to_string(p.kind));
  j["weights"] = matrix_json(p.weights);
  if (p.imaginary) j["imaginary"] = matrix_json(*p.imaginary);
  if (p.gate) j["gate"] = std::vector<double>(p.gate->data(), p.gate->data() + p.gate->size());
  return j;
}

// ---- Results ----

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string optional_cell(const std::optional<double>& v) {
  return v ? csv::format_double(*v) : std::string();
}

std::optional<double> parse_optional(const std::string& cell, std::string_view what) {
  if (cell.empty()) return std::nullopt;
  return csv::parse_double(cell, what);
}

constexpr std::string_view kSummaryHeader =
    "kind,range_label,seeds,successes,success_rate,success_ci_low,success_ci_high,"
    "solved_median,solved_ci_low,solved_ci_high,sparsity_median,sparsity_ci_low,"
    "sparsity_ci_high,failures";

}  // namespace

// ---- Variants and presets ----

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const ModelVariant& v : all_variants()) out.push_back(v.name);
    return out;
  }();
  return names;
}

ModelVariant find_variant(std::string_view name) {
  for (const ModelVariant& v : all_variants()) {
    if (v.name == name) return v;
  }
  throw NalmError("unknown model '" + std::string(name) + "' (known: " + join(variant_names()) +
                  ")");
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const Preset& p : all_presets()) out.push_back(p.name);
    return out;
  }();
  return names;
}

const Preset& find_preset(std::string_view name) {
  for (const Preset& p : all_presets()) {
    if (p.name == name) return p;
  }
  throw NalmError("unknown preset '" + std::string(name) + "' (known: " + join(preset_names()) +
                  ")");
}

const RangePair& find_range(const Preset& preset, std::string_view label) {
  for (const RangePair& r : preset.ranges) {
    if (r.label == label) return r;
  }
  std::string canonical;
  try {
    canonical = parse_range(label).label();
  } catch (const NalmError&) {
  }
  if (!canonical.empty()) {
    for (const RangePair& r : preset.ranges) {
      if (r.interpolation_per_input.empty() && r.interpolation.label() == canonical) return r;
    }
  }
  std::vector<std::string> labels;
  for (const RangePair& r : preset.ranges) labels.push_back(r.label);
  throw NalmError("range '" + std::string(label) + "' is not part of preset " + preset.name +
                  " (known: " + join(labels) + ")");
}

TaskSpec make_task(const Preset& preset, const RangePair& range) {
  TaskSpec t;
  if (range.interpolation_per_input.empty()) {
    t = make_task(preset.operation, preset.input_size, range.interpolation, range.extrapolation);
  } else {
    t.input_size = preset.input_size;
    t.operation = preset.operation;
    t.interpolation = range.interpolation_per_input;
    t.extrapolation = range.extrapolation_per_input;
    t.validate();
  }
  t.label = range.label;
  return t;
}

TrainConfig preset_config(const Preset& preset, const ModelVariant& variant,
                          const RangePair& range, std::uint64_t seed) {
  TrainConfig c;
  c.kind = variant.kind;
  c.module = variant.module;
  c.task = make_task(preset, range);
  c.iterations = preset.iterations;
  c.batch_size = 128;
  c.validation_size = 10000;
  c.test_size = 10000;
  c.eval_every = 1000;
  c.seed = seed;
  c.threshold = preset.threshold;

  const bool npu_family = is_npu_family(variant);
  const bool nru_family =
      variant.kind == ModuleKind::NRU || variant.kind == ModuleKind::NRUSeparateSign;
  if (npu_family) {
    c.learning_rate = 5e-3;
  } else if (nru_family) {
    c.learning_rate = preset.redundancy ? 1e-3 : 1.0;
  } else {
    c.learning_rate = 1e-2;
  }

  if (variant.kind == ModuleKind::NMRU && variant.name != "nmru-noclip") c.grad_norm_clip = 1.0;

  if (preset.regularize) {
    std::uint64_t start = 20000;
    std::uint64_t end = 35000;
    if (preset.redundancy) {
      start = 50000;
      end = 75000;
    } else if (npu_family) {
      start = 40000;
      end = 50000;
    }
    if (npu_family) {
      RegSchedule l1 = RegSchedule::l1(1e-9, 1e-7, 10.0, 10000);
      l1.include_imaginary = variant.name == "npu-clip-reg";
      c.regularizers.push_back(l1);
      if (!is_unmodified_npu(variant)) {
        c.regularizers.push_back(RegSchedule::discretization(1.0, start, end));
      }
    } else {
      c.regularizers.push_back(RegSchedule::discretization(10.0, start, end));
    }
  }
  c.validate();
  return c;
}

std::vector<ThresholdRow> threshold_table(const std::vector<std::string>& presets,
                                          const std::vector<std::string>& variants,
                                          std::uint64_t seed, std::size_t samples,
                                          Precision precision) {
  std::vector<ThresholdRow> rows;
  for (const std::string& preset_name : presets) {
    const Preset& preset = find_preset(preset_name);
    for (const RangePair& range : preset.ranges) {
      const TaskSpec task = make_task(preset, range);
      Rng rng = make_rng(seed, 3);
      const Batch test = build_batch(task, Split::Test, samples, rng);
      for (const std::string& name : variants) {
        const ModelVariant variant = find_variant(name);
        ThresholdRow row;
        row.preset = preset.name;
        row.range_label = range.label;
        row.variant = variant.name;
        row.golden_mse = golden_mse(variant.kind, task, test, variant.module, precision);
        row.threshold = compute_threshold(task, variant.kind, ThresholdSource::GoldenPlusEps, test,
                                          variant.module, precision)
                            .value;
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

// ---- Train requests ----

TrainRequest load_train_request(const std::filesystem::path& path) {
  const json j = read_json(path);
  reject_unknown_keys(j, {"preset", "model", "range", "extrapolation", "seed", "iterations",
                          "eval_every", "batch_size", "learning_rate", "loss", "optimizer",
                          "validation_size", "test_size", "regularize", "threshold"});
  TrainRequest r;
  read_field(j, "preset", r.preset);
  read_field(j, "model", r.variant);
  read_field(j, "range", r.range);
  read_field(j, "extrapolation", r.extrapolation);
  read_field(j, "seed", r.seed);
  read_field(j, "iterations", r.iterations);
  read_field(j, "eval_every", r.eval_every);
  read_field(j, "batch_size", r.batch_size);
  read_field(j, "learning_rate", r.learning_rate);
  read_field(j, "loss", r.loss);
  read_field(j, "optimizer", r.optimizer);
  read_field(j, "validation_size", r.validation_size);
  read_field(j, "test_size", r.test_size);
  read_field(j, "regularize", r.regularize);
  read_field(j, "threshold", r.threshold);
  return r;
}

TrainConfig resolve(const TrainRequest& request) {
  const Preset& preset = find_preset(request.preset);
  const ModelVariant variant = find_variant(request.variant);

  RangePair custom;
  const RangePair* range = nullptr;
  if (request.extrapolation) {
    custom.interpolation = parse_range(request.range);
    custom.extrapolation = parse_range(*request.extrapolation);
    custom.label = custom.interpolation.label();
    range = &custom;
  } else {
    range = &find_range(preset, request.range);
  }

  TrainConfig c = preset_config(preset, variant, *range, request.seed);
  if (request.iterations) c.iterations = *request.iterations;
  if (request.eval_every) c.eval_every = *request.eval_every;
  if (request.batch_size) c.batch_size = *request.batch_size;
  if (request.learning_rate) c.learning_rate = *request.learning_rate;
  if (request.loss) c.loss = parse_loss_kind(*request.loss);
  if (request.optimizer) c.optimizer = parse_optimizer_kind(*request.optimizer);
  if (request.validation_size) c.validation_size = *request.validation_size;
  if (request.test_size) c.test_size = *request.test_size;
  if (request.regularize && !*request.regularize) c.regularizers.clear();
  if (request.threshold) {
    if (*request.threshold == "fixed") {
      c.threshold = ThresholdSource::Fixed;
    } else if (*request.threshold == "golden") {
      c.threshold = ThresholdSource::GoldenPlusEps;
    } else {
      throw NalmError("threshold must be 'fixed' or 'golden'");
    }
  }
  c.validate();
  return c;
}

std::string format_run_record(const RunRecord& record) {
  std::ostringstream out;
  char buf[160];
  out << "status            " << (record.status == RunStatus::Ok ? "ok" : "failed");
  if (!record.failure_reason.empty()) out << " (" << record.failure_reason << ")";
  out << '\n';
  std::snprintf(buf, sizeof buf, "threshold         %.6g\n", record.threshold);
  out << buf;
  std::snprintf(buf, sizeof buf, "best iteration    %llu\n",
                static_cast<unsigned long long>(record.best_iteration));
  out << buf;
  std::snprintf(buf, sizeof buf, "best val loss     %.6g\n", record.best_val_loss);
  out << buf;
  std::snprintf(buf, sizeof buf, "extrapolation mse %.6g\n", record.extrapolation_mse_at_best);
  out << buf;
  if (record.solved_at_iter) {
    std::snprintf(buf, sizeof buf, "solved at         %llu\n",
                  static_cast<unsigned long long>(*record.solved_at_iter));
  } else {
    std::snprintf(buf, sizeof buf, "solved at         -\n");
  }
  out << buf;
  std::snprintf(buf, sizeof buf, "sparsity error    %.6g\n", record.sparsity_error);
  out << buf;
  out << "success           " << (record.success ? "yes" : "no") << '\n';

  const ModuleParams& p = record.best_params;
  out << "weights          ";
  for (Eigen::Index i = 0; i < p.weights.size(); ++i) {
    std::snprintf(buf, sizeof buf, " %.4f", p.weights.data()[i]);
    out << buf;
  }
  out << '\n';
  if (p.gate) {
    out << "gate             ";
    for (Eigen::Index i = 0; i < p.gate->size(); ++i) {
      std::snprintf(buf, sizeof buf, " %.4f", (*p.gate)(i));
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

std::string run_record_json(const TrainConfig& config, const RunRecord& record) {
  json j;
  j["kind"] = std::string(to_string(config.kind));
  j["task"] = config.task.canonical();
  j["seed"] = config.seed;
  j["iterations"] = config.iterations;
  j["learning_rate"] = config.learning_rate;
  j["status"] = record.status == RunStatus::Ok ? "ok" : "failed";
  j["failure_reason"] = record.failure_reason;
  j["threshold"] = record.threshold;
  j["best_iteration"] = record.best_iteration;
  j["best_val_loss"] = record.best_val_loss;
  j["extrap_mse"] = record.extrapolation_mse_at_best;
  j["solved_at_iter"] = record.solved_at_iter ? json(*record.solved_at_iter) : json(nullptr);
  j["sparsity_error"] = record.sparsity_error;
  j["success"] = record.success;
  j["best_params"] = params_json(record.best_params);
  j["final_params"] = params_json(record.final_params);
  return j.dump(2) + "\n";
}

// ---- Sweeps ----

std::vector<std::uint64_t> seed_range(std::uint64_t n) {
  std::vector<std::uint64_t> seeds(n);
  for (std::uint64_t i = 0; i < n; ++i) seeds[i] = i;
  return seeds;
}

SweepSpec load_sweep_spec(const std::filesystem::path& path) {
  const json j = read_json(path);
  reject_unknown_keys(j, {"preset", "models", "ranges", "seeds", "parallelism", "output_dir",
                          "iterations", "eval_every", "validation_size", "test_size",
                          "record_wall_time"});
  SweepSpec s;
  read_field(j, "preset", s.preset);
  read_field(j, "models", s.variants);
  read_field(j, "ranges", s.ranges);
  if (j.contains("seeds")) {
    const json& seeds = j.at("seeds");
    if (seeds.is_number_unsigned()) {
      s.seeds = seed_range(seeds.get<std::uint64_t>());
    } else {
      read_field(j, "seeds", s.seeds);
    }
  }
  read_field(j, "parallelism", s.parallelism);
  std::string dir;
  read_field(j, "output_dir", dir);
  if (!dir.empty()) s.output_dir = dir;
  read_field(j, "iterations", s.iterations);
  read_field(j, "eval_every", s.eval_every);
  read_field(j, "validation_size", s.validation_size);
  read_field(j, "test_size", s.test_size);
  read_field(j, "record_wall_time", s.record_wall_time);
  return s;
}

std::string run_key(std::string_view variant, const TaskSpec& task, std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(task.canonical())));
  return std::string(variant) + "-" + buf + "-s" + std::to_string(seed);
}

std::vector<SweepJob> plan_sweep(const SweepSpec& spec) {
  const Preset& preset = find_preset(spec.preset);
  const std::vector<std::string>& variants =
      spec.variants.empty() ? preset.default_variants : spec.variants;
  std::vector<const RangePair*> ranges;
  if (spec.ranges.empty()) {
    for (const RangePair& r : preset.ranges) ranges.push_back(&r);
  } else {
    for (const std::string& label : spec.ranges) ranges.push_back(&find_range(preset, label));
  }

  std::vector<SweepJob> jobs;
  std::set<std::string> keys;
  for (const std::string& name : variants) {
    const ModelVariant variant = find_variant(name);
    for (const RangePair* range : ranges) {
      for (std::uint64_t seed : spec.seeds) {
        SweepJob job;
        job.variant = variant.name;
        job.range_label = range->label;
        job.config = preset_config(preset, variant, *range, seed);
        if (spec.iterations) job.config.iterations = *spec.iterations;
        if (spec.eval_every) job.config.eval_every = *spec.eval_every;
        if (spec.validation_size) job.config.validation_size = *spec.validation_size;
        if (spec.test_size) job.config.test_size = *spec.test_size;
        job.config.validate();
        job.run_key = run_key(variant.name, job.config.task, seed);
        if (!keys.insert(job.run_key).second) continue;  // repeated seed or range
        jobs.push_back(std::move(job));
      }
    }
  }
  return jobs;
}

ResultRow make_result_row(const SweepJob& job, const RunRecord& record, bool record_wall_time) {
  ResultRow row;
  row.run_key = job.run_key;
  row.kind = job.variant;
  row.range_label = job.range_label;
  row.seed = job.config.seed;
  row.success = record.success;
  row.solved_at_iter = record.solved_at_iter;
  row.sparsity_error = record.sparsity_error;
  row.best_val_loss = record.best_val_loss;
  row.extrap_mse = record.extrapolation_mse_at_best;
  row.wall_secs = record_wall_time ? record.wall_seconds : 0.0;
  row.status = record.status == RunStatus::Ok
                   ? std::string("ok")
                   : "failed: " + record.failure_reason;
  return row;
}

std::string format_result_row(const ResultRow& row) {
  std::string out;
  out += csv::quote(row.run_key) + "," + csv::quote(row.kind) + "," + csv::quote(row.range_label) + ",";
  out += std::to_string(row.seed) + "," + (row.success ? "1" : "0") + ",";
  if (row.solved_at_iter) out += std::to_string(*row.solved_at_iter);
  out += "," + csv::format_double(row.sparsity_error);
  out += "," + csv::format_double(row.best_val_loss);
  out += "," + csv::format_double(row.extrap_mse);
  out += "," + csv::format_double(row.wall_secs);
  out += "," + csv::quote(row.status);
  return out;
}

ParsedResults read_results(std::istream& in) {
  ParsedResults parsed;
  std::map<std::string, std::pair<std::size_t, std::size_t>> seen;  // key -> (index, line)
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != kResultsHeader) {
        throw NalmError("results CSV line 1: unexpected header '" + line + "'");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto f = csv::split(line);
    const std::string where = "results CSV line " + std::to_string(line_no);
    if (f.size() != 11) {
      throw NalmError(where + ": expected 11 fields, found " + std::to_string(f.size()));
    }
    ResultRow row;
    try {
      row.run_key = f[0];
      row.kind = f[1];
      row.range_label = f[2];
      row.seed = csv::parse_uint(f[3], "seed");
      if (f[4] != "0" && f[4] != "1") throw NalmError("success must be 0 or 1");
      row.success = f[4] == "1";
      if (!f[5].empty()) row.solved_at_iter = csv::parse_uint(f[5], "solved_at_iter");
      row.sparsity_error = csv::parse_double(f[6], "sparsity_error");
      row.best_val_loss = csv::parse_double(f[7], "best_val_loss");
      row.extrap_mse = csv::parse_double(f[8], "extrap_mse");
      row.wall_secs = csv::parse_double(f[9], "wall_secs");
      row.status = f[10];
    } catch (const NalmError& e) {
      throw NalmError(where + ": " + e.what());
    }
    if (row.run_key.empty()) throw NalmError(where + ": empty run key");

    auto it = seen.find(row.run_key);
    if (it != seen.end()) {
      parsed.warnings.push_back(where + ": duplicate run key " + row.run_key +
                                " replaces line " + std::to_string(it->second.second));
      parsed.rows[it->second.first] = std::move(row);
      it->second.second = line_no;
    } else {
      seen.emplace(row.run_key, std::make_pair(parsed.rows.size(), line_no));
      parsed.rows.push_back(std::move(row));
    }
  }
  if (line_no == 0) throw NalmError("results CSV line 1: missing header");
  return parsed;
}

ParsedResults read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NalmError("cannot open " + path.string());
  return read_results(in);
}

SweepSummary aggregate(const ParsedResults& results) {
  SweepSummary summary;
  summary.warnings = results.warnings;
  std::map<std::pair<std::string, std::string>, std::vector<const ResultRow*>> groups;
  for (const ResultRow& row : results.rows) groups[{row.kind, row.range_label}].push_back(&row);

  for (const auto& [key, rows] : groups) {
    GroupSummary g;
    g.kind = key.first;
    g.range_label = key.second;
    g.seeds = rows.size();
    std::vector<double> solved;
    std::vector<double> sparsity;
    for (const ResultRow* r : rows) {
      if (r->status != "ok") {
        ++g.failures;
        std::string reason = r->status;
        const std::string prefix = "failed: ";
        if (reason.rfind(prefix, 0) == 0) reason.erase(0, prefix.size());
        g.failure_reasons.push_back(reason);
      }
      if (!r->success) continue;
      ++g.successes;
      if (r->solved_at_iter) solved.push_back(static_cast<double>(*r->solved_at_iter));
      sparsity.push_back(r->sparsity_error);
    }
    g.success_rate = static_cast<double>(g.successes) / static_cast<double>(g.seeds);
    g.success_ci = wilson_interval(g.successes, g.seeds);
    if (!solved.empty()) {
      g.solved_median = median(solved);
      g.solved_ci = confidence_interval(Metric::Convergence, solved);
    }
    if (!sparsity.empty()) {
      g.sparsity_median = median(sparsity);
      g.sparsity_ci = confidence_interval(Metric::Sparsity, sparsity);
    }
    summary.groups.push_back(std::move(g));
  }
  return summary;
}

SweepSummary aggregate(const std::filesystem::path& results_csv) {
  return aggregate(read_results(results_csv));
}

void write_summary_csv(std::ostream& out, const SweepSummary& summary) {
  out << kSummaryHeader << '\n';
  for (const GroupSummary& g : summary.groups) {
    auto lo = [](const std::optional<ConfidenceInterval>& ci) {
      return ci ? std::optional<double>(ci->low) : std::nullopt;
    };
    auto hi = [](const std::optional<ConfidenceInterval>& ci) {
      return ci ? std::optional<double>(ci->high) : std::nullopt;
    };
    out << csv::quote(g.kind) << ',' << csv::quote(g.range_label) << ',' << g.seeds << ','
        << g.successes << ',' << csv::format_double(g.success_rate) << ','
        << csv::format_double(g.success_ci.low) << ',' << csv::format_double(g.success_ci.high)
        << ',' << optional_cell(g.solved_median) << ',' << optional_cell(lo(g.solved_ci)) << ','
        << optional_cell(hi(g.solved_ci)) << ',' << optional_cell(g.sparsity_median) << ','
        << optional_cell(lo(g.sparsity_ci)) << ',' << optional_cell(hi(g.sparsity_ci)) << ','
        << g.failures << '\n';
  }
}

SweepSummary read_summary_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NalmError("cannot open " + path.string());
  SweepSummary summary;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != kSummaryHeader) {
        throw NalmError("summary CSV line 1: unexpected header '" + line + "'");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto f = csv::split(line);
    const std::string where = "summary CSV line " + std::to_string(line_no);
    if (f.size() != 14) {
      throw NalmError(where + ": expected 14 fields, found " + std::to_string(f.size()));
    }
    try {
      GroupSummary g;
      g.kind = f[0];
      g.range_label = f[1];
      g.seeds = csv::parse_uint(f[2], "seeds");
      g.successes = csv::parse_uint(f[3], "successes");
      g.success_rate = csv::parse_double(f[4], "success_rate");
      g.success_ci = {csv::parse_double(f[5], "success_ci_low"),
                      csv::parse_double(f[6], "success_ci_high")};
      g.solved_median = parse_optional(f[7], "solved_median");
      if (!f[8].empty()) {
        g.solved_ci = ConfidenceInterval{csv::parse_double(f[8], "solved_ci_low"),
                                         csv::parse_double(f[9], "solved_ci_high")};
      }
      g.sparsity_median = parse_optional(f[10], "sparsity_median");
      if (!f[11].empty()) {
        g.sparsity_ci = ConfidenceInterval{csv::parse_double(f[11], "sparsity_ci_low"),
                                           csv::parse_double(f[12], "sparsity_ci_high")};
      }
      g.failures = csv::parse_uint(f[13], "failures");
      summary.groups.push_back(std::move(g));
    } catch (const NalmError& e) {
      throw NalmError(where + ": " + e.what());
    }
  }
  if (line_no == 0) throw NalmError("summary CSV line 1: missing header");
  return summary;
}

SweepSummary load_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NalmError("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  if (header == kResultsHeader) return aggregate(path);
  return read_summary_csv(path);
}

std::string format_summary(const SweepSummary& summary) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-18s %-26s %5s  %-22s  %-26s  %-28s %4s\n", "model", "range",
                "seeds", "success [95% CI]", "solved at [95% CI]", "sparsity [95% CI]", "fail");
  out << buf;
  for (const GroupSummary& g : summary.groups) {
    char success[64];
    std::snprintf(success, sizeof success, "%zu/%zu [%.2f,%.2f]", g.successes, g.seeds,
                  g.success_ci.low, g.success_ci.high);
    char solved[64] = "-";
    if (g.solved_median && g.solved_ci) {
      std::snprintf(solved, sizeof solved, "%.0f [%.0f,%.0f]", *g.solved_median, g.solved_ci->low,
                    g.solved_ci->high);
    }
    char sparsity[64] = "-";
    if (g.sparsity_median && g.sparsity_ci) {
      std::snprintf(sparsity, sizeof sparsity, "%.2e [%.1e,%.1e]", *g.sparsity_median,
                    g.sparsity_ci->low, g.sparsity_ci->high);
    }
    std::snprintf(buf, sizeof buf, "%-18s %-26s %5zu  %-22s  %-26s  %-28s %4zu\n", g.kind.c_str(),
                  g.range_label.c_str(), g.seeds, success, solved, sparsity, g.failures);
    out << buf;
  }
  for (const std::string& w : summary.warnings) out << "warning: " << w << '\n';
  return out.str();
}

SweepOutcome run_sweep(const SweepSpec& spec) {
  SweepOutcome outcome;
  std::filesystem::create_directories(spec.output_dir);
  outcome.results_csv = spec.output_dir / "results.csv";
  outcome.summary_csv = spec.output_dir / "summary.csv";

  const std::vector<SweepJob> jobs = plan_sweep(spec);

  std::set<std::string> done;
  if (std::filesystem::exists(outcome.results_csv)) {
    for (const ResultRow& row : read_results(outcome.results_csv).rows) done.insert(row.run_key);
  } else {
    std::ofstream header(outcome.results_csv);
    if (!header) throw NalmError("cannot write " + outcome.results_csv.string());
    header << kResultsHeader << '\n';
  }

  std::vector<const SweepJob*> pending;
  for (const SweepJob& job : jobs) {
    if (done.count(job.run_key)) {
      ++outcome.skipped;
    } else {
      pending.push_back(&job);
    }
  }

  if (!pending.empty()) {
    std::ofstream results(outcome.results_csv, std::ios::app);
    if (!results) throw NalmError("cannot append to " + outcome.results_csv.string());
    std::mutex writer;
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= pending.size()) return;
        const SweepJob& job = *pending[i];
        RunRecord record;
        try {
          record = train_run(job.config);
        } catch (const std::exception& e) {
          record = RunRecord{};
          record.status = RunStatus::Failed;
          record.failure_reason = e.what();
        }
        const std::string line = format_result_row(make_result_row(job, record, spec.record_wall_time));
        std::lock_guard lock(writer);
        results << line << '\n';
        results.flush();
      }
    };

    std::size_t threads = spec.parallelism;
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, pending.size());
    {
      std::vector<std::jthread> pool;
      for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
      worker();
    }
    outcome.executed = pending.size();
  }

  outcome.summary = aggregate(outcome.results_csv);
  std::ofstream summary(outcome.summary_csv);
  if (!summary) throw NalmError("cannot write " + outcome.summary_csv.string());
  write_summary_csv(summary, outcome.summary);
  return outcome;
}

}  // namespace nalm
