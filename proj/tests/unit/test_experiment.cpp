#include <nalm/experiment.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace nalm;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("nalm_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string results_text(const std::vector<ResultRow>& rows) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const ResultRow& r : rows) out += format_result_row(r) + "\n";
  return out;
}

ResultRow row(const std::string& key, bool success, std::optional<std::uint64_t> solved,
              double sparsity) {
  ResultRow r;
  r.run_key = key;
  r.kind = "nru";
  r.range_label = "U[1,2)";
  r.success = success;
  r.solved_at_iter = solved;
  r.sparsity_error = sparsity;
  r.status = "ok";
  return r;
}

}  // namespace

TEST(Presets, HyperparametersOfMainStudy) {
  const Preset& p = find_preset("no_redundancy");
  EXPECT_EQ(p.input_size, 2u);
  EXPECT_EQ(p.iterations, 50000u);
  EXPECT_EQ(p.ranges.size(), 9u);
  const RangePair& r = find_range(p, "U[1,2)");

  const TrainConfig npu = preset_config(p, find_variant("realnpu"), r, 0);
  EXPECT_EQ(npu.learning_rate, 5e-3);
  ASSERT_EQ(npu.regularizers.size(), 2u);
  EXPECT_EQ(npu.regularizers[0].kind, RegKind::L1);
  EXPECT_EQ(npu.regularizers[1].lambda_hat, 1.0);
  EXPECT_EQ(npu.regularizers[1].lambda_start, 40000u);
  EXPECT_EQ(npu.regularizers[1].lambda_end, 50000u);

  const TrainConfig baseline = preset_config(p, find_variant("realnpu-baseline"), r, 0);
  EXPECT_EQ(baseline.regularizers.size(), 1u);
  EXPECT_FALSE(baseline.module.clip_weights);

  const TrainConfig nru = preset_config(p, find_variant("nru"), r, 0);
  EXPECT_EQ(nru.learning_rate, 1.0);
  ASSERT_EQ(nru.regularizers.size(), 1u);
  EXPECT_EQ(nru.regularizers[0].lambda_hat, 10.0);
  EXPECT_EQ(nru.regularizers[0].lambda_start, 20000u);
  EXPECT_EQ(nru.regularizers[0].lambda_end, 35000u);
  EXPECT_FALSE(nru.grad_norm_clip);

  const TrainConfig nmru = preset_config(p, find_variant("nmru"), r, 0);
  EXPECT_EQ(nmru.learning_rate, 1e-2);
  EXPECT_EQ(nmru.grad_norm_clip, 1.0);
  EXPECT_FALSE(preset_config(p, find_variant("nmru-noclip"), r, 0).grad_norm_clip);

  EXPECT_EQ(nmru.batch_size, 128u);
  EXPECT_EQ(nmru.validation_size, 10000u);
  EXPECT_EQ(nmru.test_size, 10000u);
}

TEST(Presets, RedundancyAndSmallRanges) {
  const Preset& red = find_preset("redundancy");
  EXPECT_EQ(red.input_size, 10u);
  EXPECT_EQ(red.iterations, 100000u);
  const TrainConfig nru =
      preset_config(red, find_variant("nru"), find_range(red, "U[-2,-1)"), 1);
  EXPECT_EQ(nru.learning_rate, 1e-3);
  EXPECT_EQ(nru.regularizers[0].lambda_start, 50000u);
  EXPECT_EQ(nru.regularizers[0].lambda_end, 75000u);
  EXPECT_EQ(nru.task.first, 0u);
  EXPECT_EQ(nru.task.second, 1u);

  const Preset& small = find_preset("small_reciprocal_in1");
  EXPECT_EQ(small.iterations, 5000u);
  EXPECT_FALSE(small.regularize);
  EXPECT_EQ(small.threshold, ThresholdSource::GoldenPlusEps);
  ASSERT_EQ(small.ranges.size(), 5u);
  EXPECT_EQ(small.ranges.back().label, "U(0,0.0001)");
  EXPECT_TRUE(preset_config(small, find_variant("nru"), small.ranges[0], 0).regularizers.empty());
}

TEST(Presets, LookupErrors) {
  EXPECT_THROW(find_preset("nope"), NalmError);
  EXPECT_THROW(find_variant("nope"), NalmError);
  EXPECT_THROW(find_range(find_preset("no_redundancy"), "U[3,4)"), NalmError);
  EXPECT_EQ(&find_range(find_preset("no_redundancy"), "U[1.0, 2.0)"),
            &find_range(find_preset("no_redundancy"), "U[1,2)"));
  EXPECT_EQ(find_range(find_preset("mixed_sign"), "mixed-5").interpolation_per_input[1].label(),
            "U[-2,-1)");
  for (const std::string& name : preset_names()) {
    const Preset& p = find_preset(name);
    for (const std::string& v : p.default_variants) EXPECT_NO_THROW(find_variant(v));
  }
}

TEST(RunKey, StableAndDistinct) {
  const Preset& p = find_preset("no_redundancy");
  const TaskSpec a = make_task(p, find_range(p, "U[1,2)"));
  const TaskSpec b = make_task(p, find_range(p, "U[10,20)"));
  const std::string key = run_key("nru", a, 3);
  EXPECT_EQ(key, run_key("nru", a, 3));
  EXPECT_NE(key, run_key("nru", a, 4));
  EXPECT_NE(key, run_key("nru", b, 3));
  EXPECT_NE(key, run_key("nmru", a, 3));
  EXPECT_EQ(key.rfind("nru-", 0), 0u);
  EXPECT_EQ(key.substr(key.size() - 3), "-s3");
  EXPECT_EQ(key.size(), std::string("nru-").size() + 16 + 3);
}

TEST(Sweep, PlanCoversGridOnce) {
  SweepSpec spec;
  spec.variants = {"nru", "nmru"};
  spec.ranges = {"U[1,2)", "U[10,20)", "U[1.0,2.0)"};
  spec.seeds = {0, 1, 2, 1};
  const auto jobs = plan_sweep(spec);
  EXPECT_EQ(jobs.size(), 12u);
  spec.seeds.clear();
  EXPECT_TRUE(plan_sweep(spec).empty());
}

TEST(Sweep, EmptySeedListGivesEmptySummary) {
  SweepSpec spec;
  spec.variants = {"nru"};
  spec.ranges = {"U[1,2)"};
  spec.output_dir = scratch_dir("empty");
  const SweepOutcome out = run_sweep(spec);
  EXPECT_EQ(out.executed, 0u);
  EXPECT_TRUE(out.summary.groups.empty());
  EXPECT_EQ(read_results(out.results_csv).rows.size(), 0u);
}

TEST(Sweep, ResumeIsByteIdentical) {
  SweepSpec spec;
  spec.variants = {"nru"};
  spec.ranges = {"U[1,2)"};
  spec.seeds = {0, 1};
  spec.iterations = 500;
  spec.eval_every = 100;
  spec.validation_size = 200;
  spec.test_size = 200;
  spec.parallelism = 2;
  spec.record_wall_time = false;

  spec.output_dir = scratch_dir("full");
  const SweepOutcome full = run_sweep(spec);
  EXPECT_EQ(full.executed, 2u);

  spec.output_dir = scratch_dir("resume");
  spec.seeds = {0};
  run_sweep(spec);
  spec.seeds = {0, 1};
  const SweepOutcome resumed = run_sweep(spec);
  EXPECT_EQ(resumed.executed, 1u);
  EXPECT_EQ(resumed.skipped, 1u);

  // Completion order can differ, so compare the parsed rows by key.
  auto by_key = [](const fs::path& p) {
    std::map<std::string, std::string> m;
    for (const ResultRow& r : read_results(p).rows) m[r.run_key] = format_result_row(r);
    return m;
  };
  EXPECT_EQ(by_key(full.results_csv), by_key(resumed.results_csv));
  EXPECT_EQ(slurp(full.summary_csv), slurp(resumed.summary_csv));

  // A third run does nothing.
  const SweepOutcome again = run_sweep(spec);
  EXPECT_EQ(again.executed, 0u);
  EXPECT_EQ(again.skipped, 2u);
}

TEST(Results, RoundTripWithQuoting) {
  ResultRow r = row("nmru-0123456789abcdef-s0", true, 4000, 1e-3);
  r.range_label = "U[[-6,-2),[2,6)]";
  r.extrap_mse = 1.0 / 3.0;
  ResultRow failed = row("nmru-0123456789abcdef-s1", false, std::nullopt, 0.5);
  failed.status = "failed: non-finite loss, at \"iteration\" 7";
  std::istringstream in(results_text({r, failed}));
  const ParsedResults parsed = read_results(in);
  ASSERT_EQ(parsed.rows.size(), 2u);
  EXPECT_EQ(parsed.rows[0].range_label, r.range_label);
  EXPECT_EQ(parsed.rows[0].extrap_mse, r.extrap_mse);
  EXPECT_EQ(parsed.rows[0].solved_at_iter, 4000u);
  EXPECT_FALSE(parsed.rows[1].solved_at_iter);
  EXPECT_EQ(parsed.rows[1].status, failed.status);
}

TEST(Results, DuplicateKeysLaterWins) {
  std::istringstream in(results_text({row("k", false, std::nullopt, 0.3),
                                      row("k", true, 100, 0.0)}));
  const ParsedResults parsed = read_results(in);
  ASSERT_EQ(parsed.rows.size(), 1u);
  EXPECT_TRUE(parsed.rows[0].success);
  ASSERT_EQ(parsed.warnings.size(), 1u);
  EXPECT_NE(parsed.warnings[0].find("line 3"), std::string::npos);
}

TEST(Results, MalformedLineIsNamed) {
  std::string text = results_text({row("a", true, 100, 0.0)});
  text += "b,nru,U[1,2),0,maybe,,0,0,0,0,ok\n";
  std::istringstream in(text);
  try {
    read_results(in);
    FAIL() << "expected an error";
  } catch (const NalmError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  std::istringstream short_row(std::string(kResultsHeader) + "\na,b,c\n");
  EXPECT_THROW(read_results(short_row), NalmError);
  std::istringstream bad_header("x,y\n");
  EXPECT_THROW(read_results(bad_header), NalmError);
}

TEST(Summary, AllSuccessfulGroup) {
  std::vector<ResultRow> rows;
  for (int s = 0; s < 25; ++s) {
    rows.push_back(row("k" + std::to_string(s), true, 1000u * static_cast<unsigned>(s + 1), 1e-4));
  }
  std::istringstream in(results_text(rows));
  const SweepSummary summary = aggregate(read_results(in));
  ASSERT_EQ(summary.groups.size(), 1u);
  const GroupSummary& g = summary.groups[0];
  EXPECT_EQ(g.seeds, 25u);
  EXPECT_EQ(g.successes, 25u);
  EXPECT_EQ(g.success_rate, 1.0);
  EXPECT_NEAR(g.success_ci.low, 0.8668, 1e-4);
  EXPECT_EQ(g.success_ci.high, 1.0);
  EXPECT_EQ(g.solved_median, 13000.0);
  ASSERT_TRUE(g.solved_ci);
  EXPECT_LT(g.solved_ci->low, 13000.0);
  EXPECT_EQ(g.sparsity_median, 1e-4);
  EXPECT_DOUBLE_EQ(g.sparsity_ci->low, 1e-4);
}

TEST(Summary, NoSuccessesLeavesConvergenceEmpty) {
  std::vector<ResultRow> rows = {row("a", false, std::nullopt, 0.4),
                                 row("b", false, std::nullopt, 0.2)};
  rows[1].status = "failed: non-finite loss";
  std::istringstream in(results_text(rows));
  const SweepSummary summary = aggregate(read_results(in));
  const GroupSummary& g = summary.groups.at(0);
  EXPECT_EQ(g.successes, 0u);
  EXPECT_EQ(g.failures, 1u);
  EXPECT_FALSE(g.solved_median);
  EXPECT_FALSE(g.sparsity_median);
  EXPECT_EQ(g.success_ci.low, 0.0);
}

TEST(Summary, CsvRoundTrip) {
  std::vector<ResultRow> rows;
  for (int s = 0; s < 5; ++s) {
    rows.push_back(row("k" + std::to_string(s), s < 3, s < 3 ? std::optional<std::uint64_t>(
                                                                   2000u + 100u * s)
                                                             : std::nullopt,
                       1e-3 * s));
  }
  rows.push_back(row("z", true, 100, 0.0));
  rows.back().kind = "nmru";
  std::istringstream in(results_text(rows));
  const SweepSummary summary = aggregate(read_results(in));
  ASSERT_EQ(summary.groups.size(), 2u);
  EXPECT_EQ(summary.groups[0].kind, "nmru");

  const fs::path dir = scratch_dir("summary");
  {
    std::ofstream out(dir / "summary.csv");
    write_summary_csv(out, summary);
  }
  const SweepSummary back = load_summary(dir / "summary.csv");
  ASSERT_EQ(back.groups.size(), 2u);
  EXPECT_EQ(back.groups[1].successes, 3u);
  EXPECT_EQ(back.groups[1].solved_median, 2100.0);
  EXPECT_EQ(format_summary(back), format_summary(summary));
}

TEST(Config, TrainRequestFromJson) {
  const fs::path dir = scratch_dir("config");
  {
    std::ofstream out(dir / "train.json");
    out << R"json({"preset": "no_redundancy", "model": "nmru", "range": "U[10,20)",
              "seed": 4, "iterations": 2000, "eval_every": 500, "loss": "pcc"})json";
  }
  const TrainConfig c = resolve(load_train_request(dir / "train.json"));
  EXPECT_EQ(c.kind, ModuleKind::NMRU);
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.iterations, 2000u);
  EXPECT_EQ(c.loss, LossKind::PCC);
  EXPECT_EQ(c.task.label, "U[10,20)");
  {
    std::ofstream out(dir / "bad.json");
    out << R"({"modle": "nru"})";
  }
  EXPECT_THROW(load_train_request(dir / "bad.json"), NalmError);
  EXPECT_THROW(load_train_request(dir / "missing.json"), NalmError);

  TrainRequest custom;
  custom.range = "U[3,4)";
  EXPECT_THROW(resolve(custom), NalmError);
  custom.extrapolation = "U[4,8)";
  EXPECT_EQ(resolve(custom).task.canonical(), "op=divide;I=2;rel=0,1;interp=U[3,4);extrap=U[4,8)");
}

TEST(Config, SweepSpecFromJson) {
  const fs::path dir = scratch_dir("sweepcfg");
  {
    std::ofstream out(dir / "sweep.json");
    out << R"({"preset": "redundancy", "models": ["nru"], "seeds": 3, "output_dir": "x"})";
  }
  const SweepSpec s = load_sweep_spec(dir / "sweep.json");
  EXPECT_EQ(s.preset, "redundancy");
  EXPECT_EQ(s.seeds, (std::vector<std::uint64_t>{0, 1, 2}));
  EXPECT_EQ(s.output_dir, fs::path("x"));
  {
    std::ofstream out(dir / "list.json");
    out << R"({"seeds": [5, 7]})";
  }
  EXPECT_EQ(load_sweep_spec(dir / "list.json").seeds, (std::vector<std::uint64_t>{5, 7}));
}
