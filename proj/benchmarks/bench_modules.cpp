#include <nalm/datagen.hpp>
#include <nalm/landscape.hpp>
#include <nalm/nalm_core.hpp>
#include <nalm/training.hpp>

#include <benchmark/benchmark.h>

using namespace nalm;

namespace {

const ModuleKind kBenchKinds[] = {ModuleKind::RealNPU, ModuleKind::NPU, ModuleKind::NRU,
                                  ModuleKind::NMRU, ModuleKind::NMU, ModuleKind::NAU};

Batch bench_batch(std::size_t input_size) {
  const TaskSpec task = make_task(Operation::Divide, input_size, RangeSpec::uniform(1, 2),
                                  RangeSpec::uniform(2, 6));
  Rng rng = make_rng(0, 1);
  return build_batch(task, Split::Train, 128, rng);
}

void BM_Forward(benchmark::State& state) {
  const ModuleKind kind = kBenchKinds[state.range(0)];
  const auto in = static_cast<Eigen::Index>(state.range(1));
  const ModuleParams p = init_params(kind, in, 1, 0);
  const Batch b = bench_batch(static_cast<std::size_t>(in));
  for (auto _ : state) benchmark::DoNotOptimize(forward(p, b.x, Mode::Training).output);
  state.SetLabel(std::string(to_string(kind)));
}

void BM_ForwardBackward(benchmark::State& state) {
  const ModuleKind kind = kBenchKinds[state.range(0)];
  const auto in = static_cast<Eigen::Index>(state.range(1));
  const ModuleParams p = init_params(kind, in, 1, 0);
  const Batch b = bench_batch(static_cast<std::size_t>(in));
  const Matrix grad = Matrix::Ones(b.x.rows(), 1);
  for (auto _ : state) {
    const ForwardResult f = forward(p, b.x, Mode::Training);
    benchmark::DoNotOptimize(backward(p, f.cache, grad).params.weights);
  }
  state.SetLabel(std::string(to_string(kind)));
}

void BM_TrainStep(benchmark::State& state) {
  const ModuleKind kind = kBenchKinds[state.range(0)];
  ModuleParams p = init_params(kind, 10, 1, 0);
  const Batch b = bench_batch(10);
  const std::vector<RegSchedule> regs = {RegSchedule::discretization(10, 0, 1)};
  OptimizerState opt = make_optimizer(OptimizerKind::Adam, p);
  std::uint64_t it = 0;
  for (auto _ : state) {
    const Objective obj = objective(p, b, LossKind::MSE, regs, it++);
    optimizer_step(opt, p, obj.grads, 1e-3, 1.0);
  }
  state.SetLabel(std::string(to_string(kind)));
}

void BM_Surface(benchmark::State& state) {
  SurfaceSpec spec = SurfaceSpec::defaults(ModuleKind::NMRU);
  spec.resolution = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(rmse_surface(spec).rmse);
}

}  // namespace

BENCHMARK(BM_Forward)->ArgsProduct({{0, 1, 2, 3, 4, 5}, {2, 10}});
BENCHMARK(BM_ForwardBackward)->ArgsProduct({{0, 1, 2, 3, 4, 5}, {2, 10}});
BENCHMARK(BM_TrainStep)->DenseRange(0, 5);
BENCHMARK(BM_Surface)->Arg(101)->Arg(401)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
