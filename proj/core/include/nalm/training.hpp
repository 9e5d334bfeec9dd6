#pragma once

#include <nalm/datagen.hpp>
#include <nalm/evaluation.hpp>
#include <nalm/module.hpp>
#include <nalm/task.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nalm {

// ---- Losses ----

enum class LossKind { MSE, PCC, MAPE };

std::string_view to_string(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

inline constexpr double kPccEpsilon = 1e-8;

struct LossValue {
  double value = 0.0;
  Vector grad;              // d value / d y_hat
  bool degenerate = false;  // PCC: a standard deviation hit the clamp floor
};

// MSE: mean (y_hat - y)^2.
// PCC: 1 - r, population standard deviations clamped below at eps, eps added
//      again in the denominator.
// MAPE: mean |y - y_hat| / |y|.
LossValue compute_loss(LossKind kind, const Vector& y_hat, const Vector& y);

// ---- Regularisation ----

enum class RegKind { None, L1, L2, Discretization };

struct RegSchedule {
  RegKind kind = RegKind::None;

  // L1 / L2: beta = min(beta_end, beta_start * beta_growth^floor(it / beta_step))
  double beta_start = 1e-9;
  double beta_end = 1e-7;
  double beta_growth = 10.0;
  std::uint64_t beta_step = 10000;
  bool include_imaginary = false;

  // Discretisation: lambda ramps from 0 to lambda_hat over [start, end].
  double lambda_hat = 10.0;
  std::uint64_t lambda_start = 0;
  std::uint64_t lambda_end = 1;
  // true: weights are pulled towards {-1, 1} only (0 is penalised).
  bool penalize_zero = false;

  static RegSchedule l1(double start, double end, double growth, std::uint64_t step);
  static RegSchedule l2(double start, double end, double growth, std::uint64_t step);
  static RegSchedule discretization(double lambda_hat, std::uint64_t start,
                                    std::uint64_t end);

  void validate() const;
};

double beta_at(const RegSchedule& schedule, std::uint64_t iteration);
double lambda_at(const RegSchedule& schedule, std::uint64_t iteration);

struct Penalty {
  double value = 0.0;
  ParamGrads grads;
};

Penalty l_penalty(const RegSchedule& schedule, const ModuleParams& params,
                  std::uint64_t iteration);
Penalty discretization_penalty(const RegSchedule& schedule,
                               const ModuleParams& params, std::uint64_t iteration);
Penalty penalty(const RegSchedule& schedule, const ModuleParams& params,
                std::uint64_t iteration);

// ---- Objective ----

struct Objective {
  double loss = 0.0;
  double penalty = 0.0;
  double total = 0.0;
  ParamGrads grads;  // of `total`
  bool degenerate = false;
};

// Training-mode forward, loss, penalties and the combined gradient.
Objective objective(const ModuleParams& params, const Batch& batch, LossKind loss,
                    std::span<const RegSchedule> regularizers,
                    std::uint64_t iteration);

// ---- Optimisers ----

enum class OptimizerKind { Adam, SGD };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view name);

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t steps = 0;
  ParamGrads first_moment;
  ParamGrads second_moment;
};

OptimizerState make_optimizer(OptimizerKind kind, const ModuleParams& params);

enum class StepStatus { Ok, NonFiniteGradient };

// Optional global gradient-norm clipping, then the update, then clip_params.
// Parameters are left untouched when the gradient is not finite.
StepStatus optimizer_step(OptimizerState& state, ModuleParams& params,
                          ParamGrads grads, double learning_rate,
                          std::optional<double> grad_norm_clip = std::nullopt);

// ---- Single run ----

struct TrainConfig {
  ModuleKind kind = ModuleKind::NRU;
  ModuleOptions module;
  TaskSpec task;
  std::uint64_t iterations = 50000;
  std::size_t batch_size = 128;
  double learning_rate = 5e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  LossKind loss = LossKind::MSE;
  std::vector<RegSchedule> regularizers;
  std::optional<double> grad_norm_clip;
  std::uint64_t eval_every = 1000;
  std::uint64_t seed = 0;
  std::size_t validation_size = 10000;
  std::size_t test_size = 10000;
  ThresholdSource threshold = ThresholdSource::Fixed;

  void validate() const;
};

struct TracePoint {
  std::uint64_t iteration = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double extrap_mse = 0.0;
};

enum class RunStatus { Ok, Failed };

struct RunRecord {
  RunStatus status = RunStatus::Ok;
  std::string failure_reason;
  double threshold = kFixedThreshold;
  double best_val_loss = 0.0;
  std::uint64_t best_iteration = 0;
  double extrapolation_mse_at_best = 0.0;
  std::optional<std::uint64_t> solved_at_iter;
  double sparsity_error = 0.0;
  bool success = false;
  ModuleParams best_params;
  ModuleParams final_params;
  std::vector<TracePoint> trace;
  double wall_seconds = 0.0;
};

RunRecord train_run(const TrainConfig& config);

// iteration,train_loss,val_loss,extrap_mse with round-trip precision.
void write_trace_csv(std::ostream& out, const RunRecord& record);

}  // namespace nalm
