#pragma once

#include <nalm/datagen.hpp>
#include <nalm/module.hpp>
#include <nalm/task.hpp>

#include <cstddef>
#include <limits>
#include <span>

namespace nalm {

inline constexpr double kFixedThreshold = 1e-5;
inline constexpr double kFloat32Epsilon = std::numeric_limits<float>::epsilon();

// Largest distance of any learnable entry (weights, gates, imaginary weights)
// from the nearest value in {-1, 0, 1}: max min(|w|, 1 - |w|).
double sparsity_error(const ModuleParams& params);

enum class ThresholdSource { Fixed, GoldenPlusEps };
enum class Precision { F64, F32 };

struct Threshold {
  double value = kFixedThreshold;
  ThresholdSource source = ThresholdSource::Fixed;
};

// MSE of the golden solution on `test`. With Precision::F32 the inputs,
// targets and forward pass are all evaluated in single precision.
double golden_mse(ModuleKind kind, const TaskSpec& task, const Batch& test,
                  const ModuleOptions& options = {}, Precision precision = Precision::F64);

Threshold compute_threshold(const TaskSpec& task, ModuleKind kind,
                            ThresholdSource source, const Batch& test,
                            const ModuleOptions& options = {},
                            Precision precision = Precision::F64);

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
};

enum class Metric { SuccessRate, Convergence, Sparsity };

// 95% Wilson score interval.
ConfidenceInterval wilson_interval(std::size_t successes, std::size_t trials);

// SuccessRate: samples are 0/1 outcomes, Wilson interval.
// Convergence: Gamma fitted by moments; Sparsity: Beta fitted by moments.
// Both report the 2.5/97.5 percentiles of the mean of n draws from the
// fitted distribution (10,000 parametric bootstrap resamples, fixed seed).
// Identical samples give a point interval. Throws on empty input.
ConfidenceInterval confidence_interval(Metric metric, std::span<const double> samples);

// Sign of the output according to the discrete-parameter state machine.
// Real NPU: weights in {-1,0,1} and gates in {0,1}, one per input.
// NMRU: 2I weights in {0,1} over [x, 1/x]; `gates` must be empty.
// `inputs` are the raw input values (only their signs matter).
int sign_oracle(ModuleKind kind, std::span<const double> weights,
                std::span<const double> gates, std::span<const double> inputs);

}  // namespace nalm
