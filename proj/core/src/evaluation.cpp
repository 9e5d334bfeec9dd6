#include <nalm/evaluation.hpp>

#include <nalm/nalm_core.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace nalm {
namespace {

constexpr double kZ95 = 1.959963984540054;
constexpr std::size_t kBootstrapResamples = 10000;
constexpr std::uint64_t kBootstrapSeed = 0x5eedc1;

double distance_to_discrete(double v) {
  const double a = std::abs(v);
  return std::min(a, 1.0 - a);
}

double max_distance(const double* data, Eigen::Index size) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < size; ++i) worst = std::max(worst, distance_to_discrete(data[i]));
  return worst;
}

// Linear interpolation between order statistics.
double percentile(std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

template <typename Draw>
ConfidenceInterval bootstrap_mean(std::size_t n, Draw&& draw) {
  Rng rng = make_rng(kBootstrapSeed, n);
  std::vector<double> means(kBootstrapResamples);
  for (double& m : means) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += draw(rng);
    m = acc / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  return {percentile(means, 0.025), percentile(means, 0.975)};
}

bool is_discrete(double v, std::initializer_list<double> allowed) {
  return std::find(allowed.begin(), allowed.end(), v) != allowed.end();
}

}  // namespace

double sparsity_error(const ModuleParams& params) {
  double worst = max_distance(params.weights.data(), params.weights.size());
  if (params.imaginary) {
    worst = std::max(worst, max_distance(params.imaginary->data(), params.imaginary->size()));
  }
  if (params.gate) worst = std::max(worst, max_distance(params.gate->data(), params.gate->size()));
  return worst;
}

double golden_mse(ModuleKind kind, const TaskSpec& task, const Batch& test,
                  const ModuleOptions& options, Precision precision) {
  const ModuleParams golden = golden_params(kind, task, options);
  const Eigen::Index n = test.x.rows();
  if (n == 0) throw NalmError("empty test set");
  double acc = 0.0;
  if (precision == Precision::F64) {
    const Matrix pred = forward(golden, test.x, Mode::Eval).output;
    for (Eigen::Index r = 0; r < n; ++r) {
      const double d = pred(r, 0) - test.y(r);
      acc += d * d;
    }
  } else {
    const Eigen::MatrixXf xf = test.x.cast<float>();
    const Eigen::MatrixXf pred = forward_f32(golden, xf, Mode::Eval);
    std::vector<float> row(static_cast<std::size_t>(xf.cols()));
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index i = 0; i < xf.cols(); ++i) row[static_cast<std::size_t>(i)] = xf(r, i);
      const float target = task.target_f32(row.data());
      const float d = pred(r, 0) - target;
      acc += static_cast<double>(d) * static_cast<double>(d);
    }
  }
  return acc / static_cast<double>(n);
}

Threshold compute_threshold(const TaskSpec& task, ModuleKind kind,
                            ThresholdSource source, const Batch& test,
                            const ModuleOptions& options, Precision precision) {
  if (source == ThresholdSource::Fixed) return {kFixedThreshold, source};
  return {golden_mse(kind, task, test, options, precision) + kFloat32Epsilon, source};
}

ConfidenceInterval wilson_interval(std::size_t successes, std::size_t trials) {
  if (trials == 0) throw NalmError("Wilson interval needs at least one trial");
  if (successes > trials) throw NalmError("more successes than trials");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = kZ95 * kZ95;
  const double denom = 1.0 + z2 / n;
  const double centre = p + z2 / (2.0 * n);
  const double spread = kZ95 * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  // The bounds are exactly 0 and 1 at the extremes; rounding would leave them off by ~1e-17.
  const double low = successes == 0 ? 0.0 : std::max(0.0, (centre - spread) / denom);
  const double high = successes == trials ? 1.0 : std::min(1.0, (centre + spread) / denom);
  return {low, high};
}

ConfidenceInterval confidence_interval(Metric metric, std::span<const double> samples) {
  if (samples.empty()) throw NalmError("confidence interval needs at least one sample");
  const auto n = samples.size();
  if (metric == Metric::SuccessRate) {
    std::size_t successes = 0;
    for (double s : samples) successes += s > 0.5 ? 1 : 0;
    return wilson_interval(successes, n);
  }

  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var = n > 1 ? var / static_cast<double>(n - 1) : 0.0;
  const auto [min_it, max_it] = std::minmax_element(samples.begin(), samples.end());
  if (*min_it == *max_it || var <= 0.0) return {mean, mean};

  if (metric == Metric::Convergence) {
    if (!(mean > 0.0)) return {mean, mean};
    const double shape = mean * mean / var;
    const double scale = var / mean;
    std::gamma_distribution<double> gamma(shape, scale);
    return bootstrap_mean(n, [&](Rng& rng) { return gamma(rng); });
  }

  // Beta on [0, 1]; the moment fit needs 0 < mean < 1 and var < mean(1 - mean).
  const double spread = mean * (1.0 - mean);
  if (!(mean > 0.0 && mean < 1.0) || var >= spread) {
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    return {percentile(sorted, 0.025), percentile(sorted, 0.975)};
  }
  const double common = spread / var - 1.0;
  std::gamma_distribution<double> ga(mean * common, 1.0);
  std::gamma_distribution<double> gb((1.0 - mean) * common, 1.0);
  return bootstrap_mean(n, [&](Rng& rng) {
    const double a = ga(rng);
    const double b = gb(rng);
    return a + b > 0.0 ? a / (a + b) : mean;
  });
}

int sign_oracle(ModuleKind kind, std::span<const double> weights,
                std::span<const double> gates, std::span<const double> inputs) {
  int state = 1;
  if (kind == ModuleKind::RealNPU) {
    if (weights.size() != inputs.size() || gates.size() != inputs.size()) {
      throw NalmError("Real NPU oracle needs one weight and one gate per input");
    }
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!is_discrete(weights[i], {-1.0, 0.0, 1.0}) || !is_discrete(gates[i], {0.0, 1.0})) {
        throw NalmError("sign oracle accepts discrete parameters only");
      }
      if (inputs[i] < 0.0 && weights[i] != 0.0 && gates[i] == 1.0) state = -state;
    }
    return state;
  }
  if (kind == ModuleKind::NMRU) {
    if (weights.size() != 2 * inputs.size() || !gates.empty()) {
      throw NalmError("NMRU oracle needs 2I weights and no gates");
    }
    const std::size_t n_in = inputs.size();
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!is_discrete(weights[i], {0.0, 1.0})) {
        throw NalmError("sign oracle accepts discrete parameters only");
      }
      // The reciprocal half carries the sign of its input.
      const double x = inputs[i % n_in];
      if (x < 0.0 && weights[i] == 1.0) state = -state;
    }
    return state;
  }
  throw NalmError("sign oracle is defined for the Real NPU and the NMRU only");
}

}  // namespace nalm
