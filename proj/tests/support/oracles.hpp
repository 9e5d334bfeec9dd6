#pragma once

// Test-side reference implementations. Each forward rule is written as a
// plain scalar loop straight from its formula, independent of the library's
// vectorised code, so the library can be checked against it.

#include <nalm/module.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

namespace nalm::oracle {

inline double sgn(double v) { return (0.0 < v) - (v < 0.0); }

// One input row, one output column `o`.
inline double reference_forward(const ModuleParams& p, const std::vector<double>& x,
                                Mode mode, Eigen::Index o = 0) {
  const double pi = std::numbers::pi;
  const auto n_in = static_cast<Eigen::Index>(x.size());
  const ModuleOptions& opt = p.options;
  switch (p.kind) {
    case ModuleKind::RealNPU:
    case ModuleKind::NPU: {
      double log_sum = 0.0;
      double angle = 0.0;
      for (Eigen::Index i = 0; i < n_in; ++i) {
        const double g = std::clamp((*p.gate)(i), 0.0, 1.0);
        const double r = g * (std::abs(x[i]) + opt.epsilon) + 1.0 - g;
        const double k = x[i] < 0.0 ? pi * g : 0.0;
        const double re = p.weights(i, o);
        const double im = p.imaginary ? (*p.imaginary)(i, o) : 0.0;
        log_sum += re * std::log(r) - im * k;
        angle += im * std::log(r) + re * k;
      }
      return std::exp(log_sum) * std::cos(angle);
    }
    case ModuleKind::NRU:
    case ModuleKind::NRUSeparateSign: {
      double y = 1.0;
      double sign = 1.0;
      for (Eigen::Index i = 0; i < n_in; ++i) {
        const double w = p.weights(i, o);
        const double a = mode == Mode::Training ? std::pow(std::tanh(opt.tanh_scale * w), 2)
                                                : std::abs(w);
        const double power = std::pow(std::abs(x[i]), w);
        if (p.kind == ModuleKind::NRU) {
          y *= sgn(x[i]) * power * a + 1.0 - a;
        } else {
          y *= power * a + 1.0 - a;
          sign *= std::pow(sgn(x[i]), std::round(w));
        }
      }
      return y * sign;
    }
    case ModuleKind::NMRU: {
      std::vector<double> xa(x.begin(), x.end());
      for (double v : x) xa.push_back(1.0 / (v + opt.epsilon));
      double prod = 1.0;
      double angle = 0.0;
      for (std::size_t i = 0; i < xa.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const double gate = opt.nmru_gate ? (*p.gate)(row) : 1.0;
        const double w = p.weights(row, o);
        const double v = xa[i] * gate;
        if (opt.nmru_sign) {
          prod *= w * std::abs(v) + 1.0 - w;
          angle += w * (xa[i] < 0.0 ? pi * gate : 0.0);
        } else {
          prod *= w * v + 1.0 - w;
        }
      }
      return opt.nmru_sign ? prod * std::cos(angle) : prod;
    }
    case ModuleKind::NMU: {
      double y = 1.0;
      for (Eigen::Index i = 0; i < n_in; ++i) {
        const double w = p.weights(i, o);
        y *= w * x[i] + 1.0 - w;
      }
      return y;
    }
    case ModuleKind::NAU: {
      double y = 0.0;
      for (Eigen::Index i = 0; i < n_in; ++i) y += p.weights(i, o) * x[i];
      return y;
    }
  }
  return std::nan("");
}

// Sum over rows and outputs of grad_y(n, o) * reference_forward(row n, o).
inline double reference_objective(const ModuleParams& p, const Matrix& x, const Matrix& grad_y,
                                  Mode mode) {
  double total = 0.0;
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    std::vector<double> row(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index i = 0; i < x.cols(); ++i) row[static_cast<std::size_t>(i)] = x(n, i);
    for (Eigen::Index o = 0; o < grad_y.cols(); ++o) {
      total += grad_y(n, o) * reference_forward(p, row, mode, o);
    }
  }
  return total;
}

inline double central_difference(const std::function<double(double)>& f, double at, double h) {
  return (f(at + h) - f(at - h)) / (2.0 * h);
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Random parameters inside each kind's smooth region, drawn with the test's
// own generator.
struct SafeConfig {
  ModuleParams params;
  Matrix x;
  Matrix grad_y;
};

inline SafeConfig random_safe_config(ModuleKind kind, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(gen); };
  auto sign = [&] { return unit(gen) < 0.5 ? -1.0 : 1.0; };

  const Eigen::Index n_in = 1 + static_cast<Eigen::Index>(unit(gen) * 4.0);
  const Eigen::Index n_out = 1 + static_cast<Eigen::Index>(unit(gen) * 2.0);
  const Eigen::Index n_rows = 2 + static_cast<Eigen::Index>(unit(gen) * 3.0);

  SafeConfig c;
  ModuleParams& p = c.params;
  p.kind = kind;
  if (kind == ModuleKind::NMRU) {
    p.options.nmru_sign = unit(gen) < 0.7;
    p.options.nmru_gate = unit(gen) < 0.3;
  }
  if (kind == ModuleKind::RealNPU || kind == ModuleKind::NPU) {
    p.options.epsilon = unit(gen) < 0.5 ? 0.0 : 1e-7;
  }
  const Eigen::Index rows = kind == ModuleKind::NMRU ? 2 * n_in : n_in;
  p.weights.resize(rows, n_out);
  for (Eigen::Index k = 0; k < p.weights.size(); ++k) {
    double w = 0.0;
    switch (kind) {
      case ModuleKind::NRU:
        w = sign() * uniform(0.05, 1.0);
        break;
      case ModuleKind::NRUSeparateSign: {
        const double m = uniform(0.05, 0.85);
        w = sign() * (m < 0.45 ? m : m + 0.1);
        break;
      }
      case ModuleKind::NMRU:
      case ModuleKind::NMU:
        w = uniform(0.0, 1.0);
        break;
      default:
        w = uniform(-1.0, 1.0);
    }
    p.weights.data()[k] = w;
  }
  if (kind == ModuleKind::NPU) {
    p.imaginary = Matrix(n_in, n_out);
    for (Eigen::Index k = 0; k < p.imaginary->size(); ++k) {
      p.imaginary->data()[k] = uniform(-0.5, 0.5);
    }
  }
  if (kind == ModuleKind::RealNPU || kind == ModuleKind::NPU ||
      (kind == ModuleKind::NMRU && p.options.nmru_gate)) {
    p.gate = Vector(rows);
    for (Eigen::Index k = 0; k < rows; ++k) (*p.gate)(k) = uniform(0.05, 0.95);
  }
  c.x.resize(n_rows, n_in);
  for (Eigen::Index k = 0; k < c.x.size(); ++k) c.x.data()[k] = sign() * uniform(0.3, 5.0);
  c.grad_y.resize(n_rows, n_out);
  for (Eigen::Index k = 0; k < c.grad_y.size(); ++k) c.grad_y.data()[k] = uniform(-1.0, 1.0);
  return c;
}

// Largest relative error between `analytic` (params then input, in
// tensor_views order) and central differences of the reference objective.
template <typename GetAnalytic>
double max_fd_error(SafeConfig c, Mode mode, double h, GetAnalytic analytic_for) {
  double worst = 0.0;
  auto views = tensor_views(c.params);
  const auto analytic = analytic_for(c);
  std::size_t flat = 0;
  for (auto& view : views) {
    for (double& entry : view) {
      const double saved = entry;
      const double numeric = central_difference(
          [&](double v) {
            entry = v;
            const double out = reference_objective(c.params, c.x, c.grad_y, mode);
            entry = saved;
            return out;
          },
          saved, h);
      worst = std::max(worst, relative_error(analytic[flat++], numeric));
    }
  }
  for (Eigen::Index k = 0; k < c.x.size(); ++k) {
    double& entry = c.x.data()[k];
    const double saved = entry;
    const double numeric = central_difference(
        [&](double v) {
          entry = v;
          const double out = reference_objective(c.params, c.x, c.grad_y, mode);
          entry = saved;
          return out;
        },
        saved, h);
    worst = std::max(worst, relative_error(analytic[flat++], numeric));
  }
  return worst;
}

// Exact Wilson score interval at 95%, written out from the formula.
inline std::pair<double, double> wilson(double successes, double n) {
  const double z = 1.959963984540054;
  const double p = successes / n;
  const double centre = (p + z * z / (2 * n)) / (1 + z * z / n);
  const double half = z / (1 + z * z / n) * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n));
  return {centre - half, centre + half};
}

}  // namespace nalm::oracle
