#include <nalm/gradcheck.hpp>

#include <nalm/nalm_core.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace nalm {
namespace {

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double random_sign(Rng& rng) { return std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0; }

double objective_value(const ModuleParams& p, const Matrix& x, const Matrix& grad_y,
                       Mode mode) {
  return forward(p, x, mode).output.cwiseProduct(grad_y).sum();
}

// Rotates through the option variants a kind supports.
ModuleOptions variant_options(ModuleKind kind, std::size_t trial) {
  ModuleOptions o;
  if (kind == ModuleKind::RealNPU || kind == ModuleKind::NPU) {
    o.clip_gates = trial % 2 == 0;
    o.epsilon = trial % 3 == 0 ? 0.0 : 1e-7;
  }
  if (kind == ModuleKind::NMRU) {
    o.nmru_sign = trial % 2 == 0;
    o.nmru_gate = trial % 4 >= 2;
  }
  return o;
}

}  // namespace

double gradient_relative_error(double analytic, double numeric) {
  const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / scale;
}

ModuleParams random_safe_params(ModuleKind kind, Eigen::Index in_size, Eigen::Index out_size,
                                Rng& rng, const ModuleOptions& options) {
  ModuleParams p;
  p.kind = kind;
  p.options = options;
  const Eigen::Index rows = kind == ModuleKind::NMRU ? 2 * in_size : in_size;
  p.weights.resize(rows, out_size);
  for (Eigen::Index j = 0; j < out_size; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      double w = 0.0;
      switch (kind) {
        case ModuleKind::RealNPU:
        case ModuleKind::NPU:
        case ModuleKind::NAU:
          w = uniform(rng, -1.0, 1.0);
          break;
        case ModuleKind::NRU:
          w = random_sign(rng) * uniform(rng, 0.05, 1.0);
          break;
        case ModuleKind::NRUSeparateSign: {
          const double mag = uniform(rng, 0.05, 0.9);
          w = random_sign(rng) * (mag < 0.45 ? mag : mag + 0.1);
          break;
        }
        case ModuleKind::NMRU:
        case ModuleKind::NMU:
          w = uniform(rng, 0.0, 1.0);
          break;
      }
      p.weights(i, j) = w;
    }
  }
  if (kind == ModuleKind::NPU) {
    p.imaginary = Matrix(in_size, out_size);
    for (Eigen::Index k = 0; k < p.imaginary->size(); ++k) {
      p.imaginary->data()[k] = uniform(rng, -0.5, 0.5);
    }
  }
  const bool gated = kind == ModuleKind::RealNPU || kind == ModuleKind::NPU ||
                     (kind == ModuleKind::NMRU && options.nmru_gate);
  if (gated) {
    p.gate = Vector(rows);
    for (Eigen::Index k = 0; k < rows; ++k) (*p.gate)(k) = uniform(rng, 0.05, 0.95);
  }
  return p;
}

Matrix random_safe_inputs(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix x(rows, cols);
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    x.data()[k] = random_sign(rng) * uniform(rng, 0.3, 5.0);
  }
  return x;
}

GradCheckReport check_gradients(ModuleKind kind, const GradCheckOptions& options) {
  GradCheckReport report;
  report.kind = kind;
  report.trials = options.trials;
  Rng rng = make_rng(options.seed, 0x6c0de + static_cast<std::uint64_t>(kind));
  const double h = options.step;

  for (std::size_t trial = 0; trial < options.trials; ++trial) {
    const Eigen::Index n_in = std::uniform_int_distribution<Eigen::Index>(1, 4)(rng);
    const Eigen::Index n_out = std::uniform_int_distribution<Eigen::Index>(1, 2)(rng);
    const Eigen::Index n_rows = 3;
    ModuleParams p = random_safe_params(kind, n_in, n_out, rng, variant_options(kind, trial));
    Matrix x = random_safe_inputs(n_rows, n_in, rng);
    Matrix grad_y(n_rows, n_out);
    for (Eigen::Index k = 0; k < grad_y.size(); ++k) grad_y.data()[k] = uniform(rng, -1.0, 1.0);

    const Mode mode = Mode::Training;
    const ForwardResult fwd = forward(p, x, mode);
    BackwardResult analytic = backward(p, fwd.cache, grad_y);

    auto p_views = tensor_views(p);
    auto g_views = tensor_views(analytic.params);
    for (std::size_t t = 0; t < p_views.size(); ++t) {
      for (std::size_t i = 0; i < p_views[t].size(); ++i) {
        const double saved = p_views[t][i];
        p_views[t][i] = saved + h;
        const double plus = objective_value(p, x, grad_y, mode);
        p_views[t][i] = saved - h;
        const double minus = objective_value(p, x, grad_y, mode);
        p_views[t][i] = saved;
        const double numeric = (plus - minus) / (2.0 * h);
        report.max_relative_error = std::max(
            report.max_relative_error, gradient_relative_error(g_views[t][i], numeric));
        ++report.entries_checked;
      }
    }
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const double saved = x.data()[k];
      x.data()[k] = saved + h;
      const double plus = objective_value(p, x, grad_y, mode);
      x.data()[k] = saved - h;
      const double minus = objective_value(p, x, grad_y, mode);
      x.data()[k] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      report.max_relative_error =
          std::max(report.max_relative_error,
                   gradient_relative_error(analytic.input.data()[k], numeric));
      ++report.entries_checked;
    }

    if (kind == ModuleKind::NRU) {
      // Single row, single output: dy/dw_i = closed form with the product of
      // the remaining factors.
      Matrix row = x.topRows(1);
      ModuleParams single = p;
      single.weights = p.weights.col(0);
      const ForwardResult f1 = forward(single, row, mode);
      const BackwardResult b1 = backward(single, f1.cache, Matrix::Ones(1, 1));
      const Matrix& factors = f1.cache.factors.front();
      for (Eigen::Index i = 0; i < n_in; ++i) {
        double rest = 1.0;
        for (Eigen::Index j = 0; j < n_in; ++j) {
          if (j != i) rest *= factors(0, j);
        }
        const double closed = nru_weight_grad_closed_form(single.weights(i, 0), row(0, i), rest,
                                                          single.options.tanh_scale);
        report.max_closed_form_error =
            std::max(report.max_closed_form_error,
                     gradient_relative_error(b1.params.weights(i, 0), closed));
      }
    }
  }
  return report;
}

}  // namespace nalm
