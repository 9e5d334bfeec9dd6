#include <nalm/nalm_core.hpp>

#include <nalm/datagen.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace nalm {
namespace {

constexpr double kPi = std::numbers::pi;

void require(bool condition, const char* message) {
  if (!condition) throw NalmError(message);
}

template <typename T>
T sign_of(T v) {
  return static_cast<T>((T(0) < v) - (v < T(0)));
}

bool is_power_kind(ModuleKind kind) {
  return kind == ModuleKind::RealNPU || kind == ModuleKind::NPU;
}

void check_params(const ModuleParams& p) {
  require(p.weights.rows() > 0 && p.weights.cols() > 0, "empty weight matrix");
  if (is_power_kind(p.kind)) {
    require(p.gate.has_value() && p.gate->size() == p.weights.rows(),
            "Real NPU/NPU gate must have one entry per input");
  }
  if (p.kind == ModuleKind::NPU) {
    require(p.imaginary.has_value() && p.imaginary->rows() == p.weights.rows() &&
                p.imaginary->cols() == p.weights.cols(),
            "NPU imaginary matrix must match the real weights");
  }
  if (p.kind == ModuleKind::NMRU) {
    require(p.weights.rows() % 2 == 0, "NMRU weights must have 2I rows");
    if (p.options.nmru_gate) {
      require(p.gate.has_value() && p.gate->size() == p.weights.rows(),
              "NMRU gate must have 2I entries");
    }
  }
}

// out(n, i) = prod_{j != i} f(n, j), without dividing (zeros are fine).
Matrix exclusive_products(const Matrix& f) {
  const Eigen::Index n_rows = f.rows();
  const Eigen::Index n_cols = f.cols();
  Matrix out(n_rows, n_cols);
  for (Eigen::Index n = 0; n < n_rows; ++n) {
    double prefix = 1.0;
    for (Eigen::Index i = 0; i < n_cols; ++i) {
      out(n, i) = prefix;
      prefix *= f(n, i);
    }
    double suffix = 1.0;
    for (Eigen::Index i = n_cols - 1; i >= 0; --i) {
      out(n, i) *= suffix;
      suffix *= f(n, i);
    }
  }
  return out;
}

Vector effective_gate(const ModuleParams& p) {
  if (p.options.clip_gates) return *p.gate;
  return p.gate->cwiseMax(0.0).cwiseMin(1.0);
}

// --- Real NPU / NPU -------------------------------------------------------

void forward_power(const ModuleParams& p, const Matrix& x, ForwardCache& c,
                   Matrix& y) {
  const Eigen::Index n_rows = x.rows();
  const Eigen::Index n_in = x.cols();
  const double eps = p.options.epsilon;
  const Vector g = effective_gate(p);

  c.r.resize(n_rows, n_in);
  c.k.resize(n_rows, n_in);
  for (Eigen::Index i = 0; i < n_in; ++i) {
    for (Eigen::Index n = 0; n < n_rows; ++n) {
      const double v = x(n, i);
      c.r(n, i) = g(i) * (std::abs(v) + eps) + (1.0 - g(i));
      c.k(n, i) = v < 0.0 ? kPi * g(i) : 0.0;
    }
  }
  c.log_r = c.r.array().log().matrix();

  Matrix log_sum = c.log_r * p.weights;
  Matrix angle = c.k * p.weights;
  if (p.kind == ModuleKind::NPU) {
    log_sum -= c.k * *p.imaginary;
    angle += c.log_r * *p.imaginary;
  }
  c.magnitude = log_sum.array().exp().matrix();
  c.cos_angle = angle.array().cos().matrix();
  c.sin_angle = angle.array().sin().matrix();
  y = c.magnitude.cwiseProduct(c.cos_angle);
}

void backward_power(const ModuleParams& p, const ForwardCache& c,
                    const Matrix& grad_y, BackwardResult& out) {
  const Matrix& x = c.input;
  const Eigen::Index n_rows = x.rows();
  const Eigen::Index n_in = x.cols();
  const double eps = p.options.epsilon;
  const Vector g = effective_gate(p);

  const Matrix d_log_sum =
      grad_y.cwiseProduct(c.magnitude).cwiseProduct(c.cos_angle);
  const Matrix d_angle =
      -grad_y.cwiseProduct(c.magnitude).cwiseProduct(c.sin_angle);

  out.params.weights = c.log_r.transpose() * d_log_sum + c.k.transpose() * d_angle;
  Matrix d_log_r = d_log_sum * p.weights.transpose();
  Matrix d_k = d_angle * p.weights.transpose();
  if (p.kind == ModuleKind::NPU) {
    out.params.imaginary =
        -(c.k.transpose() * d_log_sum) + c.log_r.transpose() * d_angle;
    d_log_r += d_angle * p.imaginary->transpose();
    d_k -= d_log_sum * p.imaginary->transpose();
  }
  const Matrix d_r = d_log_r.cwiseQuotient(c.r);

  Vector d_gate = Vector::Zero(n_in);
  out.input.resize(n_rows, n_in);
  for (Eigen::Index i = 0; i < n_in; ++i) {
    double acc = 0.0;
    for (Eigen::Index n = 0; n < n_rows; ++n) {
      const double v = x(n, i);
      acc += d_r(n, i) * (std::abs(v) + eps - 1.0);
      if (v < 0.0) acc += d_k(n, i) * kPi;
      out.input(n, i) = d_r(n, i) * g(i) * sign_of(v);
    }
    d_gate(i) = acc;
  }
  if (!p.options.clip_gates) {
    // Clamp in forward passes gradient only inside [0, 1].
    for (Eigen::Index i = 0; i < n_in; ++i) {
      const double raw = (*p.gate)(i);
      if (raw < 0.0 || raw > 1.0) d_gate(i) = 0.0;
    }
  }
  out.params.gate = d_gate;
}

// --- NRU / NRU with separate sign ----------------------------------------

void forward_nru(const ModuleParams& p, const Matrix& x, Mode mode,
                 ForwardCache& c, Matrix& y) {
  const Eigen::Index n_rows = x.rows();
  const Eigen::Index n_in = x.cols();
  const Eigen::Index n_out = p.weights.cols();
  const bool separate = p.kind == ModuleKind::NRUSeparateSign;
  const double scale = p.options.tanh_scale;

  c.abs_weight.resize(n_in, n_out);
  c.abs_weight_grad.resize(n_in, n_out);
  for (Eigen::Index o = 0; o < n_out; ++o) {
    for (Eigen::Index i = 0; i < n_in; ++i) {
      const double w = p.weights(i, o);
      if (mode == Mode::Training) {
        const double t = std::tanh(scale * w);
        c.abs_weight(i, o) = t * t;
        c.abs_weight_grad(i, o) = 2.0 * t * scale * (1.0 - t * t);
      } else {
        c.abs_weight(i, o) = std::abs(w);
        c.abs_weight_grad(i, o) = sign_of(w);
      }
    }
  }

  c.factors.assign(static_cast<std::size_t>(n_out), Matrix(n_rows, n_in));
  c.powers.assign(static_cast<std::size_t>(n_out), Matrix(n_rows, n_in));
  if (separate) c.sign_products = Matrix::Ones(n_rows, n_out);
  y.resize(n_rows, n_out);

  for (Eigen::Index o = 0; o < n_out; ++o) {
    Matrix& f = c.factors[static_cast<std::size_t>(o)];
    Matrix& pw = c.powers[static_cast<std::size_t>(o)];
    for (Eigen::Index i = 0; i < n_in; ++i) {
      const double w = p.weights(i, o);
      const double a = c.abs_weight(i, o);
      const double rounded = std::nearbyint(w);
      for (Eigen::Index n = 0; n < n_rows; ++n) {
        const double v = x(n, i);
        const double power = std::pow(std::abs(v), w);
        pw(n, i) = power;
        const double signed_power = separate ? power : sign_of(v) * power;
        // 0^w with w < 0 is reported as +inf rather than sign(0) * inf = NaN.
        f(n, i) = std::isinf(power) && a != 0.0
                      ? power
                      : signed_power * a + 1.0 - a;
        if (separate) c.sign_products(n, o) *= std::pow(sign_of(v), rounded);
      }
    }
    for (Eigen::Index n = 0; n < n_rows; ++n) y(n, o) = f.row(n).prod();
  }
  if (separate) y = y.cwiseProduct(c.sign_products);
}

void backward_nru(const ModuleParams& p, const ForwardCache& c,
                  const Matrix& grad_y, BackwardResult& out) {
  const Matrix& x = c.input;
  const Eigen::Index n_rows = x.rows();
  const Eigen::Index n_in = x.cols();
  const Eigen::Index n_out = p.weights.cols();
  const bool separate = p.kind == ModuleKind::NRUSeparateSign;

  out.params.weights = Matrix::Zero(n_in, n_out);
  out.input = Matrix::Zero(n_rows, n_in);
  for (Eigen::Index o = 0; o < n_out; ++o) {
    const Matrix& f = c.factors[static_cast<std::size_t>(o)];
    const Matrix& pw = c.powers[static_cast<std::size_t>(o)];
    const Matrix rest = exclusive_products(f);
    for (Eigen::Index i = 0; i < n_in; ++i) {
      const double w = p.weights(i, o);
      const double a = c.abs_weight(i, o);
      const double da = c.abs_weight_grad(i, o);
      double acc = 0.0;
      for (Eigen::Index n = 0; n < n_rows; ++n) {
        const double v = x(n, i);
        const double s = sign_of(v);
        const double abs_v = std::abs(v);
        const double power = pw(n, i);
        const double power_log = power == 0.0 ? 0.0 : power * std::log(abs_v);
        const double d_power_dx = v == 0.0 ? 0.0 : w * std::pow(abs_v, w - 1.0) * s;
        double df_dw;
        double df_dx;
        if (separate) {
          df_dw = power_log * a + power * da - da;
          df_dx = d_power_dx * a;
        } else {
          df_dw = s * (power_log * a + power * da) - da;
          df_dx = s * d_power_dx * a;
        }
        double upstream = grad_y(n, o) * rest(n, i);
        if (separate) upstream *= c.sign_products(n, o);
        acc += upstream * df_dw;
        out.input(n, i) += upstream * df_dx;
      }
      out.params.weights(i, o) = acc;
    }
  }
}

// --- NMRU -----------------------------------------------------------------

void forward_nmru(const ModuleParams& p, const Matrix& x, ForwardCache& c,
                  Matrix& y) {
  const Eigen::Index n_rows = x.rows();
  const Eigen::Index n_in = x.cols();
  const Eigen::Index n_aug = 2 * n_in;
  const Eigen::Index n_out = p.weights.cols();
  const double eps = p.options.epsilon;
  const bool gated = p.options.nmru_gate;

  c.augmented.resize(n_rows, n_aug);
  c.augmented.leftCols(n_in) = x;
  c.augmented.rightCols(n_in) = (x.array() + eps).inverse().matrix();
  require(c.augmented.allFinite(), "NMRU reciprocal is not finite (x == -eps)");

  c.gated = c.augmented;
  if (gated) c.gated = c.augmented * p.gate->asDiagonal();

  c.factors.assign(static_cast<std::size_t>(n_out), Matrix(n_rows, n_aug));
  y.resize(n_rows, n_out);
  if (p.options.nmru_sign) {
    c.k.resize(n_rows, n_aug);
    for (Eigen::Index i = 0; i < n_aug; ++i) {
      const double gate_i = gated ? (*p.gate)(i) : 1.0;
      for (Eigen::Index n = 0; n < n_rows; ++n) {
        c.k(n, i) = c.augmented(n, i) < 0.0 ? kPi * gate_i : 0.0;
      }
    }
    const Matrix angle = c.k * p.weights;
    c.cos_angle = angle.array().cos().matrix();
    c.sin_angle = angle.array().sin().matrix();
    c.magnitude.resize(n_rows, n_out);
  }
  const Matrix abs_gated = c.gated.cwiseAbs();
  for (Eigen::Index o = 0; o < n_out; ++o) {
    Matrix& f = c.factors[static_cast<std::size_t>(o)];
    const Matrix& source = p.options.nmru_sign ? abs_gated : c.gated;
    for (Eigen::Index i = 0; i < n_aug; ++i) {
      const double w = p.weights(i, o);
      f.col(i) = (w * source.col(i).array() + 1.0 - w).matrix();
    }
    for (Eigen::Index n = 0; n < n_rows; ++n) {
      const double prod = f.row(n).prod();
      if (p.options.nmru_sign) {
        c.magnitude(n, o) = prod;
        y(n, o) = prod * c.cos_angle(n, o);
      } else {
        y(n, o) = prod;
      }
    }
  }
}

void backward_nmru(const ModuleParams& p, const ForwardCache& c,
                   const Matrix& grad_y, BackwardResult& out) {
  const Eigen::Index n_rows = c.input.rows();
  const Eigen::Index n_in = c.input.cols();
  const Eigen::Index n_aug = 2 * n_in;
  const Eigen::Index n_out = p.weights.cols();
  const bool with_sign = p.options.nmru_sign;

  out.params.weights = Matrix::Zero(n_aug, n_out);
  Matrix d_gated = Matrix::Zero(n_rows, n_aug);
  Matrix d_k;
  if (with_sign) {
    const Matrix d_angle =
        -grad_y.cwiseProduct(c.magnitude).cwiseProduct(c.sin_angle);
    out.params.weights += c.k.transpose() * d_angle;
    d_k = d_angle * p.weights.transpose();
  }
  for (Eigen::Index o = 0; o < n_out; ++o) {
    const Matrix rest = exclusive_products(c.factors[static_cast<std::size_t>(o)]);
    for (Eigen::Index i = 0; i < n_aug; ++i) {
      const double w = p.weights(i, o);
      double acc = 0.0;
      for (Eigen::Index n = 0; n < n_rows; ++n) {
        const double v = c.gated(n, i);
        double upstream = grad_y(n, o) * rest(n, i);
        if (with_sign) {
          upstream *= c.cos_angle(n, o);
          acc += upstream * (std::abs(v) - 1.0);
          d_gated(n, i) += upstream * w * sign_of(v);
        } else {
          acc += upstream * (v - 1.0);
          d_gated(n, i) += upstream * w;
        }
      }
      out.params.weights(i, o) += acc;
    }
  }

  Matrix d_aug = d_gated;
  if (p.options.nmru_gate) {
    Vector d_gate(n_aug);
    for (Eigen::Index i = 0; i < n_aug; ++i) {
      double acc = d_gated.col(i).dot(c.augmented.col(i));
      if (with_sign) {
        for (Eigen::Index n = 0; n < n_rows; ++n) {
          if (c.augmented(n, i) < 0.0) acc += d_k(n, i) * kPi;
        }
      }
      d_gate(i) = acc;
    }
    out.params.gate = d_gate;
    d_aug = d_gated * p.gate->asDiagonal();
  }

  const double eps = p.options.epsilon;
  out.input = d_aug.leftCols(n_in);
  for (Eigen::Index i = 0; i < n_in; ++i) {
    for (Eigen::Index n = 0; n < n_rows; ++n) {
      const double shifted = c.input(n, i) + eps;
      out.input(n, i) -= d_aug(n, n_in + i) / (shifted * shifted);
    }
  }
}

// --- NMU / NAU ------------------------------------------------------------

void forward_nmu(const ModuleParams& p, const Matrix& x, ForwardCache& c,
                 Matrix& y) {
  const Eigen::Index n_rows = x.rows();
  const Eigen::Index n_in = x.cols();
  const Eigen::Index n_out = p.weights.cols();
  c.factors.assign(static_cast<std::size_t>(n_out), Matrix(n_rows, n_in));
  y.resize(n_rows, n_out);
  for (Eigen::Index o = 0; o < n_out; ++o) {
    Matrix& f = c.factors[static_cast<std::size_t>(o)];
    for (Eigen::Index i = 0; i < n_in; ++i) {
      const double w = p.weights(i, o);
      f.col(i) = (w * x.col(i).array() + 1.0 - w).matrix();
    }
    for (Eigen::Index n = 0; n < n_rows; ++n) y(n, o) = f.row(n).prod();
  }
}

void backward_nmu(const ModuleParams& p, const ForwardCache& c,
                  const Matrix& grad_y, BackwardResult& out) {
  const Matrix& x = c.input;
  const Eigen::Index n_out = p.weights.cols();
  out.params.weights = Matrix::Zero(x.cols(), n_out);
  out.input = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index o = 0; o < n_out; ++o) {
    const Matrix rest = exclusive_products(c.factors[static_cast<std::size_t>(o)]);
    const Matrix upstream = rest.array().colwise() * grad_y.col(o).array();
    out.params.weights.col(o) =
        upstream.cwiseProduct((x.array() - 1.0).matrix()).colwise().sum().transpose();
    out.input += upstream * p.weights.col(o).asDiagonal();
  }
}

// --- Output-only evaluation in an arbitrary scalar type ---------------------

template <typename T>
using MatT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

template <typename T>
MatT<T> evaluate(const ModuleParams& p, const MatT<T>& x, Mode mode) {
  const Eigen::Index n_rows = x.rows();
  const Eigen::Index n_in = x.cols();
  const Eigen::Index n_out = p.weights.cols();
  const MatT<T> w = p.weights.cast<T>();
  const T eps = static_cast<T>(p.options.epsilon);
  const T pi = std::numbers::pi_v<T>;
  const T one(1);
  MatT<T> y(n_rows, n_out);

  switch (p.kind) {
    case ModuleKind::RealNPU:
    case ModuleKind::NPU: {
      Eigen::Matrix<T, Eigen::Dynamic, 1> g = effective_gate(p).cast<T>();
      MatT<T> log_r(n_rows, n_in);
      MatT<T> k(n_rows, n_in);
      for (Eigen::Index i = 0; i < n_in; ++i) {
        for (Eigen::Index n = 0; n < n_rows; ++n) {
          const T v = x(n, i);
          log_r(n, i) = std::log(g(i) * (std::abs(v) + eps) + (one - g(i)));
          k(n, i) = v < T(0) ? pi * g(i) : T(0);
        }
      }
      MatT<T> log_sum = log_r * w;
      MatT<T> angle = k * w;
      if (p.kind == ModuleKind::NPU) {
        const MatT<T> wi = p.imaginary->cast<T>();
        log_sum -= k * wi;
        angle += log_r * wi;
      }
      y = (log_sum.array().exp() * angle.array().cos()).matrix();
      break;
    }
    case ModuleKind::NRU:
    case ModuleKind::NRUSeparateSign: {
      const bool separate = p.kind == ModuleKind::NRUSeparateSign;
      const T scale = static_cast<T>(p.options.tanh_scale);
      for (Eigen::Index n = 0; n < n_rows; ++n) {
        for (Eigen::Index o = 0; o < n_out; ++o) {
          T prod = one;
          T sign = one;
          for (Eigen::Index i = 0; i < n_in; ++i) {
            const T wi = w(i, o);
            const T t = std::tanh(scale * wi);
            const T a = mode == Mode::Training ? t * t : std::abs(wi);
            const T v = x(n, i);
            const T power = std::pow(std::abs(v), wi);
            const T signed_power = separate ? power : sign_of(v) * power;
            prod *= std::isinf(power) && a != T(0) ? power : signed_power * a + one - a;
            if (separate) sign *= std::pow(sign_of(v), std::nearbyint(wi));
          }
          y(n, o) = prod * sign;
        }
      }
      break;
    }
    case ModuleKind::NMRU: {
      const Eigen::Index n_aug = 2 * n_in;
      MatT<T> aug(n_rows, n_aug);
      aug.leftCols(n_in) = x;
      aug.rightCols(n_in) = (x.array() + eps).inverse().matrix();
      for (Eigen::Index n = 0; n < n_rows; ++n) {
        for (Eigen::Index o = 0; o < n_out; ++o) {
          T prod = one;
          T angle(0);
          for (Eigen::Index i = 0; i < n_aug; ++i) {
            const T gate_i =
                p.options.nmru_gate ? static_cast<T>((*p.gate)(i)) : one;
            const T v = aug(n, i) * gate_i;
            const T wi = w(i, o);
            if (p.options.nmru_sign) {
              prod *= wi * std::abs(v) + one - wi;
              if (aug(n, i) < T(0)) angle += wi * pi * gate_i;
            } else {
              prod *= wi * v + one - wi;
            }
          }
          y(n, o) = p.options.nmru_sign ? prod * std::cos(angle) : prod;
        }
      }
      break;
    }
    case ModuleKind::NMU:
      for (Eigen::Index n = 0; n < n_rows; ++n) {
        for (Eigen::Index o = 0; o < n_out; ++o) {
          T prod = one;
          for (Eigen::Index i = 0; i < n_in; ++i) {
            prod *= w(i, o) * x(n, i) + one - w(i, o);
          }
          y(n, o) = prod;
        }
      }
      break;
    case ModuleKind::NAU:
      y = x * w;
      break;
  }
  return y;
}

}  // namespace

ModuleParams init_params(ModuleKind kind, Eigen::Index in_size,
                         Eigen::Index out_size, std::uint64_t seed,
                         const ModuleOptions& options) {
  require(in_size >= 1 && out_size >= 1, "module dimensions must be >= 1");
  Rng rng = make_rng(seed, 0x1417);
  ModuleParams p;
  p.kind = kind;
  p.options = options;

  const double fan_avg = static_cast<double>(in_size + out_size) / 2.0;
  const double xavier = std::sqrt(3.0 / fan_avg);
  auto uniform_matrix = [&rng](Eigen::Index rows, Eigen::Index cols, double lo,
                               double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix m(rows, cols);
    // Column-major fill order is part of the determinism contract.
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
    }
    return m;
  };

  switch (kind) {
    case ModuleKind::RealNPU:
    case ModuleKind::NPU: {
      const double bound = options.constrained_init ? std::min(0.5, xavier) : xavier;
      p.weights = uniform_matrix(in_size, out_size, -bound, bound);
      p.gate = Vector::Constant(in_size, 0.5);
      if (kind == ModuleKind::NPU) p.imaginary = Matrix::Zero(in_size, out_size);
      break;
    }
    case ModuleKind::NRU:
    case ModuleKind::NRUSeparateSign:
    case ModuleKind::NAU: {
      const double bound = std::min(0.5, xavier);
      p.weights = uniform_matrix(in_size, out_size, -bound, bound);
      break;
    }
    case ModuleKind::NMRU:
    case ModuleKind::NMU: {
      const Eigen::Index rows = kind == ModuleKind::NMRU ? 2 * in_size : in_size;
      // NMU scheme: std of 0.5 gives sqrt(3) * 0.5 > 0.25, so the half-width
      // saturates at 0.25.
      const double half_width = std::min(0.25, std::sqrt(3.0) * 0.5);
      p.weights = uniform_matrix(rows, out_size, 0.5 - half_width, 0.5 + half_width);
      if (kind == ModuleKind::NMRU && options.nmru_gate) {
        p.gate = Vector::Constant(rows, 0.5);
      }
      break;
    }
  }
  return p;
}

void clip_params_inplace(ModuleParams& p) {
  auto clamp = [](auto& tensor, double lo, double hi) {
    tensor = tensor.cwiseMax(lo).cwiseMin(hi);
  };
  switch (p.kind) {
    case ModuleKind::RealNPU:
    case ModuleKind::NPU:
      if (p.options.clip_weights) clamp(p.weights, -1.0, 1.0);
      if (p.options.clip_gates && p.gate) clamp(*p.gate, 0.0, 1.0);
      if (p.options.clip_imaginary && p.imaginary) clamp(*p.imaginary, -1.0, 1.0);
      break;
    case ModuleKind::NRU:
    case ModuleKind::NRUSeparateSign:
    case ModuleKind::NAU:
      clamp(p.weights, -1.0, 1.0);
      break;
    case ModuleKind::NMRU:
    case ModuleKind::NMU:
      clamp(p.weights, 0.0, 1.0);
      if (p.gate) clamp(*p.gate, 0.0, 1.0);
      break;
  }
}

ModuleParams clip_params(ModuleParams params) {
  clip_params_inplace(params);
  return params;
}

ForwardResult forward(const ModuleParams& params, const Matrix& x, Mode mode) {
  check_params(params);
  require(x.cols() == params.in_size(), "input width does not match the module");
  require(x.allFinite(), "input contains non-finite values");

  ForwardResult result;
  ForwardCache& c = result.cache;
  c.kind = params.kind;
  c.mode = mode;
  c.input = x;
  switch (params.kind) {
    case ModuleKind::RealNPU:
    case ModuleKind::NPU:
      forward_power(params, x, c, result.output);
      break;
    case ModuleKind::NRU:
    case ModuleKind::NRUSeparateSign:
      forward_nru(params, x, mode, c, result.output);
      break;
    case ModuleKind::NMRU:
      forward_nmru(params, x, c, result.output);
      break;
    case ModuleKind::NMU:
      forward_nmu(params, x, c, result.output);
      break;
    case ModuleKind::NAU:
      result.output = x * params.weights;
      break;
  }
  return result;
}

Eigen::MatrixXf forward_f32(const ModuleParams& params, const Eigen::MatrixXf& x,
                            Mode mode) {
  check_params(params);
  require(x.cols() == params.in_size(), "input width does not match the module");
  return evaluate<float>(params, x, mode);
}

BackwardResult backward(const ModuleParams& params, const ForwardCache& cache,
                        const Matrix& grad_output) {
  check_params(params);
  require(cache.kind == params.kind, "cache was produced by a different module kind");
  require(cache.input.cols() == params.in_size(), "cache input width mismatch");
  require(grad_output.rows() == cache.input.rows() &&
              grad_output.cols() == params.out_size(),
          "output gradient shape does not match the forward output");

  BackwardResult out;
  switch (params.kind) {
    case ModuleKind::RealNPU:
    case ModuleKind::NPU:
      backward_power(params, cache, grad_output, out);
      break;
    case ModuleKind::NRU:
    case ModuleKind::NRUSeparateSign:
      backward_nru(params, cache, grad_output, out);
      break;
    case ModuleKind::NMRU:
      backward_nmru(params, cache, grad_output, out);
      break;
    case ModuleKind::NMU:
      backward_nmu(params, cache, grad_output, out);
      break;
    case ModuleKind::NAU:
      out.params.weights = cache.input.transpose() * grad_output;
      out.input = grad_output * params.weights.transpose();
      break;
  }
  return out;
}

double nru_weight_grad_closed_form(double w, double x, double rest_factor,
                                   double tanh_scale) {
  const double t = std::tanh(tanh_scale * w);
  if (t == 0.0) return 0.0;
  const double sech = 1.0 / std::cosh(tanh_scale * w);
  const double sech2 = sech * sech;
  const double abs_x = std::abs(x);
  const double power = std::pow(abs_x, w);
  const double log_term = power == 0.0 ? 0.0 : t * std::log(abs_x);
  const double inner =
      sign_of(x) * power * (log_term + 2.0 * tanh_scale * sech2) -
      2.0 * tanh_scale * sech2;
  return t * inner * rest_factor;
}

ModuleParams golden_params(ModuleKind kind, const TaskSpec& task,
                           const ModuleOptions& options) {
  task.validate();
  const auto n_in = static_cast<Eigen::Index>(task.input_size);
  const auto first = static_cast<Eigen::Index>(task.first);
  const auto second = static_cast<Eigen::Index>(task.second);

  ModuleParams p;
  p.kind = kind;
  p.options = options;

  // Exponent per input: +1 multiplies, -1 takes the reciprocal.
  Vector exponent = Vector::Zero(n_in);
  switch (task.operation) {
    case Operation::Divide:
      exponent(first) = 1.0;
      exponent(second) = -1.0;
      break;
    case Operation::Multiply:
      exponent(first) = 1.0;
      exponent(second) = 1.0;
      break;
    case Operation::Reciprocal:
      exponent(first) = -1.0;
      break;
  }

  switch (kind) {
    case ModuleKind::RealNPU:
    case ModuleKind::NPU:
      p.weights = exponent;
      p.gate = exponent.cwiseAbs();
      if (kind == ModuleKind::NPU) p.imaginary = Matrix::Zero(n_in, 1);
      break;
    case ModuleKind::NRU:
    case ModuleKind::NRUSeparateSign:
      p.weights = exponent;
      break;
    case ModuleKind::NMRU:
      p.weights = Matrix::Zero(2 * n_in, 1);
      for (Eigen::Index i = 0; i < n_in; ++i) {
        if (exponent(i) > 0.0) p.weights(i, 0) = 1.0;
        if (exponent(i) < 0.0) p.weights(n_in + i, 0) = 1.0;
      }
      if (options.nmru_gate) p.gate = Vector::Ones(2 * n_in);
      break;
    case ModuleKind::NMU:
      require(task.operation == Operation::Multiply,
              "the NMU has no golden solution for division or reciprocal");
      p.weights = exponent;
      break;
    case ModuleKind::NAU:
      throw NalmError("the NAU has no golden solution for multiplicative tasks");
  }
  return p;
}

}  // namespace nalm
