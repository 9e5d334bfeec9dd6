#include <nalm/landscape.hpp>

#include <nalm/nalm_core.hpp>

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace nalm {

SurfaceSpec SurfaceSpec::defaults(ModuleKind second_layer) {
  SurfaceSpec spec;
  spec.second_layer = second_layer;
  switch (second_layer) {
    case ModuleKind::RealNPU:
      spec.epsilon = 1e-5;
      break;
    case ModuleKind::NRU:
      break;
    case ModuleKind::NMRU:
      spec.w2_range = {0.0, 1.0};
      break;
    default:
      throw NalmError("surfaces are defined for the Real NPU, NRU and NMRU");
  }
  return spec;
}

double SurfaceSpec::target() const {
  const auto& x = probe;
  return (x[0] + x[1]) * (x[0] + x[1] + x[2] + x[3]);
}

double stacked_prediction(const SurfaceSpec& spec, double w1, double w2) {
  ModuleParams nau;
  nau.kind = ModuleKind::NAU;
  nau.weights.resize(4, 2);
  nau.weights << w1, w1,
                 w1, w1,
                 0.0, w1,
                 0.0, w1;
  Matrix probe(1, 4);
  probe << spec.probe[0], spec.probe[1], spec.probe[2], spec.probe[3];
  const Matrix hidden = forward(nau, probe, Mode::Eval).output;

  ModuleParams second;
  second.kind = spec.second_layer;
  second.options.epsilon = spec.epsilon;
  switch (spec.second_layer) {
    case ModuleKind::RealNPU:
      second.weights = Matrix::Constant(2, 1, w2);
      second.gate = Vector::Ones(2);
      break;
    case ModuleKind::NRU:
      second.weights = Matrix::Constant(2, 1, w2);
      break;
    case ModuleKind::NMRU:
      second.weights.resize(4, 1);
      second.weights << w2, w2, 0.0, 0.0;
      break;
    default:
      throw NalmError("surfaces are defined for the Real NPU, NRU and NMRU");
  }
  return forward(second, hidden, Mode::Eval).output(0, 0);
}

double Surface::max_finite() const {
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < rmse.size(); ++i) {
    const double v = rmse.data()[i];
    if (std::isfinite(v) && v > best) best = v;
  }
  return best;
}

bool Surface::all_finite() const { return rmse.allFinite(); }

std::vector<double> grid_axis(const Interval& range, std::size_t resolution) {
  if (resolution < 2) throw NalmError("surface resolution must be >= 2");
  std::vector<double> axis(resolution);
  const double width = range.upper - range.lower;
  const double last = static_cast<double>(resolution - 1);
  for (std::size_t j = 0; j < resolution; ++j) {
    axis[j] = range.lower + (width * static_cast<double>(j)) / last;
  }
  return axis;
}

Surface rmse_surface(const SurfaceSpec& spec) {
  Surface s;
  s.w1 = grid_axis(spec.w1_range, spec.resolution);
  s.w2 = grid_axis(spec.w2_range, spec.resolution);
  const double target = spec.target();
  const auto n = static_cast<Eigen::Index>(spec.resolution);
  s.rmse.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double pred = stacked_prediction(spec, s.w1[static_cast<std::size_t>(i)],
                                             s.w2[static_cast<std::size_t>(j)]);
      // Single probe: RMSE reduces to the absolute error.
      s.rmse(i, j) = std::abs(pred - target);
    }
  }
  return s;
}

void write_surface_csv(std::ostream& out, const Surface& surface) {
  out << "w1,w2,rmse\n";
  char buf[96];
  for (std::size_t i = 0; i < surface.w1.size(); ++i) {
    for (std::size_t j = 0; j < surface.w2.size(); ++j) {
      const double v = surface.rmse(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (std::isfinite(v)) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", surface.w1[i], surface.w2[j], v);
      } else {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%s\n", surface.w1[i], surface.w2[j],
                      std::isnan(v) ? "nan" : "inf");
      }
      out << buf;
    }
  }
}

}  // namespace nalm
