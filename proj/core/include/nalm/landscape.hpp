#pragma once

// RMSE surfaces of a two-layer stack: an NAU feeding a division-capable
// module, with both weight matrices tied to one scalar each.
//
//   W1 = [[w1, w1, 0, 0], [w1, w1, w1, w1]]  ->  h = (2.2 w1, 6 w1)
//   W2 = [w2, w2]                            (NMRU: [w2, w2, 0, 0])
//
// for the probe x = (1, 1.2, 1.8, 2) and target (x1 + x2)(x1 + x2 + x3 + x4).

#include <nalm/module.hpp>
#include <nalm/task.hpp>

#include <array>
#include <cstddef>
#include <iosfwd>
#include <vector>

namespace nalm {

struct SurfaceSpec {
  ModuleKind second_layer = ModuleKind::NRU;
  Interval w1_range{-1.0, 1.0};
  Interval w2_range{-1.0, 1.0};  // closed intervals
  std::size_t resolution = 401;
  std::array<double, 4> probe{1.0, 1.2, 1.8, 2.0};
  double epsilon = 1e-7;

  // Real NPU: eps 1e-5, w2 in [-1, 1]; NRU: w2 in [-1, 1]; NMRU: w2 in [0, 1].
  static SurfaceSpec defaults(ModuleKind second_layer);
  double target() const;
};

// Prediction of the stacked network; may be non-finite.
double stacked_prediction(const SurfaceSpec& spec, double w1, double w2);

struct Surface {
  std::vector<double> w1;  // axis nodes
  std::vector<double> w2;
  Matrix rmse;             // rmse(i, j) at (w1[i], w2[j])

  double max_finite() const;
  bool all_finite() const;
};

// Node j of an n-point axis over [lo, hi] is lo + ((hi - lo) * j) / (n - 1),
// so a grid with 2n - 1 nodes contains every node of the n-point grid.
std::vector<double> grid_axis(const Interval& range, std::size_t resolution);

Surface rmse_surface(const SurfaceSpec& spec);

// Columns w1,w2,rmse; w1 outer, w2 inner. Non-finite values are written as
// "inf" (positive infinity) or "nan".
void write_surface_csv(std::ostream& out, const Surface& surface);

}  // namespace nalm
