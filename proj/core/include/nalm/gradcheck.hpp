#pragma once

// Central finite-difference check of backward() against forward().
//
// The objective is L = sum(grad_y .* forward(params, x)); its numerical
// derivative with respect to every parameter and input entry is compared to
// the analytic one. Errors are reported as |a - n| / max(1, |a|, |n|).

#include <nalm/datagen.hpp>
#include <nalm/module.hpp>

#include <cstdint>

namespace nalm {

struct GradCheckOptions {
  std::size_t trials = 100;
  double step = 1e-4;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  ModuleKind kind = ModuleKind::NAU;
  std::size_t trials = 0;
  std::size_t entries_checked = 0;
  double max_relative_error = 0.0;
  // NRU only: backward vs the closed-form weight derivative.
  double max_closed_form_error = 0.0;
};

double gradient_relative_error(double analytic, double numeric);

// Random parameters in the smooth interior of each kind's domain: NRU
// weights keep |w| >= 0.05, NRU-sep weights also stay away from the rounding
// boundary at 0.5, gates stay inside [0.05, 0.95].
ModuleParams random_safe_params(ModuleKind kind, Eigen::Index in_size,
                                Eigen::Index out_size, Rng& rng,
                                const ModuleOptions& options = {});

// |x| in [0.3, 5] with random sign.
Matrix random_safe_inputs(Eigen::Index rows, Eigen::Index cols, Rng& rng);

GradCheckReport check_gradients(ModuleKind kind, const GradCheckOptions& options = {});

}  // namespace nalm
