#pragma once

// Forward/backward passes, initialisation and clipping for the arithmetic
// modules. All matrices are batch-major: inputs are N x I, outputs N x O.

#include <nalm/module.hpp>
#include <nalm/task.hpp>

#include <cstdint>

namespace nalm {

// Everything backward() needs; filled by forward().
struct ForwardCache {
  ModuleKind kind = ModuleKind::NAU;
  Mode mode = Mode::Eval;
  Matrix input;      // N x I, raw input
  Matrix augmented;  // NMRU: N x 2I, [x, 1/(x+eps)] before gating
  Matrix gated;      // NMRU: augmented * gate (equals augmented without a gate)

  // Real NPU / NPU
  Matrix r;          // N x I relevance-gated magnitudes
  Matrix log_r;      // N x I
  Matrix k;          // N x I sign angles
  Matrix magnitude;  // N x O: exp(...) for Real NPU/NPU, product of factors for NMRU
  Matrix cos_angle;  // N x O
  Matrix sin_angle;  // N x O

  // Product modules (NRU, NRU-sep, NMRU, NMU): one N x I' matrix per output.
  std::vector<Matrix> factors;
  std::vector<Matrix> powers;  // NRU: |x|^W per output
  Matrix abs_weight;           // NRU: |W| or its tanh^2 approximation, I x O
  Matrix abs_weight_grad;      // NRU: d|W|/dW
  Matrix sign_products;        // NRU-sep: N x O
};

struct ForwardResult {
  Matrix output;
  ForwardCache cache;
};

struct BackwardResult {
  ParamGrads params;
  Matrix input;  // N x I
};

ModuleParams init_params(ModuleKind kind, Eigen::Index in_size,
                         Eigen::Index out_size, std::uint64_t seed,
                         const ModuleOptions& options = {});

// Clamps every tensor to the legal range of its kind. Idempotent.
ModuleParams clip_params(ModuleParams params);
void clip_params_inplace(ModuleParams& params);

ForwardResult forward(const ModuleParams& params, const Matrix& x, Mode mode);

// Single-precision forward used for threshold studies; mirrors forward()
// operation by operation in float.
Eigen::MatrixXf forward_f32(const ModuleParams& params, const Eigen::MatrixXf& x,
                            Mode mode);

BackwardResult backward(const ModuleParams& params, const ForwardCache& cache,
                        const Matrix& grad_output);

// d y / d w_i for one NRU factor in training mode, written out term by term:
//   t (sign(x)|x|^w (t log|x| + 2s sech^2(sw)) - 2s sech^2(sw)) * rest
// with t = tanh(s w) and s the tanh scale.
double nru_weight_grad_closed_form(double w, double x, double rest_factor,
                                   double tanh_scale = 1000.0);

// Discrete ideal parameters for a task (inputs not used by the target get 0).
ModuleParams golden_params(ModuleKind kind, const TaskSpec& task,
                           const ModuleOptions& options = {});

}  // namespace nalm
