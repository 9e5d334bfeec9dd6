#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nalm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Thrown for malformed shapes, out-of-domain inputs and unsupported
// kind/task combinations.
class NalmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ModuleKind { RealNPU, NPU, NRU, NRUSeparateSign, NMRU, NAU, NMU };

inline constexpr ModuleKind kAllKinds[] = {
    ModuleKind::RealNPU, ModuleKind::NPU, ModuleKind::NRU,
    ModuleKind::NRUSeparateSign, ModuleKind::NMRU, ModuleKind::NAU,
    ModuleKind::NMU};

std::string_view to_string(ModuleKind kind);
// Accepts the canonical names ("realnpu", "npu", "nru", "nru-sep", "nmru",
// "nau", "nmu"), case-insensitively.
ModuleKind parse_module_kind(std::string_view name);

enum class Mode { Training, Eval };

// Per-instance switches. The defaults describe the modified Real NPU and the
// signed, gradient-clipped NMRU; the baseline Real NPU turns clipping and the
// constrained init off.
struct ModuleOptions {
  double epsilon = 1e-7;      // added to |x| in r (Real NPU/NPU), and to x in the NMRU reciprocal
  double tanh_scale = 1000.0; // |W| ~ tanh(scale * W)^2 for the NRU in training mode
  bool constrained_init = true;
  bool clip_weights = true;
  bool clip_gates = true;      // false: gate is only clamped inside forward
  bool clip_imaginary = false; // NPU imaginary matrix clipped to [-1,1]
  bool nmru_gate = false;      // learnable gate over the 2I augmented inputs
  bool nmru_sign = true;       // cosine sign retrieval; off = plain NMU over [x, 1/x]
};

struct ModuleParams {
  ModuleKind kind = ModuleKind::NAU;
  ModuleOptions options;
  Matrix weights;                 // I x O (2I x O for the NMRU)
  std::optional<Matrix> imaginary; // NPU only, I x O
  std::optional<Vector> gate;      // Real NPU/NPU: length I; NMRU ablation: length 2I

  Eigen::Index in_size() const;
  Eigen::Index out_size() const { return weights.cols(); }
};

// Gradient of a scalar objective with respect to every learnable tensor.
// Optional members mirror ModuleParams.
struct ParamGrads {
  Matrix weights;
  std::optional<Matrix> imaginary;
  std::optional<Vector> gate;

  static ParamGrads zeros_like(const ModuleParams& params);
  ParamGrads& operator+=(const ParamGrads& other);
  ParamGrads& operator*=(double scale);
  double squared_norm() const;
  bool all_finite() const;
};

// Flat views over every learnable tensor, in a fixed order
// (weights, imaginary, gate). Used by optimizers and finite differences.
std::vector<std::span<double>> tensor_views(ModuleParams& params);
std::vector<std::span<double>> tensor_views(ParamGrads& grads);
std::vector<std::span<const double>> tensor_views(const ModuleParams& params);

}  // namespace nalm
