#include <nalm/module.hpp>

#include <algorithm>
#include <cctype>
#include <string>

namespace nalm {

std::string_view to_string(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::RealNPU: return "realnpu";
    case ModuleKind::NPU: return "npu";
    case ModuleKind::NRU: return "nru";
    case ModuleKind::NRUSeparateSign: return "nru-sep";
    case ModuleKind::NMRU: return "nmru";
    case ModuleKind::NAU: return "nau";
    case ModuleKind::NMU: return "nmu";
  }
  return "?";
}

ModuleKind parse_module_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (ModuleKind kind : kAllKinds) {
    if (lower == to_string(kind)) return kind;
  }
  if (lower == "nrusep" || lower == "nru_sep" || lower == "nruseparatesign") {
    return ModuleKind::NRUSeparateSign;
  }
  if (lower == "real-npu" || lower == "real_npu") return ModuleKind::RealNPU;
  throw NalmError("unknown module kind '" + std::string(name) + "'");
}

Eigen::Index ModuleParams::in_size() const {
  return kind == ModuleKind::NMRU ? weights.rows() / 2 : weights.rows();
}

ParamGrads ParamGrads::zeros_like(const ModuleParams& params) {
  ParamGrads g;
  g.weights = Matrix::Zero(params.weights.rows(), params.weights.cols());
  if (params.imaginary) {
    g.imaginary = Matrix::Zero(params.imaginary->rows(), params.imaginary->cols());
  }
  if (params.gate) g.gate = Vector::Zero(params.gate->size());
  return g;
}

ParamGrads& ParamGrads::operator+=(const ParamGrads& other) {
  weights += other.weights;
  if (imaginary && other.imaginary) *imaginary += *other.imaginary;
  if (gate && other.gate) *gate += *other.gate;
  return *this;
}

ParamGrads& ParamGrads::operator*=(double scale) {
  weights *= scale;
  if (imaginary) *imaginary *= scale;
  if (gate) *gate *= scale;
  return *this;
}

double ParamGrads::squared_norm() const {
  double total = weights.squaredNorm();
  if (imaginary) total += imaginary->squaredNorm();
  if (gate) total += gate->squaredNorm();
  return total;
}

bool ParamGrads::all_finite() const {
  if (!weights.allFinite()) return false;
  if (imaginary && !imaginary->allFinite()) return false;
  if (gate && !gate->allFinite()) return false;
  return true;
}

namespace {

template <typename Span, typename Tensors>
std::vector<Span> views_of(Tensors& t) {
  std::vector<Span> out;
  out.emplace_back(t.weights.data(), static_cast<std::size_t>(t.weights.size()));
  if (t.imaginary) {
    out.emplace_back(t.imaginary->data(), static_cast<std::size_t>(t.imaginary->size()));
  }
  if (t.gate) out.emplace_back(t.gate->data(), static_cast<std::size_t>(t.gate->size()));
  return out;
}

}  // namespace

std::vector<std::span<double>> tensor_views(ModuleParams& params) {
  return views_of<std::span<double>>(params);
}

std::vector<std::span<double>> tensor_views(ParamGrads& grads) {
  return views_of<std::span<double>>(grads);
}

std::vector<std::span<const double>> tensor_views(const ModuleParams& params) {
  return views_of<std::span<const double>>(params);
}

}  // namespace nalm
