#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace nalm {

enum class Distribution { Uniform, UnionUniform, TruncatedNormal, Benford };

struct Interval {
  double lower = 0.0;
  double upper = 1.0;
};

// A sampling distribution over one input element. Written and parsed in the
// notation of the experiment tables: "U[1,2)", "U(0,0.001)",
// "U[[-6,-2),[2,6)]", "TN(1,3)[-10,5)", "B[10,100)".
struct RangeSpec {
  Distribution distribution = Distribution::Uniform;
  std::vector<Interval> segments;  // one for everything but UnionUniform
  double mean = 0.0;               // TruncatedNormal
  double stddev = 1.0;             // TruncatedNormal
  bool open_lower = false;         // "(a,b)": exact lower bound is never produced

  static RangeSpec uniform(double lower, double upper);
  static RangeSpec uniform_open(double lower, double upper);
  static RangeSpec union_uniform(std::vector<Interval> segments);
  static RangeSpec truncated_normal(double mean, double stddev, double lower,
                                    double upper);
  static RangeSpec benford(double lower, double upper);

  // Throws NalmError when an invariant is violated.
  void validate() const;
  std::string label() const;
};

RangeSpec parse_range(std::string_view label);

enum class Operation { Divide, Reciprocal, Multiply };

std::string_view to_string(Operation op);
Operation parse_operation(std::string_view name);

struct TaskSpec {
  std::size_t input_size = 2;
  Operation operation = Operation::Divide;
  std::size_t first = 0;   // numerator / reciprocal operand
  std::size_t second = 1;  // denominator / second factor (unused for reciprocal)
  // One entry per input element, or a single entry shared by all elements.
  std::vector<RangeSpec> interpolation;
  std::vector<RangeSpec> extrapolation;
  std::string label;  // human-readable range name used in reports

  const RangeSpec& interpolation_range(std::size_t element) const;
  const RangeSpec& extrapolation_range(std::size_t element) const;

  double target(const double* row) const;
  float target_f32(const float* row) const;

  void validate() const;
  // Stable textual form used to derive run keys.
  std::string canonical() const;
};

// Task where every element shares the same interpolation/extrapolation range.
TaskSpec make_task(Operation op, std::size_t input_size, RangeSpec interpolation,
                   RangeSpec extrapolation, std::size_t first = 0,
                   std::size_t second = 1);

}  // namespace nalm
