#pragma once

#include <nalm/module.hpp>
#include <nalm/task.hpp>

#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

namespace nalm {

using Rng = std::mt19937_64;

// Independent stream for (seed, stream id). Runs draw parameters, training
// batches, validation and test sets from separate streams.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

double draw(const RangeSpec& range, Rng& rng);
std::vector<double> sample(const RangeSpec& range, std::size_t n, Rng& rng);

// Probability mass of N(mean, sd) inside [lower, upper).
double truncated_normal_acceptance(const RangeSpec& range);

enum class Split { Train, Validation, Test };

struct Batch {
  Matrix x;  // N x I
  Vector y;  // N
};

// Rows whose target would divide by an exact zero are redrawn.
Batch build_batch(const TaskSpec& task, Split split, std::size_t n, Rng& rng);

// Header x_0..x_{I-1},y; values printed with round-trip precision.
void write_batch_csv(std::ostream& out, const Batch& batch);

}  // namespace nalm
