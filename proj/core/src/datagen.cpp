#include <nalm/datagen.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ostream>
#include <sstream>

namespace nalm {
namespace {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// Minimal recursive-descent reader for the range notation.
class RangeParser {
 public:
  explicit RangeParser(std::string_view text) : text_(text) {}

  RangeSpec parse() {
    skip_space();
    RangeSpec range;
    if (consume("TN")) {
      expect('(');
      const double mean = number();
      expect(',');
      const double sd = number();
      expect(')');
      const Interval iv = interval();
      range = RangeSpec::truncated_normal(mean, sd, iv.lower, iv.upper);
    } else if (consume("B")) {
      const Interval iv = interval();
      range = RangeSpec::benford(iv.lower, iv.upper);
    } else if (consume("U")) {
      skip_space();
      if (peek() == '[' && peek(1) == '[') {
        ++pos_;
        std::vector<Interval> segments{interval()};
        skip_space();
        while (peek() == ',') {
          ++pos_;
          segments.push_back(interval());
          skip_space();
        }
        expect(']');
        range = RangeSpec::union_uniform(std::move(segments));
      } else {
        bool open = false;
        const Interval iv = interval(&open);
        range = open ? RangeSpec::uniform_open(iv.lower, iv.upper)
                     : RangeSpec::uniform(iv.lower, iv.upper);
      }
    } else {
      fail("expected U, TN or B");
    }
    skip_space();
    if (pos_ != text_.size()) fail("trailing characters");
    range.validate();
    return range;
  }

 private:
  Interval interval(bool* open_lower = nullptr) {
    skip_space();
    const char open = peek();
    if (open != '[' && !(open == '(' && open_lower)) fail("expected '['");
    ++pos_;
    if (open_lower) *open_lower = open == '(';
    Interval iv;
    iv.lower = number();
    expect(',');
    iv.upper = number();
    skip_space();
    if (peek() != ')') fail("ranges are half-open: expected ')'");
    ++pos_;
    return iv;
  }

  double number() {
    skip_space();
    const std::string rest(text_.substr(pos_));
    char* end = nullptr;
    const double v = std::strtod(rest.c_str(), &end);
    if (end == rest.c_str()) fail("expected a number");
    pos_ += static_cast<std::size_t>(end - rest.c_str());
    return v;
  }

  bool consume(std::string_view token) {
    skip_space();
    if (text_.substr(pos_, token.size()) == token) {
      pos_ += token.size();
      return true;
    }
    return false;
  }

  void expect(char c) {
    skip_space();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0';
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw NalmError("cannot parse range '" + std::string(text_) + "' at offset " +
                    std::to_string(pos_) + ": " + what);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double draw_uniform(double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  double v = dist(rng);
  while (v >= hi) v = dist(rng);  // generate_canonical may round up to hi
  return v;
}

}  // namespace

RangeSpec RangeSpec::uniform(double lower, double upper) {
  RangeSpec r;
  r.distribution = Distribution::Uniform;
  r.segments = {{lower, upper}};
  return r;
}

RangeSpec RangeSpec::uniform_open(double lower, double upper) {
  RangeSpec r = uniform(lower, upper);
  r.open_lower = true;
  return r;
}

RangeSpec RangeSpec::union_uniform(std::vector<Interval> segments) {
  RangeSpec r;
  r.distribution = Distribution::UnionUniform;
  r.segments = std::move(segments);
  return r;
}

RangeSpec RangeSpec::truncated_normal(double mean, double stddev, double lower,
                                      double upper) {
  RangeSpec r;
  r.distribution = Distribution::TruncatedNormal;
  r.segments = {{lower, upper}};
  r.mean = mean;
  r.stddev = stddev;
  return r;
}

RangeSpec RangeSpec::benford(double lower, double upper) {
  RangeSpec r;
  r.distribution = Distribution::Benford;
  r.segments = {{lower, upper}};
  return r;
}

void RangeSpec::validate() const {
  if (segments.empty()) throw NalmError("range has no segments");
  if (distribution != Distribution::UnionUniform && segments.size() != 1) {
    throw NalmError("only union ranges may have several segments");
  }
  for (const Interval& s : segments) {
    if (!(s.lower < s.upper) || !std::isfinite(s.lower) || !std::isfinite(s.upper)) {
      throw NalmError("range segment must satisfy lower < upper: " + label());
    }
  }
  if (distribution == Distribution::TruncatedNormal && !(stddev > 0.0)) {
    throw NalmError("truncated normal needs sd > 0");
  }
  if (distribution == Distribution::Benford && !(segments[0].lower > 0.0)) {
    throw NalmError("Benford bounds must be strictly positive");
  }
}

std::string RangeSpec::label() const {
  auto seg = [](const Interval& s) {
    return "[" + format_number(s.lower) + "," + format_number(s.upper) + ")";
  };
  switch (distribution) {
    case Distribution::Uniform:
      if (open_lower && !segments.empty()) {
        return "U(" + format_number(segments[0].lower) + "," +
               format_number(segments[0].upper) + ")";
      }
      return "U" + (segments.empty() ? std::string("[]") : seg(segments[0]));
    case Distribution::UnionUniform: {
      std::string out = "U[";
      for (std::size_t i = 0; i < segments.size(); ++i) {
        if (i) out += ",";
        out += seg(segments[i]);
      }
      return out + "]";
    }
    case Distribution::TruncatedNormal:
      return "TN(" + format_number(mean) + "," + format_number(stddev) + ")" +
             (segments.empty() ? std::string("[]") : seg(segments[0]));
    case Distribution::Benford:
      return "B" + (segments.empty() ? std::string("[]") : seg(segments[0]));
  }
  return "?";
}

RangeSpec parse_range(std::string_view label) { return RangeParser(label).parse(); }

std::string_view to_string(Operation op) {
  switch (op) {
    case Operation::Divide: return "divide";
    case Operation::Reciprocal: return "reciprocal";
    case Operation::Multiply: return "multiply";
  }
  return "?";
}

Operation parse_operation(std::string_view name) {
  if (name == "divide" || name == "div") return Operation::Divide;
  if (name == "reciprocal" || name == "recip") return Operation::Reciprocal;
  if (name == "multiply" || name == "mul") return Operation::Multiply;
  throw NalmError("unknown operation '" + std::string(name) + "'");
}

const RangeSpec& TaskSpec::interpolation_range(std::size_t element) const {
  return interpolation.size() == 1 ? interpolation.front() : interpolation.at(element);
}

const RangeSpec& TaskSpec::extrapolation_range(std::size_t element) const {
  return extrapolation.size() == 1 ? extrapolation.front() : extrapolation.at(element);
}

double TaskSpec::target(const double* row) const {
  switch (operation) {
    case Operation::Divide: return row[first] / row[second];
    case Operation::Reciprocal: return 1.0 / row[first];
    case Operation::Multiply: return row[first] * row[second];
  }
  return 0.0;
}

float TaskSpec::target_f32(const float* row) const {
  switch (operation) {
    case Operation::Divide: return row[first] / row[second];
    case Operation::Reciprocal: return 1.0f / row[first];
    case Operation::Multiply: return row[first] * row[second];
  }
  return 0.0f;
}

void TaskSpec::validate() const {
  if (input_size < 1) throw NalmError("task input size must be >= 1");
  if (first >= input_size) throw NalmError("relevant index out of range");
  if (operation != Operation::Reciprocal) {
    if (second >= input_size) throw NalmError("relevant index out of range");
    if (second == first) throw NalmError("relevant indices must differ");
  }
  for (const auto* ranges : {&interpolation, &extrapolation}) {
    if (ranges->size() != 1 && ranges->size() != input_size) {
      throw NalmError("need one shared range or one range per input element");
    }
    for (const RangeSpec& r : *ranges) r.validate();
  }
}

std::string TaskSpec::canonical() const {
  std::ostringstream out;
  out << "op=" << to_string(operation) << ";I=" << input_size << ";rel=" << first;
  if (operation != Operation::Reciprocal) out << "," << second;
  out << ";interp=";
  for (std::size_t i = 0; i < interpolation.size(); ++i) {
    out << (i ? "|" : "") << interpolation[i].label();
  }
  out << ";extrap=";
  for (std::size_t i = 0; i < extrapolation.size(); ++i) {
    out << (i ? "|" : "") << extrapolation[i].label();
  }
  return out.str();
}

TaskSpec make_task(Operation op, std::size_t input_size, RangeSpec interpolation,
                   RangeSpec extrapolation, std::size_t first, std::size_t second) {
  TaskSpec t;
  t.input_size = input_size;
  t.operation = op;
  t.first = first;
  t.second = second;
  t.label = interpolation.label();
  t.interpolation = {std::move(interpolation)};
  t.extrapolation = {std::move(extrapolation)};
  t.validate();
  return t;
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

double truncated_normal_acceptance(const RangeSpec& range) {
  const Interval& s = range.segments.front();
  return normal_cdf((s.upper - range.mean) / range.stddev) -
         normal_cdf((s.lower - range.mean) / range.stddev);
}

double draw(const RangeSpec& range, Rng& rng) {
  switch (range.distribution) {
    case Distribution::Uniform: {
      const Interval& s = range.segments.front();
      double v = draw_uniform(s.lower, s.upper, rng);
      while (range.open_lower && v == s.lower) v = draw_uniform(s.lower, s.upper, rng);
      return v;
    }
    case Distribution::UnionUniform: {
      double total = 0.0;
      for (const Interval& s : range.segments) total += s.upper - s.lower;
      const double u = draw_uniform(0.0, total, rng);
      double offset = u;
      for (const Interval& s : range.segments) {
        const double width = s.upper - s.lower;
        if (offset < width) return std::min(s.lower + offset, std::nextafter(s.upper, s.lower));
        offset -= width;
      }
      const Interval& last = range.segments.back();
      return std::nextafter(last.upper, last.lower);
    }
    case Distribution::TruncatedNormal: {
      if (truncated_normal_acceptance(range) < 1e-6) {
        throw NalmError("truncated normal acceptance probability below 1e-6: " +
                        range.label());
      }
      const Interval& s = range.segments.front();
      std::normal_distribution<double> normal(range.mean, range.stddev);
      for (;;) {
        const double v = normal(rng);
        if (v >= s.lower && v < s.upper) return v;
      }
    }
    case Distribution::Benford: {
      const Interval& s = range.segments.front();
      for (;;) {
        const double v = std::exp(draw_uniform(std::log(s.lower), std::log(s.upper), rng));
        if (v >= s.lower && v < s.upper) return v;
      }
    }
  }
  throw NalmError("unknown distribution");
}

std::vector<double> sample(const RangeSpec& range, std::size_t n, Rng& rng) {
  range.validate();
  std::vector<double> out(n);
  for (double& v : out) v = draw(range, rng);
  return out;
}

Batch build_batch(const TaskSpec& task, Split split, std::size_t n, Rng& rng) {
  task.validate();
  const std::size_t width = task.input_size;
  Batch batch;
  batch.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width));
  batch.y.resize(static_cast<Eigen::Index>(n));
  std::vector<double> row(width);
  const bool extrapolate = split == Split::Test;
  const std::size_t denominator =
      task.operation == Operation::Reciprocal ? task.first : task.second;
  const bool divides = task.operation != Operation::Multiply;

  for (std::size_t r = 0; r < n; ++r) {
    do {
      for (std::size_t i = 0; i < width; ++i) {
        row[i] = draw(extrapolate ? task.extrapolation_range(i)
                                  : task.interpolation_range(i),
                      rng);
      }
    } while (divides && row[denominator] == 0.0);
    for (std::size_t i = 0; i < width; ++i) {
      batch.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = row[i];
    }
    batch.y(static_cast<Eigen::Index>(r)) = task.target(row.data());
  }
  return batch;
}

void write_batch_csv(std::ostream& out, const Batch& batch) {
  for (Eigen::Index i = 0; i < batch.x.cols(); ++i) out << "x_" << i << ",";
  out << "y\n";
  char buf[32];
  for (Eigen::Index r = 0; r < batch.x.rows(); ++r) {
    for (Eigen::Index i = 0; i < batch.x.cols(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", batch.x(r, i));
      out << buf << ",";
    }
    std::snprintf(buf, sizeof buf, "%.17g", batch.y(r));
    out << buf << "\n";
  }
}

}  // namespace nalm
