#include <nalm/training.hpp>

#include <nalm/nalm_core.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace nalm {
namespace {

double sign_of(double v) { return static_cast<double>((0.0 < v) - (v < 0.0)); }

// d/dw of the discretisation distance. Ties at |w| = 0.5 take the 1-|w| branch.
double discretization_term(double w, bool penalize_zero, double* grad) {
  const double a = std::abs(w);
  if (penalize_zero) {
    *grad = a < 1.0 ? -sign_of(w) : (a > 1.0 ? sign_of(w) : 0.0);
    return std::abs(1.0 - a);
  }
  if (a < 1.0 - a) {
    *grad = sign_of(w);
    return a;
  }
  *grad = -sign_of(w);
  return 1.0 - a;
}

template <typename Tensor>
double add_discretization(const Tensor& values, Tensor& grads, double lambda,
                          bool penalize_zero) {
  const auto count = static_cast<double>(values.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    double g = 0.0;
    total += discretization_term(values.data()[i], penalize_zero, &g);
    grads.data()[i] = lambda * g / count;
  }
  return lambda * total / count;
}

}  // namespace

// ---- Losses ----

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::MSE: return "mse";
    case LossKind::PCC: return "pcc";
    case LossKind::MAPE: return "mape";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "mse" || name == "MSE") return LossKind::MSE;
  if (name == "pcc" || name == "PCC") return LossKind::PCC;
  if (name == "mape" || name == "MAPE") return LossKind::MAPE;
  throw NalmError("unknown loss '" + std::string(name) + "'");
}

LossValue compute_loss(LossKind kind, const Vector& y_hat, const Vector& y) {
  if (y_hat.size() != y.size()) throw NalmError("prediction/target size mismatch");
  const Eigen::Index n = y.size();
  if (n < 1) throw NalmError("loss needs at least one sample");
  const double inv_n = 1.0 / static_cast<double>(n);
  LossValue out;

  switch (kind) {
    case LossKind::MSE: {
      const Vector diff = y_hat - y;
      out.value = diff.squaredNorm() * inv_n;
      out.grad = 2.0 * inv_n * diff;
      break;
    }
    case LossKind::PCC: {
      if (n < 2) throw NalmError("PCC needs a batch of at least two samples");
      const double eps = kPccEpsilon;
      const Vector vp = y_hat.array() - y_hat.mean();
      const Vector vy = y.array() - y.mean();
      const double var_p = vp.squaredNorm() * inv_n;
      const double var_y = vy.squaredNorm() * inv_n;
      const bool clamp_p = var_p < eps;
      const bool clamp_y = var_y < eps;
      const double sp = std::sqrt(clamp_p ? eps : var_p);
      const double sy = std::sqrt(clamp_y ? eps : var_y);
      const double denom = (sp + eps) * (sy + eps);
      const double cov = vp.dot(vy) * inv_n;
      const double r = cov / denom;
      out.value = 1.0 - r;
      out.degenerate = clamp_p || clamp_y;
      // Centring terms vanish because vp and vy each sum to zero.
      Vector dr = vy * (inv_n / denom);
      if (!clamp_p) dr -= vp * (r * inv_n / (sp * (sp + eps)));
      out.grad = -dr;
      break;
    }
    case LossKind::MAPE: {
      out.value = 0.0;
      out.grad.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double scale = std::abs(y(i));
        out.value += std::abs(y(i) - y_hat(i)) / scale;
        out.grad(i) = sign_of(y_hat(i) - y(i)) / scale * inv_n;
      }
      out.value *= inv_n;
      break;
    }
  }
  return out;
}

// ---- Regularisation ----

RegSchedule RegSchedule::l1(double start, double end, double growth, std::uint64_t step) {
  RegSchedule s;
  s.kind = RegKind::L1;
  s.beta_start = start;
  s.beta_end = end;
  s.beta_growth = growth;
  s.beta_step = step;
  return s;
}

RegSchedule RegSchedule::l2(double start, double end, double growth, std::uint64_t step) {
  RegSchedule s = l1(start, end, growth, step);
  s.kind = RegKind::L2;
  return s;
}

RegSchedule RegSchedule::discretization(double lambda_hat, std::uint64_t start,
                                        std::uint64_t end) {
  RegSchedule s;
  s.kind = RegKind::Discretization;
  s.lambda_hat = lambda_hat;
  s.lambda_start = start;
  s.lambda_end = end;
  return s;
}

void RegSchedule::validate() const {
  switch (kind) {
    case RegKind::None:
      return;
    case RegKind::L1:
    case RegKind::L2:
      if (!(beta_start >= 0.0) || !(beta_start <= beta_end) || !(beta_growth >= 0.0) ||
          beta_step == 0) {
        throw NalmError("beta schedule needs 0 <= start <= end, growth >= 0, step > 0");
      }
      return;
    case RegKind::Discretization:
      if (!(lambda_hat >= 0.0) || !(lambda_start < lambda_end)) {
        throw NalmError("lambda schedule needs lambda_hat >= 0 and start < end");
      }
      return;
  }
}

double beta_at(const RegSchedule& s, std::uint64_t iteration) {
  const auto steps = static_cast<double>(iteration / s.beta_step);
  return std::min(s.beta_end, s.beta_start * std::pow(s.beta_growth, steps));
}

double lambda_at(const RegSchedule& s, std::uint64_t iteration) {
  const double progress = (static_cast<double>(iteration) - static_cast<double>(s.lambda_start)) /
                          (static_cast<double>(s.lambda_end) - static_cast<double>(s.lambda_start));
  return s.lambda_hat * std::max(std::min(progress, 1.0), 0.0);
}

Penalty l_penalty(const RegSchedule& s, const ModuleParams& params, std::uint64_t iteration) {
  if (s.kind != RegKind::L1 && s.kind != RegKind::L2) {
    throw NalmError("l_penalty needs an L1 or L2 schedule");
  }
  const double beta = beta_at(s, iteration);
  Penalty out;
  out.grads = ParamGrads::zeros_like(params);
  auto accumulate = [&](const Matrix& w, Matrix& g) {
    if (s.kind == RegKind::L1) {
      out.value += beta * w.cwiseAbs().sum();
      g = beta * w.unaryExpr([](double v) { return sign_of(v); });
    } else {
      out.value += beta * w.squaredNorm();
      g = 2.0 * beta * w;
    }
  };
  accumulate(params.weights, out.grads.weights);
  if (s.include_imaginary && params.imaginary) {
    accumulate(*params.imaginary, *out.grads.imaginary);
  }
  return out;
}

Penalty discretization_penalty(const RegSchedule& s, const ModuleParams& params,
                               std::uint64_t iteration) {
  if (s.kind != RegKind::Discretization) {
    throw NalmError("discretization_penalty needs a discretisation schedule");
  }
  const double lambda = lambda_at(s, iteration);
  Penalty out;
  out.grads = ParamGrads::zeros_like(params);
  if (lambda == 0.0) return out;
  out.value += add_discretization(params.weights, out.grads.weights, lambda, s.penalize_zero);
  // Gates live in [0, 1]; both ends are acceptable.
  if (params.gate) out.value += add_discretization(*params.gate, *out.grads.gate, lambda, false);
  return out;
}

Penalty penalty(const RegSchedule& s, const ModuleParams& params, std::uint64_t iteration) {
  switch (s.kind) {
    case RegKind::L1:
    case RegKind::L2:
      return l_penalty(s, params, iteration);
    case RegKind::Discretization:
      return discretization_penalty(s, params, iteration);
    case RegKind::None:
      break;
  }
  return {0.0, ParamGrads::zeros_like(params)};
}

Objective objective(const ModuleParams& params, const Batch& batch, LossKind loss,
                    std::span<const RegSchedule> regularizers, std::uint64_t iteration) {
  ForwardResult fwd = forward(params, batch.x, Mode::Training);
  const Vector y_hat = fwd.output.col(0);
  LossValue lv = compute_loss(loss, y_hat, batch.y);

  Objective out;
  out.loss = lv.value;
  out.degenerate = lv.degenerate;
  Matrix grad_output(fwd.output.rows(), fwd.output.cols());
  grad_output.setZero();
  grad_output.col(0) = lv.grad;
  out.grads = backward(params, fwd.cache, grad_output).params;
  for (const RegSchedule& s : regularizers) {
    Penalty p = penalty(s, params, iteration);
    out.penalty += p.value;
    out.grads += p.grads;
  }
  out.total = out.loss + out.penalty;
  return out;
}

// ---- Optimisers ----

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::Adam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "adam" || name == "Adam") return OptimizerKind::Adam;
  if (name == "sgd" || name == "SGD") return OptimizerKind::SGD;
  throw NalmError("unknown optimizer '" + std::string(name) + "'");
}

OptimizerState make_optimizer(OptimizerKind kind, const ModuleParams& params) {
  OptimizerState s;
  s.kind = kind;
  s.first_moment = ParamGrads::zeros_like(params);
  s.second_moment = ParamGrads::zeros_like(params);
  return s;
}

StepStatus optimizer_step(OptimizerState& state, ModuleParams& params, ParamGrads grads,
                          double learning_rate, std::optional<double> grad_norm_clip) {
  if (!grads.all_finite()) return StepStatus::NonFiniteGradient;
  if (grad_norm_clip) {
    const double norm = std::sqrt(grads.squared_norm());
    if (norm > *grad_norm_clip) grads *= *grad_norm_clip / norm;
  }

  auto p_views = tensor_views(params);
  auto g_views = tensor_views(grads);
  if (state.kind == OptimizerKind::SGD) {
    for (std::size_t t = 0; t < p_views.size(); ++t) {
      for (std::size_t i = 0; i < p_views[t].size(); ++i) {
        p_views[t][i] -= learning_rate * g_views[t][i];
      }
    }
  } else {
    ++state.steps;
    auto m_views = tensor_views(state.first_moment);
    auto v_views = tensor_views(state.second_moment);
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.steps));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.steps));
    const double step_size = learning_rate / correction1;
    const double sqrt_c2 = std::sqrt(correction2);
    for (std::size_t t = 0; t < p_views.size(); ++t) {
      for (std::size_t i = 0; i < p_views[t].size(); ++i) {
        const double g = g_views[t][i];
        double& m = m_views[t][i];
        double& v = v_views[t][i];
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        p_views[t][i] -= step_size * m / (std::sqrt(v) / sqrt_c2 + state.epsilon);
      }
    }
  }
  clip_params_inplace(params);
  return StepStatus::Ok;
}

// ---- Single run ----

void TrainConfig::validate() const {
  task.validate();
  if (batch_size < 1) throw NalmError("batch size must be >= 1");
  if (loss == LossKind::PCC && batch_size < 2) throw NalmError("PCC needs batch size >= 2");
  if (eval_every < 1) throw NalmError("eval_every must be >= 1");
  if (iterations % eval_every != 0) throw NalmError("eval_every must divide iterations");
  if (!(learning_rate > 0.0)) throw NalmError("learning rate must be positive");
  if (validation_size < 1 || test_size < 1) throw NalmError("empty validation/test set");
  for (const RegSchedule& s : regularizers) s.validate();
}

RunRecord train_run(const TrainConfig& config) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  const Eigen::Index n_in = static_cast<Eigen::Index>(config.task.input_size);

  RunRecord record;
  ModuleParams params = init_params(config.kind, n_in, 1, config.seed, config.module);
  record.best_params = params;

  Rng train_rng = make_rng(config.seed, 1);
  Rng val_rng = make_rng(config.seed, 2);
  Rng test_rng = make_rng(config.seed, 3);
  const Batch validation =
      build_batch(config.task, Split::Validation, config.validation_size, val_rng);
  const Batch test = build_batch(config.task, Split::Test, config.test_size, test_rng);
  record.threshold =
      compute_threshold(config.task, config.kind, config.threshold, test, config.module).value;

  OptimizerState optimizer = make_optimizer(config.optimizer, params);
  bool has_best = false;

  try {
    for (std::uint64_t it = 0; it <= config.iterations; ++it) {
      const Batch batch = build_batch(config.task, Split::Train, config.batch_size, train_rng);
      Objective obj = objective(params, batch, config.loss, config.regularizers, it);
      if (!std::isfinite(obj.total)) {
        record.status = RunStatus::Failed;
        record.failure_reason = "non-finite training loss at iteration " + std::to_string(it);
        break;
      }

      if (it % config.eval_every == 0) {
        const Vector val_pred = forward(params, validation.x, Mode::Eval).output.col(0);
        const Vector test_pred = forward(params, test.x, Mode::Eval).output.col(0);
        TracePoint point;
        point.iteration = it;
        point.train_loss = obj.loss;
        point.val_loss = compute_loss(config.loss, val_pred, validation.y).value;
        point.extrap_mse = (test_pred - test.y).squaredNorm() / static_cast<double>(test.y.size());
        record.trace.push_back(point);

        const bool better = std::isfinite(point.val_loss) &&
                            (!std::isfinite(record.best_val_loss) ||
                             point.val_loss < record.best_val_loss);
        if (!has_best || better) {
          has_best = true;
          record.best_val_loss = point.val_loss;
          record.best_iteration = it;
          record.extrapolation_mse_at_best = point.extrap_mse;
          record.best_params = params;
        }
        if (!record.solved_at_iter && point.extrap_mse < record.threshold) {
          record.solved_at_iter = it;
        }
      }
      if (it == config.iterations) break;

      if (optimizer_step(optimizer, params, std::move(obj.grads), config.learning_rate,
                         config.grad_norm_clip) != StepStatus::Ok) {
        record.status = RunStatus::Failed;
        record.failure_reason = "non-finite gradient at iteration " + std::to_string(it);
        break;
      }
    }
  } catch (const NalmError& e) {
    record.status = RunStatus::Failed;
    record.failure_reason = e.what();
  }

  record.final_params = params;
  record.sparsity_error = sparsity_error(record.best_params);
  record.success = record.status == RunStatus::Ok &&
                   record.extrapolation_mse_at_best < record.threshold;
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return record;
}

void write_trace_csv(std::ostream& out, const RunRecord& record) {
  out << "iteration,train_loss,val_loss,extrap_mse\n";
  char buf[128];
  for (const TracePoint& p : record.trace) {
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g\n",
                  static_cast<unsigned long long>(p.iteration), p.train_loss, p.val_loss,
                  p.extrap_mse);
    out << buf;
  }
}

}  // namespace nalm
