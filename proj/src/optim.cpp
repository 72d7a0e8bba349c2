#include "gstok/optim.hpp"

#include <cmath>
#include <string>

#include "gstok/error.hpp"
#include "gstok/gaussian.hpp"

namespace gstok {
namespace {

void check_lengths(std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) {
    throw Error(ErrorKind::kShape,
                "parameter/gradient length mismatch: " +
                    std::to_string(params.size()) + " vs " +
                    std::to_string(grads.size()));
  }
}

}  // namespace

void Sgd::step(std::span<double> params, std::span<const double> grads,
               double lr) {
  check_lengths(params, grads);
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

void Adam::step(std::span<double> params, std::span<const double> grads,
                double lr) {
  check_lengths(params, grads);
  if (state_.m.size() != params.size()) {
    if (state_.step != 0) {
      throw Error(ErrorKind::kShape, "parameter count changed mid-run");
    }
    state_.m.assign(params.size(), 0.0);
    state_.v.assign(params.size(), 0.0);
  }
  ++state_.step;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double t = static_cast<double>(state_.step);
  const double bias1 = 1.0 - std::pow(b1, t);
  const double bias2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    if (options_.weight_decay != 0.0) g += options_.weight_decay * params[i];
    state_.m[i] = b1 * state_.m[i] + (1.0 - b1) * g;
    state_.v[i] = b2 * state_.v[i] + (1.0 - b2) * g * g;
    const double m_hat = state_.m[i] / bias1;
    const double v_hat = state_.v[i] / bias2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + options_.eps);
  }
}

double cosine_warmup_lr(std::int64_t step, std::int64_t total_steps,
                        std::int64_t warmup_steps, double base_lr) {
  if (step < 0 || step >= total_steps) {
    throw Error(ErrorKind::kOutOfRange,
                "step " + std::to_string(step) + " outside [0, " +
                    std::to_string(total_steps) + ")");
  }
  if (step < warmup_steps) {
    return base_lr * static_cast<double>(step) /
           static_cast<double>(warmup_steps);
  }
  const std::int64_t span = total_steps - 1 - warmup_steps;
  if (span <= 0) return base_lr;
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(span);
  return base_lr * 0.5 * (1.0 + std::cos(kPi * progress));
}

}  // namespace gstok
