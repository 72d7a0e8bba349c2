#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace gstok {

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// Updates params in place from grads. Throws kShape on length mismatch.
  virtual void step(std::span<double> params, std::span<const double> grads,
                    double lr) = 0;
};

class Sgd final : public Optimizer {
 public:
  void step(std::span<double> params, std::span<const double> grads,
            double lr) override;
};

struct AdamOptions {
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

/// Adam with bias correction. Weight decay, when non-zero, is added to the
/// gradient (L2 form).
class Adam final : public Optimizer {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void step(std::span<double> params, std::span<const double> grads,
            double lr) override;

  const AdamState& state() const { return state_; }
  void set_state(AdamState state) { state_ = std::move(state); }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  AdamState state_;
};

/// Linear ramp from 0 to base_lr over warmup_steps, then a half-cosine decay
/// reaching 0 at step total_steps - 1. Throws kOutOfRange when step is not in
/// [0, total_steps).
double cosine_warmup_lr(std::int64_t step, std::int64_t total_steps,
                        std::int64_t warmup_steps, double base_lr);

}  // namespace gstok
