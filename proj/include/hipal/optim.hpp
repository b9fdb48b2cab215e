#pragma once

#include "hipal/ad.hpp"

#include <span>

namespace hipal {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // <= 0 disables clipping
};

/// Adam with global-norm gradient clipping. Optimizer moments live on the
/// parameters themselves; the step counter lives here.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Applies one update using the gradients stored in each parameter.
  /// Returns the pre-clipping global gradient norm.
  double step(std::span<const NamedParameter> params);

  long steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  long steps_ = 0;
};

/// Zeroes the gradient buffers of every parameter.
void zero_grad(std::span<const NamedParameter> params);

/// Adds the tape's gradient for each parameter (if it took part) into its
/// grad buffer, scaled by `weight`.
void collect_grads(const ad::Tape& tape, std::span<const NamedParameter> params, double weight = 1.0);

/// Copies parameter values out / back in (checkpoint selection).
std::vector<Matrix> snapshot(std::span<const NamedParameter> params);
void restore(std::span<const NamedParameter> params, const std::vector<Matrix>& values);

}  // namespace hipal
