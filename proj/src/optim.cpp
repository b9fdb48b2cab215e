#include "hipal/optim.hpp"

#include <cmath>

namespace hipal {

double Adam::step(std::span<const NamedParameter> params) {
  double sq = 0.0;
  for (const auto& np : params)
    if (np.param->grad.size() != 0) sq += np.param->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  const double clip = (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;

  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (const auto& np : params) {
    Parameter& p = *np.param;
    if (p.grad.size() == 0) continue;
    if (p.adam_m.size() == 0) {
      p.adam_m.setZero(p.rows(), p.cols());
      p.adam_v.setZero(p.rows(), p.cols());
    }
    const Matrix g = p.grad * clip;
    p.adam_m = config_.beta1 * p.adam_m + (1.0 - config_.beta1) * g;
    p.adam_v = config_.beta2 * p.adam_v + (1.0 - config_.beta2) * g.cwiseProduct(g);
    p.value.array() -= config_.learning_rate * (p.adam_m.array() / bc1) /
                       ((p.adam_v.array() / bc2).sqrt() + config_.eps);
  }
  return norm;
}

void zero_grad(std::span<const NamedParameter> params) {
  for (const auto& np : params) np.param->zero_grad();
}

void collect_grads(const ad::Tape& tape, std::span<const NamedParameter> params, double weight) {
  for (const auto& np : params) {
    const Matrix* g = tape.param_grad(*np.param);
    if (g == nullptr) continue;
    if (np.param->grad.size() == 0) np.param->zero_grad();
    np.param->grad += weight * *g;
  }
}

std::vector<Matrix> snapshot(std::span<const NamedParameter> params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const auto& np : params) out.push_back(np.param->value);
  return out;
}

void restore(std::span<const NamedParameter> params, const std::vector<Matrix>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].param->value = values[i];
}

}  // namespace hipal
