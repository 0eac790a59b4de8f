#include "d3pr/optim.hpp"

#include <cmath>

#include "d3pr/errors.hpp"

namespace d3pr {

AdamState::AdamState(std::size_t size, const AdamHyper& hyper)
    : hyper_(hyper), lr_(hyper.lr), m_(size, 0.0), v_(size, 0.0) {
  if (!(hyper.lr >= 0.0)) throw ConfigError("lr", "must be >= 0");
  if (!(hyper.beta1 >= 0.0 && hyper.beta1 < 1.0)) throw ConfigError("beta1", "must lie in [0, 1)");
  if (!(hyper.beta2 >= 0.0 && hyper.beta2 < 1.0)) throw ConfigError("beta2", "must lie in [0, 1)");
  if (!(hyper.eps > 0.0)) throw ConfigError("eps", "must be > 0");
  if (!(hyper.lr_decay > 0.0)) throw ConfigError("lr_decay", "must be > 0");
}

void AdamState::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ShapeError("AdamState::step: size mismatch");
  }
  ++step_;
  const double b1 = hyper_.beta1;
  const double b2 = hyper_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    params[i] -= lr_ * m_hat / (std::sqrt(v_hat) + hyper_.eps);
  }
}

void AdamState::end_epoch() { lr_ *= hyper_.lr_decay; }

}  // namespace d3pr
