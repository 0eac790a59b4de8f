#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace d3pr {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr_decay = 0.96;  // applied by end_epoch()
};

/// Bias-corrected Adam over a flat parameter array.
class AdamState {
public:
  AdamState(std::size_t size, const AdamHyper& hyper);

  void step(std::span<double> params, std::span<const double> grads);
  /// Multiplies the learning rate by the decay factor.
  void end_epoch();

  double lr() const noexcept { return lr_; }
  std::int64_t step_count() const noexcept { return step_; }
  const std::vector<double>& first_moment() const noexcept { return m_; }
  const std::vector<double>& second_moment() const noexcept { return v_; }

private:
  AdamHyper hyper_;
  double lr_;
  std::int64_t step_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace d3pr
