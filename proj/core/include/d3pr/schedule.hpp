#pragma once

#include <vector>

namespace d3pr {

/// Cosine noise schedule over timesteps 0..T.
///
/// alpha_bar(0) is exactly 1 and alpha_bar is the running product of
/// alpha(t) = 1 - beta(t). Immutable after construction.
class NoiseSchedule {
public:
  /// f(t) = cos^2(((t/T + s) / (1 + s)) * pi/2), alpha_bar = f(t)/f(0), with
  /// per-step betas clipped to 0.999 and alpha_bar rebuilt from the clipped betas.
  static NoiseSchedule cosine(int t_max, double offset_s);

  int t_max() const noexcept { return t_max_; }
  double offset_s() const noexcept { return offset_s_; }

  double alpha_bar(int t) const;
  /// Defined for t in 1..T.
  double beta(int t) const;
  double alpha(int t) const;

  const std::vector<double>& alpha_bars() const noexcept { return alpha_bar_; }

private:
  NoiseSchedule() = default;

  int t_max_ = 0;
  double offset_s_ = 0.0;
  std::vector<double> alpha_bar_;  // T + 1 entries
  std::vector<double> beta_;       // T + 1 entries, index 0 unused (0.0)
};

inline constexpr double kMaxBeta = 0.999;

/// K strictly decreasing timesteps T - round(i*T/K), i = 0..K-1. The reverse
/// loop continues from the last entry to timestep 0.
std::vector<int> ddim_subsequence(const NoiseSchedule& schedule, int k_steps);

}  // namespace d3pr
