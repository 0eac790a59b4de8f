#include "d3pr/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "d3pr/errors.hpp"

namespace d3pr {

namespace {

double cosine_f(double t, double t_max, double s) {
  const double c = std::cos(((t / t_max + s) / (1.0 + s)) * std::numbers::pi / 2.0);
  return c * c;
}

}  // namespace

NoiseSchedule NoiseSchedule::cosine(int t_max, double offset_s) {
  if (t_max < 1) throw ConfigError("t_max", "must be >= 1, got " + std::to_string(t_max));
  if (!(offset_s > 0.0 && offset_s < 1.0)) {
    throw ConfigError("offset_s", "must lie in (0, 1), got " + std::to_string(offset_s));
  }

  NoiseSchedule s;
  s.t_max_ = t_max;
  s.offset_s_ = offset_s;
  s.beta_.assign(static_cast<std::size_t>(t_max) + 1, 0.0);
  s.alpha_bar_.assign(static_cast<std::size_t>(t_max) + 1, 1.0);

  const double T = t_max;
  const double f0 = cosine_f(0.0, T, offset_s);
  double prev = 1.0;  // unclipped closed form at t-1
  for (int t = 1; t <= t_max; ++t) {
    const double cur = cosine_f(t, T, offset_s) / f0;
    s.beta_[t] = std::min(1.0 - cur / prev, kMaxBeta);
    // Rebuilt from beta so alpha_bar stays an exact running product.
    s.alpha_bar_[t] = s.alpha_bar_[t - 1] * (1.0 - s.beta_[t]);
    prev = cur;
  }
  return s;
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > t_max_) throw ConfigError("t", "timestep " + std::to_string(t) + " outside 0.." + std::to_string(t_max_));
  return alpha_bar_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::beta(int t) const {
  if (t < 1 || t > t_max_) throw ConfigError("t", "timestep " + std::to_string(t) + " outside 1.." + std::to_string(t_max_));
  return beta_[static_cast<std::size_t>(t)];
}

double NoiseSchedule::alpha(int t) const { return 1.0 - beta(t); }

std::vector<int> ddim_subsequence(const NoiseSchedule& schedule, int k_steps) {
  const int T = schedule.t_max();
  if (k_steps < 1 || k_steps > T) {
    throw ConfigError("k_steps", "must lie in 1.." + std::to_string(T) + ", got " + std::to_string(k_steps));
  }
  std::vector<int> steps;
  steps.reserve(static_cast<std::size_t>(k_steps));
  for (int i = 0; i < k_steps; ++i) {
    steps.push_back(T - static_cast<int>(std::lround(static_cast<double>(i) * T / k_steps)));
  }
  return steps;
}

}  // namespace d3pr
