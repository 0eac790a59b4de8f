#include "d3pr/diffusion.hpp"

#include <cmath>
#include <string>

#include "d3pr/errors.hpp"
#include "d3pr/parallel.hpp"

namespace d3pr {

namespace {

void check_alpha_bar(double ab, const char* name) {
  if (!(ab >= 0.0 && ab <= 1.0)) throw ConfigError(name, "must lie in [0, 1], got " + std::to_string(ab));
}

}  // namespace

PoseSeq3D forward_corrupt(const PoseSeq3D& x0, const PoseSeq3D& epsilon, double alpha_bar_t) {
  require_same_shape(x0, epsilon, "forward_corrupt");
  check_alpha_bar(alpha_bar_t, "alpha_bar_t");
  const double keep = std::sqrt(alpha_bar_t);
  const double mix = std::sqrt(1.0 - alpha_bar_t);
  PoseSeq3D out(x0.frames(), x0.joints());
  const auto a = x0.values();
  const auto b = epsilon.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = keep * a[i] + mix * b[i];
  return out;
}

TrainingExample make_training_example(const TripletView& triplet, const ConditionalSampler& sampler,
                                      const NoiseSchedule& schedule, Rng& rng) {
  TrainingExample ex;
  const PoseSeq3D epsilon = sampler.sample(triplet.gt3d, triplet.pose2d, triplet.noisy3d, rng);
  std::uniform_int_distribution<int> pick_t(1, schedule.t_max());
  ex.t = pick_t(rng);
  ex.y = triplet.pose2d;
  ex.x_t = forward_corrupt(triplet.gt3d, epsilon, schedule.alpha_bar(ex.t));
  ex.e = PoseSeq3D(epsilon.frames(), epsilon.joints());
  auto e = ex.e.values();
  const auto eps = epsilon.values();
  const auto x0 = triplet.gt3d.values();
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = eps[i] - x0[i];
  return ex;
}

TrainingExample make_training_example(const TripletView& triplet, const CondGaussianModel& noise_model,
                                      const NoiseSchedule& schedule, Rng& rng) {
  return make_training_example(triplet, ConditionalSampler(noise_model), schedule, rng);
}

ReverseStep reverse_step(const PoseSeq3D& x_k, const PoseSeq3D& e_hat, double alpha_bar_k,
                         double alpha_bar_prev) {
  require_same_shape(x_k, e_hat, "reverse_step");
  check_alpha_bar(alpha_bar_k, "alpha_bar_k");
  check_alpha_bar(alpha_bar_prev, "alpha_bar_prev");
  const double mix_k = std::sqrt(1.0 - alpha_bar_k);
  const double denom = mix_k + std::sqrt(alpha_bar_k);  // >= 1
  const double mix_prev = std::sqrt(1.0 - alpha_bar_prev);
  const double scale_prev = mix_prev + std::sqrt(alpha_bar_prev);

  ReverseStep r{PoseSeq3D(x_k.frames(), x_k.joints()), PoseSeq3D(x_k.frames(), x_k.joints())};
  const auto x = x_k.values();
  const auto e = e_hat.values();
  auto x0 = r.x0_hat.values();
  auto xp = r.x_prev.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    x0[i] = (x[i] - mix_k * e[i]) / denom;
    xp[i] = scale_prev * x0[i] + mix_prev * e[i];
  }
  return r;
}

PoseSeq3D refine(const PoseSeq2D& y, const PoseSeq3D& x_noisy, const ErrorPredictor& denoiser,
                 const NoiseSchedule& schedule, int k_steps) {
  require_same_shape(y, x_noisy, "refine");
  const std::size_t nf = denoiser.expected_frames();
  const std::size_t nj = denoiser.expected_joints();
  if ((nf != 0 && nf != x_noisy.frames()) || (nj != 0 && nj != x_noisy.joints())) {
    throw ConfigError("denoiser", "built for " + std::to_string(nf) + " frames x " + std::to_string(nj) +
                                      " joints, input is " + std::to_string(x_noisy.frames()) + " x " +
                                      std::to_string(x_noisy.joints()));
  }
  const std::vector<int> steps = ddim_subsequence(schedule, k_steps);

  PoseSeq3D x = x_noisy;
  PoseSeq3D x0_hat;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const int k = steps[i];
    const int prev = i + 1 < steps.size() ? steps[i + 1] : 0;
    const PoseSeq3D e_hat = denoiser.predict(y, x, k);
    auto step = reverse_step(x, e_hat, schedule.alpha_bar(k), schedule.alpha_bar(prev));
    x0_hat = std::move(step.x0_hat);
    x = std::move(step.x_prev);
  }
  return x0_hat;
}

std::vector<PoseSeq3D> refine_many(std::span<const RefineInput> inputs, const ErrorPredictor& denoiser,
                                   const NoiseSchedule& schedule, int k_steps, std::size_t threads) {
  std::vector<PoseSeq3D> out(inputs.size());
  parallel_for(inputs.size(), threads, [&](std::size_t i) {
    out[i] = refine(inputs[i].y, inputs[i].x_noisy, denoiser, schedule, k_steps);
  });
  return out;
}

}  // namespace d3pr
