#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "d3pr/gaussian.hpp"
#include "d3pr/pose.hpp"
#include "d3pr/random.hpp"
#include "d3pr/schedule.hpp"

namespace d3pr {

/// Anything that predicts the error component e_hat = g(y, x_t, t) of a
/// diffusion state. Implementations must be safe to call concurrently.
class ErrorPredictor {
public:
  virtual ~ErrorPredictor() = default;
  /// Sequence length the predictor was built for, 0 if any length works.
  virtual std::size_t expected_frames() const { return 0; }
  /// Joint count the predictor was built for, 0 if any count works.
  virtual std::size_t expected_joints() const { return 0; }
  virtual PoseSeq3D predict(const PoseSeq2D& y, const PoseSeq3D& x_t, int t) const = 0;
};

struct TrainingExample {
  PoseSeq2D y;
  PoseSeq3D x_t;
  int t = 0;
  PoseSeq3D e;  // target error, epsilon - x0
};

struct ReverseStep {
  PoseSeq3D x0_hat;
  PoseSeq3D x_prev;
};

/// x_t = sqrt(ab) x0 + sqrt(1 - ab) epsilon, with epsilon = x0 + e.
PoseSeq3D forward_corrupt(const PoseSeq3D& x0, const PoseSeq3D& epsilon, double alpha_bar_t);

/// Draws epsilon from the conditional noisy-pose distribution and t uniformly
/// from 1..T, then corrupts x0 to x_t.
TrainingExample make_training_example(const TripletView& triplet, const ConditionalSampler& sampler,
                                      const NoiseSchedule& schedule, Rng& rng);
TrainingExample make_training_example(const TripletView& triplet, const CondGaussianModel& noise_model,
                                      const NoiseSchedule& schedule, Rng& rng);

/// Inverts the corruption for a predicted error and re-corrupts to the previous level:
///   x0_hat = (x_k - sqrt(1 - ab_k) e_hat) / (sqrt(1 - ab_k) + sqrt(ab_k))
///   x_prev = (sqrt(1 - ab_prev) + sqrt(ab_prev)) x0_hat + sqrt(1 - ab_prev) e_hat
ReverseStep reverse_step(const PoseSeq3D& x_k, const PoseSeq3D& e_hat, double alpha_bar_k,
                         double alpha_bar_prev);

/// Deterministic reverse process started from x_T = x_noisy over the K-step
/// subsequence of the schedule. Returns the last clean estimate x0_hat.
PoseSeq3D refine(const PoseSeq2D& y, const PoseSeq3D& x_noisy, const ErrorPredictor& denoiser,
                 const NoiseSchedule& schedule, int k_steps);

struct RefineInput {
  const PoseSeq2D& y;
  const PoseSeq3D& x_noisy;
};

/// refine() over many sequences in parallel; output order matches input order.
std::vector<PoseSeq3D> refine_many(std::span<const RefineInput> inputs, const ErrorPredictor& denoiser,
                                   const NoiseSchedule& schedule, int k_steps, std::size_t threads);

}  // namespace d3pr
