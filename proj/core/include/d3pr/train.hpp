#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "d3pr/denoiser.hpp"
#include "d3pr/gaussian.hpp"
#include "d3pr/optim.hpp"
#include "d3pr/random.hpp"
#include "d3pr/schedule.hpp"

namespace d3pr {

struct TrainHyper {
  int epochs = 30;
  int batch_size = 4;
  AdamHyper adam;
  /// Worker threads for per-example gradients. Results do not depend on it.
  std::size_t threads = 1;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double lr = 0.0;  // rate used during the epoch
};

struct TrainResult {
  DenoiserParams params;
  std::vector<EpochRecord> log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains the denoiser on diffusion examples drawn from the conditional
/// noise model. Each epoch visits every sequence once in shuffled order.
/// Deterministic for a given rng state, independent of the thread count.
TrainResult train(std::span<const TripletView> dataset, const CondGaussianModel& noise_model,
                  const NoiseSchedule& schedule, const DenoiserConfig& config, const TrainHyper& hyper,
                  Rng& rng, const EpochCallback& on_epoch = {});

}  // namespace d3pr
