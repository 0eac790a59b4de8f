#include "d3pr/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "d3pr/diffusion.hpp"
#include "d3pr/errors.hpp"
#include "d3pr/parallel.hpp"

namespace d3pr {

TrainResult train(std::span<const TripletView> dataset, const CondGaussianModel& noise_model,
                  const NoiseSchedule& schedule, const DenoiserConfig& config, const TrainHyper& hyper,
                  Rng& rng, const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.empty()) throw ConfigError("dataset", "training set is empty");
  if (!noise_model.fitted()) throw ConfigError("noise_model", "noise model is not fitted");
  if (noise_model.joint_count() != static_cast<std::size_t>(config.joints)) {
    throw ConfigError("joints", "noise model has " + std::to_string(noise_model.joint_count()) +
                                    " joints, denoiser expects " + std::to_string(config.joints));
  }
  if (hyper.epochs < 0) throw ConfigError("epochs", "must be >= 0");
  if (hyper.batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset[i];
    if (s.gt3d.frames() != static_cast<std::size_t>(config.frames) ||
        s.gt3d.joints() != static_cast<std::size_t>(config.joints)) {
      throw ConfigError("frames", "sequence " + std::to_string(i) + " does not match the denoiser shape");
    }
  }

  TrainResult result;
  result.params = init_params(config, rng);

  std::vector<PoseSeq3D> errors;
  errors.reserve(dataset.size());
  for (const auto& s : dataset) {
    PoseSeq3D e = s.noisy3d;
    auto v = e.values();
    const auto g = s.gt3d.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= g[i];
    errors.push_back(std::move(e));
  }
  result.params.stats = ErrorStats::from_errors(errors);

  const ConditionalSampler sampler(noise_model);
  AdamState adam(result.params.values.size(), hyper.adam);
  const std::size_t batch = static_cast<std::size_t>(hyper.batch_size);
  const std::size_t psize = result.params.values.size();

  std::vector<std::size_t> order(dataset.size());
  std::vector<TrainingExample> examples;
  std::vector<std::vector<double>> grads(batch, std::vector<double>(psize));
  std::vector<double> losses(batch);
  std::vector<double> total(psize);

  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = adam.lr();
    double loss_sum = 0.0;

    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      examples.clear();
      for (std::size_t b = 0; b < count; ++b) {
        examples.push_back(make_training_example(dataset[order[start + b]], sampler, schedule, rng));
      }
      const double weight = 1.0 / static_cast<double>(count);
      parallel_for(count, hyper.threads, [&](std::size_t b) {
        std::fill(grads[b].begin(), grads[b].end(), 0.0);
        losses[b] = accumulate_gradient(result.params, examples[b], weight, grads[b]);
      });
      // Fixed-order reduction.
      std::copy(grads[0].begin(), grads[0].end(), total.begin());
      for (std::size_t b = 1; b < count; ++b) {
        for (std::size_t i = 0; i < psize; ++i) total[i] += grads[b][i];
      }
      for (std::size_t b = 0; b < count; ++b) loss_sum += losses[b];

      if (!std::isfinite(loss_sum)) {
        std::ostringstream msg;
        msg << "training diverged in epoch " << epoch << " at sequence offset " << start << " (lr " << lr
            << ", running loss " << loss_sum << ")";
        throw NumericalError(msg.str());
      }
      require_finite_gradient(config, total);
      adam.step(result.params.values, total);
    }

    const EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()), lr};
    if (!std::isfinite(rec.mean_loss)) {
      throw NumericalError("training diverged: epoch " + std::to_string(epoch) + " mean loss is not finite");
    }
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    adam.end_epoch();
  }
  return result;
}

}  // namespace d3pr
