#include <gtest/gtest.h>

#include "d3pr/data.hpp"
#include "d3pr/errors.hpp"
#include "d3pr/train.hpp"

using namespace d3pr;

namespace {

struct Fixture {
  std::vector<SequenceRecord> records;
  std::vector<TripletView> views;
  CondGaussianModel model;
};

Fixture make_data(double sigma, double coupling, std::size_t frames = 4) {
  SynthConfig sc;
  sc.sequences = 6;
  sc.frames = frames;
  sc.noise_sigma = sigma;
  sc.depth_coupling = coupling;
  Rng rng = make_rng(42);
  Fixture f;
  f.records = synthesize_dataset(sc, rng);
  f.views = triplet_views(f.records);
  f.model = fit_noise_model(f.views);
  return f;
}

DenoiserConfig tiny(std::size_t frames = 4) {
  DenoiserConfig c;
  c.frames = static_cast<int>(frames);
  c.latent_dim = 8;
  c.heads = 2;
  c.depth = 1;
  c.t_embed_dim = 8;
  return c;
}

TrainHyper hyper(int epochs, double lr, std::size_t threads = 1) {
  TrainHyper h;
  h.epochs = epochs;
  h.batch_size = 4;
  h.adam.lr = lr;
  h.threads = threads;
  return h;
}

}  // namespace

TEST(Train, ZeroLearningRateKeepsParameters) {
  const auto f = make_data(0.02, 0.3);
  const auto schedule = NoiseSchedule::cosine(10, 0.008);
  Rng rng = make_rng(1);
  Rng copy = rng;
  const auto initial = init_params(tiny(), copy);
  const auto result = train(f.views, f.model, schedule, tiny(), hyper(3, 0.0), rng);
  EXPECT_EQ(result.params.values, initial.values);
  ASSERT_EQ(result.log.size(), 3u);
}

TEST(Train, ZeroLearningRateOnExactEstimatorHasConstantLoss) {
  const auto f = make_data(0.0, 0.0);
  for (const auto& r : f.records) ASSERT_EQ(r.noisy3d, *r.gt3d);
  const auto schedule = NoiseSchedule::cosine(10, 0.008);
  Rng rng = make_rng(2);
  const auto result = train(f.views, f.model, schedule, tiny(), hyper(3, 0.0), rng);
  for (const auto& rec : result.log) EXPECT_EQ(rec.mean_loss, result.log.front().mean_loss);
}

TEST(Train, SeedDeterminesTrajectoryForAnyThreadCount) {
  const auto f = make_data(0.02, 0.3);
  const auto schedule = NoiseSchedule::cosine(10, 0.008);
  Rng a = make_rng(3), b = make_rng(3), c = make_rng(3);
  const auto ra = train(f.views, f.model, schedule, tiny(), hyper(2, 1e-3, 1), a);
  const auto rb = train(f.views, f.model, schedule, tiny(), hyper(2, 1e-3, 1), b);
  const auto rc = train(f.views, f.model, schedule, tiny(), hyper(2, 1e-3, 3), c);
  EXPECT_EQ(ra.params, rb.params);
  EXPECT_EQ(ra.params, rc.params);
  for (std::size_t i = 0; i < ra.log.size(); ++i) {
    EXPECT_EQ(ra.log[i].mean_loss, rb.log[i].mean_loss);
    EXPECT_EQ(ra.log[i].mean_loss, rc.log[i].mean_loss);
  }
  EXPECT_DOUBLE_EQ(ra.log[1].lr, 1e-3 * 0.96);
}

TEST(Train, StoresErrorStatistics) {
  const auto f = make_data(0.02, 0.3);
  const auto schedule = NoiseSchedule::cosine(10, 0.008);
  Rng rng = make_rng(4);
  const auto result = train(f.views, f.model, schedule, tiny(), hyper(0, 1e-3), rng);
  ASSERT_EQ(result.params.stats.mean.size(), 17u * 3u);
  EXPECT_EQ(result.params.stats.stddev[0], ErrorStats::kMinStd);  // the root carries no error
  EXPECT_GT(result.params.stats.stddev[3 * 13], 0.005);
}

TEST(Train, RejectsBadInputs) {
  const auto f = make_data(0.02, 0.3);
  const auto schedule = NoiseSchedule::cosine(10, 0.008);
  Rng rng = make_rng(5);
  EXPECT_THROW(train({}, f.model, schedule, tiny(), hyper(1, 1e-3), rng), ConfigError);
  EXPECT_THROW(train(f.views, CondGaussianModel{}, schedule, tiny(), hyper(1, 1e-3), rng), ConfigError);
  EXPECT_THROW(train(f.views, f.model, schedule, tiny(5), hyper(1, 1e-3), rng), ConfigError);
  auto bad = hyper(1, 1e-3);
  bad.batch_size = 0;
  EXPECT_THROW(train(f.views, f.model, schedule, tiny(), bad, rng), ConfigError);
}

TEST(Train, DivergenceIsReported) {
  const auto f = make_data(0.02, 0.3);
  const auto schedule = NoiseSchedule::cosine(10, 0.008);
  Rng rng = make_rng(6);
  auto h = hyper(2, std::numeric_limits<double>::infinity());
  EXPECT_THROW(train(f.views, f.model, schedule, tiny(), h, rng), NumericalError);
}
