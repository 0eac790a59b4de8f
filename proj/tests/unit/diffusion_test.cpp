#include <gtest/gtest.h>

#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>

#include "d3pr/data.hpp"
#include "d3pr/diffusion.hpp"
#include "d3pr/errors.hpp"
#include "d3pr/metrics.hpp"
#include "test_util.hpp"

using namespace d3pr;
using d3pr::testing::random_pose;

namespace {

// Returns the error that makes x_k exactly consistent with the known x0.
class OracleDenoiser : public ErrorPredictor {
public:
  OracleDenoiser(const PoseSeq3D& x0, const NoiseSchedule& s) : x0_(x0), schedule_(s) {}

  PoseSeq3D predict(const PoseSeq2D&, const PoseSeq3D& x_t, int t) const override {
    const double ab = schedule_.alpha_bar(t);
    const double mix = std::sqrt(1.0 - ab);
    PoseSeq3D e(x_t.frames(), x_t.joints());
    for (std::size_t i = 0; i < e.size(); ++i) {
      e.values()[i] = (x_t.values()[i] - (std::sqrt(ab) + mix) * x0_.values()[i]) / mix;
    }
    ++calls;
    return e;
  }

  mutable int calls = 0;

private:
  const PoseSeq3D& x0_;
  const NoiseSchedule& schedule_;
};

class ConstantDenoiser : public ErrorPredictor {
public:
  explicit ConstantDenoiser(std::size_t frames) : frames_(frames) {}
  std::size_t expected_frames() const override { return frames_; }
  PoseSeq3D predict(const PoseSeq2D&, const PoseSeq3D& x_t, int t) const override {
    PoseSeq3D e(x_t.frames(), x_t.joints());
    for (double& v : e.values()) v = 0.001 * t;
    return e;
  }

private:
  std::size_t frames_;
};

}  // namespace

TEST(ForwardCorrupt, Formula) {
  Rng rng = make_rng(1);
  const auto x0 = random_pose<3>(4, 5, rng);
  const auto eps = random_pose<3>(4, 5, rng);
  const auto xt = forward_corrupt(x0, eps, 0.3);
  for (std::size_t i = 0; i < xt.size(); ++i) {
    EXPECT_DOUBLE_EQ(xt.values()[i], std::sqrt(0.3) * x0.values()[i] + std::sqrt(0.7) * eps.values()[i]);
  }
  EXPECT_EQ(forward_corrupt(x0, eps, 1.0), x0);
  EXPECT_EQ(forward_corrupt(x0, eps, 0.0), eps);
  EXPECT_THROW(forward_corrupt(x0, eps, 1.5), ConfigError);
  EXPECT_THROW(forward_corrupt(x0, random_pose<3>(3, 5, rng), 0.5), ShapeError);
}

TEST(ReverseStep, InvertsForwardCorruption) {
  Rng rng = make_rng(2);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double ab = 0.1 * (i % 11);
    const auto x0 = random_pose<3>(3, 4, rng, 0.5);
    const auto e = random_pose<3>(3, 4, rng, 0.05);
    PoseSeq3D eps = x0;
    for (std::size_t k = 0; k < eps.size(); ++k) eps.values()[k] += e.values()[k];
    const auto step = reverse_step(forward_corrupt(x0, eps, ab), e, ab, 0.0);
    const double rel = (step.x0_hat.tokens() - x0.tokens()).norm() / x0.tokens().norm();
    worst = std::max(worst, rel);
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(ReverseStep, RecorruptsToPreviousLevel) {
  Rng rng = make_rng(3);
  const auto x0 = random_pose<3>(2, 3, rng);
  const auto e = random_pose<3>(2, 3, rng);
  PoseSeq3D eps = x0;
  for (std::size_t k = 0; k < eps.size(); ++k) eps.values()[k] += e.values()[k];
  const auto step = reverse_step(forward_corrupt(x0, eps, 0.2), e, 0.2, 0.6);
  const auto expected = forward_corrupt(x0, eps, 0.6);
  for (std::size_t k = 0; k < x0.size(); ++k) EXPECT_NEAR(step.x_prev.values()[k], expected.values()[k], 1e-14);
}

TEST(Refine, OracleDenoiserRecoversGroundTruth) {
  const auto schedule = NoiseSchedule::cosine(50, 0.008);
  SynthConfig sc;
  sc.sequences = 4;
  Rng rng = make_rng(4);
  for (const auto& r : synthesize_dataset(sc, rng)) {
    const OracleDenoiser oracle(*r.gt3d, schedule);
    for (int k : {1, 2, 50}) {
      const auto out = refine(r.pose2d, r.noisy3d, oracle, schedule, k);
      EXPECT_LT(mpjpe(out, *r.gt3d), 1e-7) << "K=" << k;
    }
  }
}

TEST(Refine, CallsDenoiserOncePerStep) {
  const auto schedule = NoiseSchedule::cosine(50, 0.008);
  Rng rng = make_rng(5);
  const auto x0 = random_pose<3>(3, 4, rng);
  const OracleDenoiser oracle(x0, schedule);
  refine(random_pose<2>(3, 4, rng), random_pose<3>(3, 4, rng), oracle, schedule, 7);
  EXPECT_EQ(oracle.calls, 7);
}

TEST(Refine, RejectsShapeTheDenoiserWasNotBuiltFor) {
  const auto schedule = NoiseSchedule::cosine(10, 0.008);
  Rng rng = make_rng(6);
  const ConstantDenoiser d(5);
  EXPECT_NO_THROW(refine(random_pose<2>(5, 2, rng), random_pose<3>(5, 2, rng), d, schedule, 2));
  try {
    refine(random_pose<2>(6, 2, rng), random_pose<3>(6, 2, rng), d, schedule, 2);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "denoiser");
  }
  EXPECT_THROW(refine(random_pose<2>(5, 2, rng), random_pose<3>(5, 3, rng), d, schedule, 2), ShapeError);
}

TEST(RefineMany, MatchesSerialForAnyThreadCount) {
  const auto schedule = NoiseSchedule::cosine(20, 0.008);
  Rng rng = make_rng(7);
  std::vector<PoseSeq2D> ys;
  std::vector<PoseSeq3D> xs;
  for (int i = 0; i < 9; ++i) {
    ys.push_back(random_pose<2>(4, 3, rng));
    xs.push_back(random_pose<3>(4, 3, rng));
  }
  std::vector<RefineInput> inputs;
  for (int i = 0; i < 9; ++i) inputs.push_back({ys[static_cast<std::size_t>(i)], xs[static_cast<std::size_t>(i)]});
  const ConstantDenoiser d(4);
  const auto one = refine_many(inputs, d, schedule, 3, 1);
  const auto four = refine_many(inputs, d, schedule, 3, 4);
  ASSERT_EQ(one.size(), 9u);
  EXPECT_EQ(one, four);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(one[i], refine(ys[i], xs[i], d, schedule, 3));
}

TEST(TrainingExample, TargetIsSampledErrorAndTimestepIsUniform) {
  SynthConfig sc;
  sc.sequences = 2;
  Rng rng = make_rng(8);
  const auto records = synthesize_dataset(sc, rng);
  const auto views = triplet_views(records);
  const auto model = fit_noise_model(views);
  const ConditionalSampler sampler(model);
  const auto schedule = NoiseSchedule::cosine(50, 0.008);

  std::vector<int> counts(51, 0);
  constexpr int kDraws = 20000;
  for (int i = 0; i < kDraws; ++i) {
    const auto ex = make_training_example(views[0], sampler, schedule, rng);
    ASSERT_GE(ex.t, 1);
    ASSERT_LE(ex.t, 50);
    ++counts[static_cast<std::size_t>(ex.t)];
    if (i < 20) {
      PoseSeq3D eps = *records[0].gt3d;
      for (std::size_t k = 0; k < eps.size(); ++k) eps.values()[k] += ex.e.values()[k];
      const auto expect = forward_corrupt(*records[0].gt3d, eps, schedule.alpha_bar(ex.t));
      for (std::size_t k = 0; k < eps.size(); ++k) ASSERT_NEAR(ex.x_t.values()[k], expect.values()[k], 1e-14);
      EXPECT_EQ(ex.y, records[0].pose2d);
    }
  }
  double chi2 = 0.0;
  const double expected = kDraws / 50.0;
  for (int t = 1; t <= 50; ++t) chi2 += std::pow(counts[static_cast<std::size_t>(t)] - expected, 2) / expected;
  const boost::math::chi_squared dist(49);
  EXPECT_LT(chi2, boost::math::quantile(dist, 0.999));
}
