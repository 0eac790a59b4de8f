#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "d3pr/data.hpp"
#include "d3pr/denoiser.hpp"
#include "d3pr/errors.hpp"
#include "test_util.hpp"

using namespace d3pr;
using d3pr::testing::random_pose;

namespace {

DenoiserConfig small_config() {
  DenoiserConfig c;
  c.frames = 2;
  c.joints = 3;
  c.latent_dim = 8;
  c.depth = 1;
  c.heads = 2;
  c.t_embed_dim = 8;
  return c;
}

// Init, then perturb every value so no block sits at a special point (zero output layer, unit gains).
DenoiserParams random_params(const DenoiserConfig& c, Rng& rng) {
  DenoiserParams p = init_params(c, rng);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (double& v : p.values) v += u(rng);
  std::uniform_real_distribution<double> s(0.5, 2.0);
  p.stats.mean.resize(static_cast<std::size_t>(c.joints) * 3);
  p.stats.stddev.resize(p.stats.mean.size());
  for (std::size_t i = 0; i < p.stats.mean.size(); ++i) {
    p.stats.mean[i] = u(rng);
    p.stats.stddev[i] = s(rng);
  }
  return p;
}

TrainingExample random_example(const DenoiserConfig& c, Rng& rng, int t) {
  const auto n = static_cast<std::size_t>(c.frames);
  const auto j = static_cast<std::size_t>(c.joints);
  return {random_pose<2>(n, j, rng), random_pose<3>(n, j, rng), t, random_pose<3>(n, j, rng)};
}

}  // namespace

TEST(TimestepEmbedding, ClosedForm) {
  const auto zero = timestep_embedding(0, 8);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(zero(2 * i), 0.0);
    EXPECT_EQ(zero(2 * i + 1), 1.0);
  }
  const auto e4 = timestep_embedding(1, 4);
  EXPECT_DOUBLE_EQ(e4(0), std::sin(1.0));
  EXPECT_DOUBLE_EQ(e4(1), std::cos(1.0));
  EXPECT_DOUBLE_EQ(e4(2), std::sin(1e-4));
  EXPECT_DOUBLE_EQ(e4(3), std::cos(1e-4));
  EXPECT_GT((timestep_embedding(1, 64) - timestep_embedding(2, 64)).norm(), 0.0);
  EXPECT_THROW(timestep_embedding(3, 7), ConfigError);
}

TEST(DenoiserConfig, Validation) {
  DenoiserConfig c;
  EXPECT_NO_THROW(c.validate());
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.depth = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.t_embed_dim = 9;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ParameterCount, MatchesFormulaAndLayout) {
  for (const auto& c : {DenoiserConfig{}, small_config()}) {
    const std::size_t C = static_cast<std::size_t>(c.latent_dim), J = static_cast<std::size_t>(c.joints);
    const std::size_t L = static_cast<std::size_t>(c.depth), E = static_cast<std::size_t>(c.t_embed_dim);
    const std::size_t H = static_cast<std::size_t>(c.mlp_ratio) * C;
    const std::size_t formula = C * (J + 11) + 3 + L * (E * C + C + 8 * C + 3 * (4 * C * C + 4 * C) + 2 * C * H + H + C);
    EXPECT_EQ(parameter_count(c), formula);
    const auto layout = parameter_layout(c);
    std::size_t offset = 0;
    for (const auto& b : layout) {
      EXPECT_EQ(b.offset, offset) << b.name;
      offset += b.size();
    }
    EXPECT_EQ(offset, formula);
  }
}

TEST(DenoiserForward, ShapeAndDeterminism) {
  Rng rng = make_rng(1);
  DenoiserConfig c;
  c.frames = 5;
  c.joints = 4;
  c.latent_dim = 16;
  const auto p = random_params(c, rng);
  const auto y = random_pose<2>(5, 4, rng);
  const auto x = random_pose<3>(5, 4, rng);
  const auto a = denoiser_forward(p, y, x, 7);
  EXPECT_EQ(a.frames(), 5u);
  EXPECT_EQ(a.joints(), 4u);
  EXPECT_EQ(a, denoiser_forward(p, y, x, 7));
  EXPECT_NE(a, denoiser_forward(p, y, x, 8));
  EXPECT_THROW(denoiser_forward(p, random_pose<2>(6, 4, rng), random_pose<3>(6, 4, rng), 7), ConfigError);
  auto broken = p;
  broken.values.pop_back();
  EXPECT_THROW(denoiser_forward(broken, y, x, 7), ConfigError);
}

TEST(DenoiserForward, ZeroOutputLayerPredictsMeanError) {
  Rng rng = make_rng(2);
  const auto c = small_config();
  auto p = init_params(c, rng);
  p.stats.mean = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  p.stats.stddev.assign(9, 0.5);
  const auto out = denoiser_forward(p, random_pose<2>(2, 3, rng), random_pose<3>(2, 3, rng), 3);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(out(n, j, k), p.stats.mean[j * 3 + k]);
}

TEST(DenoiserForward, FramePermutationEquivariantWithoutTemporalEncoding) {
  Rng rng = make_rng(3);
  DenoiserConfig c;
  c.frames = 6;
  c.joints = 5;
  c.latent_dim = 16;
  c.temporal_encoding = false;
  const auto p = random_params(c, rng);
  const auto y = random_pose<2>(6, 5, rng);
  const auto x = random_pose<3>(6, 5, rng);
  const std::array<std::size_t, 6> perm{4, 2, 0, 5, 1, 3};
  PoseSeq2D py(6, 5);
  PoseSeq3D px(6, 5);
  for (std::size_t n = 0; n < 6; ++n) {
    for (std::size_t j = 0; j < 5; ++j) {
      py.joint(n, j) = y.joint(perm[n], j);
      px.joint(n, j) = x.joint(perm[n], j);
    }
  }
  const auto out = denoiser_forward(p, y, x, 11);
  const auto pout = denoiser_forward(p, py, px, 11);
  for (std::size_t n = 0; n < 6; ++n)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_LT((pout.joint(n, j) - out.joint(perm[n], j)).norm(), 1e-6);

  c.temporal_encoding = true;
  auto pe = p;
  pe.config = c;
  const auto enc = denoiser_forward(pe, y, x, 11);
  const auto penc = denoiser_forward(pe, py, px, 11);
  double diff = 0.0;
  for (std::size_t n = 0; n < 6; ++n)
    for (std::size_t j = 0; j < 5; ++j) diff = std::max(diff, (penc.joint(n, j) - enc.joint(perm[n], j)).norm());
  EXPECT_GT(diff, 1e-6);
}

TEST(Loss, NormExamples) {
  PoseSeq3D e(2, 3), ehat(2, 3);
  EXPECT_EQ(loss(e, e), 0.0);
  ehat(1, 2, 0) = 3.0;
  ehat(0, 1, 2) = 4.0;
  EXPECT_DOUBLE_EQ(loss(ehat, e), 5.0);
  PoseSeq3D scaled = ehat;
  for (double& v : scaled.values()) v *= 2.5;
  EXPECT_DOUBLE_EQ(loss(scaled, e), 12.5);
  const std::vector<PoseSeq3D> hats{ehat, e}, targets{e, e};
  EXPECT_DOUBLE_EQ(loss(hats, targets), 2.5);
}

TEST(ErrorStats, RoundTripAndFloor) {
  Rng rng = make_rng(4);
  std::vector<PoseSeq3D> errors{random_pose<3>(7, 3, rng, 0.02), random_pose<3>(4, 3, rng, 0.02)};
  for (double& v : errors[1].values()) v += 0.01;
  auto stats = ErrorStats::from_errors(errors);
  const auto z = stats.normalize(errors[0]);
  const auto back = stats.denormalize(z);
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_NEAR(back.values()[i], errors[0].values()[i], 1e-12);

  std::vector<PoseSeq3D> constant{PoseSeq3D(5, 2)};
  const auto flat = ErrorStats::from_errors(constant);
  for (double s : flat.stddev) EXPECT_EQ(s, ErrorStats::kMinStd);
}

TEST(DenoiserBackward, MatchesCentralDifferences) {
  Rng rng = make_rng(5);
  const auto c = small_config();
  auto p = random_params(c, rng);
  const auto ex = random_example(c, rng, 17);
  const auto analytic = denoiser_backward(p, ex);
  EXPECT_DOUBLE_EQ(analytic.loss, loss(denoiser_forward(p, ex.y, ex.x_t, ex.t), ex.e));

  constexpr double h = 1e-5;
  double worst = 0.0;
  std::string worst_block;
  for (const auto& block : parameter_layout(c)) {
    for (std::size_t k = 0; k < block.size(); ++k) {
      const std::size_t i = block.offset + k;
      const double saved = p.values[i];
      p.values[i] = saved + h;
      const double up = loss(denoiser_forward(p, ex.y, ex.x_t, ex.t), ex.e);
      p.values[i] = saved - h;
      const double down = loss(denoiser_forward(p, ex.y, ex.x_t, ex.t), ex.e);
      p.values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.grad[i];
      const double scale = std::max(std::abs(a), std::abs(numeric));
      // key biases have an exactly zero gradient; differences there are rounding noise near 1e-11
      const double rel = std::abs(a - numeric) / std::max(scale, 1e-6);
      if (rel > worst) {
        worst = rel;
        worst_block = block.name;
      }
    }
  }
  EXPECT_LT(worst, 1e-4) << "worst block " << worst_block;
}

TEST(DenoiserBackward, ZeroResidualHasZeroGradient) {
  Rng rng = make_rng(6);
  const auto c = small_config();
  const auto p = random_params(c, rng);
  auto ex = random_example(c, rng, 4);
  ex.e = denoiser_forward(p, ex.y, ex.x_t, ex.t);
  const auto g = denoiser_backward(p, ex);
  EXPECT_EQ(g.loss, 0.0);
  for (double v : g.grad) EXPECT_EQ(v, 0.0);
}

TEST(DenoiserBackward, GradientIgnoresResidualScale) {
  // d||r|| / d e_hat = -r / ||r||, so scaling the residual leaves the gradient unchanged
  Rng rng = make_rng(7);
  const auto c = small_config();
  const auto p = random_params(c, rng);
  auto ex = random_example(c, rng, 9);
  const auto ehat = denoiser_forward(p, ex.y, ex.x_t, ex.t);
  auto doubled = ex;
  for (std::size_t i = 0; i < ex.e.size(); ++i) {
    doubled.e.values()[i] = ehat.values()[i] + 2.0 * (ex.e.values()[i] - ehat.values()[i]);
  }
  const auto g1 = denoiser_backward(p, ex);
  const auto g2 = denoiser_backward(p, doubled);
  EXPECT_NEAR(g2.loss, 2.0 * g1.loss, 1e-12 * g1.loss);
  for (std::size_t i = 0; i < g1.grad.size(); ++i) EXPECT_NEAR(g2.grad[i], g1.grad[i], 1e-10 * (1.0 + std::abs(g1.grad[i])));
}

TEST(DenoiserBackward, AccumulateScalesByWeight) {
  Rng rng = make_rng(8);
  const auto c = small_config();
  const auto p = random_params(c, rng);
  const auto ex = random_example(c, rng, 2);
  std::vector<double> acc(p.values.size(), 1.0);
  accumulate_gradient(p, ex, 0.25, acc);
  const auto full = denoiser_backward(p, ex);
  for (std::size_t i = 0; i < acc.size(); ++i) EXPECT_NEAR(acc[i], 1.0 + 0.25 * full.grad[i], 1e-14);
}

TEST(RequireFiniteGradient, NamesBlock) {
  const auto c = small_config();
  std::vector<double> g(parameter_count(c), 0.0);
  EXPECT_NO_THROW(require_finite_gradient(c, g));
  const auto layout = parameter_layout(c);
  const auto& target = layout[layout.size() - 2];
  g[target.offset + 1] = std::numeric_limits<double>::infinity();
  try {
    require_finite_gradient(c, g);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find(target.name), std::string::npos) << e.what();
  }
}
