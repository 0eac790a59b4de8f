#include <gtest/gtest.h>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "d3pr/data.hpp"
#include "d3pr/errors.hpp"
#include "d3pr/gaussian.hpp"
#include "test_util.hpp"

using namespace d3pr;
using d3pr::testing::random_pose;

namespace {

using Matrix8d = Eigen::Matrix<double, 8, 8>;
using Vector8d = Eigen::Matrix<double, 8, 1>;

struct Triplet {
  PoseSeq2D y;
  PoseSeq3D noisy;
  PoseSeq3D gt;
  TripletView view() const { return {y, noisy, gt}; }
};

// z = [e, y, x_noisy] ~ N(mu, sigma) for every frame and joint.
Triplet gaussian_triplet(std::size_t frames, std::size_t joints, const Vector8d& mu, const Matrix8d& sigma, Rng& rng) {
  const Matrix8d l = sigma.llt().matrixL();
  std::normal_distribution<double> n(0.0, 1.0);
  Triplet t{PoseSeq2D(frames, joints), PoseSeq3D(frames, joints), PoseSeq3D(frames, joints)};
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t j = 0; j < joints; ++j) {
      Vector8d z;
      for (int i = 0; i < 8; ++i) z(i) = n(rng);
      z = (mu + l * z).eval();
      t.y.joint(f, j) = z.segment<2>(3);
      t.noisy.joint(f, j) = z.tail<3>();
      t.gt.joint(f, j) = z.tail<3>() - z.head<3>();
    }
  }
  return t;
}

Matrix8d random_spd(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix8d a;
  for (int i = 0; i < 64; ++i) a(i) = n(rng);
  return a * a.transpose() / 8.0 + 0.2 * Matrix8d::Identity();
}

Vector8d random_mean(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector8d v;
  for (int i = 0; i < 8; ++i) v(i) = n(rng);
  return v;
}

Matrix8d full_cov(const JointGaussian& g) {
  Matrix8d s;
  s.topLeftCorner<3, 3>() = g.cov_aa;
  s.topRightCorner<3, 5>() = g.cov_ab;
  s.bottomLeftCorner<5, 3>() = g.cov_ab.transpose();
  s.bottomRightCorner<5, 5>() = g.cov_bb;
  return s;
}

// Least-squares regression of a on [1, b] over the data of one joint, with an
// optional ridge penalty on the slopes expressed in covariance units.
Eigen::Vector3d ols_conditional_mean(const Triplet& t, std::size_t joint, double lambda, const Vector5d& b_obs) {
  const auto m = static_cast<Eigen::Index>(t.gt.frames());
  Eigen::MatrixXd x(m, 5);
  Eigen::MatrixXd a(m, 3);
  for (Eigen::Index f = 0; f < m; ++f) {
    const auto n = static_cast<std::size_t>(f);
    x.row(f).head<2>() = t.y.joint(n, joint).transpose();
    x.row(f).tail<3>() = t.noisy.joint(n, joint).transpose();
    a.row(f) = (t.noisy.joint(n, joint) - t.gt.joint(n, joint)).transpose();
  }
  const Eigen::RowVectorXd mx = x.colwise().mean();
  const Eigen::RowVectorXd ma = a.colwise().mean();
  Eigen::MatrixXd xa(m + 5, 5);
  Eigen::MatrixXd aa(m + 5, 3);
  xa.topRows(m) = x.rowwise() - mx;
  aa.topRows(m) = a.rowwise() - ma;
  xa.bottomRows(5) = std::sqrt(lambda * static_cast<double>(m - 1)) * Eigen::MatrixXd::Identity(5, 5);
  aa.bottomRows(5).setZero();
  const Eigen::MatrixXd slope = xa.colPivHouseholderQr().solve(aa);  // 5 x 3
  return ma.transpose() + slope.transpose() * (b_obs - mx.transpose());
}

}  // namespace

TEST(FitNoiseModel, ZeroErrorGivesZeroMoments) {
  Rng rng = make_rng(1);
  Triplet t{random_pose<2>(40, 4, rng), random_pose<3>(40, 4, rng), {}};
  t.gt = t.noisy;
  const std::vector<TripletView> views{t.view()};
  const auto model = fit_noise_model(views);
  ASSERT_EQ(model.joint_count(), 4u);
  for (const auto& g : model.joints) {
    EXPECT_TRUE(g.mean_a.isZero(0.0));
    EXPECT_TRUE(g.cov_aa.isZero(0.0));
    EXPECT_TRUE(g.cov_ab.isZero(0.0));
    EXPECT_EQ(g.sample_count, 40u);
  }
}

TEST(FitNoiseModel, IndependentErrorHasSmallCrossCovariance) {
  Rng rng = make_rng(2);
  Matrix8d sigma = random_spd(rng);
  sigma.topRightCorner<3, 5>().setZero();
  sigma.bottomLeftCorner<5, 3>().setZero();
  const Triplet t = gaussian_triplet(100000, 1, random_mean(rng), sigma, rng);
  const std::vector<TripletView> views{t.view()};
  const auto g = fit_noise_model(views).joints[0];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 5; ++c) {
      EXPECT_LT(std::abs(g.cov_ab(r, c)), 0.02 * std::sqrt(g.cov_aa(r, r) * g.cov_bb(c, c))) << r << "," << c;
    }
  }
}

TEST(FitNoiseModel, RecoversGeneratingCovariance) {
  Rng rng = make_rng(3);
  const Matrix8d sigma = random_spd(rng);
  const Vector8d mu = random_mean(rng);
  const Triplet t = gaussian_triplet(100000, 1, mu, sigma, rng);
  const std::vector<TripletView> views{t.view()};
  const auto g = fit_noise_model(views).joints[0];
  EXPECT_LT((full_cov(g) - sigma).norm() / sigma.norm(), 0.02);
  EXPECT_EQ(g.sample_count, 100000u);
  EXPECT_NEAR(g.lambda, kRidgeScale * g.cov_bb.trace() / 5.0, 1e-20);
}

TEST(FitNoiseModel, UsesUnbiasedEstimator) {
  // errors alternate 0 and 2 over ten frames: mean 1, variance 10/9 under 1/(M-1)
  PoseSeq2D y(10, 1);
  PoseSeq3D gt(10, 1), noisy(10, 1);
  for (std::size_t n = 0; n < 10; ++n) noisy(n, 0, 0) = n % 2 ? 2.0 : 0.0;
  const std::vector<TripletView> views{{y, noisy, gt}};
  const auto g = fit_noise_model(views).joints[0];
  EXPECT_DOUBLE_EQ(g.mean_a(0), 1.0);
  EXPECT_DOUBLE_EQ(g.cov_aa(0, 0), 10.0 / 9.0);
}

TEST(FitNoiseModel, Errors) {
  Rng rng = make_rng(4);
  Triplet small{random_pose<2>(9, 2, rng), random_pose<3>(9, 2, rng), random_pose<3>(9, 2, rng)};
  std::vector<TripletView> views{small.view()};
  EXPECT_THROW(fit_noise_model(views), FitError);
  EXPECT_THROW(fit_noise_model(std::span<const TripletView>{}), FitError);

  Triplet bad{random_pose<2>(12, 2, rng), random_pose<3>(12, 2, rng), random_pose<3>(12, 2, rng)};
  bad.noisy(5, 1, 2) = std::nan("");
  views.clear();
  views.push_back(bad.view());
  try {
    fit_noise_model(views);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 5"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("joint 1"), std::string::npos) << e.what();
  }

  Triplet other{random_pose<2>(12, 3, rng), random_pose<3>(12, 3, rng), random_pose<3>(12, 3, rng)};
  Triplet ok{random_pose<2>(12, 2, rng), random_pose<3>(12, 2, rng), random_pose<3>(12, 2, rng)};
  views.clear();
  views.push_back(ok.view());
  views.push_back(other.view());
  EXPECT_THROW(fit_noise_model(views), ShapeError);
}

TEST(Condition, BivariateClosedForm) {
  Eigen::VectorXd mu_a(1), mu_b(1), b(1);
  Eigen::MatrixXd saa(1, 1), sab(1, 1), sbb(1, 1);
  mu_a << 0.0;
  mu_b << 0.0;
  saa << 1.0;
  sbb << 1.0;
  sab << 0.8;
  b << 1.0;
  const auto c = condition_gaussian(mu_a, mu_b, saa, sab, sbb, 0.0, b);
  EXPECT_NEAR(c.mean(0), 0.8, 1e-12);
  EXPECT_NEAR(c.cov(0, 0), 0.36, 1e-12);
}

TEST(Condition, ZeroCrossCovarianceReturnsMarginal) {
  Rng rng = make_rng(5);
  CondGaussianModel model;
  JointGaussian g;
  g.mean_a = {0.1, -0.2, 0.3};
  g.mean_b << 1, 2, 3, 4, 5;
  g.cov_aa = random_spd(rng).topLeftCorner<3, 3>();
  g.cov_bb = random_spd(rng).topLeftCorner<5, 5>();
  g.lambda = 1e-6;
  model.joints.push_back(g);
  Vector5d b;
  b << -3, 7, 0.5, 2, 9;
  const auto c = condition(model, 0, b);
  EXPECT_EQ(c.mean, g.mean_a);
  EXPECT_EQ(c.cov, g.cov_aa);
}

TEST(Condition, ObservedMeanGivesPriorMean) {
  Rng rng = make_rng(6);
  const Triplet t = gaussian_triplet(500, 2, random_mean(rng), random_spd(rng), rng);
  const std::vector<TripletView> views{t.view()};
  const auto model = fit_noise_model(views);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_EQ(condition(model, j, model.joints[j].mean_b).mean, model.joints[j].mean_a);
    EXPECT_EQ(ConditionalSampler(model).condition(j, model.joints[j].mean_b).mean, model.joints[j].mean_a);
  }
}

TEST(Condition, MatchesLeastSquaresOracle) {
  Rng rng = make_rng(7);
  const Triplet t = gaussian_triplet(20000, 3, random_mean(rng), random_spd(rng), rng);
  const std::vector<TripletView> views{t.view()};
  const auto model = fit_noise_model(views);
  CondGaussianModel exact = model;
  for (auto& g : exact.joints) g.lambda = 0.0;

  std::normal_distribution<double> n(0.0, 2.0);
  for (std::size_t j = 0; j < 3; ++j) {
    for (int trial = 0; trial < 5; ++trial) {
      Vector5d b;
      for (int i = 0; i < 5; ++i) b(i) = n(rng);
      const Eigen::Vector3d ridge = ols_conditional_mean(t, j, model.joints[j].lambda, b);
      const Eigen::Vector3d plain = ols_conditional_mean(t, j, 0.0, b);
      EXPECT_LT((condition(model, j, b).mean - ridge).cwiseAbs().maxCoeff(), 1e-8);
      EXPECT_LT((condition(exact, j, b).mean - plain).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(Condition, ConditionalCovarianceIsPsdAndShrinks) {
  SynthConfig sc;
  sc.sequences = 20;
  Rng rng = make_rng(8);
  const auto records = synthesize_dataset(sc, rng);
  const auto views = triplet_views(records);
  const auto model = fit_noise_model(views);
  Vector5d b = Vector5d::Zero();
  for (std::size_t j = 0; j < model.joint_count(); ++j) {
    const auto c = condition(model, j, b);
    EXPECT_TRUE(c.cov.isApprox(c.cov.transpose(), 1e-14));
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(c.cov);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10) << "joint " << j;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> diff(model.joints[j].cov_aa - c.cov);
    EXPECT_GE(diff.eigenvalues().minCoeff(), -1e-10) << "joint " << j;
  }
}

TEST(Condition, SingularCovarianceReportsJoint) {
  CondGaussianModel model;
  model.joints.resize(3);
  model.joints[0].cov_bb = Matrix5d::Identity();
  model.joints[1].cov_bb = Matrix5d::Identity();
  try {
    condition(model, 2, Vector5d::Zero());
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("joint 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(condition(model, 3, Vector5d::Zero()), ConfigError);
}

TEST(SamplingFactor, HandlesDegenerateAndNearSingular) {
  EXPECT_TRUE(sampling_factor(Eigen::Matrix3d::Zero(), 1e-6).isZero(0.0));

  Eigen::Matrix3d partial = Eigen::Matrix3d::Zero();
  partial(1, 1) = 4.0;
  const Eigen::Matrix3d f = sampling_factor(partial, 1e-6);
  EXPECT_DOUBLE_EQ(f(1, 1), 2.0);
  EXPECT_EQ(f(0, 0), 0.0);

  Eigen::Matrix3d near;
  near << 1, 1, 0, 1, 1 - 1e-15, 0, 0, 0, 1;
  const Eigen::Matrix3d g = sampling_factor(near, 1e-9);
  EXPECT_LT((g * g.transpose() - near).norm(), 1e-6);

  Eigen::Matrix3d indefinite;
  indefinite << 1, 2, 0, 2, 1, 0, 0, 0, 1;
  EXPECT_THROW(sampling_factor(indefinite, 1e-9), NumericalError);
}

TEST(SampleNoisyPose, DegenerateConditionalIsDeterministic) {
  Rng rng = make_rng(9);
  CondGaussianModel model;
  JointGaussian g;
  g.mean_a = {0.01, 0.02, -0.03};
  g.cov_bb = Matrix5d::Identity();
  model.joints = {g, g};
  const auto x0 = random_pose<3>(5, 2, rng);
  const auto y = random_pose<2>(5, 2, rng);
  const auto xn = random_pose<3>(5, 2, rng);
  const auto eps = sample_noisy_pose(model, x0, y, xn, rng);
  for (std::size_t n = 0; n < 5; ++n)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(eps.joint(n, j), x0.joint(n, j) + g.mean_a);
}

TEST(SampleNoisyPose, MomentsMatchConditional) {
  Rng rng = make_rng(10);
  const Triplet t = gaussian_triplet(2000, 1, random_mean(rng), random_spd(rng), rng);
  const std::vector<TripletView> views{t.view()};
  const auto model = fit_noise_model(views);
  const ConditionalSampler sampler(model);

  constexpr std::size_t kDraws = 100000;
  PoseSeq3D x0(kDraws, 1), xn(kDraws, 1);
  PoseSeq2D y(kDraws, 1);
  Vector5d b;
  b << 0.3, -0.7, 1.1, 0.2, -0.4;
  for (std::size_t n = 0; n < kDraws; ++n) {
    y.joint(n, 0) = b.head<2>();
    xn.joint(n, 0) = b.tail<3>();
  }
  const auto eps = sampler.sample(x0, y, xn, rng);
  const auto target = sampler.condition(0, b);

  const auto e = eps.tokens();
  const Eigen::RowVector3d mean = e.colwise().mean();
  const Eigen::MatrixXd centered = e.rowwise() - mean;
  const Eigen::Matrix3d cov = centered.transpose() * centered / (kDraws - 1.0);
  for (int i = 0; i < 3; ++i) {
    const double se = std::sqrt(target.cov(i, i) / kDraws);
    EXPECT_LT(std::abs(mean(i) - target.mean(i)), 3.0 * se) << i;
  }
  EXPECT_LT((cov - target.cov).norm() / target.cov.norm(), 0.05);
}

TEST(SampleNoisyPose, SameSeedIsBitIdentical) {
  SynthConfig sc;
  sc.sequences = 3;
  Rng data_rng = make_rng(11);
  const auto records = synthesize_dataset(sc, data_rng);
  const auto views = triplet_views(records);
  const auto model = fit_noise_model(views);
  Rng a = make_rng(99), b = make_rng(99);
  const auto& r = records[1];
  EXPECT_EQ(sample_noisy_pose(model, *r.gt3d, r.pose2d, r.noisy3d, a),
            sample_noisy_pose(model, *r.gt3d, r.pose2d, r.noisy3d, b));
}

TEST(SampleNoisyPose, ShapeMismatch) {
  Rng rng = make_rng(12);
  CondGaussianModel model;
  model.joints.resize(2);
  for (auto& g : model.joints) g.cov_bb = Matrix5d::Identity();
  EXPECT_THROW(sample_noisy_pose(model, random_pose<3>(3, 3, rng), random_pose<2>(3, 3, rng),
                                 random_pose<3>(3, 3, rng), rng),
               ShapeError);
  EXPECT_THROW(sample_noisy_pose(model, random_pose<3>(3, 2, rng), random_pose<2>(4, 2, rng),
                                 random_pose<3>(3, 2, rng), rng),
               ShapeError);
  EXPECT_THROW(sample_noisy_pose(CondGaussianModel{}, random_pose<3>(3, 2, rng), random_pose<2>(3, 2, rng),
                                 random_pose<3>(3, 2, rng), rng),
               ConfigError);
}
