#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "d3pr/pose.hpp"
#include "d3pr/random.hpp"

namespace d3pr {

using Vector5d = Eigen::Matrix<double, 5, 1>;
using Matrix35d = Eigen::Matrix<double, 3, 5>;
using Matrix5d = Eigen::Matrix<double, 5, 5>;

/// Joint Gaussian of one skeleton joint over a = e (3) and b = [y (2), x_noisy (3)].
struct JointGaussian {
  Eigen::Vector3d mean_a = Eigen::Vector3d::Zero();
  Vector5d mean_b = Vector5d::Zero();
  Eigen::Matrix3d cov_aa = Eigen::Matrix3d::Zero();
  Matrix35d cov_ab = Matrix35d::Zero();  // cov_ba is its transpose
  Matrix5d cov_bb = Matrix5d::Zero();
  double lambda = 0.0;  // ridge added to cov_bb before inversion
  std::size_t sample_count = 0;

  friend bool operator==(const JointGaussian&, const JointGaussian&) = default;
};

struct CondGaussianModel {
  std::vector<JointGaussian> joints;

  std::size_t joint_count() const noexcept { return joints.size(); }
  bool fitted() const noexcept { return !joints.empty(); }

  friend bool operator==(const CondGaussianModel&, const CondGaussianModel&) = default;
};

/// One training sequence: 2D condition, estimator output and ground truth.
struct TripletView {
  const PoseSeq2D& pose2d;
  const PoseSeq3D& noisy3d;
  const PoseSeq3D& gt3d;
};

inline constexpr std::size_t kMinFitFrames = 10;
inline constexpr double kRidgeScale = 1e-6;

/// Per-joint sample means and 1/(M-1) covariances pooled over all frames.
/// lambda = kRidgeScale * trace(cov_bb) / 5 for each joint.
CondGaussianModel fit_noise_model(std::span<const TripletView> triplets);

/// Mean and covariance of a Gaussian conditional, for arbitrary block sizes:
///   mean = mu_a + S_ab (S_bb + lambda I)^-1 (b - mu_b)
///   cov  = S_aa - S_ab (S_bb + lambda I)^-1 S_ba
struct GaussianConditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

GaussianConditional condition_gaussian(const Eigen::VectorXd& mu_a, const Eigen::VectorXd& mu_b,
                                       const Eigen::MatrixXd& cov_aa, const Eigen::MatrixXd& cov_ab,
                                       const Eigen::MatrixXd& cov_bb, double lambda,
                                       const Eigen::VectorXd& b_obs);

struct JointConditional {
  Eigen::Vector3d mean;
  Eigen::Matrix3d cov;
};

/// Conditional error distribution of `joint` given b_obs = [y, x_noisy].
JointConditional condition(const CondGaussianModel& model, std::size_t joint, const Vector5d& b_obs);

/// Lower-triangular factor with L L^T = cov. Zero-variance directions stay
/// zero; otherwise Cholesky is retried with jitter lambda, 10 lambda, 100 lambda.
Eigen::Matrix3d sampling_factor(const Eigen::Matrix3d& cov, double lambda);

/// Precomputed per-joint gains and factors so repeated sampling costs one
/// 3x5 product and one 3x3 triangular product per joint.
class ConditionalSampler {
public:
  explicit ConditionalSampler(const CondGaussianModel& model);

  std::size_t joint_count() const noexcept { return entries_.size(); }
  JointConditional condition(std::size_t joint, const Vector5d& b_obs) const;

  /// epsilon = x0 + e with e ~ N(mu_{a|b}, cov_{a|b}) drawn per frame and joint.
  PoseSeq3D sample(const PoseSeq3D& x0, const PoseSeq2D& y, const PoseSeq3D& x_noisy, Rng& rng) const;

private:
  struct Entry {
    Eigen::Vector3d mean_a;
    Vector5d mean_b;
    Matrix35d gain;
    Eigen::Matrix3d cov;
    Eigen::Matrix3d factor;
  };
  std::vector<Entry> entries_;
};

/// Convenience wrapper building a ConditionalSampler for a single draw.
PoseSeq3D sample_noisy_pose(const CondGaussianModel& model, const PoseSeq3D& x0, const PoseSeq2D& y,
                            const PoseSeq3D& x_noisy, Rng& rng);

}  // namespace d3pr
