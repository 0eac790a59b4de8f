#include "d3pr/gaussian.hpp"

#include <array>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "d3pr/errors.hpp"

namespace d3pr {

namespace {

using Vector8d = Eigen::Matrix<double, 8, 1>;
using Matrix8d = Eigen::Matrix<double, 8, 8>;

Vector8d stack(const TripletView& t, std::size_t n, std::size_t j) {
  Vector8d v;
  v.head<3>() = t.noisy3d.joint(n, j) - t.gt3d.joint(n, j);
  v.segment<2>(3) = t.pose2d.joint(n, j);
  v.tail<3>() = t.noisy3d.joint(n, j);
  return v;
}

void validate(std::span<const TripletView> triplets) {
  if (triplets.empty()) throw FitError("fit_noise_model: no triplets supplied");
  const std::size_t joints = triplets.front().gt3d.joints();
  if (joints == 0) throw FitError("fit_noise_model: triplets have zero joints");
  std::size_t frames = 0;
  for (std::size_t s = 0; s < triplets.size(); ++s) {
    const auto& t = triplets[s];
    const std::string where = "triplet " + std::to_string(s);
    require_same_shape(t.gt3d, t.noisy3d, where.c_str());
    require_same_shape(t.pose2d, t.gt3d, where.c_str());
    if (t.gt3d.joints() != joints) {
      throw ShapeError(where + ": has " + std::to_string(t.gt3d.joints()) + " joints, expected " +
                       std::to_string(joints));
    }
    require_finite(t.gt3d, (where + " gt3d").c_str());
    require_finite(t.noisy3d, (where + " noisy3d").c_str());
    require_finite(t.pose2d, (where + " pose2d").c_str());
    frames += t.gt3d.frames();
  }
  if (frames < kMinFitFrames) {
    throw FitError("fit_noise_model: " + std::to_string(frames) + " frames per joint, need at least " +
                   std::to_string(kMinFitFrames));
  }
}

}  // namespace

CondGaussianModel fit_noise_model(std::span<const TripletView> triplets) {
  validate(triplets);
  const std::size_t joints = triplets.front().gt3d.joints();

  std::vector<Vector8d> mean(joints, Vector8d::Zero());
  std::vector<Matrix8d> scatter(joints, Matrix8d::Zero());
  std::size_t count = 0;

  for (const auto& t : triplets) {
    for (std::size_t n = 0; n < t.gt3d.frames(); ++n) {
      for (std::size_t j = 0; j < joints; ++j) mean[j] += stack(t, n, j);
    }
    count += t.gt3d.frames();
  }
  for (auto& m : mean) m /= static_cast<double>(count);

  // Second pass on centered data.
  for (const auto& t : triplets) {
    for (std::size_t n = 0; n < t.gt3d.frames(); ++n) {
      for (std::size_t j = 0; j < joints; ++j) {
        const Vector8d d = stack(t, n, j) - mean[j];
        scatter[j].noalias() += d * d.transpose();
      }
    }
  }

  CondGaussianModel model;
  model.joints.resize(joints);
  for (std::size_t j = 0; j < joints; ++j) {
    const Matrix8d cov = scatter[j] / static_cast<double>(count - 1);
    auto& g = model.joints[j];
    g.mean_a = mean[j].head<3>();
    g.mean_b = mean[j].tail<5>();
    g.cov_aa = cov.topLeftCorner<3, 3>();
    g.cov_ab = cov.topRightCorner<3, 5>();
    g.cov_bb = cov.bottomRightCorner<5, 5>();
    g.lambda = kRidgeScale * g.cov_bb.trace() / 5.0;
    g.sample_count = count;
  }
  return model;
}

GaussianConditional condition_gaussian(const Eigen::VectorXd& mu_a, const Eigen::VectorXd& mu_b,
                                       const Eigen::MatrixXd& cov_aa, const Eigen::MatrixXd& cov_ab,
                                       const Eigen::MatrixXd& cov_bb, double lambda,
                                       const Eigen::VectorXd& b_obs) {
  const auto na = mu_a.size();
  const auto nb = mu_b.size();
  if (cov_aa.rows() != na || cov_aa.cols() != na || cov_ab.rows() != na || cov_ab.cols() != nb ||
      cov_bb.rows() != nb || cov_bb.cols() != nb || b_obs.size() != nb) {
    throw ShapeError("condition_gaussian: inconsistent block sizes");
  }
  Eigen::MatrixXd reg = cov_bb;
  reg.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(reg);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("condition_gaussian: regularized cov_bb is not positive definite");
  }
  // gain^T = (S_bb + lambda I)^-1 S_ba
  const Eigen::MatrixXd gain = llt.solve(cov_ab.transpose()).transpose();
  GaussianConditional out;
  out.mean = mu_a + gain * (b_obs - mu_b);
  out.cov = cov_aa - gain * cov_ab.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

JointConditional condition(const CondGaussianModel& model, std::size_t joint, const Vector5d& b_obs) {
  if (joint >= model.joint_count()) {
    throw ConfigError("joint", "index " + std::to_string(joint) + " outside model with " +
                                   std::to_string(model.joint_count()) + " joints");
  }
  const auto& g = model.joints[joint];
  try {
    const auto c = condition_gaussian(g.mean_a, g.mean_b, g.cov_aa, g.cov_ab, g.cov_bb, g.lambda, b_obs);
    return {c.mean, c.cov};
  } catch (const NumericalError& e) {
    throw NumericalError("joint " + std::to_string(joint) + ": " + e.what());
  }
}

Eigen::Matrix3d sampling_factor(const Eigen::Matrix3d& cov, double lambda) {
  std::array<int, 3> active{};
  int k = 0;
  for (int i = 0; i < 3; ++i) {
    if (cov(i, i) > 0.0) active[k++] = i;
  }
  Eigen::Matrix3d factor = Eigen::Matrix3d::Zero();
  if (k == 0) return factor;

  Eigen::MatrixXd sub(k, k);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) sub(r, c) = cov(active[r], active[c]);
  }
  const double base = lambda > 0.0 ? lambda : 1e-12 * sub.diagonal().maxCoeff();
  double jitter = 0.0;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    Eigen::MatrixXd trial = sub;
    trial.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(trial);
    if (llt.info() == Eigen::Success) {
      const Eigen::MatrixXd l = llt.matrixL();
      for (int r = 0; r < k; ++r) {
        for (int c = 0; c < k; ++c) factor(active[r], active[c]) = l(r, c);
      }
      return factor;
    }
    jitter = attempt == 0 ? base : jitter * 10.0;
  }
  throw NumericalError("sampling_factor: Cholesky failed after jitter escalation");
}

ConditionalSampler::ConditionalSampler(const CondGaussianModel& model) {
  if (!model.fitted()) throw ConfigError("noise_model", "model is not fitted");
  entries_.reserve(model.joint_count());
  for (std::size_t j = 0; j < model.joint_count(); ++j) {
    const auto& g = model.joints[j];
    Matrix5d reg = g.cov_bb;
    reg.diagonal().array() += g.lambda;
    Eigen::LLT<Matrix5d> llt(reg);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("joint " + std::to_string(j) + ": regularized cov_bb is not positive definite");
    }
    Entry e;
    e.mean_a = g.mean_a;
    e.mean_b = g.mean_b;
    e.gain = llt.solve(g.cov_ab.transpose()).transpose();
    e.cov = g.cov_aa - e.gain * g.cov_ab.transpose();
    e.cov = (0.5 * (e.cov + e.cov.transpose())).eval();
    try {
      e.factor = sampling_factor(e.cov, g.lambda);
    } catch (const NumericalError& err) {
      throw NumericalError("joint " + std::to_string(j) + ": " + err.what());
    }
    entries_.push_back(e);
  }
}

JointConditional ConditionalSampler::condition(std::size_t joint, const Vector5d& b_obs) const {
  if (joint >= entries_.size()) throw ConfigError("joint", "index " + std::to_string(joint) + " out of range");
  const auto& e = entries_[joint];
  return {e.mean_a + e.gain * (b_obs - e.mean_b), e.cov};
}

PoseSeq3D ConditionalSampler::sample(const PoseSeq3D& x0, const PoseSeq2D& y, const PoseSeq3D& x_noisy,
                                     Rng& rng) const {
  require_same_shape(x0, x_noisy, "sample_noisy_pose");
  require_same_shape(y, x0, "sample_noisy_pose");
  if (x0.joints() != entries_.size()) {
    throw ShapeError("sample_noisy_pose: model has " + std::to_string(entries_.size()) + " joints, input has " +
                     std::to_string(x0.joints()));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  PoseSeq3D eps(x0.frames(), x0.joints());
  Vector5d b;
  Eigen::Vector3d z;
  for (std::size_t n = 0; n < x0.frames(); ++n) {
    for (std::size_t j = 0; j < x0.joints(); ++j) {
      const auto& e = entries_[j];
      b.head<2>() = y.joint(n, j);
      b.tail<3>() = x_noisy.joint(n, j);
      z << normal(rng), normal(rng), normal(rng);
      const Eigen::Vector3d err = e.mean_a + e.gain * (b - e.mean_b) + e.factor * z;
      eps.joint(n, j) = x0.joint(n, j) + err;
    }
  }
  return eps;
}

PoseSeq3D sample_noisy_pose(const CondGaussianModel& model, const PoseSeq3D& x0, const PoseSeq2D& y,
                            const PoseSeq3D& x_noisy, Rng& rng) {
  return ConditionalSampler(model).sample(x0, y, x_noisy, rng);
}

}  // namespace d3pr
