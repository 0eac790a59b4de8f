#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace d3pr {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense frames x joints x Dim array of doubles, stored frame-major.
///
/// Dim = 3 holds root-relative 3D joints in meters (ground truth, estimator
/// output, or a diffusion state). Dim = 2 holds normalized image keypoints.
template <int Dim>
class PoseSeq {
public:
  static constexpr int kDim = Dim;
  using Point = Eigen::Matrix<double, Dim, 1>;
  using PointMap = Eigen::Map<Point>;
  using ConstPointMap = Eigen::Map<const Point>;
  using TokenMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Dim, Eigen::RowMajor>>;
  using ConstTokenMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Dim, Eigen::RowMajor>>;

  PoseSeq() = default;
  PoseSeq(std::size_t frames, std::size_t joints)
      : frames_(frames), joints_(joints), data_(frames * joints * Dim, 0.0) {}

  std::size_t frames() const noexcept { return frames_; }
  std::size_t joints() const noexcept { return joints_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t n, std::size_t j, std::size_t c) {
    return data_[(n * joints_ + j) * Dim + c];
  }
  double operator()(std::size_t n, std::size_t j, std::size_t c) const {
    return data_[(n * joints_ + j) * Dim + c];
  }

  PointMap joint(std::size_t n, std::size_t j) { return PointMap(&data_[(n * joints_ + j) * Dim]); }
  ConstPointMap joint(std::size_t n, std::size_t j) const {
    return ConstPointMap(&data_[(n * joints_ + j) * Dim]);
  }

  /// (frames*joints) x Dim view; row n*J + j is joint j of frame n.
  TokenMap tokens() { return TokenMap(data_.data(), static_cast<Eigen::Index>(frames_ * joints_), Dim); }
  ConstTokenMap tokens() const {
    return ConstTokenMap(data_.data(), static_cast<Eigen::Index>(frames_ * joints_), Dim);
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const PoseSeq& other) const noexcept {
    return frames_ == other.frames_ && joints_ == other.joints_;
  }

  friend bool operator==(const PoseSeq&, const PoseSeq&) = default;

private:
  std::size_t frames_ = 0;
  std::size_t joints_ = 0;
  std::vector<double> data_;
};

using PoseSeq3D = PoseSeq<3>;
using PoseSeq2D = PoseSeq<2>;

/// Throws ShapeError when `a` and `b` differ in frames or joints.
template <int DA, int DB>
void require_same_shape(const PoseSeq<DA>& a, const PoseSeq<DB>& b, const char* context);

/// Throws DataError naming the first non-finite (frame, joint).
template <int Dim>
void require_finite(const PoseSeq<Dim>& x, const char* what);

}  // namespace d3pr
