#pragma once

#include <array>
#include <cstddef>

#include <Eigen/Core>

namespace d3pr {

/// 17-joint Human3.6M topology, pelvis at index 0.
namespace h36m {

inline constexpr std::size_t kJoints = 17;
inline constexpr std::size_t kRoot = 0;

enum Joint : std::size_t {
  Pelvis, RHip, RKnee, RAnkle, LHip, LKnee, LAnkle, Spine, Thorax, Neck, Head,
  LShoulder, LElbow, LWrist, RShoulder, RElbow, RWrist,
};

/// parent[j] < j for every non-root joint; parent of the root is -1.
inline constexpr std::array<int, kJoints> kParents = {-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15};

/// Unit bone directions in the rest pose (camera frame: x right, y down, z forward).
const std::array<Eigen::Vector3d, kJoints>& rest_directions();

/// Default bone lengths in meters; entry 0 is unused and zero.
const std::array<double, kJoints>& default_bone_lengths();

/// Relative estimator noise per joint; the root is exact.
const std::array<double, kJoints>& default_noise_scale();

}  // namespace h36m

}  // namespace d3pr
