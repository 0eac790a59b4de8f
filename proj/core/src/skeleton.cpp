#include "d3pr/skeleton.hpp"

namespace d3pr::h36m {

const std::array<Eigen::Vector3d, kJoints>& rest_directions() {
  static const std::array<Eigen::Vector3d, kJoints> dirs = [] {
    std::array<Eigen::Vector3d, kJoints> d{};
    d[Pelvis] = Eigen::Vector3d::Zero();
    d[RHip] = {-1, 0, 0};
    d[RKnee] = {0, 1, 0};
    d[RAnkle] = {0, 1, 0};
    d[LHip] = {1, 0, 0};
    d[LKnee] = {0, 1, 0};
    d[LAnkle] = {0, 1, 0};
    d[Spine] = {0, -1, 0};
    d[Thorax] = {0, -1, 0};
    d[Neck] = Eigen::Vector3d(0, -1, -0.3).normalized();
    d[Head] = Eigen::Vector3d(0, -1, 0.2).normalized();
    d[LShoulder] = Eigen::Vector3d(1, 0.1, 0).normalized();
    d[LElbow] = {0, 1, 0};
    d[LWrist] = {0, 1, 0};
    d[RShoulder] = Eigen::Vector3d(-1, 0.1, 0).normalized();
    d[RElbow] = {0, 1, 0};
    d[RWrist] = {0, 1, 0};
    return d;
  }();
  return dirs;
}

const std::array<double, kJoints>& default_bone_lengths() {
  static const std::array<double, kJoints> lengths = {
      0.0, 0.132, 0.442, 0.454, 0.132, 0.442, 0.454, 0.233, 0.257,
      0.121, 0.115, 0.151, 0.278, 0.252, 0.151, 0.278, 0.252};
  return lengths;
}

const std::array<double, kJoints>& default_noise_scale() {
  static const std::array<double, kJoints> scale = {
      0.0, 0.8, 1.0, 1.3, 0.8, 1.0, 1.3, 0.7, 0.8, 0.9, 1.0, 0.9, 1.1, 1.4, 0.9, 1.1, 1.4};
  return scale;
}

}  // namespace d3pr::h36m
