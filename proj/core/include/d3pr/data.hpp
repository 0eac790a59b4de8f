#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "d3pr/gaussian.hpp"
#include "d3pr/pose.hpp"
#include "d3pr/random.hpp"

namespace d3pr {

struct SequenceRecord {
  std::string id;
  std::optional<PoseSeq3D> gt3d;  // absent for inference-only records
  PoseSeq2D pose2d;
  PoseSeq3D noisy3d;

  std::size_t frames() const noexcept { return noisy3d.frames(); }
  std::size_t joints() const noexcept { return noisy3d.joints(); }

  friend bool operator==(const SequenceRecord&, const SequenceRecord&) = default;
};

/// Synthetic motion, camera and estimator-noise parameters. Lengths in meters.
struct SynthConfig {
  std::size_t sequences = 200;
  std::size_t frames = 27;
  std::size_t joints = 17;
  std::vector<double> bone_lengths;  // joints entries, empty = skeleton default
  double fps = 50.0;
  double freq_min_hz = 0.2;
  double freq_max_hz = 1.5;
  double angle_scale = 1.0;  // multiplies every joint's swing amplitude

  double focal_px = 1000.0;
  double principal_x_px = 500.0;
  double principal_y_px = 500.0;
  double image_width_px = 1000.0;
  double image_height_px = 1000.0;
  double depth_m = 5.0;
  double depth_jitter = 0.2;     // subject depth ~ depth_m * U[1 - j, 1 + j]
  double lateral_range_m = 1.5;  // starting offset ~ U[-r, r]
  double lateral_drift_m = 0.5;  // offset change over a sequence ~ U[-d, d]

  double noise_sigma = 0.02;
  std::vector<double> noise_scale;  // per joint, empty = skeleton default
  /// Scales sigma by (depth / depth_m)^c and adds a view-dependent rotation
  /// error of angle c * atan(lateral / depth) about the vertical axis.
  double depth_coupling = 0.3;
  Eigen::Vector3d bias = Eigen::Vector3d::Zero();  // added to every non-root joint
  double jitter_2d = 0.001;                        // normalized units

  void validate() const;
  std::vector<double> resolved_bone_lengths() const;
  std::vector<double> resolved_noise_scale() const;
};

/// Root-relative forward-kinematics motion clips of config.frames frames.
std::vector<PoseSeq3D> generate_gt_sequences(const SynthConfig& config, Rng& rng);

struct EstimatorOutput {
  PoseSeq2D pose2d;
  PoseSeq3D noisy3d;
};

/// Places the subject in front of a pinhole camera, projects it to 2D and
/// corrupts the 3D pose with depth-dependent, per-joint Gaussian error.
EstimatorOutput simulate_estimator(const PoseSeq3D& gt3d, const SynthConfig& config, Rng& rng);

/// generate_gt_sequences + simulate_estimator; ids are "seq_00000", ...
std::vector<SequenceRecord> synthesize_dataset(const SynthConfig& config, Rng& rng);

/// Pixels to aspect-preserving normalized coordinates: u/w*2 - 1, v/w*2 - h/w.
PoseSeq2D normalize_2d(const PoseSeq2D& raw_px, double width, double height);

/// Subtracts joint `root` from every joint of each frame.
PoseSeq3D root_relative(const PoseSeq3D& x, std::size_t root = 0);

/// Views of records that carry ground truth. Throws DataError otherwise.
std::vector<TripletView> triplet_views(const std::vector<SequenceRecord>& records);

void save_dataset(const std::vector<SequenceRecord>& records, const std::filesystem::path& path);
std::vector<SequenceRecord> load_dataset(const std::filesystem::path& path);

std::string record_to_json_line(const SequenceRecord& record);
SequenceRecord record_from_json_line(const std::string& line, std::size_t line_number);

}  // namespace d3pr
