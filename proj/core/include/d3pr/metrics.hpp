#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "d3pr/pose.hpp"

namespace d3pr {

using PointSet = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Mean per-joint Euclidean distance over all frames and joints, in millimeters.
double mpjpe(const PoseSeq3D& pred, const PoseSeq3D& gt);

enum class AlignMode { Similarity, Rigid };

struct SimilarityTransform {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  PointSet apply(const PointSet& points) const;
};

/// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
/// Eigenvalues are returned in descending order with matching columns.
struct SymmetricEigen3 {
  Eigen::Vector3d values;
  Eigen::Matrix3d vectors;
  int sweeps = 0;
};
SymmetricEigen3 jacobi_eigen(const Eigen::Matrix3d& m, double tol = 1e-12, int max_sweeps = 50);

/// Least-squares transform mapping `pred` onto `gt` with a proper rotation
/// (det +1). Rigid mode fixes the scale to 1. Throws AlignmentError for
/// fewer than 3 points or (near-)collinear sets.
SimilarityTransform procrustes_fit(const PointSet& pred, const PointSet& gt, AlignMode mode = AlignMode::Similarity);

PointSet procrustes_align(const PointSet& pred, const PointSet& gt, AlignMode mode = AlignMode::Similarity);

/// Per-frame Procrustes alignment followed by MPJPE, in millimeters.
double p_mpjpe(const PoseSeq3D& pred, const PoseSeq3D& gt, AlignMode mode = AlignMode::Similarity);

PointSet frame_points(const PoseSeq3D& seq, std::size_t frame);

struct Histogram {
  double bin_width = 0.0;
  long first_bin = 0;  // lower edge = first_bin * bin_width
  std::vector<std::size_t> counts;

  std::vector<double> edges() const;
  std::size_t total() const;
};

/// Counts values into [k w, (k + 1) w) bins spanning the data range.
Histogram error_histogram(std::span<const double> values, double bin_width_mm);

inline constexpr double kDefaultBinWidthMm = 5.0;

struct SequenceScore {
  std::string id;
  double mpjpe_mm = 0.0;
  double p_mpjpe_mm = 0.0;
};

struct EvalReport {
  double mpjpe_mm = 0.0;
  double p_mpjpe_mm = 0.0;
  std::vector<SequenceScore> per_sequence;
  Histogram histogram;  // of per-sequence MPJPE
};

struct EvalItem {
  std::string id;
  const PoseSeq3D& pred;
  const PoseSeq3D& gt;
};

/// Frame-weighted MPJPE / P-MPJPE over all items plus per-sequence scores.
EvalReport evaluate(std::span<const EvalItem> items, double bin_width_mm = kDefaultBinWidthMm,
                    AlignMode mode = AlignMode::Similarity);

/// JSON document with fields mpjpe_mm, p_mpjpe_mm, per_sequence[{id, mpjpe_mm,
/// p_mpjpe_mm}] and histogram{bin_width_mm, edges_mm, counts}.
std::string report_to_json(const EvalReport& report);
std::string report_to_text(const EvalReport& report);

}  // namespace d3pr
