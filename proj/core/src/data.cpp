#include "d3pr/data.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include <Eigen/Geometry>

#include "d3pr/errors.hpp"
#include "d3pr/skeleton.hpp"

namespace d3pr {

namespace {

// Swing amplitudes (radians) about x, y, z for the bone ending at each joint;
// row 0 is the global orientation.
constexpr std::array<std::array<double, 3>, h36m::kJoints> kSwing = {{
    {0.08, 0.15, 0.05},
    {0.05, 0.05, 0.05}, {0.50, 0.10, 0.15}, {0.50, 0.05, 0.05},
    {0.05, 0.05, 0.05}, {0.50, 0.10, 0.15}, {0.50, 0.05, 0.05},
    {0.15, 0.10, 0.10}, {0.10, 0.10, 0.10}, {0.15, 0.20, 0.10}, {0.20, 0.30, 0.10},
    {0.05, 0.10, 0.10}, {0.70, 0.30, 0.50}, {0.70, 0.30, 0.30},
    {0.05, 0.10, 0.10}, {0.70, 0.30, 0.50}, {0.70, 0.30, 0.30},
}};
constexpr double kMaxYaw = 0.6;
constexpr int kHarmonics = 2;

struct AngleTrack {
  double offset = 0.0;
  std::array<double, kHarmonics> amp{}, freq{}, phase{};

  double at(double seconds) const {
    double v = offset;
    for (int k = 0; k < kHarmonics; ++k) v += amp[k] * std::sin(2.0 * std::numbers::pi * freq[k] * seconds + phase[k]);
    return v;
  }
};

void check_positive(double v, const char* field) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(field, "must be a finite value > 0");
}

void check_nonnegative(double v, const char* field) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(field, "must be a finite value >= 0");
}

}  // namespace

void SynthConfig::validate() const {
  if (joints != h36m::kJoints) throw ConfigError("joints", "the synthetic skeleton has 17 joints");
  if (frames == 0) throw ConfigError("frames", "must be >= 1");
  if (!bone_lengths.empty() && bone_lengths.size() != joints) throw ConfigError("bone_lengths", "needs one entry per joint");
  for (std::size_t j = 1; j < bone_lengths.size(); ++j) check_nonnegative(bone_lengths[j], "bone_lengths");
  if (!noise_scale.empty() && noise_scale.size() != joints) throw ConfigError("noise_scale", "needs one entry per joint");
  for (double w : noise_scale) check_nonnegative(w, "noise_scale");
  check_positive(fps, "fps");
  check_nonnegative(freq_min_hz, "freq_min_hz");
  check_nonnegative(freq_max_hz, "freq_max_hz");
  if (freq_min_hz > freq_max_hz) throw ConfigError("freq_min_hz", "must not exceed freq_max_hz");
  check_nonnegative(angle_scale, "angle_scale");
  check_positive(focal_px, "focal_px");
  check_positive(image_width_px, "image_width_px");
  check_positive(image_height_px, "image_height_px");
  if (!std::isfinite(principal_x_px) || !std::isfinite(principal_y_px)) throw ConfigError("principal_x_px", "must be finite");
  check_positive(depth_m, "depth_m");
  check_nonnegative(depth_jitter, "depth_jitter");
  if (depth_jitter >= 1.0) throw ConfigError("depth_jitter", "must be < 1");
  check_nonnegative(lateral_range_m, "lateral_range_m");
  check_nonnegative(lateral_drift_m, "lateral_drift_m");
  check_nonnegative(noise_sigma, "noise_sigma");
  check_nonnegative(depth_coupling, "depth_coupling");
  check_nonnegative(jitter_2d, "jitter_2d");
  if (!bias.allFinite()) throw ConfigError("bias", "must be finite");
}

std::vector<double> SynthConfig::resolved_bone_lengths() const {
  if (!bone_lengths.empty()) return bone_lengths;
  const auto& d = h36m::default_bone_lengths();
  return {d.begin(), d.end()};
}

std::vector<double> SynthConfig::resolved_noise_scale() const {
  if (!noise_scale.empty()) return noise_scale;
  const auto& d = h36m::default_noise_scale();
  return {d.begin(), d.end()};
}

std::vector<PoseSeq3D> generate_gt_sequences(const SynthConfig& config, Rng& rng) {
  config.validate();
  const auto lengths = config.resolved_bone_lengths();
  const auto& dirs = h36m::rest_directions();
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> freq(config.freq_min_hz, config.freq_max_hz);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);

  std::vector<PoseSeq3D> out;
  out.reserve(config.sequences);
  for (std::size_t s = 0; s < config.sequences; ++s) {
    std::array<std::array<AngleTrack, 3>, h36m::kJoints> tracks;
    for (std::size_t j = 0; j < h36m::kJoints; ++j) {
      for (int a = 0; a < 3; ++a) {
        const double amp = kSwing[j][a] * config.angle_scale;
        auto& tr = tracks[j][a];
        tr.offset = 0.5 * amp * unit(rng);
        for (int k = 0; k < kHarmonics; ++k) {
          tr.amp[k] = 0.5 * amp * (0.5 + 0.5 * std::abs(unit(rng)));
          tr.freq[k] = freq(rng);
          tr.phase[k] = phase(rng);
        }
      }
    }
    tracks[0][1].offset += kMaxYaw * unit(rng);

    PoseSeq3D seq(config.frames, h36m::kJoints);
    std::array<Eigen::Matrix3d, h36m::kJoints> global;
    for (std::size_t n = 0; n < config.frames; ++n) {
      const double sec = static_cast<double>(n) / config.fps;
      for (std::size_t j = 0; j < h36m::kJoints; ++j) {
        const Eigen::Matrix3d local =
            (Eigen::AngleAxisd(tracks[j][2].at(sec), Eigen::Vector3d::UnitZ()) *
             Eigen::AngleAxisd(tracks[j][1].at(sec), Eigen::Vector3d::UnitY()) *
             Eigen::AngleAxisd(tracks[j][0].at(sec), Eigen::Vector3d::UnitX()))
                .toRotationMatrix();
        if (j == h36m::kRoot) {
          global[j] = local;
          seq.joint(n, j).setZero();
          continue;
        }
        const auto p = static_cast<std::size_t>(h36m::kParents[j]);
        global[j] = global[p] * local;
        seq.joint(n, j) = seq.joint(n, p) + global[j] * (lengths[j] * dirs[j]);
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

EstimatorOutput simulate_estimator(const PoseSeq3D& gt3d, const SynthConfig& config, Rng& rng) {
  config.validate();
  if (gt3d.joints() != config.joints) throw ShapeError("simulate_estimator: joint count differs from config");
  require_finite(gt3d, "gt3d");
  const auto scale = config.resolved_noise_scale();
  const std::size_t frames = gt3d.frames();
  const std::size_t joints = gt3d.joints();

  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double depth = config.depth_m * (1.0 + config.depth_jitter * unit(rng));
  const double lateral0 = config.lateral_range_m * unit(rng);
  const double drift = config.lateral_drift_m * unit(rng);
  const double sigma = config.noise_sigma * std::pow(depth / config.depth_m, config.depth_coupling);
  const double w = config.image_width_px;
  const double h = config.image_height_px;

  EstimatorOutput out{PoseSeq2D(frames, joints), PoseSeq3D(frames, joints)};
  for (std::size_t n = 0; n < frames; ++n) {
    const double lateral = lateral0 + (frames > 1 ? drift * static_cast<double>(n) / static_cast<double>(frames - 1) : 0.0);
    const double view = config.depth_coupling * std::atan(lateral / depth);
    for (std::size_t j = 0; j < joints; ++j) {
      const Eigen::Vector3d g = gt3d.joint(n, j);
      const Eigen::Vector3d cam = g + Eigen::Vector3d(lateral, 0.0, depth);
      if (!(cam.z() > 0.0)) {
        throw ProjectionError("frame " + std::to_string(n) + " joint " + std::to_string(j) + " is behind the camera");
      }
      const double u = config.focal_px * cam.x() / cam.z() + config.principal_x_px;
      const double v = config.focal_px * cam.y() / cam.z() + config.principal_y_px;
      out.pose2d(n, j, 0) = u / w * 2.0 - 1.0 + config.jitter_2d * normal(rng);
      out.pose2d(n, j, 1) = v / w * 2.0 - h / w + config.jitter_2d * normal(rng);

      Eigen::Vector3d e(normal(rng), normal(rng), normal(rng));
      e *= sigma * scale[j];
      // small-angle rotation about the vertical axis: view * (y_hat x g)
      e += view * Eigen::Vector3d(g.z(), 0.0, -g.x());
      if (j != h36m::kRoot) e += config.bias;
      out.noisy3d.joint(n, j) = g + e;
    }
  }
  out.noisy3d = root_relative(out.noisy3d, h36m::kRoot);
  return out;
}

std::vector<SequenceRecord> synthesize_dataset(const SynthConfig& config, Rng& rng) {
  auto gts = generate_gt_sequences(config, rng);
  std::vector<SequenceRecord> records;
  records.reserve(gts.size());
  for (std::size_t s = 0; s < gts.size(); ++s) {
    auto est = simulate_estimator(gts[s], config, rng);
    char id[32];
    std::snprintf(id, sizeof id, "seq_%05zu", s);
    records.push_back({id, std::move(gts[s]), std::move(est.pose2d), std::move(est.noisy3d)});
  }
  return records;
}

PoseSeq2D normalize_2d(const PoseSeq2D& raw_px, double width, double height) {
  if (!(width > 0.0)) throw ConfigError("image_width_px", "must be > 0");
  if (!(height > 0.0)) throw ConfigError("image_height_px", "must be > 0");
  PoseSeq2D out(raw_px.frames(), raw_px.joints());
  for (std::size_t n = 0; n < raw_px.frames(); ++n) {
    for (std::size_t j = 0; j < raw_px.joints(); ++j) {
      out(n, j, 0) = raw_px(n, j, 0) / width * 2.0 - 1.0;
      out(n, j, 1) = raw_px(n, j, 1) / width * 2.0 - height / width;
    }
  }
  return out;
}

PoseSeq3D root_relative(const PoseSeq3D& x, std::size_t root) {
  if (root >= x.joints()) throw ShapeError("root_relative: root index out of range");
  PoseSeq3D out = x;
  for (std::size_t n = 0; n < x.frames(); ++n) {
    const Eigen::Vector3d r = x.joint(n, root);
    for (std::size_t j = 0; j < x.joints(); ++j) out.joint(n, j) -= r;
    out.joint(n, root).setZero();
  }
  return out;
}

std::vector<TripletView> triplet_views(const std::vector<SequenceRecord>& records) {
  std::vector<TripletView> views;
  views.reserve(records.size());
  for (const auto& r : records) {
    if (!r.gt3d) throw DataError("sequence '" + r.id + "' has no gt3d");
    views.push_back({r.pose2d, r.noisy3d, *r.gt3d});
  }
  return views;
}

}  // namespace d3pr
