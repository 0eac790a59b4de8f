#include "d3pr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <json.hpp>

#include "d3pr/errors.hpp"

namespace d3pr {

namespace {

constexpr double kMmPerMeter = 1000.0;
constexpr double kDegenerateRatio = 1e-12;

double mean_distance(const PointSet& a, const PointSet& b) {
  return (a - b).rowwise().norm().mean();
}

}  // namespace

double mpjpe(const PoseSeq3D& pred, const PoseSeq3D& gt) {
  require_same_shape(pred, gt, "mpjpe");
  if (pred.empty()) throw ShapeError("mpjpe: empty sequence");
  return (pred.tokens() - gt.tokens()).rowwise().norm().mean() * kMmPerMeter;
}

PointSet SimilarityTransform::apply(const PointSet& points) const {
  PointSet out = (scale * (points * rotation.transpose())).eval();
  out.rowwise() += translation.transpose();
  return out;
}

SymmetricEigen3 jacobi_eigen(const Eigen::Matrix3d& m, double tol, int max_sweeps) {
  Eigen::Matrix3d a = 0.5 * (m + m.transpose());
  Eigen::Matrix3d v = Eigen::Matrix3d::Identity();
  const double scale = std::max(a.norm(), std::numeric_limits<double>::min());
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    const double off = std::sqrt(2.0 * (a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2)));
    if (off <= tol * scale) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
        rot(p, p) = c;
        rot(q, q) = c;
        rot(p, q) = s;
        rot(q, p) = -s;
        a = rot.transpose() * a * rot;
        a(p, q) = a(q, p) = 0.0;
        v = v * rot;
      }
    }
  }
  SymmetricEigen3 out;
  std::array<int, 3> idx{0, 1, 2};
  std::sort(idx.begin(), idx.end(), [&](int i, int j) { return a(i, i) > a(j, j); });
  for (int i = 0; i < 3; ++i) {
    out.values(i) = a(idx[i], idx[i]);
    out.vectors.col(i) = v.col(idx[i]);
  }
  out.sweeps = sweep;
  return out;
}

SimilarityTransform procrustes_fit(const PointSet& pred, const PointSet& gt, AlignMode mode) {
  if (pred.rows() != gt.rows()) throw ShapeError("procrustes: point counts differ");
  if (pred.rows() < 3) throw AlignmentError("procrustes: need at least 3 points");

  const Eigen::RowVector3d mu_p = pred.colwise().mean();
  const Eigen::RowVector3d mu_g = gt.colwise().mean();
  const PointSet pc = pred.rowwise() - mu_p;
  const PointSet gc = gt.rowwise() - mu_g;
  const double spread = pc.squaredNorm();
  if (!(spread > 0.0)) throw AlignmentError("procrustes: prediction points coincide");

  // Cross-covariance A = gc^T pc; A^T A = W diag(d^2) W^T.
  const Eigen::Matrix3d cross = gc.transpose() * pc;
  const SymmetricEigen3 eig = jacobi_eigen(cross.transpose() * cross);
  Eigen::Matrix3d w = eig.vectors;
  if (w.determinant() < 0.0) w.col(2) = -w.col(2);

  const Eigen::Vector3d a1 = cross * w.col(0);
  const Eigen::Vector3d a2 = cross * w.col(1);
  const double d1 = a1.norm();
  if (!(d1 > 0.0)) throw AlignmentError("procrustes: degenerate cross-covariance");
  const Eigen::Vector3d u1 = a1 / d1;
  Eigen::Vector3d u2 = a2 - u1.dot(a2) * u1;
  const double d2 = u2.norm();
  if (d2 <= kDegenerateRatio * d1) throw AlignmentError("procrustes: point set is rank deficient (collinear)");
  u2 /= d2;
  Eigen::Matrix3d u;
  u.col(0) = u1;
  u.col(1) = u2;
  u.col(2) = u1.cross(u2);

  SimilarityTransform tf;
  tf.rotation = u * w.transpose();
  if (mode == AlignMode::Similarity) {
    // trace(R^T A) = d1 + d2 + signed third singular value
    tf.scale = (tf.rotation.transpose() * cross).trace() / spread;
  }
  tf.translation = mu_g.transpose() - tf.scale * tf.rotation * mu_p.transpose();
  return tf;
}

PointSet procrustes_align(const PointSet& pred, const PointSet& gt, AlignMode mode) {
  return procrustes_fit(pred, gt, mode).apply(pred);
}

PointSet frame_points(const PoseSeq3D& seq, std::size_t frame) {
  const auto joints = static_cast<Eigen::Index>(seq.joints());
  return seq.tokens().middleRows(static_cast<Eigen::Index>(frame) * joints, joints);
}

double p_mpjpe(const PoseSeq3D& pred, const PoseSeq3D& gt, AlignMode mode) {
  require_same_shape(pred, gt, "p_mpjpe");
  if (pred.empty()) throw ShapeError("p_mpjpe: empty sequence");
  double total = 0.0;
  for (std::size_t n = 0; n < pred.frames(); ++n) {
    const PointSet p = frame_points(pred, n);
    const PointSet g = frame_points(gt, n);
    total += mean_distance(procrustes_align(p, g, mode), g);
  }
  return total / static_cast<double>(pred.frames()) * kMmPerMeter;
}

std::vector<double> Histogram::edges() const {
  std::vector<double> e(counts.size() + 1);
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = static_cast<double>(first_bin + static_cast<long>(i)) * bin_width;
  return e;
}

std::size_t Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

Histogram error_histogram(std::span<const double> values, double bin_width_mm) {
  if (values.empty()) throw DataError("error_histogram: no values");
  if (!(bin_width_mm > 0.0)) throw ConfigError("bin_width_mm", "must be > 0");
  Histogram h;
  h.bin_width = bin_width_mm;
  auto bin_of = [&](double v) {
    if (!std::isfinite(v)) throw DataError("error_histogram: non-finite value");
    return static_cast<long>(std::floor(v / bin_width_mm));
  };
  long lo = bin_of(values[0]);
  long hi = lo;
  for (double v : values) {
    lo = std::min(lo, bin_of(v));
    hi = std::max(hi, bin_of(v));
  }
  h.first_bin = lo;
  h.counts.assign(static_cast<std::size_t>(hi - lo + 1), 0);
  for (double v : values) ++h.counts[static_cast<std::size_t>(bin_of(v) - lo)];
  return h;
}

EvalReport evaluate(std::span<const EvalItem> items, double bin_width_mm, AlignMode mode) {
  if (items.empty()) throw DataError("evaluate: no sequences");
  EvalReport r;
  double weighted = 0.0, weighted_p = 0.0;
  std::size_t frames = 0;
  std::vector<double> per_seq;
  for (const auto& item : items) {
    SequenceScore s{item.id, mpjpe(item.pred, item.gt), p_mpjpe(item.pred, item.gt, mode)};
    const auto n = item.gt.frames();
    weighted += s.mpjpe_mm * static_cast<double>(n);
    weighted_p += s.p_mpjpe_mm * static_cast<double>(n);
    frames += n;
    per_seq.push_back(s.mpjpe_mm);
    r.per_sequence.push_back(std::move(s));
  }
  r.mpjpe_mm = weighted / static_cast<double>(frames);
  r.p_mpjpe_mm = weighted_p / static_cast<double>(frames);
  r.histogram = error_histogram(per_seq, bin_width_mm);
  return r;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["mpjpe_mm"] = report.mpjpe_mm;
  j["p_mpjpe_mm"] = report.p_mpjpe_mm;
  j["per_sequence"] = nlohmann::ordered_json::array();
  for (const auto& s : report.per_sequence) {
    j["per_sequence"].push_back({{"id", s.id}, {"mpjpe_mm", s.mpjpe_mm}, {"p_mpjpe_mm", s.p_mpjpe_mm}});
  }
  j["histogram"] = {{"bin_width_mm", report.histogram.bin_width},
                    {"edges_mm", report.histogram.edges()},
                    {"counts", report.histogram.counts}};
  return j.dump(2) + "\n";
}

std::string report_to_text(const EvalReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3);
  out << "sequences  " << report.per_sequence.size() << "\n";
  out << "MPJPE      " << report.mpjpe_mm << " mm\n";
  out << "P-MPJPE    " << report.p_mpjpe_mm << " mm\n";
  out << "per-sequence MPJPE histogram (bin " << report.histogram.bin_width << " mm)\n";
  const auto edges = report.histogram.edges();
  for (std::size_t i = 0; i < report.histogram.counts.size(); ++i) {
    out << "  [" << std::setw(8) << edges[i] << ", " << std::setw(8) << edges[i + 1] << ")  "
        << report.histogram.counts[i] << "\n";
  }
  return out.str();
}

}  // namespace d3pr
