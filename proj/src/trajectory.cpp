#include "priorvo/trajectory.hpp"

#include "priorvo/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace priorvo {

void Trajectory::append(double timestamp, const RigidTransform& pose) {
  if (!poses.empty() && !(timestamp > poses.back().timestamp))
    throw ContractViolation("trajectory timestamps must strictly increase");
  poses.push_back({timestamp, pose});
}

double Trajectory::path_length() const {
  double len = 0.0;
  for (std::size_t i = 1; i < poses.size(); ++i)
    len += (poses[i].pose.translation() - poses[i - 1].pose.translation()).norm();
  return len;
}

std::string format_trajectory(const Trajectory& traj) {
  std::string out;
  char line[256];
  for (const auto& sp : traj.poses) {
    const Vec3& t = sp.pose.translation();
    const Eigen::Quaterniond q = sp.pose.quaternion();
    std::snprintf(line, sizeof line, "%.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", sp.timestamp, t.x(), t.y(), t.z(),
                  q.x(), q.y(), q.z(), q.w());
    out += line;
  }
  return out;
}

void write_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trajectory " + path.string());
  out << format_trajectory(traj);
  if (!out) throw IoError("failed writing " + path.string());
}

Trajectory parse_trajectory(const std::string& text) {
  Trajectory traj;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double v[8];
    for (double& x : v)
      if (!(ls >> x)) throw ParseError("expected `timestamp tx ty tz qx qy qz qw`", line_no);
    std::string extra;
    if (ls >> extra) throw ParseError("trailing fields", line_no);
    const Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (!(q.norm() > 0.5)) throw ParseError("quaternion is not unit length", line_no);
    if (!traj.poses.empty() && !(v[0] > traj.poses.back().timestamp))
      throw ParseError("timestamps must strictly increase", line_no);
    traj.poses.push_back({v[0], RigidTransform(q, Vec3(v[1], v[2], v[3]))});
  }
  return traj;
}

Trajectory read_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_trajectory(text);
}

EvalReport ate_rmse(const Trajectory& estimate, const Trajectory& truth, const AteOptions& options) {
  if (estimate.empty() || truth.empty()) throw EvaluationError("ATE needs non-empty trajectories");

  double tol = options.tolerance;
  if (!(tol > 0.0)) {
    std::vector<double> dts;
    for (std::size_t i = 1; i < truth.size(); ++i) dts.push_back(truth.poses[i].timestamp - truth.poses[i - 1].timestamp);
    if (dts.empty()) {
      tol = 1e-6;
    } else {
      std::nth_element(dts.begin(), dts.begin() + dts.size() / 2, dts.end());
      tol = 0.5 * dts[dts.size() / 2];
    }
  }

  std::vector<Vec3> est, gt;
  std::vector<double> stamps;
  for (const auto& sp : estimate.poses) {
    const auto it = std::lower_bound(truth.poses.begin(), truth.poses.end(), sp.timestamp,
                                     [](const StampedPose& p, double t) { return p.timestamp < t; });
    const StampedPose* best = nullptr;
    if (it != truth.poses.end()) best = &*it;
    if (it != truth.poses.begin()) {
      const StampedPose* prev = &*std::prev(it);
      if (!best || std::abs(prev->timestamp - sp.timestamp) <= std::abs(best->timestamp - sp.timestamp)) best = prev;
    }
    if (best && std::abs(best->timestamp - sp.timestamp) <= tol) {
      est.push_back(sp.pose.translation());
      gt.push_back(best->pose.translation());
      stamps.push_back(sp.timestamp);
    }
  }
  if (est.size() < 3) throw EvaluationError("ATE needs at least 3 associated poses, got " + std::to_string(est.size()));

  const auto n = static_cast<Eigen::Index>(est.size());
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    src.col(i) = est[i];
    dst.col(i) = gt[i];
  }
  const bool similarity = options.mode == AlignmentMode::kSimilarity;
  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, similarity);
  const Eigen::Matrix3d sR = T.topLeftCorner<3, 3>();
  const Vec3 t = T.topRightCorner<3, 1>();

  EvalReport report;
  report.matched = est.size();
  report.timestamps = std::move(stamps);
  double sq = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 aligned = sR * src.col(i) + t;
    const double e = (aligned - dst.col(i)).norm();
    report.errors.push_back(e);
    report.aligned_estimate.push_back(aligned);
    report.truth_positions.push_back(dst.col(i));
    sq += e * e;
  }
  report.ate_rmse = std::sqrt(sq / static_cast<double>(n));
  if (similarity) {
    const double c = sR.col(0).norm();
    report.scale = 1.0 / c;
  } else {
    const Vec3 ce = src.rowwise().mean();
    const Vec3 cg = dst.rowwise().mean();
    const double ne = (src.colwise() - ce).squaredNorm();
    const double ng = (dst.colwise() - cg).squaredNorm();
    report.scale = ng > 0.0 ? std::sqrt(ne / ng) : 1.0;
  }
  return report;
}

}  // namespace priorvo
