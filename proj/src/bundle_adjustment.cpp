#include "priorvo/mapping.hpp"

#include <spdlog/spdlog.h>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace priorvo {

namespace {

struct BaObservation {
  int pose;   // index into poses
  int point;  // index into points
  Vec2 pixel;
};

struct BaProblem {
  std::vector<int> keyframe_ids;
  std::vector<RigidTransform> poses;  // cam_from_world
  std::vector<bool> fixed;
  std::vector<int> point_ids;
  std::vector<Vec3> points;
  std::vector<BaObservation> obs;
};

double huber_cost(double r, double k) { return r <= k ? 0.5 * r * r : k * r - 0.5 * k * k; }

double total_cost(const PinholeCamera& cam, const BaProblem& p, const std::vector<RigidTransform>& poses,
                  const std::vector<Vec3>& points, double k) {
  double c = 0.0;
  for (const BaObservation& o : p.obs) {
    const Vec3 pc = poses[o.pose] * points[o.point];
    if (pc.z() <= 1e-9) return std::numeric_limits<double>::infinity();
    c += huber_cost((project_unchecked(cam, pc) - o.pixel).norm(), k);
  }
  return c;
}

}  // namespace

BundleAdjustReport local_bundle_adjust(const PinholeCamera& cam, Map& map, const std::vector<int>& window,
                                       const BundleAdjustOptions& options) {
  BundleAdjustReport report;
  if (window.size() < 2) {
    report.skipped = true;
    return report;
  }
  const std::set<int> in_window(window.begin(), window.end());

  // Points observed by the window, with every keyframe observation of them.
  std::set<int> point_set;
  for (int id : window)
    for (const Observation& o : map.keyframes.at(id).frame.tracked)
      if (map.points.count(o.point_id) && map.points.at(o.point_id).quality != PointQuality::kOutlier)
        point_set.insert(o.point_id);
  std::map<int, std::vector<std::pair<int, Vec2>>> seen;  // point -> (keyframe, pixel)
  for (const auto& [kf_id, kf] : map.keyframes)
    for (const Observation& o : kf.frame.tracked)
      if (point_set.count(o.point_id)) seen[o.point_id].push_back({kf_id, o.pixel});

  BaProblem prob;
  std::map<int, int> pose_index;
  auto pose_of = [&](int kf_id) {
    auto it = pose_index.find(kf_id);
    if (it != pose_index.end()) return it->second;
    const int idx = static_cast<int>(prob.poses.size());
    pose_index[kf_id] = idx;
    prob.keyframe_ids.push_back(kf_id);
    prob.poses.push_back(map.keyframes.at(kf_id).frame.cam_from_world());
    prob.fixed.push_back(!in_window.count(kf_id) || kf_id == window.front());
    return idx;
  };
  for (int id : window) pose_of(id);
  for (const auto& [pid, views] : seen) {
    if (views.size() < 2) continue;
    const int pi = static_cast<int>(prob.points.size());
    prob.point_ids.push_back(pid);
    prob.points.push_back(map.points.at(pid).position);
    for (const auto& [kf_id, px] : views) prob.obs.push_back({pose_of(kf_id), pi, px});
  }
  // A single fixed pose leaves the monocular scale free; pin the next window pose as well.
  if (std::count(prob.fixed.begin(), prob.fixed.end(), true) < 2) prob.fixed[pose_index.at(window[1])] = true;

  report.points = static_cast<int>(prob.points.size());
  report.observations = static_cast<int>(prob.obs.size());
  if (prob.points.empty()) {
    report.skipped = true;
    return report;
  }

  std::vector<int> var_index(prob.poses.size(), -1);
  int nv = 0;
  for (std::size_t i = 0; i < prob.poses.size(); ++i)
    if (!prob.fixed[i]) var_index[i] = nv++;
  const int nc = 6 * nv;
  const int np = static_cast<int>(prob.points.size());
  const double k = options.huber_k;

  std::vector<RigidTransform> poses = prob.poses;
  std::vector<Vec3> points = prob.points;
  double cost = total_cost(cam, prob, poses, points, k);
  report.initial_cost = cost;
  double lambda = options.initial_lambda;

  for (int it = 0; it < options.max_iterations; ++it) {
    Eigen::MatrixXd Hcc = Eigen::MatrixXd::Zero(nc, nc);
    Eigen::VectorXd bc = Eigen::VectorXd::Zero(nc);
    std::vector<Mat3> Hpp(np, Mat3::Zero());
    std::vector<Vec3> bp(np, Vec3::Zero());
    std::map<std::pair<int, int>, Eigen::Matrix<double, 6, 3>> Hcp;  // (pose var, point)

    for (const BaObservation& o : prob.obs) {
      const Vec3 pc = poses[o.pose] * points[o.point];
      const Vec2 r = project_unchecked(cam, pc) - o.pixel;
      const double a = r.norm();
      const double w = a <= k ? 1.0 : k / a;
      const Eigen::Matrix<double, 2, 3> Jproj = projection_jacobian(cam, pc);
      const Eigen::Matrix<double, 2, 3> Jp = Jproj * poses[o.pose].rotation();
      Hpp[o.point] += w * Jp.transpose() * Jp;
      bp[o.point] += w * Jp.transpose() * r;
      const int v = var_index[o.pose];
      if (v < 0) continue;
      Eigen::Matrix<double, 3, 6> dp;
      dp.leftCols<3>() = Mat3::Identity();
      dp.rightCols<3>() = -skew(pc);
      const Mat26 Jc = Jproj * dp;
      Hcc.block<6, 6>(6 * v, 6 * v) += w * Jc.transpose() * Jc;
      bc.segment<6>(6 * v) += w * Jc.transpose() * r;
      auto [pos, inserted] = Hcp.try_emplace({v, o.point}, Eigen::Matrix<double, 6, 3>::Zero());
      pos->second += w * Jc.transpose() * Jp;
    }

    if (it == 0) {
      // Rank check on the undamped system.
      for (const Mat3& H : Hpp) {
        const Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Mat3>(H, Eigen::EigenvaluesOnly).eigenvalues();
        if (!(ev(0) > 1e-10 * std::max(1.0, ev(2)))) {
          spdlog::warn("local BA skipped: point block is rank deficient");
          report.skipped = true;
          return report;
        }
      }
    }

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd S = Hcc;
      Eigen::VectorXd rhs = bc;
      std::vector<Mat3> Hpp_inv(np);
      for (int p = 0; p < np; ++p) {
        Mat3 Hd = Hpp[p];
        Hd.diagonal() *= 1.0 + lambda;
        Hpp_inv[p] = Hd.inverse();
      }
      S.diagonal() *= 1.0 + lambda;
      // Schur complement: group point couplings per point.
      std::map<int, std::vector<std::pair<int, const Eigen::Matrix<double, 6, 3>*>>> by_point;
      for (const auto& [key, blk] : Hcp) by_point[key.second].push_back({key.first, &blk});
      for (const auto& [p, list] : by_point)
        for (const auto& [vi, Bi] : list) {
          const Eigen::Matrix<double, 6, 3> BiHinv = (*Bi) * Hpp_inv[p];
          rhs.segment<6>(6 * vi) -= BiHinv * bp[p];
          for (const auto& [vj, Bj] : list) S.block<6, 6>(6 * vi, 6 * vj) -= BiHinv * Bj->transpose();
        }

      Eigen::VectorXd dc = Eigen::VectorXd::Zero(nc);
      if (nc > 0) {
        if (it == 0 && lambda == options.initial_lambda) {
          const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S, Eigen::EigenvaluesOnly).eigenvalues();
          if (!(ev(0) > 1e-12 * std::max(1.0, ev(nc - 1)))) {
            spdlog::warn("local BA skipped: reduced camera system is rank deficient");
            report.skipped = true;
            return report;
          }
        }
        dc = -S.ldlt().solve(rhs);
      }
      std::vector<Vec3> dp(np);
      for (int p = 0; p < np; ++p) {
        Vec3 g = bp[p];
        for (const auto& [vi, Bi] : by_point[p]) g += Bi->transpose() * dc.segment<6>(6 * vi);
        dp[p] = -Hpp_inv[p] * g;
      }

      std::vector<RigidTransform> new_poses = poses;
      for (std::size_t i = 0; i < poses.size(); ++i)
        if (var_index[i] >= 0) new_poses[i] = RigidTransform::exp(dc.segment<6>(6 * var_index[i])) * poses[i];
      std::vector<Vec3> new_points = points;
      for (int p = 0; p < np; ++p) new_points[p] += dp[p];
      const double new_cost = total_cost(cam, prob, new_poses, new_points, k);
      if (new_cost < cost) {
        poses = std::move(new_poses);
        points = std::move(new_points);
        const double gain = cost - new_cost;
        cost = new_cost;
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        report.iterations = it + 1;
        if (gain < 1e-12 * std::max(1.0, cost)) it = options.max_iterations;
      } else {
        lambda *= 10.0;
        if (lambda > 1e8) break;
      }
    }
    if (!accepted) break;
  }

  report.final_cost = cost;
  for (std::size_t i = 0; i < poses.size(); ++i)
    if (var_index[i] >= 0) map.keyframes.at(prob.keyframe_ids[i]).frame.pose = poses[i].inverse();
  for (int p = 0; p < np; ++p) map.points.at(prob.point_ids[p]).position = points[p];
  return report;
}

}  // namespace priorvo
