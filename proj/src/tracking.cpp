#include "priorvo/tracking.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>

namespace priorvo {

Mat26 point_jacobian(const PinholeCamera& cam, const Vec3& p) {
  Eigen::Matrix<double, 3, 6> dp;
  dp.leftCols<3>() = Mat3::Identity();
  dp.rightCols<3>() = -skew(p);
  return projection_jacobian(cam, p) * dp;
}

Row6 photometric_jacobian(const PinholeCamera& cam, const Vec3& p, const Vec2& gradient, double level_scale) {
  return level_scale * gradient.transpose() * point_jacobian(cam, p);
}

namespace {

constexpr int kHalf = kAlignPatchSize / 2;

struct RefPatch {
  Vec3 point;
  float values[kAlignPatchSize * kAlignPatchSize];
  Row6 J[kAlignPatchSize * kAlignPatchSize];
};

struct LevelEval {
  double cost = 0.0;
  Mat6 H = Mat6::Zero();
  Vec6 b = Vec6::Zero();
  int points = 0;
  std::vector<double> abs_residuals;
};

double huber_rho(double r, double k) {
  const double a = std::abs(r);
  return a <= k ? 0.5 * r * r : k * a - 0.5 * k * k;
}

double huber_weight(double r, double k) {
  const double a = std::abs(r);
  return a <= k ? 1.0 : k / a;
}

LevelEval evaluate_level(const PinholeCamera& cam, const std::vector<RefPatch>& refs, const Image& cur, int level,
                         const RigidTransform& T, double k, bool want_residuals) {
  LevelEval ev;
  std::size_t pixels = 0;
  for (const RefPatch& rp : refs) {
    const Vec3 pc = T * rp.point;
    if (pc.z() <= 0.0) continue;
    const Vec2 uv = to_level(project_unchecked(cam, pc), level);
    if (!inside_with_margin(cur, uv.x(), uv.y(), kHalf + 1.0)) continue;
    ++ev.points;
    int i = 0;
    for (int y = 0; y < kAlignPatchSize; ++y)
      for (int x = 0; x < kAlignPatchSize; ++x, ++i) {
        const double r = interpolate(cur, uv.x() + x - (kHalf - 0.5), uv.y() + y - (kHalf - 0.5)) - rp.values[i];
        const double w = huber_weight(r, k);
        ev.cost += huber_rho(r, k);
        ev.H.noalias() += w * rp.J[i].transpose() * rp.J[i];
        ev.b.noalias() += w * rp.J[i].transpose() * r;
        if (want_residuals) ev.abs_residuals.push_back(std::abs(r));
        ++pixels;
      }
  }
  if (pixels > 0) ev.cost /= static_cast<double>(pixels);
  return ev;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

AlignmentReport sparse_image_align(const PinholeCamera& cam, const ImagePyramid& ref,
                                   const std::vector<Vec3>& points_ref, const ImagePyramid& cur,
                                   const RigidTransform& T_cur_from_ref_init, const AlignOptions& options) {
  AlignmentReport report;
  report.pose = T_cur_from_ref_init;
  report.candidates = static_cast<int>(points_ref.size());
  if (static_cast<int>(points_ref.size()) < options.min_points) {
    report.lost = true;
    return report;
  }
  RigidTransform T = T_cur_from_ref_init;
  const int top = std::min({options.max_level, ref.size() - 1, cur.size() - 1});
  for (int level = top; level >= options.min_level; --level) {
    const Image& ref_img = ref[level];
    const Image& cur_img = cur[level];
    const double scale = 1.0 / (1 << level);

    std::vector<RefPatch> refs;
    refs.reserve(points_ref.size());
    for (const Vec3& p : points_ref) {
      if (p.z() <= 0.0) continue;
      const Vec2 uv = to_level(project_unchecked(cam, p), level);
      if (!inside_with_margin(ref_img, uv.x(), uv.y(), kHalf + 2.0)) continue;
      RefPatch rp;
      rp.point = p;
      const Mat26 Jp = point_jacobian(cam, p);
      int i = 0;
      for (int y = 0; y < kAlignPatchSize; ++y)
        for (int x = 0; x < kAlignPatchSize; ++x, ++i) {
          const double px = uv.x() + x - (kHalf - 0.5);
          const double py = uv.y() + y - (kHalf - 0.5);
          rp.values[i] = interpolate(ref_img, px, py);
          const Vec2 g(0.5 * (interpolate(ref_img, px + 1, py) - interpolate(ref_img, px - 1, py)),
                       0.5 * (interpolate(ref_img, px, py + 1) - interpolate(ref_img, px, py - 1)));
          rp.J[i] = scale * g.transpose() * Jp;
        }
      refs.push_back(rp);
    }
    const bool finest = level == options.min_level;
    if (static_cast<int>(refs.size()) < options.min_points) {
      if (finest) {
        report.lost = true;
        return report;
      }
      report.iterations.push_back(0);
      continue;
    }

    // Robust scale fixed for the level from the residuals at the starting pose.
    const LevelEval first = evaluate_level(cam, refs, cur_img, level, T, std::numeric_limits<double>::infinity(), true);
    const double k = std::max(1.345 * 1.4826 * median_of(first.abs_residuals), 0.01);

    RigidTransform best = T;
    double best_cost = std::numeric_limits<double>::infinity();
    double prev_cost = std::numeric_limits<double>::infinity();
    int increases = 0;
    int iters = 0;
    bool diverged = false;
    bool converged = false;
    for (int it = 0; it < options.max_iterations; ++it) {
      const LevelEval ev = evaluate_level(cam, refs, cur_img, level, T, k, false);
      if (ev.points < options.min_points) break;
      if (it == 0 && finest) report.initial_cost = ev.cost;
      if (ev.cost < best_cost) {
        best_cost = ev.cost;
        best = T;
      }
      if (ev.cost > prev_cost * (1.0 + 1e-4)) {
        if (++increases >= options.divergence_limit) {
          diverged = true;
          break;
        }
      } else if (ev.cost >= prev_cost) {
        converged = true;  // at the noise floor
        break;
      } else {
        increases = 0;
      }
      prev_cost = ev.cost;
      const Vec6 delta = ev.H.ldlt().solve(ev.b);
      if (!delta.allFinite()) break;
      T = T * RigidTransform::exp(-delta);
      ++iters;
      if (delta.norm() < options.min_update) {
        converged = true;
        break;
      }
    }
    const LevelEval last = evaluate_level(cam, refs, cur_img, level, T, k, false);
    if (!(last.points >= options.min_points && last.cost <= best_cost)) T = best;
    report.iterations.push_back(iters);
    if (finest) {
      const LevelEval fin = evaluate_level(cam, refs, cur_img, level, T, k, true);
      report.final_cost = fin.cost;
      report.inliers = fin.points;
      report.median_residual = median_of(fin.abs_residuals);
      report.converged = converged;
      if (diverged || fin.points < options.min_points) report.lost = true;
    }
  }
  report.pose = T;
  return report;
}

AffineWarp affine_warp(const PinholeCamera& cam, const Vec2& host_pixel, const Vec3& point_host,
                       const RigidTransform& T_cur_from_host, int max_level) {
  constexpr double h = kMatchPatchSize / 2 + 1;
  const double z = point_host.z();
  auto lift = [&](const Vec2& px) {
    return Vec3((px.x() - cam.cx) / cam.fx * z, (px.y() - cam.cy) / cam.fy * z, z);
  };
  const Vec2 c = project_unchecked(cam, T_cur_from_host * point_host);
  const Vec2 du = project_unchecked(cam, T_cur_from_host * lift(host_pixel + Vec2(h, 0.0)));
  const Vec2 dv = project_unchecked(cam, T_cur_from_host * lift(host_pixel + Vec2(0.0, h)));
  AffineWarp w;
  w.A_cur_ref.col(0) = (du - c) / h;
  w.A_cur_ref.col(1) = (dv - c) / h;
  double D = w.A_cur_ref.determinant();
  while (D > 3.0 && w.search_level < max_level) {
    D *= 0.25;
    ++w.search_level;
  }
  return w;
}

bool warp_patch(const ImagePyramid& host, const Vec2& host_pixel, const AffineWarp& warp, Patch& out) {
  const Image& img = host[0];
  const double det = warp.A_cur_ref.determinant();
  if (!(std::abs(det) > 1e-9)) return false;
  const Eigen::Matrix2d A_ref_cur = warp.A_cur_ref.inverse();
  const double step = 1 << warp.search_level;
  const int side = out.size + 2;
  const double half = 0.5 * (out.size + 1);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const Vec2 o((x - half) * step, (y - half) * step);
      const Vec2 p = host_pixel + A_ref_cur * o;
      if (!inside_with_margin(img, p.x(), p.y(), 0.0)) return false;
      out.with_border[static_cast<std::size_t>(y) * side + x] = interpolate(img, p.x(), p.y());
    }
  return true;
}

std::optional<FeatureAlignResult> feature_align(const Patch& ref, const ImagePyramid& cur, int level,
                                                const Vec2& predicted, const FeatureAlignOptions& options) {
  if (level < 0 || level >= cur.size()) return std::nullopt;
  const Image& img = cur[level];
  const int n = ref.size;
  const int count = n * n;
  const double half = 0.5 * (n - 1);

  std::vector<Eigen::Vector3d> J(count);
  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  Eigen::Matrix2d S = Eigen::Matrix2d::Zero();
  double ref_mean = 0.0;
  for (int y = 0, i = 0; y < n; ++y)
    for (int x = 0; x < n; ++x, ++i) {
      const double gx = 0.5 * (ref.at(x + 1, y) - ref.at(x - 1, y));
      const double gy = 0.5 * (ref.at(x, y + 1) - ref.at(x, y - 1));
      J[i] = Eigen::Vector3d(gx, gy, -1.0);
      H += J[i] * J[i].transpose();
      S += Vec2(gx, gy) * Vec2(gx, gy).transpose();
      ref_mean += ref.at(x, y);
    }
  ref_mean /= count;
  const double tr = S.trace();
  const double min_eig = 0.5 * (tr - std::sqrt(std::max(0.0, tr * tr - 4.0 * S.determinant())));
  if (!(min_eig / count >= options.min_gradient_eigen)) return std::nullopt;
  const Eigen::Matrix3d H_inv = H.inverse();

  Vec2 u = to_level(predicted, level);
  auto in_bounds = [&](const Vec2& c) { return inside_with_margin(img, c.x(), c.y(), half + 0.5); };
  if (!in_bounds(u)) return std::nullopt;

  double offset = 0.0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) offset += interpolate(img, u.x() + x - half, u.y() + y - half);
  offset = offset / count - ref_mean;

  FeatureAlignResult res;
  for (int it = 0; it < options.max_iterations; ++it) {
    Eigen::Vector3d b = Eigen::Vector3d::Zero();
    for (int y = 0, i = 0; y < n; ++y)
      for (int x = 0; x < n; ++x, ++i) {
        const double e = interpolate(img, u.x() + x - half, u.y() + y - half) - ref.at(x, y) - offset;
        b += J[i] * e;
      }
    const Eigen::Vector3d step = -H_inv * b;
    u += step.head<2>();
    offset += step(2);
    res.iterations = it + 1;
    if (!in_bounds(u)) return std::nullopt;
    if (step.head<2>().squaredNorm() < 1e-8) break;
  }

  double sq = 0.0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double e = interpolate(img, u.x() + x - half, u.y() + y - half) - ref.at(x, y) - offset;
      sq += e * e;
    }
  res.mean_sq_residual = sq / count;
  res.offset = offset;
  res.pixel = from_level(u, level);
  if (res.mean_sq_residual > options.max_mean_sq_residual) return std::nullopt;
  if ((res.pixel - predicted).norm() > options.max_displacement) return std::nullopt;
  return res;
}

namespace {

struct PoseEval {
  double cost = 0.0;
  Mat6 H = Mat6::Zero();
  Vec6 b = Vec6::Zero();
};

PoseEval evaluate_pose(const PinholeCamera& cam, const std::vector<PoseObservation>& obs,
                       const std::vector<bool>& use, const RigidTransform& T, double k) {
  PoseEval ev;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (!use[i]) continue;
    const Vec3 pc = T * obs[i].point_world;
    if (pc.z() <= 1e-9) {
      ev.cost = std::numeric_limits<double>::infinity();
      continue;
    }
    const Vec2 r = project_unchecked(cam, pc) - obs[i].pixel;
    const double a = r.norm();
    const double w = huber_weight(a, k);
    ev.cost += huber_rho(a, k);
    const Mat26 J = point_jacobian(cam, pc);
    ev.H.noalias() += w * J.transpose() * J;
    ev.b.noalias() += w * J.transpose() * r;
  }
  return ev;
}

double rmse(const PinholeCamera& cam, const std::vector<PoseObservation>& obs, const std::vector<bool>& use,
            const RigidTransform& T) {
  double sq = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (!use[i]) continue;
    const Vec3 pc = T * obs[i].point_world;
    if (pc.z() <= 0.0) continue;
    sq += (project_unchecked(cam, pc) - obs[i].pixel).squaredNorm();
    ++n;
  }
  return n > 0 ? std::sqrt(sq / n) : 0.0;
}

}  // namespace

PoseRefineReport pose_refine(const PinholeCamera& cam, const std::vector<PoseObservation>& observations,
                             const RigidTransform& cam_from_world_init, const PoseRefineOptions& options) {
  PoseRefineReport report;
  report.cam_from_world = cam_from_world_init;
  report.inlier.assign(observations.size(), true);
  if (static_cast<int>(observations.size()) < options.min_inliers) {
    report.lost = true;
    report.inlier.assign(observations.size(), false);
    return report;
  }
  RigidTransform T = cam_from_world_init;
  std::vector<bool>& use = report.inlier;
  for (int round = 0; round < 4; ++round) {
    PoseEval ev = evaluate_pose(cam, observations, use, T, options.huber_k);
    for (int it = 0; it < options.max_iterations; ++it) {
      const Vec6 delta = -ev.H.ldlt().solve(ev.b);
      if (!delta.allFinite()) break;
      const RigidTransform candidate = RigidTransform::exp(delta) * T;
      const PoseEval next = evaluate_pose(cam, observations, use, candidate, options.huber_k);
      if (!(next.cost < ev.cost)) break;
      T = candidate;
      ev = next;
      if (delta.norm() < 1e-12) break;
    }
    bool changed = false;
    for (std::size_t i = 0; i < observations.size(); ++i) {
      const Vec3 pc = T * observations[i].point_world;
      const bool ok = pc.z() > 0.0 &&
                      (project_unchecked(cam, pc) - observations[i].pixel).norm() <= options.outlier_px;
      if (ok != use[i]) changed = true;
      use[i] = ok;
    }
    if (!changed) break;
  }
  const int inliers = static_cast<int>(std::count(use.begin(), use.end(), true));
  report.initial_rmse = rmse(cam, observations, use, cam_from_world_init);
  report.final_rmse = rmse(cam, observations, use, T);
  report.cam_from_world = T;
  report.lost = inliers < options.min_inliers;
  return report;
}

std::vector<Observation> reproject_map(const PinholeCamera& cam, const Map& map, const ImagePyramid& cur,
                                       const RigidTransform& cam_from_world, const ReprojectOptions& options) {
  struct Candidate {
    const MapPoint* point;
    Vec2 pixel;
    Vec3 point_cam;
  };
  const int cols = (cam.width + options.grid_cell - 1) / options.grid_cell;
  const int rows = (cam.height + options.grid_cell - 1) / options.grid_cell;
  std::vector<std::vector<Candidate>> cells(static_cast<std::size_t>(cols) * rows);
  for (const auto& [id, mp] : map.points) {
    if (mp.quality == PointQuality::kOutlier) continue;
    const Vec3 pc = cam_from_world * mp.position;
    if (pc.z() <= 1e-6) continue;
    const Vec2 px = project_unchecked(cam, pc);
    if (!cam.contains(px, options.border)) continue;
    cells[grid_cell_index(px, options.grid_cell, cam.width)].push_back({&mp, px, pc});
  }

  std::vector<Observation> out;
  for (auto& cell : cells) {
    if (static_cast<int>(out.size()) >= options.max_points) break;
    std::stable_sort(cell.begin(), cell.end(), [](const Candidate& a, const Candidate& b) {
      if ((a.point->quality == PointQuality::kGood) != (b.point->quality == PointQuality::kGood))
        return a.point->quality == PointQuality::kGood;
      return a.point->observations > b.point->observations;
    });
    int tries = 0;
    for (const Candidate& c : cell) {
      if (++tries > 3) break;
      const auto host_it = map.keyframes.find(c.point->host_keyframe);
      if (host_it == map.keyframes.end()) continue;
      const FrameSnapshot& host = host_it->second.frame;
      const RigidTransform T_host_world = host.cam_from_world();
      const Vec3 p_host = T_host_world * c.point->position;
      if (p_host.z() <= 1e-6) continue;
      const RigidTransform T_cur_host = cam_from_world * host.pose;
      const AffineWarp warp = affine_warp(cam, c.point->host_pixel, p_host, T_cur_host, std::min(options.max_level, cur.size() - 1));
      Patch patch(kMatchPatchSize);
      if (!warp_patch(*host.pyramid, c.point->host_pixel, warp, patch)) continue;
      const auto res = feature_align(patch, cur, warp.search_level, c.pixel, options.align);
      if (!res) continue;
      out.push_back({c.point->id, res->pixel});
      break;
    }
  }
  return out;
}

std::optional<Vec2> track_patch(const ImagePyramid& prev, const Vec2& prev_pixel, const ImagePyramid& cur,
                                const Vec2& guess, const FeatureAlignOptions& options) {
  FeatureAlignOptions coarse = options;
  coarse.max_displacement = std::numeric_limits<double>::infinity();
  Vec2 est = guess;
  const int top = std::min(prev.size(), cur.size()) - 1;
  for (int level = top; level >= 0; --level) {
    Patch patch(kMatchPatchSize);
    if (!extract_patch(prev[level], to_level(prev_pixel, level), patch)) continue;
    const auto res = feature_align(patch, cur, level, est, level == 0 ? options : coarse);
    if (res) {
      est = res->pixel;
    } else if (level == 0) {
      return std::nullopt;
    }
  }
  if ((est - guess).norm() > options.max_displacement) return std::nullopt;
  return est;
}

}  // namespace priorvo
