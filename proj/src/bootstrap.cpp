#include "priorvo/bootstrap.hpp"

#include "priorvo/errors.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <numeric>
#include <random>

namespace priorvo {

Mat3 essential_eight_point(const std::vector<Vec2>& ref_norm, const std::vector<Vec2>& cur_norm) {
  if (ref_norm.size() < 8 || ref_norm.size() != cur_norm.size())
    throw ContractViolation("eight-point needs >= 8 matched points");
  Eigen::MatrixXd A(ref_norm.size(), 9);
  for (std::size_t i = 0; i < ref_norm.size(); ++i) {
    const double x1 = ref_norm[i].x(), y1 = ref_norm[i].y();
    const double x2 = cur_norm[i].x(), y2 = cur_norm[i].y();
    A.row(static_cast<Eigen::Index>(i)) << x2 * x1, x2 * y1, x2, y2 * x1, y2 * y1, y2, x1, y1, 1.0;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd e = svd.matrixV().col(8);
  Mat3 E;
  E << e(0), e(1), e(2), e(3), e(4), e(5), e(6), e(7), e(8);
  // Project onto the essential manifold: singular values (1, 1, 0).
  const Eigen::JacobiSVD<Mat3> s(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return s.matrixU() * Eigen::Vector3d(1.0, 1.0, 0.0).asDiagonal() * s.matrixV().transpose();
}

namespace {

double sampson(const Mat3& E, const Vec2& a, const Vec2& b) {
  const Vec3 x1(a.x(), a.y(), 1.0), x2(b.x(), b.y(), 1.0);
  const Vec3 Ex1 = E * x1;
  const Vec3 Etx2 = E.transpose() * x2;
  const double num = x2.dot(Ex1);
  const double den = Ex1.x() * Ex1.x() + Ex1.y() * Ex1.y() + Etx2.x() * Etx2.x() + Etx2.y() * Etx2.y();
  return den > 0.0 ? num * num / den : std::numeric_limits<double>::infinity();
}

}  // namespace

std::optional<TwoViewResult> two_view_geometry(const PinholeCamera& cam, const std::vector<Vec2>& ref_px,
                                               const std::vector<Vec2>& cur_px, const TwoViewOptions& options) {
  const std::size_t n = ref_px.size();
  if (n < 8 || cur_px.size() != n) return std::nullopt;
  std::vector<Vec2> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = Vec2((ref_px[i].x() - cam.cx) / cam.fx, (ref_px[i].y() - cam.cy) / cam.fy);
    b[i] = Vec2((cur_px[i].x() - cam.cx) / cam.fx, (cur_px[i].y() - cam.cy) / cam.fy);
  }
  const double thr = options.inlier_px / cam.fx;
  const double thr2 = thr * thr;

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<bool> best_inl;
  std::size_t best_count = 0;
  for (int it = 0; it < options.ransac_iterations; ++it) {
    for (std::size_t k = 0; k < 8; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, n - 1);
      std::swap(idx[k], idx[pick(rng)]);
    }
    std::vector<Vec2> sa(8), sb(8);
    for (std::size_t k = 0; k < 8; ++k) {
      sa[k] = a[idx[k]];
      sb[k] = b[idx[k]];
    }
    const Mat3 E = essential_eight_point(sa, sb);
    std::vector<bool> inl(n);
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      inl[i] = sampson(E, a[i], b[i]) < thr2;
      count += inl[i];
    }
    if (count > best_count) {
      best_count = count;
      best_inl = std::move(inl);
    }
  }
  if (best_count < 8) return std::nullopt;

  std::vector<Vec2> ia, ib;
  for (std::size_t i = 0; i < n; ++i)
    if (best_inl[i]) {
      ia.push_back(a[i]);
      ib.push_back(b[i]);
    }
  const Mat3 E = essential_eight_point(ia, ib);
  for (std::size_t i = 0; i < n; ++i) best_inl[i] = sampson(E, a[i], b[i]) < thr2;

  const Eigen::JacobiSVD<Mat3> svd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 U = svd.matrixU(), V = svd.matrixV();
  if (U.determinant() < 0.0) U = -U;
  if (V.determinant() < 0.0) V = -V;
  Mat3 W;
  W << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Mat3 Rs[2] = {U * W * V.transpose(), U * W.transpose() * V.transpose()};
  const Vec3 ts[2] = {U.col(2), -U.col(2)};

  TwoViewResult best;
  std::size_t best_good = 0;
  for (const Mat3& R : Rs)
    for (const Vec3& t : ts) {
      const RigidTransform T(R, t);
      TwoViewResult cand{T, std::vector<bool>(n, false), std::vector<Vec3>(n, Vec3::Zero())};
      std::size_t good = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!best_inl[i]) continue;
        const Bearing br(Vec3(a[i].x(), a[i].y(), 1.0));
        const Bearing bc(Vec3(b[i].x(), b[i].y(), 1.0));
        const auto rho = triangulate_inverse_depth(br, bc, T);
        if (!rho) continue;
        const Vec3 p = point_from_inverse_depth(br, *rho);
        const Vec3 pc = T * p;
        if (pc.z() <= 0.0) continue;
        cand.inlier[i] = true;
        cand.points_ref[i] = p;
        ++good;
      }
      if (good > best_good) {
        best_good = good;
        best = std::move(cand);
      }
    }
  if (best_good < 8) return std::nullopt;

  std::vector<double> depths;
  for (std::size_t i = 0; i < n; ++i)
    if (best.inlier[i]) depths.push_back(best.points_ref[i].z());
  std::nth_element(depths.begin(), depths.begin() + depths.size() / 2, depths.end());
  const double s = 1.0 / depths[depths.size() / 2];
  best.T_cur_from_ref = RigidTransform(best.T_cur_from_ref.rotation(), best.T_cur_from_ref.translation() * s);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!best.inlier[i]) continue;
    best.points_ref[i] *= s;
    const Vec3 pc = best.T_cur_from_ref * best.points_ref[i];
    const double e0 = (project_unchecked(cam, best.points_ref[i]) - ref_px[i]).norm();
    const double e1 = (project_unchecked(cam, pc) - cur_px[i]).norm();
    if (e0 > options.max_reprojection_px || e1 > options.max_reprojection_px) best.inlier[i] = false;
    else ++kept;
  }
  if (kept < 8) return std::nullopt;
  return best;
}

std::optional<PriorBootstrapResult> bootstrap_from_prior(const PinholeCamera& cam, const FrameSnapshot& frame,
                                                         const DepthMap& prior, const DetectorOptions& detector,
                                                         int min_features, const PriorBounds& bounds) {
  const std::vector<Feature> features = detect_features(*frame.pyramid, detector);
  if (static_cast<int>(features.size()) < min_features) return std::nullopt;
  PriorBootstrapResult out;
  std::vector<double> depths;
  for (const Feature& f : features) {
    Patch patch(kMatchPatchSize);
    if (!extract_patch((*frame.pyramid)[0], f.pixel, patch)) continue;
    const auto d = sample_prior(prior, cam, f.pixel, bounds);
    if (!d) {
      out.unmatched.push_back(f);
      continue;
    }
    MapPoint mp;
    const Bearing b = back_project(cam, f.pixel);
    mp.position = frame.pose * point_from_inverse_depth(b, 1.0 / *d);
    mp.host_keyframe = frame.id;
    mp.host_pixel = f.pixel;
    mp.patch = std::move(patch);
    mp.observations = 1;
    out.points.push_back(std::move(mp));
    depths.push_back(*d);
  }
  if (static_cast<int>(out.points.size()) < min_features) return std::nullopt;
  std::sort(depths.begin(), depths.end());
  out.stats = {depths[depths.size() / 2], depths.front()};
  return out;
}

}  // namespace priorvo
