#pragma once

// Frame-to-frame pose estimation: sparse photometric alignment of small patches around
// known 3D points, per-feature subpixel refinement, and motion-only reprojection refinement.

#include "priorvo/geometry.hpp"
#include "priorvo/image.hpp"
#include "priorvo/map.hpp"

#include <optional>
#include <vector>

namespace priorvo {

using Row6 = Eigen::Matrix<double, 1, 6>;
using Mat26 = Eigen::Matrix<double, 2, 6>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// d pixel(exp(xi) * p) / d xi at xi = 0, left perturbation with twist = (v, w).
Mat26 point_jacobian(const PinholeCamera& cam, const Vec3& p);

/// Derivative of the intensity at the pyramid-level pixel of exp(xi) * p; `gradient` is the
/// image gradient at that level and `level_scale` = 1 / 2^level.
Row6 photometric_jacobian(const PinholeCamera& cam, const Vec3& p, const Vec2& gradient, double level_scale);

struct AlignOptions {
  int max_level = 2;
  int min_level = 0;
  int max_iterations = 30;
  double min_update = 1e-6;
  int divergence_limit = 5;  // consecutive cost increases
  int min_points = 10;
};

struct AlignmentReport {
  RigidTransform pose;  // T_cur_from_ref
  std::vector<int> iterations;  // per level, coarsest first
  double median_residual = 0.0;
  double initial_cost = 0.0;  // finest level
  double final_cost = 0.0;
  int inliers = 0;
  int candidates = 0;
  bool converged = false;
  bool lost = false;
};

/// Inverse-compositional sparse image alignment. `points_ref` are 3D points in the reference
/// camera frame; 4x4 patches around their projections are aligned coarse-to-fine.
AlignmentReport sparse_image_align(const PinholeCamera& cam, const ImagePyramid& ref,
                                   const std::vector<Vec3>& points_ref, const ImagePyramid& cur,
                                   const RigidTransform& T_cur_from_ref_init, const AlignOptions& options = {});

/// Affine map from host-image offsets to current-image offsets around a point, and the
/// pyramid level in the current image where the warped patch is closest to unit scale.
struct AffineWarp {
  Eigen::Matrix2d A_cur_ref = Eigen::Matrix2d::Identity();
  int search_level = 0;
};

AffineWarp affine_warp(const PinholeCamera& cam, const Vec2& host_pixel, const Vec3& point_host,
                       const RigidTransform& T_cur_from_host, int max_level);

/// Samples the host image through the inverse warp into a patch (with border) laid out in
/// search-level pixels of the current image. False if samples leave the host image.
bool warp_patch(const ImagePyramid& host, const Vec2& host_pixel, const AffineWarp& warp, Patch& out);

struct FeatureAlignOptions {
  int max_iterations = 15;
  double max_displacement = 4.0;  // level-0 pixels
  double max_mean_sq_residual = 0.005;
  double min_gradient_eigen = 1e-4;  // per pixel, of the gradient structure tensor
};

struct FeatureAlignResult {
  Vec2 pixel = Vec2::Zero();  // level 0
  double mean_sq_residual = 0.0;
  double offset = 0.0;        // cur - ref mean brightness
  int iterations = 0;
};

/// 2-D inverse-compositional refinement with a brightness offset. `ref` is laid out at
/// `level` of `cur`; `predicted` is in level-0 pixels.
std::optional<FeatureAlignResult> feature_align(const Patch& ref, const ImagePyramid& cur, int level,
                                                const Vec2& predicted, const FeatureAlignOptions& options = {});

struct PoseObservation {
  Vec3 point_world = Vec3::Zero();
  Vec2 pixel = Vec2::Zero();
};

struct PoseRefineOptions {
  double huber_k = 2.0;
  double outlier_px = 3.0;
  int max_iterations = 10;
  int min_inliers = 10;
};

struct PoseRefineReport {
  RigidTransform cam_from_world;
  std::vector<bool> inlier;
  double initial_rmse = 0.0;
  double final_rmse = 0.0;  // over all observations
  bool lost = false;
};

/// Motion-only Gauss-Newton on reprojection error with Huber weights. Only cost-decreasing
/// steps are taken; observations beyond `outlier_px` are dropped and the pose re-solved.
PoseRefineReport pose_refine(const PinholeCamera& cam, const std::vector<PoseObservation>& observations,
                             const RigidTransform& cam_from_world_init, const PoseRefineOptions& options = {});

struct ReprojectOptions {
  int grid_cell = 30;
  int max_points = 200;
  int border = 8;
  int max_level = 2;
  FeatureAlignOptions align;
};

/// Projects map points into the current frame, keeps one candidate per grid cell and
/// refines each with feature_align against its host keyframe.
std::vector<Observation> reproject_map(const PinholeCamera& cam, const Map& map, const ImagePyramid& cur,
                                       const RigidTransform& cam_from_world, const ReprojectOptions& options = {});

/// Translational pyramidal patch tracking from `prev` to `cur`, used before a map exists.
std::optional<Vec2> track_patch(const ImagePyramid& prev, const Vec2& prev_pixel, const ImagePyramid& cur,
                                const Vec2& guess, const FeatureAlignOptions& options = {});

}  // namespace priorvo
