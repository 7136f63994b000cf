#pragma once

// Map initialization: from a metric depth prior on a single frame, or from two views via
// an essential matrix when no prior is available.

#include "priorvo/geometry.hpp"
#include "priorvo/image.hpp"
#include "priorvo/map.hpp"
#include "priorvo/mapping.hpp"
#include "priorvo/prior.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace priorvo {

/// Essential matrix for normalized image coordinates, x_cur^T E x_ref = 0 with E = [t]x R.
/// Needs at least 8 correspondences.
Mat3 essential_eight_point(const std::vector<Vec2>& ref_norm, const std::vector<Vec2>& cur_norm);

struct TwoViewOptions {
  int ransac_iterations = 300;
  double inlier_px = 1.5;
  std::uint64_t seed = 42;
  double max_reprojection_px = 2.0;
};

struct TwoViewResult {
  RigidTransform T_cur_from_ref;  // translation scaled so the median inlier depth is 1
  std::vector<bool> inlier;
  std::vector<Vec3> points_ref;  // valid where inlier
};

/// RANSAC essential matrix, cheirality-checked decomposition and triangulation. nullopt when
/// fewer than 8 consistent correspondences survive.
std::optional<TwoViewResult> two_view_geometry(const PinholeCamera& cam, const std::vector<Vec2>& ref_px,
                                               const std::vector<Vec2>& cur_px, const TwoViewOptions& options = {});

struct PriorBootstrapResult {
  std::vector<MapPoint> points;  // hosted by the frame, world = frame camera
  std::vector<Feature> unmatched;  // features without a usable prior depth
  SceneStats stats;
};

/// Places one map point per feature at its prior depth. nullopt when fewer than
/// `min_features` features are detected.
std::optional<PriorBootstrapResult> bootstrap_from_prior(const PinholeCamera& cam, const FrameSnapshot& frame,
                                                         const DepthMap& prior, const DetectorOptions& detector,
                                                         int min_features, const PriorBounds& bounds = {});

}  // namespace priorvo
