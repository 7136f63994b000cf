#pragma once

// Keyframe policy, seed creation, bounded epipolar matching, seed updates over the keyframe
// window, promotion to map points, and local bundle adjustment.

#include "priorvo/depth_filter.hpp"
#include "priorvo/map.hpp"
#include "priorvo/tracking.hpp"

#include <optional>
#include <vector>

namespace priorvo {

struct KeyframePolicy {
  double translation_ratio = 0.12;  // of the median scene depth
  int min_tracked = 100;
  // A low feature count alone only triggers after this much motion, so that the window
  // spans enough baseline for seeds to converge; below `critical_tracked` it triggers at once.
  double low_count_translation_ratio = 0.03;
  int critical_tracked = 50;
};

/// True without a previous keyframe, when the camera moved more than `translation_ratio`
/// of the median depth since `last_kf`, or when fewer than `min_tracked` features are
/// tracked (subject to the low-count rules above).
bool select_keyframe(const FrameSnapshot& cur, const KeyframeRecord* last_kf, double median_depth,
                     const KeyframePolicy& policy = {});

struct SceneStats {
  double d_avg = 0.0;
  double d_min = 0.0;
};

struct SeedCreationOptions {
  SeedInitParams init;
  bool literal_prior_range = false;  // rho_range = 1/d_prior instead of the scene 1/d_min
  PriorBounds bounds;
};

/// One seed per feature (up to `budget`): prior-initialized where the prior has a valid
/// depth, average-initialized otherwise. Features whose patch leaves the image are skipped.
std::vector<DepthSeed> initialize_seeds(const PinholeCamera& cam, const FrameSnapshot& host,
                                        const std::vector<Feature>& features, const DepthMap* prior,
                                        const SceneStats& stats, int budget, const SeedCreationOptions& options = {});

struct EpipolarOptions {
  double step = 0.7;               // search-level pixels between candidates
  double max_zmssd = 2.0 * kMatchPatchSize * kMatchPatchSize * 0.05 * 0.05;
  int border = 6;
  int max_level = 2;
  FeatureAlignOptions align;
  TriangulationLimits triangulation;
};

struct EpipolarMatch {
  Measurement measurement;
  Vec2 pixel = Vec2::Zero();  // refined, level 0
  double score = 0.0;         // best zmssd along the segment
};

/// Searches the segment between the projections of the seed's search-interval ends for the
/// best 8x8 zmssd match, refines it and triangulates. nullopt for no match.
std::optional<EpipolarMatch> epipolar_search(const PinholeCamera& cam, const DepthSeed& seed,
                                             const ImagePyramid& host, const ImagePyramid& cur,
                                             const RigidTransform& T_cur_from_host, const EpipolarOptions& options = {});

/// Inverse-depth variance from a one-pixel shift of the match along the epipolar line:
/// (rho(p+) - rho(p-))^2 / 4. nullopt when either re-triangulation degenerates.
std::optional<double> compute_tau(const PinholeCamera& cam, const RigidTransform& T_cur_from_host,
                                  const Bearing& bearing, double rho, const TriangulationLimits& limits = {});

struct SeedUpdateOptions {
  double convergence_ratio = ConvergencePreset::kStrict;
  double cull_outlier_probability = 0.7;
  int cull_min_updates = 10;
  EpipolarOptions epipolar;
};

/// Final state of a seed leaving the filter.
struct SeedOutcome {
  int seed_id = -1;
  SeedInit init = SeedInit::kAverage;
  int updates = 0;
  bool converged = false;
};

struct SeedUpdateReport {
  std::vector<int> promoted;  // new map point ids
  std::vector<SeedOutcome> finished;
  int measurements = 0;
  int misses = 0;
  int culled = 0;
};

/// Runs every active seed of the window keyframes against `cur`, fuses matches, promotes
/// converged seeds to map points and culls seeds that look like outliers.
SeedUpdateReport update_seeds(const PinholeCamera& cam, Map& map, const std::vector<int>& window,
                              const FrameSnapshot& cur, const SeedUpdateOptions& options = {});

/// Converts a seed into a map point at depth 1/mu and records the host observation.
int promote_seed(Map& map, const DepthSeed& seed);

struct BundleAdjustOptions {
  int max_iterations = 10;
  double huber_k = 2.0;
  double initial_lambda = 1e-4;
};

struct BundleAdjustReport {
  bool skipped = false;
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int points = 0;
  int observations = 0;
};

/// Levenberg-Marquardt over the window keyframe poses (oldest fixed) and the points they
/// observe, using the Schur complement on the point blocks. Keyframes outside the window
/// that see those points contribute with fixed poses. Skips, leaving the map untouched,
/// with fewer than 2 keyframes or a rank-deficient reduced system.
BundleAdjustReport local_bundle_adjust(const PinholeCamera& cam, Map& map, const std::vector<int>& window,
                                       const BundleAdjustOptions& options = {});

}  // namespace priorvo
