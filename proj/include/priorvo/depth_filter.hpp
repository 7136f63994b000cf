#pragma once

// Recursive Bayesian inverse-depth filter: each seed carries Beta(a, b) over the inlier
// ratio times Normal(mu, sigma2) over the inverse depth, updated by moment matching
// against a Gaussian + uniform measurement mixture.

#include "priorvo/geometry.hpp"
#include "priorvo/image.hpp"

#include <optional>

namespace priorvo {

/// Which initialization produced a seed.
enum class SeedInit { kAverage, kPrior };

/// Keyframe feature a seed is attached to.
struct SeedAnchor {
  int host_keyframe = -1;
  Vec2 pixel = Vec2::Zero();
  Bearing bearing{Vec3::UnitZ()};
  int level = 0;
};

struct DepthSeed {
  double a = 10.0;
  double b = 10.0;
  double mu = 1.0;         // inverse depth, 1/m
  double sigma2 = 1.0;     // inverse-depth variance, 1/m^2
  double rho_range = 1.0;  // width of the uniform outlier component, 1/m
  SeedAnchor anchor;
  Patch patch;  // kMatchPatchSize reference patch
  int update_count = 0;
  SeedInit init = SeedInit::kAverage;
  bool variance_clamped = false;
  int id = -1;
};

struct Measurement {
  double rho = 0.0;   // triangulated inverse depth
  double tau2 = 0.0;  // its variance
};

struct SearchInterval {
  double rho_max;  // far end (smaller inverse depth)
  double rho_min;  // near end (larger inverse depth)
};

struct SeedInitParams {
  double a0 = 10.0;
  double b0 = 10.0;
};

inline constexpr double kInverseDepthFloor = 0.00000001;
inline constexpr double kVarianceFloor = 1e-16;

/// Named convergence presets (ratio of sqrt(sigma2) to rho_range).
struct ConvergencePreset {
  static constexpr double kStrict = 1.0 / 200.0;
  static constexpr double kRelaxed = 1.0 / 100.0;
};

/// Average-scene-depth initialization. Throws ContractViolation unless 0 < d_min <= d_avg.
DepthSeed init_seed_average(double d_avg, double d_min, const SeedAnchor& anchor, const Patch& patch,
                            const SeedInitParams& params = {});

/// Prior-depth initialization: mu = 1/d, sigma2 = 1/(6 d)^2. `scene_rho_range` sets the
/// uniform outlier width (the keyframe's 1/d_min); when absent it defaults to 1/d.
/// Returns nullopt (seed rejected) for non-finite or non-positive depths.
std::optional<DepthSeed> init_seed_prior(double d_prior, const SeedAnchor& anchor, const Patch& patch,
                                         std::optional<double> scene_rho_range = std::nullopt,
                                         const SeedInitParams& params = {});

/// mu +/- sigma, with the far end clamped to kInverseDepthFloor when it would go negative.
SearchInterval search_interval(const DepthSeed& seed);

/// One moment-matched posterior step. Pure: the input seed is left untouched.
DepthSeed update_seed(const DepthSeed& seed, const Measurement& m);

/// Posterior responsibility of the inlier component for measurement `m`.
double inlier_responsibility(const DepthSeed& seed, const Measurement& m);

/// sqrt(sigma2) < threshold_ratio * rho_range. Throws ContractViolation for ratio <= 0.
bool is_converged(const DepthSeed& seed, double threshold_ratio);

/// b / (a + b): expected outlier probability.
inline double outlier_probability(const DepthSeed& seed) { return seed.b / (seed.a + seed.b); }

}  // namespace priorvo
