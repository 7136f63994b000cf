#pragma once

// Deterministic ray-cast scenes: a textured relief wall, textured boxes and dark blob
// landmarks, viewed along scripted camera paths.

#include "priorvo/geometry.hpp"
#include "priorvo/image.hpp"
#include "priorvo/prior.hpp"
#include "priorvo/trajectory.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace priorvo {

struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
};

/// Dark Gaussian spot painted onto whatever surface lies around `position`.
struct Landmark {
  Vec3 position = Vec3::Zero();
  double radius = 0.03;    // metres
  double darkness = 0.9;   // fraction of intensity removed at the centre
};

struct SyntheticScene {
  std::uint64_t seed = 1;
  PinholeCamera camera = PinholeCamera::make(500.0, 500.0, 319.5, 239.5, 640, 480);
  // Wall z = wall_depth + relief_amplitude * sin(kx x) cos(ky y), kx = 2 pi / wavelength.
  double wall_depth = 6.0;
  double relief_amplitude = 0.15;
  double relief_wavelength = 3.0;
  std::vector<Box> boxes;
  std::vector<Landmark> landmarks;
  double texture_cell = 0.16;  // coarsest noise lattice spacing, metres
  int texture_octaves = 3;
  double contrast = 1.0;      // 0 gives a flat grey world

  /// Wall plus two boxes between 2.2 m and 4.2 m in front of the origin.
  static SyntheticScene desk(std::uint64_t seed = 1);
};

/// World point where the ray `origin + t * dir` first meets the scene; `t` scales `dir`
/// unnormalized. nullopt for misses.
std::optional<double> cast_ray(const SyntheticScene& scene, const Vec3& origin, const Vec3& dir);

/// Surface albedo at a world point, in [0, 1].
float texture_intensity(const SyntheticScene& scene, const Vec3& point);

struct RenderResult {
  Image image;
  DepthMap depth;  // z-depth per pixel, trained_focal = camera.fx
};

RenderResult render_frame(const SyntheticScene& scene, const RigidTransform& world_from_cam);

namespace reference {
RenderResult render_frame(const SyntheticScene& scene, const RigidTransform& world_from_cam);
}

struct PriorPerturbation {
  double bias = 1.0;
  double log_sigma = 0.0;
  double invalid_fraction = 0.0;
  std::uint64_t seed = 0;
};

/// d -> bias * d * exp(log_sigma * z), z ~ N(0, 1) keyed by (seed, pixel); a `invalid_fraction`
/// share of pixels set to -1. Invalid input pixels stay invalid.
DepthMap perturb_prior(const DepthMap& truth, const PriorPerturbation& model);

/// clamp(gain * I + offset, 0, 1).
Image brightness_warp(const Image& image, double gain, double offset);

enum class PathKind { kLine, kArc, kSCurve };

struct PathSpec {
  PathKind kind = PathKind::kArc;
  int frames = 200;
  double fps = 10.0;
  double length = 2.0;        // line and S-curve extent, metres
  double arc_radius = 4.0;    // arc orbits (0, 0, arc_radius)
  double arc_half_angle = 0.3;
  double scurve_amplitude = 0.25;
};

/// Camera paths looking along +z; timestamps are index / fps.
Trajectory scripted_trajectory(const PathSpec& spec);

/// Everything `simulate` needs.
struct SceneConfig {
  SyntheticScene scene = SyntheticScene::desk();
  PathSpec path;
  PriorPerturbation perturbation;
  double prior_trained_focal = 0.0;  // <= 0: camera fx
  bool write_priors = true;
  std::vector<int> blank_frames;     // rendered fully white
};

/// Flat `key = value` scene description. Unknown keys are ConfigError.
SceneConfig parse_scene_config(const std::string& text);
SceneConfig read_scene_config(const std::filesystem::path& path);

/// Writes intrinsics.txt, images/%06d.pgm, priors/%06d.dpr and groundtruth.txt.
void export_dataset(const SceneConfig& config, const std::filesystem::path& out_dir);

}  // namespace priorvo
