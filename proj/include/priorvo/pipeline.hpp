#pragma once

// Frame-by-frame orchestration: bootstrap, tracking, keyframe dispatch to mapping, and
// constant-velocity bridging with relocalization when tracking fails.

#include "priorvo/bootstrap.hpp"
#include "priorvo/map.hpp"
#include "priorvo/mapping.hpp"
#include "priorvo/prior.hpp"
#include "priorvo/tracking.hpp"
#include "priorvo/trajectory.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <string>

namespace priorvo {

struct PipelineConfig {
  int max_features = 200;
  int min_features = 100;
  int window = 5;
  int pyramid_levels = 3;
  double fast_threshold = 20.0 / 255.0;
  int grid_cell = 30;
  double convergence_ratio = ConvergencePreset::kStrict;
  std::string prior_dir;  // empty: no priors unless supplied programmatically
  bool use_priors = true;
  bool bundle_adjustment = true;
  bool deterministic = true;  // single worker; false runs mapping on its own thread
  bool prior_bootstrap = true;
  double keyframe_translation_ratio = 0.12;
  int lost_budget = 15;
  double min_triangulation_angle = 1e-6;
  double seed_a0 = 10.0;
  double seed_b0 = 10.0;
  double prior_d_floor = 0.5;
  double prior_d_ceiling = 200.0;
  bool literal_prior_range = false;
  double bootstrap_min_disparity = 40.0;
  int bootstrap_min_features = 50;
  int queue_capacity = 4;

  /// Throws ConfigError when the invariants do not hold.
  void validate() const;
};

/// Flat `key = value` config; every field addressable by its name. `convergence` accepts
/// `strict`, `relaxed` or a number. Unknown keys are ConfigError.
PipelineConfig parse_pipeline_config(const std::string& text);
PipelineConfig read_pipeline_config(const std::filesystem::path& path);

enum class TrackingMode { kBootstrapping, kTracking, kLost };

struct FrameResult {
  int frame_index = -1;
  double timestamp = 0.0;
  RigidTransform pose;  // world-from-camera
  TrackingMode mode = TrackingMode::kBootstrapping;
  bool bridged = false;   // pose from the constant-velocity model
  bool keyframe = false;
  bool terminal_lost = false;
};

/// Returns the prior for a frame index, or null when none exists.
using PriorSource = std::function<std::shared_ptr<const DepthMap>(int frame_index)>;

class Pipeline {
 public:
  Pipeline(const PinholeCamera& cam, const PipelineConfig& config, PriorSource priors = {});
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  /// Processes the next frame. After a terminal lost report further frames are ignored and
  /// return the same report.
  FrameResult process_frame(const Image& image, double timestamp);

  /// Drains the mapping worker (no-op in deterministic mode).
  void finish();

  TrackingMode mode() const;
  bool terminal_lost() const;
  /// One entry per processed frame.
  const Trajectory& trajectory() const;
  /// Final (bundle-adjusted) keyframe poses.
  Trajectory keyframe_trajectory() const;
  /// Every seed created so far: finished ones with their outcome, active ones as unconverged.
  std::vector<SeedOutcome> seed_outcomes() const;
  std::shared_ptr<const Map> map_snapshot() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Prior source reading `<dir>/<index, 6 digits>.dpr` on demand.
PriorSource directory_priors(const std::filesystem::path& dir);

}  // namespace priorvo
