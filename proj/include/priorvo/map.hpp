#pragma once

#include "priorvo/depth_filter.hpp"
#include "priorvo/geometry.hpp"
#include "priorvo/image.hpp"
#include "priorvo/prior.hpp"

#include <map>
#include <memory>
#include <vector>

namespace priorvo {

/// A map point seen in a frame at a level-0 pixel.
struct Observation {
  int point_id = -1;
  Vec2 pixel = Vec2::Zero();
};

struct FrameSnapshot {
  int id = -1;
  double timestamp = 0.0;
  std::shared_ptr<const ImagePyramid> pyramid;
  RigidTransform pose;  // world-from-camera
  std::vector<Observation> tracked;

  RigidTransform cam_from_world() const { return pose.inverse(); }
};

enum class PointQuality { kGood, kCandidate, kOutlier };

struct MapPoint {
  int id = -1;
  Vec3 position = Vec3::Zero();  // world, metres
  int host_keyframe = -1;
  Vec2 host_pixel = Vec2::Zero();
  Patch patch;  // kMatchPatchSize patch at the host pixel
  int observations = 0;
  PointQuality quality = PointQuality::kCandidate;
};

struct KeyframeRecord {
  FrameSnapshot frame;
  std::vector<DepthSeed> seeds;
  std::shared_ptr<const DepthMap> prior;
  double depth_median = 0.0;  // scene statistics at creation
  double depth_min = 0.0;
};

/// Keyframes (ordered by frame id) and map points. Mapping owns the mutable instance;
/// tracking reads published copies.
struct Map {
  std::map<int, KeyframeRecord> keyframes;
  std::map<int, MapPoint> points;
  int next_point_id = 0;
  int next_seed_id = 0;

  const KeyframeRecord* last_keyframe() const {
    return keyframes.empty() ? nullptr : &keyframes.rbegin()->second;
  }
  /// Ids of the newest `n` keyframes, oldest first.
  std::vector<int> window(int n) const;
};

}  // namespace priorvo
