#pragma once

#include "priorvo/geometry.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace priorvo {

struct StampedPose {
  double timestamp = 0.0;
  RigidTransform pose;  // world-from-camera
};

/// Timestamped pose sequence; timestamps strictly increase.
struct Trajectory {
  std::vector<StampedPose> poses;

  std::size_t size() const { return poses.size(); }
  bool empty() const { return poses.empty(); }
  /// Throws ContractViolation unless timestamp > last timestamp.
  void append(double timestamp, const RigidTransform& pose);
  double path_length() const;
};

/// TUM lines: `timestamp tx ty tz qx qy qz qw`, 9 significant digits.
void write_trajectory(const Trajectory& traj, const std::filesystem::path& path);
std::string format_trajectory(const Trajectory& traj);
/// Throws ParseError naming the offending line.
Trajectory read_trajectory(const std::filesystem::path& path);
Trajectory parse_trajectory(const std::string& text);

enum class AlignmentMode { kRigid, kSimilarity };

struct EvalReport {
  double ate_rmse = 0.0;   // metres
  double scale = 1.0;      // estimate scale relative to truth
  std::size_t matched = 0;
  bool completed = true;   // false when the run ended lost
  std::vector<double> errors;         // per matched pose, after alignment
  std::vector<double> timestamps;     // of the matched estimate poses
  std::vector<Vec3> aligned_estimate; // estimate positions mapped into the truth frame
  std::vector<Vec3> truth_positions;
};

struct AteOptions {
  AlignmentMode mode = AlignmentMode::kRigid;
  /// Association tolerance in seconds; <= 0 means half the median truth frame period.
  double tolerance = 0.0;
};

/// Nearest-timestamp association, closed-form alignment of estimate onto truth, RMSE of
/// residual translations. In similarity mode `scale` is the fitted estimate/truth scale;
/// in rigid mode it is the ratio of centred translation norms. Throws EvaluationError
/// with fewer than 3 matches.
EvalReport ate_rmse(const Trajectory& estimate, const Trajectory& truth, const AteOptions& options = {});

}  // namespace priorvo
