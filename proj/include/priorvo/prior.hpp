#pragma once

#include "priorvo/geometry.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace priorvo {

/// Externally predicted metric depth map. Non-positive or non-finite values are invalid pixels.
struct DepthMap {
  int width = 0;
  int height = 0;
  double trained_focal = 1.0;
  std::vector<float> values;  // row-major, metres

  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  static bool valid(float d) { return std::isfinite(d) && d > 0.0f; }
  bool operator==(const DepthMap&) const = default;
};

/// Reads `DPRIOR <w> <h> <trained_focal>\n` + w*h little-endian float32. Throws LoadError
/// (with byte offset) for a malformed header, short payload, or trailing bytes.
DepthMap load_depth_map(const std::filesystem::path& path);
DepthMap parse_depth_map(const std::string& bytes);
void save_depth_map(const DepthMap& map, const std::filesystem::path& path);
std::string serialize_depth_map(const DepthMap& map);

/// `<index, 6 digits>.dpr`
std::string prior_filename(int frame_index);

/// d_current = (f_current / f_trained) * d_trained. Throws ContractViolation for non-positive focals.
double scale_depth(double d_trained, double f_current, double f_trained);

struct PriorBounds {
  double d_floor = 0.5;
  double d_ceiling = 200.0;
};

/// Nearest-pixel lookup, rescaled with cam.fx as the current focal. nullopt for invalid pixels
/// or rescaled depths outside the bounds. Throws ContractViolation for out-of-bounds pixels.
std::optional<double> sample_prior(const DepthMap& map, const PinholeCamera& cam, const Vec2& pixel,
                                   const PriorBounds& bounds = {});

}  // namespace priorvo
