#pragma once

#include "priorvo/geometry.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace priorvo {

/// Row-major grayscale raster, intensities nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, float fill = 0.0f) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  bool empty() const { return data.empty(); }
  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const Image&) const = default;
};

/// Level 0 is full resolution; level k is the 2x2 box downsample of level k-1.
struct ImagePyramid {
  std::vector<Image> levels;

  int size() const { return static_cast<int>(levels.size()); }
  const Image& operator[](int level) const { return levels[level]; }
};

/// Throws ConfigError when the image is empty or too small for `levels`.
ImagePyramid build_pyramid(const Image& image, int levels);

/// Level-0 pixel to pyramid-level pixel and back (pixel centres of the 2x2 box pyramid).
inline Vec2 to_level(const Vec2& px, int level) {
  const double s = 1.0 / (1 << level);
  return ((px.array() + 0.5) * s - 0.5).matrix();
}
inline Vec2 from_level(const Vec2& px, int level) {
  const double s = 1 << level;
  return ((px.array() + 0.5) * s - 0.5).matrix();
}

/// True when bilinear samples within `margin` of `p` stay inside the image.
inline bool inside_with_margin(const Image& img, double x, double y, double margin) {
  return x - margin >= 0.0 && y - margin >= 0.0 && x + margin < img.width - 1 && y + margin < img.height - 1;
}

/// Bilinear interpolation. Throws DomainError outside [0, w-1] x [0, h-1].
double sample_bilinear(const Image& image, const Vec2& position);

/// Unchecked bilinear sample; caller guarantees 0 <= x < w-1, 0 <= y < h-1.
inline float interpolate(const Image& img, double x, double y) {
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const float ax = static_cast<float>(x - x0);
  const float ay = static_cast<float>(y - y0);
  const float* p = img.data.data() + static_cast<std::size_t>(y0) * img.width + x0;
  return (1.0f - ay) * ((1.0f - ax) * p[0] + ax * p[1]) + ay * ((1.0f - ax) * p[img.width] + ax * p[img.width + 1]);
}

/// Square patch with a one-pixel border kept for gradient computation.
struct Patch {
  int size = 0;
  std::vector<float> with_border;  // (size + 2)^2 values

  Patch() = default;
  explicit Patch(int side) : size(side), with_border(static_cast<std::size_t>(side + 2) * (side + 2), 0.0f) {}

  int stride() const { return size + 2; }
  float& at(int x, int y) { return with_border[static_cast<std::size_t>(y + 1) * stride() + x + 1]; }
  float at(int x, int y) const { return with_border[static_cast<std::size_t>(y + 1) * stride() + x + 1]; }
  /// Interior values (size * size), row-major.
  std::vector<float> interior() const;
};

inline constexpr int kAlignPatchSize = 4;
inline constexpr int kMatchPatchSize = 8;

/// Samples a patch (plus border) centred at `center`. Returns false if any sample falls outside.
bool extract_patch(const Image& image, const Vec2& center, Patch& out);

/// Zero-mean sum of squared differences. Throws ContractViolation on size mismatch.
double zmssd(std::span<const float> a, std::span<const float> b);
double zmssd(const Patch& a, const Patch& b);

struct Feature {
  Vec2 pixel = Vec2::Zero();  // level-0 coordinates
  double score = 0.0;
  int level = 0;
};

struct DetectorOptions {
  double fast_threshold = 20.0 / 255.0;
  int grid_cell = 30;
  int max_features = 200;
  int detection_levels = 3;
  int border = 12;  // level-0 pixels kept clear for patches
};

/// FAST-9 corners, at most one per free grid cell, so that existing + returned <= max_features.
std::vector<Feature> detect_features(const ImagePyramid& pyramid, const DetectorOptions& options,
                                     std::span<const Vec2> existing = {});

/// Cell index of a level-0 pixel for the given grid.
int grid_cell_index(const Vec2& px, int grid_cell, int image_width);

// 8-bit PGM (P5) and PNG, normalized to [0, 1].
Image load_image(const std::filesystem::path& path);
void save_pgm(const Image& image, const std::filesystem::path& path);

}  // namespace priorvo
