#include "priorvo/image.hpp"

#include "priorvo/errors.hpp"
#include "priorvo/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace priorvo {

ImagePyramid build_pyramid(const Image& image, int levels) {
  if (image.empty()) throw ConfigError("cannot build a pyramid from an empty image");
  if (levels < 1) throw ConfigError("pyramid needs at least one level");
  const int min_side = 1 << (levels - 1);
  if (image.width < min_side || image.height < min_side)
    throw ConfigError("image too small for " + std::to_string(levels) + " pyramid levels");
  ImagePyramid pyr;
  pyr.levels.reserve(levels);
  pyr.levels.push_back(image);
  for (int l = 1; l < levels; ++l) pyr.levels.push_back(kernels::downsample2x(pyr.levels.back()));
  return pyr;
}

double sample_bilinear(const Image& image, const Vec2& position) {
  const double x = position.x();
  const double y = position.y();
  if (!(x >= 0.0 && y >= 0.0 && x <= image.width - 1 && y <= image.height - 1))
    throw DomainError("bilinear sample outside the image");
  const int x0 = std::min(static_cast<int>(x), image.width - 1);
  const int y0 = std::min(static_cast<int>(y), image.height - 1);
  const int x1 = std::min(x0 + 1, image.width - 1);
  const int y1 = std::min(y0 + 1, image.height - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  return (1.0 - ay) * ((1.0 - ax) * image.at(x0, y0) + ax * image.at(x1, y0)) +
         ay * ((1.0 - ax) * image.at(x0, y1) + ax * image.at(x1, y1));
}

std::vector<float> Patch::interior() const {
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) out.push_back(at(x, y));
  return out;
}

bool extract_patch(const Image& image, const Vec2& center, Patch& out) {
  const int side = out.size + 2;
  // Sample offsets are symmetric about the centre: -(size+1)/2 .. (size+1)/2 including the border.
  const double x0 = center.x() - 0.5 * (out.size + 1);
  const double y0 = center.y() - 0.5 * (out.size + 1);
  if (x0 < 0.0 || y0 < 0.0 || x0 + side - 1 >= image.width - 1 || y0 + side - 1 >= image.height - 1)
    return false;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      out.with_border[static_cast<std::size_t>(y) * side + x] = interpolate(image, x0 + x, y0 + y);
  return true;
}

double zmssd(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size() || a.empty()) throw ContractViolation("zmssd needs equal, non-empty patches");
  double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double y = b[i];
    sa += x;
    sb += y;
    saa += x * x;
    sbb += y * y;
    sab += x * y;
  }
  const double n = static_cast<double>(a.size());
  const double v = (saa - sa * sa / n) + (sbb - sb * sb / n) - 2.0 * (sab - sa * sb / n);
  return std::max(v, 0.0);
}

double zmssd(const Patch& a, const Patch& b) {
  if (a.size != b.size) throw ContractViolation("zmssd needs equal patch sizes");
  const auto ia = a.interior();
  const auto ib = b.interior();
  return zmssd(ia, ib);
}

int grid_cell_index(const Vec2& px, int grid_cell, int image_width) {
  const int cols = (image_width + grid_cell - 1) / grid_cell;
  return static_cast<int>(px.y()) / grid_cell * cols + static_cast<int>(px.x()) / grid_cell;
}

std::vector<Feature> detect_features(const ImagePyramid& pyramid, const DetectorOptions& options,
                                     std::span<const Vec2> existing) {
  if (options.grid_cell <= kMatchPatchSize) throw ContractViolation("grid cell must exceed the patch size");
  const Image& base = pyramid[0];
  const int cols = (base.width + options.grid_cell - 1) / options.grid_cell;
  const int rows = (base.height + options.grid_cell - 1) / options.grid_cell;

  std::vector<char> occupied(static_cast<std::size_t>(cols) * rows, 0);
  for (const Vec2& px : existing) {
    if (px.x() < 0 || px.y() < 0 || px.x() >= base.width || px.y() >= base.height) continue;
    occupied[grid_cell_index(px, options.grid_cell, base.width)] = 1;
  }
  const int budget = options.max_features - static_cast<int>(existing.size());
  if (budget <= 0) return {};

  std::vector<Feature> best(occupied.size());
  const int levels = std::min(options.detection_levels, pyramid.size());
  for (int l = 0; l < levels; ++l) {
    const Image& img = pyramid[l];
    const int scale = 1 << l;
    const int border = std::max(4, (options.border + scale - 1) / scale);
    const auto scores = kernels::fast_score_map(img, static_cast<float>(options.fast_threshold), border);
    for (int y = border; y < img.height - border; ++y) {
      for (int x = border; x < img.width - border; ++x) {
        const float s = scores[static_cast<std::size_t>(y) * img.width + x];
        if (s <= 0.0f) continue;
        const Vec2 px((x + 0.5) * scale - 0.5, (y + 0.5) * scale - 0.5);
        const int cell = grid_cell_index(px, options.grid_cell, base.width);
        if (occupied[cell]) continue;
        if (s > best[cell].score) best[cell] = Feature{px, s, l};
      }
    }
  }

  std::vector<Feature> out;
  for (const Feature& f : best)
    if (f.score > options.fast_threshold) out.push_back(f);
  std::stable_sort(out.begin(), out.end(), [](const Feature& a, const Feature& b) { return a.score > b.score; });
  if (static_cast<int>(out.size()) > budget) out.resize(budget);
  return out;
}

}  // namespace priorvo
