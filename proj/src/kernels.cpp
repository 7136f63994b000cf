#include "priorvo/kernels.hpp"

#include <algorithm>
#include <array>

namespace priorvo::kernels {
namespace {

// Bresenham circle of radius 3, clockwise from 12 o'clock.
constexpr std::array<std::array<int, 2>, 16> kCircle = {{{0, -3},
                                                         {1, -3},
                                                         {2, -2},
                                                         {3, -1},
                                                         {3, 0},
                                                         {3, 1},
                                                         {2, 2},
                                                         {1, 3},
                                                         {0, 3},
                                                         {-1, 3},
                                                         {-2, 2},
                                                         {-3, 1},
                                                         {-3, 0},
                                                         {-3, -1},
                                                         {-2, -2},
                                                         {-1, -3}}};
constexpr int kArc = 9;

inline float downsample_pixel(const Image& src, int x, int y) {
  const float* r0 = src.data.data() + static_cast<std::size_t>(2 * y) * src.width + 2 * x;
  const float* r1 = r0 + src.width;
  return 0.25f * ((r0[0] + r0[1]) + (r1[0] + r1[1]));
}

inline int score_border(int border) { return std::max(3, border); }

}  // namespace

// Any 9-arc covers at least two of the four compass pixels, so fewer than two that clear
// the threshold with the same polarity means the score cannot exceed it.
static bool compass_test(const Image& img, int x, int y, float threshold) {
  const float p = img.at(x, y);
  int bright = 0, dark = 0;
  for (int i = 0; i < 16; i += 4) {
    const float v = img.at(x + kCircle[i][0], y + kCircle[i][1]) - p;
    bright += v > threshold;
    dark += -v > threshold;
  }
  return bright >= 2 || dark >= 2;
}

float fast_score_at(const Image& img, int x, int y) {
  const float p = img.at(x, y);
  std::array<float, 16> d{};
  for (int i = 0; i < 16; ++i) d[i] = img.at(x + kCircle[i][0], y + kCircle[i][1]) - p;

  float best = 0.0f;
  for (int start = 0; start < 16; ++start) {
    float min_bright = d[start];
    float min_dark = -d[start];
    for (int k = 1; k < kArc; ++k) {
      const float v = d[(start + k) & 15];
      min_bright = std::min(min_bright, v);
      min_dark = std::min(min_dark, -v);
    }
    best = std::max(best, std::max(min_bright, min_dark));
  }
  return best;
}

Image downsample2x(const Image& src) {
  Image dst(src.width / 2, src.height / 2);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < dst.height; ++y)
    for (int x = 0; x < dst.width; ++x) dst.at(x, y) = downsample_pixel(src, x, y);
  return dst;
}

std::vector<float> fast_score_map(const Image& img, float threshold, int border) {
  std::vector<float> scores(img.data.size(), 0.0f);
  const int b = score_border(border);
#pragma omp parallel for schedule(dynamic, 8)
  for (int y = b; y < img.height - b; ++y) {
    for (int x = b; x < img.width - b; ++x) {
      if (!compass_test(img, x, y, threshold)) continue;
      const float s = fast_score_at(img, x, y);
      if (s > threshold) scores[static_cast<std::size_t>(y) * img.width + x] = s;
    }
  }
  return scores;
}

namespace reference {

Image downsample2x(const Image& src) {
  Image dst(src.width / 2, src.height / 2);
  for (int y = 0; y < dst.height; ++y)
    for (int x = 0; x < dst.width; ++x) dst.at(x, y) = downsample_pixel(src, x, y);
  return dst;
}

std::vector<float> fast_score_map(const Image& img, float threshold, int border) {
  std::vector<float> scores(img.data.size(), 0.0f);
  const int b = score_border(border);
  for (int y = b; y < img.height - b; ++y) {
    for (int x = b; x < img.width - b; ++x) {
      if (!compass_test(img, x, y, threshold)) continue;
      const float s = fast_score_at(img, x, y);
      if (s > threshold) scores[static_cast<std::size_t>(y) * img.width + x] = s;
    }
  }
  return scores;
}

}  // namespace reference
}  // namespace priorvo::kernels
