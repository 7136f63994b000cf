#pragma once

// Data-parallel inner loops. Every kernel has an OpenMP version (used by the pipeline)
// and a serial reference in `reference::` with identical per-element arithmetic, so the
// two must agree bit for bit.

#include "priorvo/image.hpp"

#include <vector>

namespace priorvo::kernels {

/// 2x2 box filter, output floor(w/2) x floor(h/2).
Image downsample2x(const Image& src);

/// FAST-9 score per pixel (0 where not a corner at `threshold`). Pixels closer than
/// max(3, border) to the edge are 0.
std::vector<float> fast_score_map(const Image& img, float threshold, int border);

/// Score of a single pixel: the largest t such that a 9-arc is entirely brighter
/// than p + t or darker than p - t. Returns 0 for non-positive arcs.
float fast_score_at(const Image& img, int x, int y);

namespace reference {
Image downsample2x(const Image& src);
std::vector<float> fast_score_map(const Image& img, float threshold, int border);
}  // namespace reference

}  // namespace priorvo::kernels
