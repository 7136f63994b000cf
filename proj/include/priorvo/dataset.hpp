#pragma once

// Directory datasets: intrinsics.txt, images/%06d.pgm, optional priors/%06d.dpr and
// groundtruth.txt.

#include "priorvo/geometry.hpp"
#include "priorvo/image.hpp"
#include "priorvo/pipeline.hpp"
#include "priorvo/trajectory.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace priorvo {

struct Dataset {
  std::filesystem::path root;
  PinholeCamera camera;
  double fps = 10.0;
  std::vector<std::filesystem::path> frames;  // index i at position i
  std::vector<bool> has_prior;

  std::size_t size() const { return frames.size(); }
  double timestamp(std::size_t i) const { return static_cast<double>(i) / fps; }
  Image load_frame(std::size_t i) const;
  bool any_priors() const;
  /// Priors from `priors/` of this dataset; empty source when there are none.
  PriorSource priors() const;
  std::optional<Trajectory> groundtruth() const;
};

/// Throws IoError for a missing intrinsics file, no images or a gap in the numbering.
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace priorvo
