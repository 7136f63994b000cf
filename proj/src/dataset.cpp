#include "priorvo/dataset.hpp"

#include "priorvo/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <map>

namespace priorvo {

namespace fs = std::filesystem;

namespace {

std::optional<int> numbered_stem(const fs::path& p, const std::string& ext) {
  if (p.extension() != ext) return std::nullopt;
  const std::string stem = p.stem().string();
  int v = 0;
  const auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), v);
  if (ec != std::errc() || ptr != stem.data() + stem.size() || v < 0) return std::nullopt;
  return v;
}

std::string frame_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d", i);
  return buf;
}

}  // namespace

Image Dataset::load_frame(std::size_t i) const { return load_image(frames.at(i)); }

bool Dataset::any_priors() const { return std::find(has_prior.begin(), has_prior.end(), true) != has_prior.end(); }

PriorSource Dataset::priors() const {
  if (!any_priors()) return {};
  return directory_priors(root / "priors");
}

std::optional<Trajectory> Dataset::groundtruth() const {
  const fs::path p = root / "groundtruth.txt";
  if (!fs::exists(p)) return std::nullopt;
  return read_trajectory(p);
}

Dataset read_dataset(const fs::path& dir) {
  Dataset ds;
  ds.root = dir;
  const fs::path intr = dir / "intrinsics.txt";
  if (!fs::exists(intr)) throw IoError("dataset " + dir.string() + ": missing intrinsics.txt");
  const IntrinsicsFile in = read_intrinsics(intr);
  ds.camera = in.camera;
  ds.fps = in.fps;

  const fs::path img_dir = dir / "images";
  if (!fs::is_directory(img_dir)) throw IoError("dataset " + dir.string() + ": missing images/ directory");
  std::map<int, fs::path> found;
  for (const auto& e : fs::directory_iterator(img_dir)) {
    std::optional<int> idx = numbered_stem(e.path(), ".pgm");
    if (!idx) idx = numbered_stem(e.path(), ".png");
    if (!idx) continue;
    if (!found.emplace(*idx, e.path()).second)
      throw IoError("dataset " + dir.string() + ": frame " + frame_name(*idx) + " present twice");
  }
  if (found.empty()) throw IoError("dataset " + dir.string() + ": no numbered images");
  int expect = 0;
  for (const auto& [idx, path] : found) {
    if (idx != expect) throw IoError("dataset " + dir.string() + ": missing frame " + frame_name(expect));
    ds.frames.push_back(path);
    ++expect;
  }
  const fs::path prior_dir = dir / "priors";
  for (std::size_t i = 0; i < ds.frames.size(); ++i)
    ds.has_prior.push_back(fs::exists(prior_dir / prior_filename(static_cast<int>(i))));
  return ds;
}

}  // namespace priorvo
