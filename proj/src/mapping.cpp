#include "priorvo/mapping.hpp"

#include "priorvo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace priorvo {

std::vector<int> Map::window(int n) const {
  std::vector<int> ids;
  for (auto it = keyframes.rbegin(); it != keyframes.rend() && static_cast<int>(ids.size()) < n; ++it)
    ids.push_back(it->first);
  std::reverse(ids.begin(), ids.end());
  return ids;
}

bool select_keyframe(const FrameSnapshot& cur, const KeyframeRecord* last_kf, double median_depth,
                     const KeyframePolicy& policy) {
  if (!last_kf) return true;
  const int tracked = static_cast<int>(cur.tracked.size());
  if (tracked < policy.critical_tracked) return true;
  const double moved = (cur.pose.translation() - last_kf->frame.pose.translation()).norm();
  if (tracked < policy.min_tracked && moved > policy.low_count_translation_ratio * median_depth) return true;
  return moved > policy.translation_ratio * median_depth;
}

std::vector<DepthSeed> initialize_seeds(const PinholeCamera& cam, const FrameSnapshot& host,
                                        const std::vector<Feature>& features, const DepthMap* prior,
                                        const SceneStats& stats, int budget, const SeedCreationOptions& options) {
  if (!(stats.d_avg > 0.0) || !(stats.d_min > 0.0)) throw ContractViolation("scene statistics must be positive");
  std::vector<DepthSeed> seeds;
  for (const Feature& f : features) {
    if (static_cast<int>(seeds.size()) >= budget) break;
    Patch patch(kMatchPatchSize);
    if (!extract_patch((*host.pyramid)[0], f.pixel, patch)) continue;
    SeedAnchor anchor{host.id, f.pixel, back_project(cam, f.pixel), f.level};
    std::optional<DepthSeed> seed;
    if (prior) {
      if (const auto d = sample_prior(*prior, cam, f.pixel, options.bounds)) {
        const std::optional<double> range =
            options.literal_prior_range ? std::nullopt : std::optional<double>(1.0 / stats.d_min);
        seed = init_seed_prior(*d, anchor, patch, range, options.init);
      }
    }
    if (!seed)
      seed = init_seed_average(stats.d_avg, std::min(stats.d_min, stats.d_avg), anchor, patch, options.init);
    seeds.push_back(std::move(*seed));
  }
  return seeds;
}

namespace {

// Clips segment a-b to the rectangle [lo, hi]; false when nothing remains.
bool clip_segment(Vec2& a, Vec2& b, const Vec2& lo, const Vec2& hi) {
  double t0 = 0.0, t1 = 1.0;
  const Vec2 d = b - a;
  for (int k = 0; k < 2; ++k) {
    const double p[2] = {-d[k], d[k]};
    const double q[2] = {a[k] - lo[k], hi[k] - a[k]};
    for (int s = 0; s < 2; ++s) {
      if (p[s] == 0.0) {
        if (q[s] < 0.0) return false;
        continue;
      }
      const double r = q[s] / p[s];
      if (p[s] < 0.0) t0 = std::max(t0, r);
      else t1 = std::min(t1, r);
    }
  }
  if (t0 > t1) return false;
  const Vec2 a0 = a;
  a = a0 + t0 * d;
  b = a0 + t1 * d;
  return true;
}

}  // namespace

std::optional<double> compute_tau(const PinholeCamera& cam, const RigidTransform& T_cur_from_host,
                                  const Bearing& bearing, double rho, const TriangulationLimits& limits) {
  if (!(rho > 0.0)) return std::nullopt;
  const Vec3 pc = T_cur_from_host * point_from_inverse_depth(bearing, rho);
  const Vec3 qc = T_cur_from_host * point_from_inverse_depth(bearing, rho * 1.01);
  if (pc.z() <= 0.0 || qc.z() <= 0.0) return std::nullopt;
  const Vec2 px = project_unchecked(cam, pc);
  const Vec2 along = project_unchecked(cam, qc) - px;
  if (!(along.norm() > 1e-9)) return std::nullopt;
  const Vec2 dir = along.normalized();
  const auto plus = triangulate_inverse_depth(bearing, back_project(cam, px + dir), T_cur_from_host, limits);
  const auto minus = triangulate_inverse_depth(bearing, back_project(cam, px - dir), T_cur_from_host, limits);
  if (!plus || !minus) return std::nullopt;
  const double d = *plus - *minus;
  const double tau2 = 0.25 * d * d;
  if (!(tau2 > 0.0)) return std::nullopt;
  return tau2;
}

std::optional<EpipolarMatch> epipolar_search(const PinholeCamera& cam, const DepthSeed& seed,
                                             const ImagePyramid& host, const ImagePyramid& cur,
                                             const RigidTransform& T_cur_from_host, const EpipolarOptions& options) {
  const SearchInterval iv = search_interval(seed);
  const Bearing& bearing = seed.anchor.bearing;
  const Vec3 near_c = T_cur_from_host * point_from_inverse_depth(bearing, iv.rho_min);
  const Vec3 far_c = T_cur_from_host * point_from_inverse_depth(bearing, iv.rho_max);
  const Vec3 mean_host = point_from_inverse_depth(bearing, seed.mu);
  if (near_c.z() <= 1e-6 || far_c.z() <= 1e-6 || (T_cur_from_host * mean_host).z() <= 1e-6) return std::nullopt;

  Vec2 a = project_unchecked(cam, far_c);
  Vec2 b = project_unchecked(cam, near_c);
  const double margin = options.border + 0.5 * kMatchPatchSize;
  if (!clip_segment(a, b, Vec2(margin, margin), Vec2(cam.width - 1 - margin, cam.height - 1 - margin)))
    return std::nullopt;

  const int max_level = std::min(options.max_level, cur.size() - 1);
  const AffineWarp warp = affine_warp(cam, seed.anchor.pixel, mean_host, T_cur_from_host, max_level);
  Patch ref(kMatchPatchSize);
  if (!warp_patch(host, seed.anchor.pixel, warp, ref)) return std::nullopt;
  const std::vector<float> ref_values = ref.interior();

  const int level = warp.search_level;
  const Image& img = cur[level];
  const Vec2 la = to_level(a, level);
  const Vec2 lb = to_level(b, level);
  const double len = (lb - la).norm();
  const int steps = std::max(1, static_cast<int>(std::ceil(len / options.step)));
  const double half = 0.5 * (kMatchPatchSize - 1);

  std::vector<float> cand(ref_values.size());
  double best = std::numeric_limits<double>::infinity();
  Vec2 best_px = la;
  for (int i = 0; i <= steps; ++i) {
    const Vec2 p = la + (lb - la) * (static_cast<double>(i) / steps);
    if (!inside_with_margin(img, p.x(), p.y(), half + 0.5)) continue;
    for (int y = 0, k = 0; y < kMatchPatchSize; ++y)
      for (int x = 0; x < kMatchPatchSize; ++x, ++k) cand[k] = interpolate(img, p.x() + x - half, p.y() + y - half);
    const double score = zmssd(ref_values, cand);
    if (score < best) {
      best = score;
      best_px = p;
    }
  }
  if (!(best <= options.max_zmssd)) return std::nullopt;

  const auto refined = feature_align(ref, cur, level, from_level(best_px, level), options.align);
  if (!refined) return std::nullopt;
  const auto rho =
      triangulate_inverse_depth(bearing, back_project(cam, refined->pixel), T_cur_from_host, options.triangulation);
  if (!rho || *rho < iv.rho_max || *rho > iv.rho_min) return std::nullopt;
  const auto tau2 = compute_tau(cam, T_cur_from_host, bearing, *rho, options.triangulation);
  if (!tau2) return std::nullopt;
  return EpipolarMatch{{*rho, *tau2}, refined->pixel, best};
}

int promote_seed(Map& map, const DepthSeed& seed) {
  KeyframeRecord& host = map.keyframes.at(seed.anchor.host_keyframe);
  MapPoint mp;
  mp.id = map.next_point_id++;
  mp.position = host.frame.pose * point_from_inverse_depth(seed.anchor.bearing, seed.mu);
  mp.host_keyframe = seed.anchor.host_keyframe;
  mp.host_pixel = seed.anchor.pixel;
  mp.patch = seed.patch;
  mp.observations = 1;
  host.frame.tracked.push_back({mp.id, seed.anchor.pixel});
  map.points.emplace(mp.id, std::move(mp));
  return map.next_point_id - 1;
}

SeedUpdateReport update_seeds(const PinholeCamera& cam, Map& map, const std::vector<int>& window,
                              const FrameSnapshot& cur, const SeedUpdateOptions& options) {
  SeedUpdateReport report;
  const RigidTransform cur_from_world = cur.cam_from_world();
  for (const int kf_id : window) {
    const auto kf_it = map.keyframes.find(kf_id);
    if (kf_it == map.keyframes.end() || kf_id == cur.id) continue;
    std::vector<DepthSeed>& seeds = kf_it->second.seeds;
    const ImagePyramid& host = *kf_it->second.frame.pyramid;
    const RigidTransform T = cur_from_world * kf_it->second.frame.pose;

    const int n = static_cast<int>(seeds.size());
    std::vector<std::optional<EpipolarMatch>> matches(n);
#pragma omp parallel for schedule(dynamic, 8)
    for (int i = 0; i < n; ++i) {
      if (is_converged(seeds[i], options.convergence_ratio)) continue;
      matches[i] = epipolar_search(cam, seeds[i], host, *cur.pyramid, T, options.epipolar);
    }

    std::vector<DepthSeed> kept;
    std::vector<DepthSeed> done;
    for (int i = 0; i < n; ++i) {
      DepthSeed s = seeds[i];
      if (!is_converged(s, options.convergence_ratio)) {
        if (matches[i]) {
          s = update_seed(s, matches[i]->measurement);
          ++report.measurements;
        } else {
          ++report.misses;
        }
      }
      if (is_converged(s, options.convergence_ratio)) {
        report.finished.push_back({s.id, s.init, s.update_count, true});
        done.push_back(std::move(s));
      } else if (s.update_count >= options.cull_min_updates &&
                 outlier_probability(s) > options.cull_outlier_probability) {
        report.finished.push_back({s.id, s.init, s.update_count, false});
        ++report.culled;
      } else {
        kept.push_back(std::move(s));
      }
    }
    seeds = std::move(kept);
    for (const DepthSeed& s : done) report.promoted.push_back(promote_seed(map, s));
  }
  return report;
}

}  // namespace priorvo
