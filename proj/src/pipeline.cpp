#include "priorvo/pipeline.hpp"

#include "priorvo/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

namespace priorvo {

void PipelineConfig::validate() const {
  if (!(max_features > min_features && min_features > 0)) throw ConfigError("need max_features > min_features > 0");
  if (window < 1) throw ConfigError("window must be >= 1");
  if (pyramid_levels < 1) throw ConfigError("pyramid_levels must be >= 1");
  if (!(fast_threshold > 0.0)) throw ConfigError("fast_threshold must be positive");
  if (grid_cell <= kMatchPatchSize) throw ConfigError("grid_cell must exceed the patch size");
  if (!(convergence_ratio > 0.0)) throw ConfigError("convergence ratio must be positive");
  if (!(keyframe_translation_ratio > 0.0)) throw ConfigError("keyframe_translation_ratio must be positive");
  if (lost_budget < 0) throw ConfigError("lost_budget must be >= 0");
  if (!(seed_a0 > 0.0 && seed_b0 > 0.0)) throw ConfigError("seed_a0 and seed_b0 must be positive");
  if (!(prior_d_floor > 0.0 && prior_d_ceiling > prior_d_floor)) throw ConfigError("need 0 < prior_d_floor < prior_d_ceiling");
  if (bootstrap_min_features < 8) throw ConfigError("bootstrap_min_features must be >= 8");
  if (queue_capacity < 1) throw ConfigError("queue_capacity must be >= 1");
}

PriorSource directory_priors(const std::filesystem::path& dir) {
  return [dir](int index) -> std::shared_ptr<const DepthMap> {
    const auto path = dir / prior_filename(index);
    if (!std::filesystem::exists(path)) return nullptr;
    return std::make_shared<const DepthMap>(load_depth_map(path));
  };
}

namespace {

struct MappingJob {
  FrameSnapshot frame;
  bool keyframe = false;
  std::shared_ptr<const DepthMap> prior;
};

struct KltState {
  FrameSnapshot first;
  std::shared_ptr<const ImagePyramid> prev;
  std::vector<Vec2> first_px;
  std::vector<Vec2> cur_px;
  std::vector<bool> alive;
  std::vector<int> frame_indices;            // frames seen since `first`, excluding it
  std::vector<std::vector<Vec2>> history;    // pixels per such frame
  std::vector<std::vector<bool>> history_alive;
};

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

}  // namespace

struct Pipeline::Impl {
  PinholeCamera cam;
  PipelineConfig cfg;
  PriorSource priors;

  TrackingMode mode = TrackingMode::kBootstrapping;
  bool terminal = false;
  FrameResult terminal_result;
  int frame_index = 0;
  Trajectory traj;

  FrameSnapshot last_frame;
  RigidTransform velocity;  // T_cur_from_last
  RigidTransform bridged_cam_from_world;
  int lost_count = 0;
  std::optional<KltState> klt;

  // Mapping side; `map` is only touched by the mapping step.
  Map map;
  std::vector<SeedOutcome> outcomes;
  mutable std::mutex snapshot_mutex;
  std::shared_ptr<const Map> snapshot = std::make_shared<const Map>();
  std::vector<SeedOutcome> outcomes_snapshot;

  std::thread worker;
  std::mutex queue_mutex;
  std::condition_variable queue_cv;
  std::deque<MappingJob> queue;
  bool busy = false;
  bool stop = false;

  DetectorOptions detector() const {
    DetectorOptions d;
    d.fast_threshold = cfg.fast_threshold;
    d.grid_cell = cfg.grid_cell;
    d.max_features = cfg.max_features;
    d.detection_levels = cfg.pyramid_levels;
    return d;
  }

  SeedCreationOptions seed_options() const {
    SeedCreationOptions o;
    o.init = {cfg.seed_a0, cfg.seed_b0};
    o.literal_prior_range = cfg.literal_prior_range;
    o.bounds = {cfg.prior_d_floor, cfg.prior_d_ceiling};
    return o;
  }

  ReprojectOptions reproject_options() const {
    ReprojectOptions r;
    r.grid_cell = cfg.grid_cell;
    r.max_points = cfg.max_features;
    r.max_level = cfg.pyramid_levels - 1;
    return r;
  }

  std::shared_ptr<const DepthMap> prior_for(int index) const {
    if (!cfg.use_priors || !priors) return nullptr;
    return priors(index);
  }

  // ---- mapping ----

  void publish() {
    auto snap = std::make_shared<const Map>(map);
    std::lock_guard lock(snapshot_mutex);
    snapshot = std::move(snap);
    outcomes_snapshot = outcomes;
  }

  std::shared_ptr<const Map> current_map() const {
    std::lock_guard lock(snapshot_mutex);
    return snapshot;
  }

  void add_keyframe(const MappingJob& job) {
    KeyframeRecord kf;
    kf.frame = job.frame;
    kf.prior = job.prior;
    std::vector<Vec2> existing;
    std::vector<double> depths;
    const RigidTransform cw = job.frame.cam_from_world();
    for (const Observation& o : job.frame.tracked) {
      existing.push_back(o.pixel);
      auto it = map.points.find(o.point_id);
      if (it == map.points.end()) continue;
      ++it->second.observations;
      if (it->second.observations >= 3) it->second.quality = PointQuality::kGood;
      const double z = (cw * it->second.position).z();
      if (z > 0.0) depths.push_back(z);
    }
    SceneStats stats;
    if (!depths.empty()) {
      stats = {median(depths), *std::min_element(depths.begin(), depths.end())};
    } else if (const KeyframeRecord* last = map.last_keyframe()) {
      stats = {last->depth_median, last->depth_min};
    } else {
      stats = {1.0, 0.5};
    }
    kf.depth_median = stats.d_avg;
    kf.depth_min = stats.d_min;

    const int budget = cfg.max_features - static_cast<int>(job.frame.tracked.size());
    if (budget > 0) {
      DetectorOptions det = detector();
      const std::vector<Feature> features = detect_features(*job.frame.pyramid, det, existing);
      kf.seeds = initialize_seeds(cam, job.frame, features, job.prior.get(), stats, budget, seed_options());
      for (DepthSeed& s : kf.seeds) s.id = map.next_seed_id++;
    }
    map.keyframes[job.frame.id] = std::move(kf);
    if (cfg.bundle_adjustment) {
      const auto window = map.window(cfg.window);
      if (window.size() >= 2) local_bundle_adjust(cam, map, window);
    }
  }

  void map_step(const MappingJob& job) {
    if (job.keyframe) add_keyframe(job);
    SeedUpdateOptions opts;
    opts.convergence_ratio = cfg.convergence_ratio;
    opts.epipolar.max_level = cfg.pyramid_levels - 1;
    opts.epipolar.triangulation.min_angle_rad = cfg.min_triangulation_angle;
    const SeedUpdateReport rep = update_seeds(cam, map, map.window(cfg.window), job.frame, opts);
    outcomes.insert(outcomes.end(), rep.finished.begin(), rep.finished.end());
    publish();
  }

  void worker_loop() {
    for (;;) {
      MappingJob job;
      {
        std::unique_lock lock(queue_mutex);
        queue_cv.wait(lock, [&] { return stop || !queue.empty(); });
        if (queue.empty()) return;
        job = std::move(queue.front());
        queue.pop_front();
        busy = true;
      }
      queue_cv.notify_all();
      map_step(job);
      {
        std::lock_guard lock(queue_mutex);
        busy = false;
      }
      queue_cv.notify_all();
    }
  }

  void dispatch(MappingJob job) {
    if (cfg.deterministic) {
      map_step(job);
      return;
    }
    std::unique_lock lock(queue_mutex);
    queue_cv.wait(lock, [&] { return static_cast<int>(queue.size()) < cfg.queue_capacity; });
    queue.push_back(std::move(job));
    lock.unlock();
    queue_cv.notify_all();
  }

  void drain() {
    if (cfg.deterministic || !worker.joinable()) return;
    std::unique_lock lock(queue_mutex);
    queue_cv.wait(lock, [&] { return queue.empty() && !busy; });
  }

  // ---- tracking ----

  struct TrackResult {
    RigidTransform cam_from_world;
    std::vector<Observation> tracked;
  };

  std::optional<TrackResult> track_against(const Map& m, const FrameSnapshot& ref, const RigidTransform& T_cur_from_ref,
                                           const ImagePyramid& cur) const {
    const RigidTransform ref_cw = ref.cam_from_world();
    std::vector<Vec3> pts;
    for (const Observation& o : ref.tracked) {
      auto it = m.points.find(o.point_id);
      if (it == m.points.end() || it->second.quality == PointQuality::kOutlier) continue;
      pts.push_back(ref_cw * it->second.position);
    }
    AlignOptions ao;
    ao.max_level = cfg.pyramid_levels - 1;
    const AlignmentReport align = sparse_image_align(cam, *ref.pyramid, pts, cur, T_cur_from_ref, ao);
    if (align.lost) return std::nullopt;
    const RigidTransform cw = align.pose * ref_cw;
    const std::vector<Observation> obs = reproject_map(cam, m, cur, cw, reproject_options());
    std::vector<PoseObservation> po;
    po.reserve(obs.size());
    for (const Observation& o : obs) po.push_back({m.points.at(o.point_id).position, o.pixel});
    const PoseRefineReport pr = pose_refine(cam, po, cw);
    if (pr.lost) return std::nullopt;
    TrackResult out{pr.cam_from_world, {}};
    for (std::size_t i = 0; i < obs.size(); ++i)
      if (pr.inlier[i]) out.tracked.push_back(obs[i]);
    return out;
  }

  double median_depth(const Map& m, const FrameSnapshot& f) const {
    std::vector<double> d;
    const RigidTransform cw = f.cam_from_world();
    for (const Observation& o : f.tracked) {
      auto it = m.points.find(o.point_id);
      if (it != m.points.end()) d.push_back((cw * it->second.position).z());
    }
    return median(d);
  }

  void accept_tracked(FrameSnapshot& cur, const TrackResult& tr, FrameResult& result, bool after_gap) {
    cur.pose = tr.cam_from_world.inverse();
    cur.tracked = tr.tracked;
    if (!after_gap) velocity = tr.cam_from_world * last_frame.cam_from_world().inverse();
    const auto m = current_map();
    KeyframePolicy policy;
    policy.translation_ratio = cfg.keyframe_translation_ratio;
    policy.min_tracked = cfg.min_features;
    policy.critical_tracked = cfg.min_features / 2;
    const bool kf = select_keyframe(cur, m->last_keyframe(), median_depth(*m, cur), policy);
    spdlog::debug("frame {}: {} tracked{}", cur.id, cur.tracked.size(), kf ? ", keyframe" : "");
    last_frame = cur;
    mode = TrackingMode::kTracking;
    lost_count = 0;
    result.pose = cur.pose;
    result.keyframe = kf;
    dispatch({cur, kf, kf ? prior_for(cur.id) : nullptr});
  }

  bool relocalize(FrameSnapshot& cur, FrameResult& result) {
    const auto m = current_map();
    const KeyframeRecord* kf = m->last_keyframe();
    if (!kf) return false;
    const RigidTransform T_init = bridged_cam_from_world * kf->frame.pose;
    const auto tr = track_against(*m, kf->frame, T_init, *cur.pyramid);
    if (!tr) return false;
    spdlog::info("frame {}: relocalized against keyframe {}", cur.id, kf->frame.id);
    accept_tracked(cur, *tr, result, true);
    return true;
  }

  void go_lost(FrameSnapshot& cur, FrameResult& result) {
    result.bridged = true;
    result.pose = bridged_cam_from_world.inverse();
    ++lost_count;
    mode = TrackingMode::kLost;
    if (lost_count > cfg.lost_budget) {
      spdlog::warn("frame {}: tracking lost for {} frames, giving up", cur.id, lost_count);
      terminal = true;
      result.terminal_lost = true;
    }
  }

  void track_frame(FrameSnapshot& cur, FrameResult& result) {
    const auto m = current_map();
    if (mode == TrackingMode::kTracking) {
      if (const auto tr = track_against(*m, last_frame, velocity, *cur.pyramid)) {
        accept_tracked(cur, *tr, result, false);
        return;
      }
      bridged_cam_from_world = velocity * last_frame.cam_from_world();
      spdlog::info("frame {}: tracking failed", cur.id);
      if (relocalize(cur, result)) return;
      go_lost(cur, result);
      return;
    }
    bridged_cam_from_world = velocity * bridged_cam_from_world;
    if (relocalize(cur, result)) return;
    go_lost(cur, result);
  }

  // ---- bootstrap ----

  void install_initial_map(Map&& initial) {
    drain();
    map = std::move(initial);
    publish();
  }

  bool bootstrap_prior(FrameSnapshot& cur, const DepthMap& prior) {
    const auto res = bootstrap_from_prior(cam, cur, prior, detector(), cfg.bootstrap_min_features,
                                          {cfg.prior_d_floor, cfg.prior_d_ceiling});
    if (!res) return false;
    Map initial;
    cur.pose = RigidTransform();
    for (MapPoint mp : res->points) {
      mp.id = initial.next_point_id++;
      cur.tracked.push_back({mp.id, mp.host_pixel});
      initial.points.emplace(mp.id, std::move(mp));
    }
    KeyframeRecord kf;
    kf.frame = cur;
    kf.prior = nullptr;
    kf.depth_median = res->stats.d_avg;
    kf.depth_min = res->stats.d_min;
    const int budget = cfg.max_features - static_cast<int>(cur.tracked.size());
    if (budget > 0) {
      kf.seeds = initialize_seeds(cam, cur, res->unmatched, nullptr, res->stats, budget, seed_options());
      for (DepthSeed& s : kf.seeds) s.id = initial.next_seed_id++;
    }
    initial.keyframes[cur.id] = std::move(kf);
    install_initial_map(std::move(initial));
    spdlog::info("frame {}: bootstrapped from prior with {} points", cur.id, cur.tracked.size());
    return true;
  }

  void klt_start(const FrameSnapshot& cur) {
    const auto features = detect_features(*cur.pyramid, detector());
    if (static_cast<int>(features.size()) < cfg.bootstrap_min_features) {
      klt.reset();
      return;
    }
    KltState s;
    s.first = cur;
    s.first.pose = RigidTransform();
    s.prev = cur.pyramid;
    for (const Feature& f : features) {
      s.first_px.push_back(f.pixel);
      s.cur_px.push_back(f.pixel);
      s.alive.push_back(true);
    }
    klt = std::move(s);
  }

  bool bootstrap_two_view(FrameSnapshot& cur) {
    if (!klt) {
      klt_start(cur);
      return false;
    }
    KltState& s = *klt;
    FeatureAlignOptions fa;
    fa.max_displacement = 30.0;
    int alive = 0;
    std::vector<double> disparity;
    for (std::size_t i = 0; i < s.cur_px.size(); ++i) {
      if (!s.alive[i]) continue;
      const auto p = track_patch(*s.prev, s.cur_px[i], *cur.pyramid, s.cur_px[i], fa);
      if (!p) {
        s.alive[i] = false;
        continue;
      }
      s.cur_px[i] = *p;
      ++alive;
      disparity.push_back((*p - s.first_px[i]).norm());
    }
    s.prev = cur.pyramid;
    s.frame_indices.push_back(cur.id);
    s.history.push_back(s.cur_px);
    s.history_alive.push_back(s.alive);
    if (alive < cfg.bootstrap_min_features) {
      klt_start(cur);
      return false;
    }
    if (median(disparity) < cfg.bootstrap_min_disparity) return false;

    std::vector<Vec2> a, b;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < s.cur_px.size(); ++i)
      if (s.alive[i]) {
        a.push_back(s.first_px[i]);
        b.push_back(s.cur_px[i]);
        idx.push_back(i);
      }
    const auto tv = two_view_geometry(cam, a, b);
    if (!tv || std::count(tv->inlier.begin(), tv->inlier.end(), true) < cfg.bootstrap_min_features) return false;

    Map initial;
    FrameSnapshot kf0 = s.first;
    cur.pose = tv->T_cur_from_ref.inverse();
    std::vector<std::pair<std::size_t, int>> made;  // feature index -> point id
    for (std::size_t j = 0; j < idx.size(); ++j) {
      if (!tv->inlier[j]) continue;
      MapPoint mp;
      mp.id = initial.next_point_id++;
      mp.position = tv->points_ref[j];
      mp.host_keyframe = kf0.id;
      mp.host_pixel = a[j];
      mp.patch = Patch(kMatchPatchSize);
      if (!extract_patch((*kf0.pyramid)[0], a[j], mp.patch)) continue;
      mp.observations = 2;
      kf0.tracked.push_back({mp.id, a[j]});
      cur.tracked.push_back({mp.id, b[j]});
      made.push_back({idx[j], mp.id});
      initial.points.emplace(mp.id, std::move(mp));
    }

    // Frames between the two views get poses from the tracked pixels.
    RigidTransform prev_cw;
    for (std::size_t f = 0; f + 1 < s.frame_indices.size(); ++f) {
      std::vector<PoseObservation> po;
      for (const auto& [fi, pid] : made)
        if (s.history_alive[f][fi]) po.push_back({initial.points.at(pid).position, s.history[f][fi]});
      const double t = static_cast<double>(f + 1) / s.frame_indices.size();
      const RigidTransform guess = RigidTransform::exp(t * tv->T_cur_from_ref.log());
      const PoseRefineReport pr = pose_refine(cam, po, guess);
      const RigidTransform cw = pr.lost ? guess : pr.cam_from_world;
      traj.poses[static_cast<std::size_t>(s.frame_indices[f])].pose = cw.inverse();
      prev_cw = cw;
    }
    velocity = tv->T_cur_from_ref * prev_cw.inverse();

    KeyframeRecord r0;
    r0.frame = kf0;
    std::vector<double> d0;
    for (const auto& [fi, pid] : made) d0.push_back(initial.points.at(pid).position.z());
    r0.depth_median = median(d0);
    r0.depth_min = *std::min_element(d0.begin(), d0.end());
    initial.keyframes[kf0.id] = std::move(r0);
    if (!traj.poses.empty()) traj.poses[static_cast<std::size_t>(kf0.id)].pose = RigidTransform();
    install_initial_map(std::move(initial));

    klt.reset();
    last_frame = cur;
    mode = TrackingMode::kTracking;
    spdlog::info("frame {}: two-view bootstrap with {} points", cur.id, cur.tracked.size());
    dispatch({cur, true, prior_for(cur.id)});
    return true;
  }

  void bootstrap(FrameSnapshot& cur, FrameResult& result) {
    if (cfg.prior_bootstrap && !klt) {
      if (const auto prior = prior_for(cur.id)) {
        if (bootstrap_prior(cur, *prior)) {
          last_frame = cur;
          velocity = RigidTransform();
          mode = TrackingMode::kTracking;
          result.keyframe = true;
          result.pose = cur.pose;
          return;
        }
        spdlog::info("frame {}: bootstrap deferred", cur.id);
        return;
      }
    }
    if (bootstrap_two_view(cur)) {
      result.keyframe = true;
      result.pose = cur.pose;
    }
  }
};

Pipeline::Pipeline(const PinholeCamera& cam, const PipelineConfig& config, PriorSource priors)
    : impl_(std::make_unique<Impl>()) {
  cam.validate();
  config.validate();
  impl_->cam = cam;
  impl_->cfg = config;
  impl_->priors = std::move(priors);
  if (impl_->cfg.use_priors && !impl_->priors && !impl_->cfg.prior_dir.empty())
    impl_->priors = directory_priors(impl_->cfg.prior_dir);
  if (!config.deterministic) impl_->worker = std::thread([this] { impl_->worker_loop(); });
}

Pipeline::~Pipeline() {
  if (impl_->worker.joinable()) {
    {
      std::lock_guard lock(impl_->queue_mutex);
      impl_->stop = true;
    }
    impl_->queue_cv.notify_all();
    impl_->worker.join();
  }
}

FrameResult Pipeline::process_frame(const Image& image, double timestamp) {
  Impl& s = *impl_;
  if (s.terminal) return s.terminal_result;
  if (image.width != s.cam.width || image.height != s.cam.height)
    throw ContractViolation("frame size does not match the camera");

  FrameSnapshot cur;
  cur.id = s.frame_index++;
  cur.timestamp = timestamp;
  cur.pyramid = std::make_shared<const ImagePyramid>(build_pyramid(image, s.cfg.pyramid_levels));

  FrameResult result;
  result.frame_index = cur.id;
  result.timestamp = timestamp;
  if (s.mode == TrackingMode::kBootstrapping) {
    s.traj.append(timestamp, RigidTransform());
    s.bootstrap(cur, result);
    s.traj.poses.back().pose = result.pose;
  } else {
    s.track_frame(cur, result);
    s.traj.append(timestamp, result.pose);
  }
  result.mode = s.mode;
  if (result.terminal_lost) s.terminal_result = result;
  return result;
}

void Pipeline::finish() { impl_->drain(); }

TrackingMode Pipeline::mode() const { return impl_->mode; }
bool Pipeline::terminal_lost() const { return impl_->terminal; }
const Trajectory& Pipeline::trajectory() const { return impl_->traj; }

Trajectory Pipeline::keyframe_trajectory() const {
  impl_->drain();
  const auto m = impl_->current_map();
  Trajectory t;
  for (const auto& [id, kf] : m->keyframes) t.append(kf.frame.timestamp, kf.frame.pose);
  return t;
}

std::vector<SeedOutcome> Pipeline::seed_outcomes() const {
  impl_->drain();
  const auto m = impl_->current_map();
  std::vector<SeedOutcome> out;
  {
    std::lock_guard lock(impl_->snapshot_mutex);
    out = impl_->outcomes_snapshot;
  }
  for (const auto& [id, kf] : m->keyframes)
    for (const DepthSeed& s : kf.seeds) out.push_back({s.id, s.init, s.update_count, false});
  return out;
}

std::shared_ptr<const Map> Pipeline::map_snapshot() const {
  impl_->drain();
  return impl_->current_map();
}

}  // namespace priorvo
