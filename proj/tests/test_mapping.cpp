#include "priorvo/bootstrap.hpp"
#include "priorvo/errors.hpp"
#include "priorvo/mapping.hpp"
#include "priorvo/synthworld.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <memory>
#include <random>

using namespace priorvo;

namespace {

PinholeCamera cam320() { return PinholeCamera::make(250, 250, 159.5, 119.5, 320, 240); }

SyntheticScene scene320() {
  SyntheticScene s = SyntheticScene::desk(6);
  s.camera = cam320();
  return s;
}

FrameSnapshot snapshot(int id, const RigidTransform& pose, const Image& img) {
  FrameSnapshot f;
  f.id = id;
  f.timestamp = id * 0.1;
  f.pose = pose;
  f.pyramid = std::make_shared<const ImagePyramid>(build_pyramid(img, 3));
  return f;
}

KeyframeRecord keyframe_at(const Vec3& t, int tracked) {
  KeyframeRecord kf;
  kf.frame.pose = RigidTransform(Mat3::Identity(), t);
  kf.frame.tracked.resize(tracked);
  return kf;
}

FrameSnapshot frame_at(const Vec3& t, int tracked) {
  FrameSnapshot f;
  f.pose = RigidTransform(Mat3::Identity(), t);
  f.tracked.resize(tracked);
  return f;
}

double true_depth(const RenderResult& r, const Vec2& px) {
  return r.depth.at(static_cast<int>(std::lround(px.x())), static_cast<int>(std::lround(px.y())));
}

}  // namespace

TEST(KeyframeSelection, Cases) {
  const KeyframeRecord kf = keyframe_at(Vec3::Zero(), 150);
  EXPECT_TRUE(select_keyframe(frame_at(Vec3::Zero(), 150), nullptr, 4.0));
  EXPECT_FALSE(select_keyframe(frame_at(Vec3(0.4, 0, 0), 150), &kf, 4.0));
  EXPECT_TRUE(select_keyframe(frame_at(Vec3(0.5, 0, 0), 150), &kf, 4.0));   // > 0.12 * 4
  EXPECT_FALSE(select_keyframe(frame_at(Vec3(0.1, 0, 0), 80), &kf, 4.0));   // few features, little motion
  EXPECT_TRUE(select_keyframe(frame_at(Vec3(0.13, 0, 0), 80), &kf, 4.0));   // > 0.03 * 4
  EXPECT_TRUE(select_keyframe(frame_at(Vec3::Zero(), 40), &kf, 4.0));       // critical count
}

TEST(SeedCreation, PriorWhereValidAverageElsewhere) {
  const FrameSnapshot host = snapshot(0, RigidTransform(), render_frame(scene320(), RigidTransform()).image);
  DepthMap prior;
  prior.width = 320;
  prior.height = 240;
  prior.trained_focal = 250;
  prior.values.assign(320 * 240, 4.0f);
  for (int y = 0; y < 240; ++y)
    for (int x = 0; x < 160; ++x) prior.values[y * 320 + x] = -1.0f;
  std::vector<Feature> feats;
  for (int i = 0; i < 10; ++i) feats.push_back({Vec2(20 + 30 * i, 100), 1.0, 0});
  feats.push_back({Vec2(1, 1), 1.0, 0});  // patch leaves the image

  const auto seeds = initialize_seeds(cam320(), host, feats, &prior, {5.0, 2.0}, 100);
  ASSERT_EQ(seeds.size(), 10u);
  for (const DepthSeed& s : seeds) {
    if (s.anchor.pixel.x() < 159.5) {
      EXPECT_EQ(s.init, SeedInit::kAverage);
      EXPECT_DOUBLE_EQ(s.mu, 0.2);
      EXPECT_DOUBLE_EQ(s.sigma2, 1.0 / 144.0);
    } else {
      EXPECT_EQ(s.init, SeedInit::kPrior);
      EXPECT_DOUBLE_EQ(s.mu, 0.25);
      EXPECT_DOUBLE_EQ(s.sigma2, 1.0 / 576.0);
    }
    EXPECT_DOUBLE_EQ(s.rho_range, 0.5);
  }
  EXPECT_EQ(initialize_seeds(cam320(), host, feats, &prior, {5.0, 2.0}, 4).size(), 4u);
  SeedCreationOptions literal;
  literal.literal_prior_range = true;
  EXPECT_DOUBLE_EQ(initialize_seeds(cam320(), host, feats, &prior, {5.0, 2.0}, 100, literal).back().rho_range, 0.25);
  EXPECT_THROW(initialize_seeds(cam320(), host, feats, nullptr, {0.0, 2.0}, 10), ContractViolation);
}

TEST(ComputeTau, ShrinksWithBaseline) {
  const PinholeCamera cam = cam320();
  const Bearing b = back_project(cam, Vec2(150, 110));
  const auto t1 = compute_tau(cam, RigidTransform(Mat3::Identity(), Vec3(-0.05, 0, 0)), b, 0.25);
  const auto t2 = compute_tau(cam, RigidTransform(Mat3::Identity(), Vec3(-0.2, 0, 0)), b, 0.25);
  ASSERT_TRUE(t1 && t2);
  EXPECT_GT(*t1, *t2);
  // Fronto-parallel baseline B: rho = d / (f B), so a one-pixel shift gives tau = 1 / (f B).
  EXPECT_NEAR(std::sqrt(*t2), 1.0 / (250 * 0.2), 2e-3 / (250 * 0.2));
  EXPECT_FALSE(compute_tau(cam, RigidTransform(), b, 0.25));  // no baseline
  EXPECT_FALSE(compute_tau(cam, RigidTransform(Mat3::Identity(), Vec3(-0.1, 0, 0)), b, -1.0));
}

TEST(Epipolar, FindsTrueDepth) {
  const SyntheticScene scene = scene320();
  const RenderResult ref = render_frame(scene, RigidTransform());
  const RigidTransform world_from_cur(Mat3::Identity(), Vec3(0.15, 0.02, 0.05));
  const ImagePyramid ref_pyr = build_pyramid(ref.image, 3);
  const ImagePyramid cur_pyr = build_pyramid(render_frame(scene, world_from_cur).image, 3);
  DetectorOptions det;
  det.grid_cell = 25;
  int matched = 0, good = 0;
  for (const Feature& f : detect_features(ref_pyr, det)) {
    const double z = true_depth(ref, f.pixel);
    Patch patch(kMatchPatchSize);
    if (!extract_patch(ref.image, f.pixel, patch)) continue;
    const auto seed = init_seed_prior(z * 1.05, {0, f.pixel, back_project(scene.camera, f.pixel), 0}, patch, 1.0);
    const auto m = epipolar_search(scene.camera, *seed, ref_pyr, cur_pyr, world_from_cur.inverse());
    if (!m) continue;
    ++matched;
    EXPECT_GT(m->measurement.tau2, 0.0);
    if (std::abs(m->measurement.rho - 1.0 / z) < 3.0 * std::sqrt(m->measurement.tau2) + 0.002) ++good;
  }
  EXPECT_GT(matched, 40);
  EXPECT_GT(good, 0.9 * matched);
}

TEST(SeedUpdates, ConvergeAndPromote) {
  const SyntheticScene scene = scene320();
  const RenderResult ref = render_frame(scene, RigidTransform());
  Map map;
  KeyframeRecord kf;
  kf.frame = snapshot(0, RigidTransform(), ref.image);
  DetectorOptions det;
  det.grid_cell = 25;
  const auto feats = detect_features(*kf.frame.pyramid, det);
  kf.seeds = initialize_seeds(scene.camera, kf.frame, feats, &ref.depth, {4.0, 2.0}, 200);
  for (DepthSeed& s : kf.seeds) s.id = map.next_seed_id++;
  const std::size_t initial = kf.seeds.size();
  map.keyframes.emplace(0, std::move(kf));

  int promoted = 0, finished = 0;
  SeedUpdateOptions opts;
  opts.convergence_ratio = ConvergencePreset::kRelaxed;
  for (int i = 1; i <= 10; ++i) {
    const RigidTransform pose(Mat3::Identity(), Vec3(0.07 * i, 0.0, 0.01 * i));
    const FrameSnapshot cur = snapshot(i, pose, render_frame(scene, pose).image);
    const SeedUpdateReport r = update_seeds(scene.camera, map, {0}, cur, opts);
    promoted += static_cast<int>(r.promoted.size());
    finished += static_cast<int>(r.finished.size());
    EXPECT_EQ(map.keyframes.at(0).seeds.size() + finished, initial);
  }
  EXPECT_GT(promoted, static_cast<int>(initial / 2));
  int accurate = 0;
  for (const auto& [id, p] : map.points) {
    const Vec2 px = project(scene.camera, p.position);
    if (std::abs(p.position.z() - true_depth(ref, p.host_pixel)) < 0.02 * p.position.z()) ++accurate;
    EXPECT_LT((px - p.host_pixel).norm(), 1e-6);
  }
  EXPECT_GT(accurate, 0.9 * map.points.size());
}

TEST(BundleAdjust, RecoversPerturbedPoses) {
  const PinholeCamera cam = PinholeCamera::make(500, 500, 319.5, 239.5, 640, 480);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<RigidTransform> truth;
  for (int k = 0; k < 4; ++k) truth.emplace_back(so3_exp(Vec3(0, 0.02 * k, 0)), Vec3(0.15 * k, 0.02 * k, 0));
  std::vector<Vec3> pts;
  for (int i = 0; i < 120; ++i) pts.emplace_back(1.5 * u(rng), 1.0 * u(rng), 4 + u(rng));

  Map map;
  for (int k = 0; k < 4; ++k) {
    KeyframeRecord kf;
    kf.frame.id = k;
    kf.frame.pose = truth[k];
    for (int i = 0; i < 120; ++i) kf.frame.tracked.push_back({i, project(cam, truth[k].inverse() * pts[i])});
    map.keyframes.emplace(k, std::move(kf));
  }
  for (int i = 0; i < 120; ++i) {
    MapPoint p;
    p.id = i;
    p.position = pts[i] + 0.01 * Vec3(u(rng), u(rng), u(rng));
    p.quality = PointQuality::kGood;
    map.points.emplace(i, p);
  }
  map.next_point_id = 120;
  for (int k = 2; k < 4; ++k) {
    Vec6 xi;
    for (int j = 0; j < 6; ++j) xi[j] = (j < 3 ? 0.05 : 0.01) * u(rng);
    map.keyframes.at(k).frame.pose = RigidTransform::exp(xi) * truth[k];
  }

  const BundleAdjustReport r = local_bundle_adjust(cam, map, {0, 1, 2, 3}, {.max_iterations = 30});
  ASSERT_FALSE(r.skipped);
  EXPECT_EQ(r.points, 120);
  EXPECT_LE(r.final_cost, r.initial_cost);
  EXPECT_LT(r.final_cost, 1e-6);
  for (int k = 2; k < 4; ++k)
    EXPECT_LT((map.keyframes.at(k).frame.pose.translation() - truth[k].translation()).norm(), 1e-3);
  for (int k = 0; k < 2; ++k) EXPECT_EQ(map.keyframes.at(k).frame.pose.translation(), truth[k].translation());
}

TEST(BundleAdjust, SingleKeyframeSkipped) {
  Map map;
  map.keyframes.emplace(0, KeyframeRecord{});
  const Map before = map;
  const BundleAdjustReport r = local_bundle_adjust(cam320(), map, {0});
  EXPECT_TRUE(r.skipped);
  EXPECT_EQ(map.keyframes.size(), before.keyframes.size());
}

TEST(TwoView, EssentialSatisfiesEpipolarConstraint) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  const RigidTransform T(so3_exp(Vec3(0.02, -0.05, 0.01)), Vec3(-0.3, 0.05, 0.02));
  std::vector<Vec2> a, b;
  for (int i = 0; i < 30; ++i) {
    const Vec3 p(u(rng), u(rng), 4 + u(rng));
    const Vec3 q = T * p;
    a.emplace_back(p.x() / p.z(), p.y() / p.z());
    b.emplace_back(q.x() / q.z(), q.y() / q.z());
  }
  const Mat3 E = essential_eight_point(a, b);
  for (int i = 0; i < 30; ++i) EXPECT_NEAR(b[i].homogeneous().dot(E * a[i].homogeneous()), 0.0, 1e-9 * E.norm());
  EXPECT_THROW(essential_eight_point({a.begin(), a.begin() + 5}, {b.begin(), b.begin() + 5}), ContractViolation);
}

TEST(TwoView, RecoversMotionUpToScale) {
  const PinholeCamera cam = PinholeCamera::make(500, 500, 319.5, 239.5, 640, 480);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  std::normal_distribution<double> noise(0.0, 0.2);
  const RigidTransform T(so3_exp(Vec3(0.01, -0.04, 0.0)), Vec3(-0.25, 0.03, 0.05));
  std::vector<Vec2> a, b;
  for (int i = 0; i < 150; ++i) {
    const Vec3 p(2 * u(rng), 1.5 * u(rng), 5 + u(rng));
    a.push_back(project(cam, p));
    b.push_back(project(cam, T * p) + Vec2(noise(rng), noise(rng)) + (i % 10 == 0 ? Vec2(30, 5) : Vec2::Zero()));
  }
  const auto r = two_view_geometry(cam, a, b);
  ASSERT_TRUE(r);
  EXPECT_LT((r->T_cur_from_ref.rotation() - T.rotation()).norm(), 0.01);
  EXPECT_GT(r->T_cur_from_ref.translation().normalized().dot(T.translation().normalized()), 0.995);
  std::vector<double> depths;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i % 10 == 0) {
      EXPECT_FALSE(r->inlier[i]);
    }
    if (r->inlier[i]) depths.push_back(r->points_ref[i].z());
  }
  std::nth_element(depths.begin(), depths.begin() + depths.size() / 2, depths.end());
  EXPECT_NEAR(depths[depths.size() / 2], 1.0, 1e-6);
}

TEST(PriorBootstrap, PlacesPointsAtPriorDepth) {
  const SyntheticScene scene = scene320();
  const RenderResult ref = render_frame(scene, RigidTransform());
  const FrameSnapshot frame = snapshot(0, RigidTransform(), ref.image);
  DetectorOptions det;
  det.grid_cell = 25;
  const auto r = bootstrap_from_prior(scene.camera, frame, ref.depth, det, 20);
  ASSERT_TRUE(r);
  ASSERT_GT(r->points.size(), 50u);
  for (const MapPoint& p : r->points) EXPECT_NEAR(p.position.z(), true_depth(ref, p.host_pixel), 1e-5);
  EXPECT_GT(r->stats.d_avg, r->stats.d_min);
  EXPECT_FALSE(bootstrap_from_prior(scene.camera, frame, ref.depth, det, 10000));
}
