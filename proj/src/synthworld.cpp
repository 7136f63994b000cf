#include "priorvo/synthworld.hpp"

#include "priorvo/config.hpp"
#include "priorvo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>

namespace priorvo {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash3(std::uint64_t seed, std::int64_t x, std::int64_t y, std::int64_t z) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ static_cast<std::uint64_t>(x));
  h = mix64(h ^ static_cast<std::uint64_t>(y));
  return mix64(h ^ static_cast<std::uint64_t>(z));
}

// Uniform in [0, 1).
double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double lattice(std::uint64_t seed, std::int64_t x, std::int64_t y, std::int64_t z) {
  return 2.0 * unit(hash3(seed, x, y, z)) - 1.0;
}

double value_noise(std::uint64_t seed, const Vec3& p) {
  const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy),
             iz = static_cast<std::int64_t>(fz);
  const double u = fade(p.x() - fx), v = fade(p.y() - fy), w = fade(p.z() - fz);
  double c[2][2];
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy) {
      const double a = lattice(seed, ix, iy + dy, iz + dz);
      const double b = lattice(seed, ix + 1, iy + dy, iz + dz);
      c[dz][dy] = a + u * (b - a);
    }
  const double c0 = c[0][0] + v * (c[0][1] - c[0][0]);
  const double c1 = c[1][0] + v * (c[1][1] - c[1][0]);
  return c0 + w * (c1 - c0);
}

double relief(const SyntheticScene& s, double x, double y, double* hx, double* hy) {
  const double kx = 2.0 * std::numbers::pi / s.relief_wavelength;
  const double ky = kx / 1.3;
  const double sx = std::sin(kx * x), cx = std::cos(kx * x);
  const double sy = std::sin(ky * y), cy = std::cos(ky * y);
  if (hx) *hx = s.relief_amplitude * kx * cx * cy;
  if (hy) *hy = -s.relief_amplitude * ky * sx * sy;
  return s.relief_amplitude * sx * cy;
}

std::optional<double> hit_wall(const SyntheticScene& s, const Vec3& o, const Vec3& d) {
  if (!(d.z() > 1e-9)) return std::nullopt;
  double t = (s.wall_depth - o.z()) / d.z();
  if (s.relief_amplitude == 0.0) return t > 0.0 ? std::optional<double>(t) : std::nullopt;
  for (int i = 0; i < 50; ++i) {
    double hx = 0.0, hy = 0.0;
    const double h = relief(s, o.x() + t * d.x(), o.y() + t * d.y(), &hx, &hy);
    const double g = o.z() + t * d.z() - s.wall_depth - h;
    const double dg = d.z() - hx * d.x() - hy * d.y();
    const double step = g / dg;
    t -= step;
    if (std::abs(step) <= 1e-13 * std::abs(t)) break;
  }
  return t > 0.0 ? std::optional<double>(t) : std::nullopt;
}

std::optional<double> hit_box(const Box& b, const Vec3& o, const Vec3& d) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (d[k] == 0.0) {
      if (o[k] < b.min[k] || o[k] > b.max[k]) return std::nullopt;
      continue;
    }
    double ta = (b.min[k] - o[k]) / d[k];
    double tb = (b.max[k] - o[k]) / d[k];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  if (!(t0 > 0.0)) return std::nullopt;  // camera inside a box
  return t0;
}

// Shared per-pixel body of both render variants.
void render_pixel(const SyntheticScene& scene, const RigidTransform& pose, int x, int y, float& intensity,
                  float& depth) {
  const PinholeCamera& cam = scene.camera;
  const Vec3 ray_cam((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
  const Vec3 dir = pose.rotation() * ray_cam;
  const auto t = cast_ray(scene, pose.translation(), dir);
  if (!t) {
    intensity = 0.0f;
    depth = -1.0f;
    return;
  }
  intensity = texture_intensity(scene, pose.translation() + *t * dir);
  depth = static_cast<float>(*t);
}

RenderResult make_result(const SyntheticScene& scene) {
  RenderResult r;
  r.image = Image(scene.camera.width, scene.camera.height);
  r.depth.width = scene.camera.width;
  r.depth.height = scene.camera.height;
  r.depth.trained_focal = scene.camera.fx;
  r.depth.values.assign(r.image.data.size(), 0.0f);
  return r;
}

}  // namespace

SyntheticScene SyntheticScene::desk(std::uint64_t seed) {
  SyntheticScene s;
  s.seed = seed;
  s.boxes.push_back({Vec3(-1.7, -0.3, 2.6), Vec3(-0.7, 0.8, 3.4)});
  s.boxes.push_back({Vec3(0.5, -0.9, 3.3), Vec3(1.5, 0.1, 4.2)});
  s.boxes.push_back({Vec3(-0.4, 0.6, 2.2), Vec3(0.4, 1.2, 2.9)});
  return s;
}

std::optional<double> cast_ray(const SyntheticScene& scene, const Vec3& origin, const Vec3& dir) {
  std::optional<double> best = hit_wall(scene, origin, dir);
  for (const Box& b : scene.boxes) {
    const auto t = hit_box(b, origin, dir);
    if (t && (!best || *t < *best)) best = t;
  }
  return best;
}

float texture_intensity(const SyntheticScene& scene, const Vec3& point) {
  double n = 0.0, amp = 1.0, norm = 0.0, cell = scene.texture_cell;
  for (int o = 0; o < scene.texture_octaves; ++o) {
    n += amp * value_noise(scene.seed + 0x51ed27 * static_cast<std::uint64_t>(o + 1), point / cell);
    norm += amp;
    amp *= 0.5;
    cell *= 0.5;
  }
  n /= norm;
  double v = 0.5 + 0.5 * scene.contrast * std::tanh(3.0 * n);
  for (const Landmark& lm : scene.landmarks) {
    const double r2 = (point - lm.position).squaredNorm();
    v *= 1.0 - lm.darkness * std::exp(-0.5 * r2 / (lm.radius * lm.radius));
  }
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

RenderResult render_frame(const SyntheticScene& scene, const RigidTransform& world_from_cam) {
  RenderResult r = make_result(scene);
  const int w = scene.camera.width, h = scene.camera.height;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      render_pixel(scene, world_from_cam, x, y, r.image.data[i], r.depth.values[i]);
    }
  return r;
}

namespace reference {
RenderResult render_frame(const SyntheticScene& scene, const RigidTransform& world_from_cam) {
  RenderResult r = make_result(scene);
  for (int y = 0; y < scene.camera.height; ++y)
    for (int x = 0; x < scene.camera.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * scene.camera.width + x;
      render_pixel(scene, world_from_cam, x, y, r.image.data[i], r.depth.values[i]);
    }
  return r;
}
}  // namespace reference

DepthMap perturb_prior(const DepthMap& truth, const PriorPerturbation& model) {
  DepthMap out = truth;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const float d = truth.values[i];
    if (!DepthMap::valid(d)) continue;
    if (model.invalid_fraction > 0.0 && unit(hash3(model.seed, 2, static_cast<std::int64_t>(i), 0)) < model.invalid_fraction) {
      out.values[i] = -1.0f;
      continue;
    }
    double z = 0.0;
    if (model.log_sigma != 0.0) {
      // Box-Muller from two counter-keyed uniforms.
      const double u1 = 1.0 - unit(hash3(model.seed, 1, static_cast<std::int64_t>(i), 0));
      const double u2 = unit(hash3(model.seed, 1, static_cast<std::int64_t>(i), 1));
      z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
    out.values[i] = static_cast<float>(model.bias * static_cast<double>(d) * std::exp(model.log_sigma * z));
  }
  return out;
}

Image brightness_warp(const Image& image, double gain, double offset) {
  Image out = image;
  for (float& v : out.data) v = static_cast<float>(std::clamp(gain * v + offset, 0.0, 1.0));
  return out;
}

Trajectory scripted_trajectory(const PathSpec& spec) {
  if (spec.frames < 1 || !(spec.fps > 0.0)) throw ConfigError("path needs frames >= 1 and fps > 0");
  Trajectory traj;
  for (int i = 0; i < spec.frames; ++i) {
    const double s = spec.frames > 1 ? static_cast<double>(i) / (spec.frames - 1) : 0.0;
    Mat3 R = Mat3::Identity();
    Vec3 t = Vec3::Zero();
    switch (spec.kind) {
      case PathKind::kLine:
        t = Vec3((s - 0.5) * spec.length, 0.0, 0.0);
        break;
      case PathKind::kArc: {
        const double th = spec.arc_half_angle * (2.0 * s - 1.0);
        R = so3_exp(Vec3(0.0, th, 0.0));
        t = Vec3(0.0, 0.0, spec.arc_radius) + R * Vec3(0.0, 0.0, -spec.arc_radius);
        break;
      }
      case PathKind::kSCurve: {
        const double ph = 2.0 * std::numbers::pi * s;
        t = Vec3((s - 0.5) * spec.length, 0.0, spec.scurve_amplitude * std::sin(ph));
        R = so3_exp(Vec3(0.0, -0.1 * std::cos(ph), 0.0));
        break;
      }
    }
    traj.append(i / spec.fps, RigidTransform(R, t));
  }
  return traj;
}

SceneConfig parse_scene_config(const std::string& text) {
  SceneConfig c;
  PinholeCamera& cam = c.scene.camera;
  bool desk = true;
  for (const KeyValue& kv : parse_key_values(text)) {
    const std::string& k = kv.key;
    if (k == "seed") c.scene.seed = static_cast<std::uint64_t>(to_int(kv));
    else if (k == "width") cam.width = to_int(kv);
    else if (k == "height") cam.height = to_int(kv);
    else if (k == "fx") cam.fx = to_double(kv);
    else if (k == "fy") cam.fy = to_double(kv);
    else if (k == "cx") cam.cx = to_double(kv);
    else if (k == "cy") cam.cy = to_double(kv);
    else if (k == "fps") c.path.fps = to_double(kv);
    else if (k == "frames") c.path.frames = to_int(kv);
    else if (k == "path") {
      if (kv.value == "line") c.path.kind = PathKind::kLine;
      else if (kv.value == "arc") c.path.kind = PathKind::kArc;
      else if (kv.value == "s_curve") c.path.kind = PathKind::kSCurve;
      else throw ConfigError("line " + std::to_string(kv.line) + ": path must be line, arc or s_curve");
    } else if (k == "path_length") c.path.length = to_double(kv);
    else if (k == "arc_radius") c.path.arc_radius = to_double(kv);
    else if (k == "arc_half_angle") c.path.arc_half_angle = to_double(kv);
    else if (k == "scurve_amplitude") c.path.scurve_amplitude = to_double(kv);
    else if (k == "wall_depth") c.scene.wall_depth = to_double(kv);
    else if (k == "relief_amplitude") c.scene.relief_amplitude = to_double(kv);
    else if (k == "relief_wavelength") c.scene.relief_wavelength = to_double(kv);
    else if (k == "boxes") desk = to_bool(kv);
    else if (k == "texture_cell") c.scene.texture_cell = to_double(kv);
    else if (k == "texture_octaves") c.scene.texture_octaves = to_int(kv);
    else if (k == "contrast") c.scene.contrast = to_double(kv);
    else if (k == "prior_bias") c.perturbation.bias = to_double(kv);
    else if (k == "prior_log_sigma") c.perturbation.log_sigma = to_double(kv);
    else if (k == "prior_invalid_fraction") c.perturbation.invalid_fraction = to_double(kv);
    else if (k == "prior_seed") c.perturbation.seed = static_cast<std::uint64_t>(to_int(kv));
    else if (k == "prior_trained_focal") c.prior_trained_focal = to_double(kv);
    else if (k == "write_priors") c.write_priors = to_bool(kv);
    else if (k == "blank_frames") c.blank_frames = to_int_list(kv);
    else unknown_key(kv);
  }
  if (!desk) c.scene.boxes.clear();
  cam = PinholeCamera::make(cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height);
  if (!(c.scene.texture_cell > 0.0) || c.scene.texture_octaves < 1)
    throw ConfigError("texture_cell must be positive and texture_octaves >= 1");
  if (!(c.scene.relief_wavelength > 0.0)) throw ConfigError("relief_wavelength must be positive");
  return c;
}

SceneConfig read_scene_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scene config " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_scene_config(text);
}

void export_dataset(const SceneConfig& config, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (!ec && config.write_priors) fs::create_directories(out_dir / "priors", ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  write_intrinsics({config.scene.camera, config.path.fps}, out_dir / "intrinsics.txt");
  const Trajectory traj = scripted_trajectory(config.path);
  write_trajectory(traj, out_dir / "groundtruth.txt");

  const double f_trained = config.prior_trained_focal > 0.0 ? config.prior_trained_focal : config.scene.camera.fx;
  for (int i = 0; i < static_cast<int>(traj.size()); ++i) {
    RenderResult r = render_frame(config.scene, traj.poses[i].pose);
    if (std::find(config.blank_frames.begin(), config.blank_frames.end(), i) != config.blank_frames.end())
      r.image = brightness_warp(r.image, 1.0, 1.0);
    char name[32];
    std::snprintf(name, sizeof name, "%06d.pgm", i);
    save_pgm(r.image, out_dir / "images" / name);
    if (!config.write_priors) continue;
    DepthMap prior = perturb_prior(r.depth, {config.perturbation.bias, config.perturbation.log_sigma,
                                             config.perturbation.invalid_fraction,
                                             config.perturbation.seed + static_cast<std::uint64_t>(i)});
    if (f_trained != config.scene.camera.fx) {
      // Stored as the network would emit it: depth at the training focal.
      const double k = f_trained / config.scene.camera.fx;
      for (float& d : prior.values)
        if (DepthMap::valid(d)) d = static_cast<float>(d * k);
    }
    prior.trained_focal = f_trained;
    save_depth_map(prior, out_dir / "priors" / prior_filename(i));
  }
}

}  // namespace priorvo
