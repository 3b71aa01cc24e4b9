#include "wbsf/synthetic.hpp"

#include <cmath>

#include <Eigen/Dense>
#include <filesystem>
#include <stdexcept>

#include "wbsf/image_io.hpp"
#include "wbsf/rng.hpp"

namespace wbsf {

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double lattice(std::int64_t i, std::int64_t j, std::uint64_t seed) {
  const std::uint64_t h = mix64(static_cast<std::uint64_t>(i) * 0x9e3779b97f4a7c15ull ^
                                static_cast<std::uint64_t>(j) * 0xc2b2ae3d27d4eb4full ^ seed);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Value noise on an infinite lattice, smoothstep-interpolated.
double value_noise(double u, double v, std::uint64_t seed) {
  const double fu = std::floor(u), fv = std::floor(v);
  const auto i = static_cast<std::int64_t>(fu);
  const auto j = static_cast<std::int64_t>(fv);
  const double tu = smoothstep(u - fu), tv = smoothstep(v - fv);
  const double a = lattice(i, j, seed), b = lattice(i + 1, j, seed);
  const double c = lattice(i, j + 1, seed), d = lattice(i + 1, j + 1, seed);
  return (1 - tv) * ((1 - tu) * a + tu * b) + tv * ((1 - tu) * c + tu * d);
}

double octave_noise(double u, double v, std::uint64_t seed) {
  double acc = 0.0, amp = 0.6, norm = 0.0, freq = 1.0;
  for (int o = 0; o < 3; ++o) {
    acc += amp * value_noise(u * freq, v * freq, seed + o * 7919);
    norm += amp;
    amp *= 0.5;
    freq *= 2.1;
  }
  return acc / norm;
}

struct Surface {
  int layer;             // 0 = far/plane, 1 = near
  Eigen::Vector3d point; // world coordinates at the hit time
};

class Scene {
 public:
  explicit Scene(const SyntheticSpec& spec) : spec_(spec) {}

  /// Front-most intersection of a world ray with the scene at time step s.
  std::optional<Surface> hit(const Eigen::Vector3d& origin,
                             const Eigen::Vector3d& dir, int s) const {
    const Eigen::Vector3d shift =
        s == 0 ? Eigen::Vector3d::Zero() : spec_.scene_motion;
    if (spec_.geometry == SyntheticSpec::Geometry::Plane) {
      const auto p = hit_plane(origin, dir, spec_.plane_depth + shift.z());
      if (!p) return std::nullopt;
      return Surface{0, *p};
    }
    if (const auto p = hit_plane(origin, dir, spec_.near_depth + shift.z())) {
      const double x = p->x() - shift.x(), y = p->y() - shift.y();
      if (x >= spec_.near_min_x && x <= spec_.near_max_x && y >= spec_.near_min_y &&
          y <= spec_.near_max_y)
        return Surface{1, *p};
    }
    const auto p = hit_plane(origin, dir, spec_.far_depth + shift.z());
    if (!p) return std::nullopt;
    return Surface{0, *p};
  }

  /// Texture colour of a surface point (time-t coordinates of the point).
  Eigen::Vector3f shade(const Surface& s, int time_step) const {
    const Eigen::Vector3d shift =
        time_step == 0 ? Eigen::Vector3d::Zero() : spec_.scene_motion;
    const Eigen::Vector3d rest = s.point - shift;  // texture rides the surface
    const double u = rest.x() * spec_.texture_frequency;
    const double v = rest.y() * spec_.texture_frequency;
    const std::uint64_t base = spec_.seed * 31 + (s.layer ? 0x51ed2701 : 0x1b873593);
    Eigen::Vector3f c;
    for (int ch = 0; ch < 3; ++ch)
      c[ch] = static_cast<float>(octave_noise(u, v, base + 977 * ch));
    // Chromatically distinct layers so colour edges align with flow edges.
    const Eigen::Vector3f tint = s.layer ? Eigen::Vector3f(0.85f, 0.35f, 0.30f)
                                         : Eigen::Vector3f(0.35f, 0.55f, 0.90f);
    c = 0.55f * c + 0.45f * tint;
    const Eigen::Array3f clamped = c.array().min(1.f).max(0.f);
    return (spec_.texture_lo + clamped * (spec_.texture_hi - spec_.texture_lo))
        .matrix();
  }

 private:
  static std::optional<Eigen::Vector3d> hit_plane(const Eigen::Vector3d& origin,
                                                  const Eigen::Vector3d& dir,
                                                  double z) {
    if (std::abs(dir.z()) < 1e-12) return std::nullopt;
    const double t = (z - origin.z()) / dir.z();
    if (t <= 0.0) return std::nullopt;
    return origin + t * dir;
  }

  const SyntheticSpec& spec_;
};

Eigen::Vector3d pixel_ray_dir(const CameraCalib& cam, double x, double y) {
  return cam.R.transpose() * (cam.K.inverse() * Eigen::Vector3d(x, y, 1.0));
}

}  // namespace

SyntheticSpec SyntheticSpec::plane_scene(int width, int height, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.width = width;
  spec.height = height;
  spec.seed = seed;
  spec.geometry = Geometry::Plane;

  CameraCalib cam;
  cam.K << 1.2 * width, 0, (width - 1) / 2.0, 0, 1.2 * width, (height - 1) / 2.0, 0, 0, 1;
  spec.cams_t[0] = cam;
  spec.cams_t[1] = cam;
  spec.cams_t[1].t = Eigen::Vector3d(-0.25, 0, 0);  // centre at +0.25 along x
  // Small independent hand-shake between the time steps.
  spec.cams_t1 = spec.cams_t;
  spec.cams_t1[0].t += Eigen::Vector3d(-0.010, -0.004, 0.0);
  spec.cams_t1[1].t += Eigen::Vector3d(0.006, -0.008, 0.0);
  return spec;
}

SyntheticSpec SyntheticSpec::two_layer_scene(int width, int height, std::uint64_t seed) {
  SyntheticSpec spec = plane_scene(width, height, seed);
  spec.geometry = Geometry::TwoLayer;
  return spec;
}

SyntheticDataset make_synthetic(const SyntheticSpec& spec) {
  const int w = spec.width, h = spec.height;
  Scene scene(spec);

  const CameraCalib* cams[2][2] = {{&spec.cams_t[0], &spec.cams_t[1]},
                                   {&spec.cams_t1[0], &spec.cams_t1[1]}};
  const Matrix34d P[2][2] = {
      {spec.cams_t[0].projection(), spec.cams_t[1].projection()},
      {spec.cams_t1[0].projection(), spec.cams_t1[1].projection()}};

  SyntheticDataset data;
  data.rig.resize(2);
  for (int s = 0; s < 2; ++s) {
    data.rig[s].cam1 = *cams[s][0];
    data.rig[s].cam2 = *cams[s][1];
    data.rig[s].F = fundamental_from_projections(P[s][0], P[s][1]);
  }

  // Render the four frames.
  Raster* frames[2][2] = {{&data.images.view1_t, &data.images.view2_t},
                          {&data.images.view1_t1, &data.images.view2_t1}};
  for (int s = 0; s < 2; ++s)
    for (int v = 0; v < 2; ++v) {
      Raster img(w, h, 3, 0.f);
      const Eigen::Vector3d C = cams[s][v]->center();
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const auto hit = scene.hit(C, pixel_ray_dir(*cams[s][v], x, y), s);
          if (!hit) throw std::runtime_error("degenerate camera placement: ray misses scene");
          const Eigen::Vector3f c = scene.shade(*hit, s);
          for (int ch = 0; ch < 3; ++ch) img(x, y, ch) = c[ch];
        }
      *frames[s][v] = std::move(img);
    }

  // Contamination of one view (both time steps), then sensor noise.
  if (spec.contamination) {
    const ColourTransform& T = *spec.contamination;
    for (int s = 0; s < 2; ++s) {
      Raster& img = *frames[s][spec.contaminated_view];
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const Eigen::Vector3d c(img(x, y, 0), img(x, y, 1), img(x, y, 2));
          const Eigen::Vector3d cc = T.apply(c);
          for (int ch = 0; ch < 3; ++ch)
            img(x, y, ch) = static_cast<float>(std::clamp(cc[ch], 0.0, 1.0));
        }
    }
  }
  if (spec.noise_sigma > 0.0) {
    for (int s = 0; s < 2; ++s)
      for (int v = 0; v < 2; ++v) {
        Rng rng(mix64(spec.seed ^ (s * 2 + v + 101)));
        Raster& img = *frames[s][v];
        for (std::size_t i = 0; i < img.size(); ++i)
          img.data()[i] = static_cast<float>(std::clamp(
              img.data()[i] + spec.noise_sigma * rng.normal(), 0.0, 1.0));
      }
  }

  // Ground truth on the view-1 grid at t.
  data.gt_u1 = FlowField(w, h);
  data.gt_u2_t = FlowField(w, h);
  data.gt_u3 = FlowField(w, h);
  data.gt_depth = Raster(w, h, 1, 0.f);
  data.gt_occlusion = BitMask(w, h);
  const Eigen::Vector3d C1t = cams[0][0]->center();
  const Eigen::Vector3d C2t = cams[0][1]->center();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto hit = scene.hit(C1t, pixel_ray_dir(*cams[0][0], x, y), 0);
      const Eigen::Vector3d X = hit->point;
      const Eigen::Vector3d X1 = X + spec.scene_motion;
      const Eigen::Vector2d base(x, y);
      const Eigen::Vector2d in2 = project(P[0][1], X);
      const Eigen::Vector2d in1_t1 = project(P[1][0], X1);
      const Eigen::Vector2d in2_t1 = project(P[1][1], X1);
      const Eigen::Vector2d u2 = in2 - base;
      const Eigen::Vector2d u1 = in1_t1 - base;
      const Eigen::Vector2d u3 = in2_t1 - base - u1 - u2;
      data.gt_u2_t.set_flow(x, y, u2.cast<float>());
      data.gt_u1.set_flow(x, y, u1.cast<float>());
      data.gt_u3.set_flow(x, y, u3.cast<float>());
      data.gt_depth(x, y) =
          static_cast<float>((cams[0][0]->R * X + cams[0][0]->t).z());

      // Visibility in view 2 at t: out-of-frame or shadowed by the near layer.
      bool occluded = in2.x() < 0 || in2.x() > w - 1 || in2.y() < 0 || in2.y() > h - 1;
      if (!occluded) {
        const auto hit2 = scene.hit(C2t, pixel_ray_dir(*cams[0][1], in2.x(), in2.y()), 0);
        occluded = !hit2 || (hit2->point - X).norm() > 1e-6 * X.norm() + 1e-9;
      }
      data.gt_occlusion.set(x, y, occluded);
    }

  // Stereo flow at t+1 on the view-1 t+1 grid.
  data.gt_u2_t1 = FlowField(w, h);
  const Eigen::Vector3d C1t1 = cams[1][0]->center();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto hit = scene.hit(C1t1, pixel_ray_dir(*cams[1][0], x, y), 1);
      const Eigen::Vector2d in2 = project(P[1][1], hit->point);
      data.gt_u2_t1.set_flow(x, y, (in2 - Eigen::Vector2d(x, y)).cast<float>());
    }

  // View-2 optical flow on the view-2 grid.
  data.gt_flow2 = FlowField(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto hit = scene.hit(C2t, pixel_ray_dir(*cams[0][1], x, y), 0);
      const Eigen::Vector2d in2_t1 = project(P[1][1], hit->point + spec.scene_motion);
      data.gt_flow2.set_flow(x, y, (in2_t1 - Eigen::Vector2d(x, y)).cast<float>());
    }

  return data;
}

void write_synthetic(const SyntheticDataset& data, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto path = [&](const std::string& name) { return dir + "/" + name; };
  write_png16(path("view1_0000.png"), data.images.view1_t);
  write_png16(path("view1_0001.png"), data.images.view1_t1);
  write_png16(path("view2_0000.png"), data.images.view2_t);
  write_png16(path("view2_0001.png"), data.images.view2_t1);
  save_calibration(path("calibration.json"), data.rig);
  write_flo(path("gt_u1_0000.flo"), data.gt_u1);
  write_flo(path("gt_u2_0000.flo"), data.gt_u2_t);
  write_flo(path("gt_u2_0001.flo"), data.gt_u2_t1);
  write_flo(path("gt_flow2_0000.flo"), data.gt_flow2);
  write_flo(path("gt_u3_0000.flo"), data.gt_u3);
  write_pfm(path("gt_depth_0000.pfm"), data.gt_depth);
  write_pgm_mask(path("gt_occlusion_0000.pgm"), data.gt_occlusion);
}

}  // namespace wbsf
