#pragma once

#include <array>
#include <optional>
#include <string>

#include "wbsf/geometry.hpp"
#include "wbsf/matcher.hpp"
#include "wbsf/sceneflow.hpp"

namespace wbsf {

/// Procedurally textured plane / two-layer scene observed by two cameras over
/// two time steps, with analytic ground-truth flows, depth and visibility.
struct SyntheticSpec {
  enum class Geometry { Plane, TwoLayer };

  int width = 96, height = 96;
  std::uint64_t seed = 1;
  Geometry geometry = Geometry::Plane;

  double plane_depth = 2.0;  // Plane geometry, world z
  double near_depth = 1.5, far_depth = 2.4;  // TwoLayer
  // Near-layer rectangle in world x/y at time t.
  double near_min_x = -0.35, near_max_x = 0.05;
  double near_min_y = -0.30, near_max_y = 0.30;

  Eigen::Vector3d scene_motion = Eigen::Vector3d::Zero();  // rigid, t -> t+1

  std::array<CameraCalib, 2> cams_t;   // view 1, view 2 at t
  std::array<CameraCalib, 2> cams_t1;  // at t+1

  std::optional<ColourTransform> contamination;  // applied to one view only
  int contaminated_view = 1;                     // 0 or 1
  double noise_sigma = 0.0;                      // additive Gaussian, intensity units

  double texture_frequency = 14.0;  // lattice cells per world unit, base octave
  float texture_lo = 0.10f, texture_hi = 0.78f;

  /// Parallel-rig defaults: f = 1.2*width, baseline 0.25 at depth ~2, small
  /// independent hand-shake between the time steps.
  static SyntheticSpec plane_scene(int width, int height, std::uint64_t seed);
  static SyntheticSpec two_layer_scene(int width, int height, std::uint64_t seed);
};

struct SyntheticDataset {
  FourFrames images;
  std::vector<StereoRigFrame> rig;  // frames t and t+1
  FlowField gt_u1;       // view-1 optical flow t -> t+1
  FlowField gt_u2_t;     // stereo flow at t (view-1 grid)
  FlowField gt_u2_t1;    // stereo flow at t+1 (view-1 t+1 grid)
  FlowField gt_flow2;    // view-2 optical flow t -> t+1 (view-2 grid)
  FlowField gt_u3;       // loop closure (view-1 grid)
  Raster gt_depth;       // view-1 z at t
  BitMask gt_occlusion;  // view-1 pixels invisible in view 2 at t
};

SyntheticDataset make_synthetic(const SyntheticSpec& spec);

/// Emits the dataset in the pipeline's input layout: view{1,2}_%04d.png
/// (16-bit), calibration.json and gt_* flows/depth/occlusion.
void write_synthetic(const SyntheticDataset& data, const std::string& dir);

}  // namespace wbsf
