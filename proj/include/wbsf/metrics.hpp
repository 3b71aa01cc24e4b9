#pragma once

#include <optional>

#include "wbsf/raster.hpp"
#include "wbsf/sceneflow.hpp"

namespace wbsf {

/// Per-pixel (u, v, d, p): optical flow, disparity magnitude ||u2||, and
/// disparity change ||u2 + u3|| - ||u2||.
struct SceneFlowTupleField {
  int width = 0, height = 0;
  std::vector<Eigen::Vector4d> values;

  const Eigen::Vector4d& at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
};

SceneFlowTupleField make_tuple_field(const FourFrameFlows& flows);

/// Mean |  ||u2|| - gt | over non-occluded pixels. Throws when no pixel is
/// evaluable.
double mae_disparity(const FlowField& u2, const Raster& gt_disparity,
                     const BitMask& occlusion);

double rmse_sceneflow(const SceneFlowTupleField& est, const SceneFlowTupleField& gt,
                      const BitMask& occlusion);

/// Mean angle (degrees) between the homogeneous-augmented vectors
/// (u, v, p, 1); arccos arguments clamp to [-1, 1].
double aae_sceneflow(const SceneFlowTupleField& est, const SceneFlowTupleField& gt,
                     const BitMask& occlusion);

struct Flow2dErrors {
  double mee = 0.0;      // mean endpoint error, px
  double aae = 0.0;      // average angular error, degrees
  std::size_t count = 0; // evaluated pixels
};

/// Endpoint and angular error of a 2D flow. When mask is given, only pixels
/// with mask = true are evaluated; otherwise all mutually valid pixels.
Flow2dErrors flow2d_errors(const FlowField& est, const FlowField& gt,
                           const BitMask* mask = nullptr);

struct EvalReport {
  int frame = 0;
  std::optional<double> mae_matcher, mae_filled, mae_refined;
  std::optional<double> rmse, aae;
  std::optional<double> mee_2d, aae_2d;
  std::size_t evaluated_pixels = 0;
};

}  // namespace wbsf
