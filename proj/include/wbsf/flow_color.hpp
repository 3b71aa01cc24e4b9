#pragma once

#include "wbsf/raster.hpp"

namespace wbsf {

/// RGB colour of a single flow vector normalised by the maximum magnitude,
/// on the standard 55-entry optical-flow colour wheel. Zero flow maps to
/// white, saturated magnitudes to the pure wheel colours.
Eigen::Vector3f flow_wheel_color(float fx, float fy);

/// Colour-codes a flow field. max_magnitude <= 0 selects the robust
/// 99th-percentile magnitude over valid pixels; invalid pixels render black.
Raster flow_to_color(const FlowField& f, float max_magnitude = 0.f);

}  // namespace wbsf
