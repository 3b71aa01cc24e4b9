#include "wbsf/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace wbsf {

namespace {

double angle_deg(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double c = std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

[[noreturn]] void no_pixels() {
  throw std::invalid_argument("no evaluable pixels");
}

}  // namespace

SceneFlowTupleField make_tuple_field(const FourFrameFlows& flows) {
  const int w = flows.u1.width(), h = flows.u1.height();
  SceneFlowTupleField out;
  out.width = w;
  out.height = h;
  out.values.assign(static_cast<std::size_t>(w) * h,
                    Eigen::Vector4d::Constant(std::nan("")));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!flows.u1.valid(x, y) || !flows.u2.valid(x, y) || !flows.u3.valid(x, y))
        continue;
      const Eigen::Vector2d u1 = flows.u1.flow(x, y).cast<double>();
      const Eigen::Vector2d u2 = flows.u2.flow(x, y).cast<double>();
      const Eigen::Vector2d u3 = flows.u3.flow(x, y).cast<double>();
      const double d = u2.norm();
      const double p = (u2 + u3).norm() - d;
      out.values[static_cast<std::size_t>(y) * w + x] =
          Eigen::Vector4d(u1.x(), u1.y(), d, p);
    }
  return out;
}

double mae_disparity(const FlowField& u2, const Raster& gt_disparity,
                     const BitMask& occlusion) {
  const int w = u2.width(), h = u2.height();
  if (gt_disparity.width() != w || gt_disparity.height() != h ||
      occlusion.width() != w || occlusion.height() != h)
    throw std::invalid_argument("dimension mismatch");
  double acc = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (occlusion(x, y) || !u2.valid(x, y)) continue;
      acc += std::abs(u2.flow(x, y).cast<double>().norm() - gt_disparity(x, y));
      ++n;
    }
  if (n == 0) no_pixels();
  return acc / n;
}

double rmse_sceneflow(const SceneFlowTupleField& est, const SceneFlowTupleField& gt,
                      const BitMask& occlusion) {
  if (est.width != gt.width || est.height != gt.height)
    throw std::invalid_argument("dimension mismatch");
  double acc = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < est.height; ++y)
    for (int x = 0; x < est.width; ++x) {
      if (occlusion(x, y)) continue;
      const Eigen::Vector4d a = est.at(x, y), b = gt.at(x, y);
      if (!a.allFinite() || !b.allFinite()) continue;
      acc += (a - b).squaredNorm();
      ++n;
    }
  if (n == 0) no_pixels();
  return std::sqrt(acc / n);
}

double aae_sceneflow(const SceneFlowTupleField& est, const SceneFlowTupleField& gt,
                     const BitMask& occlusion) {
  if (est.width != gt.width || est.height != gt.height)
    throw std::invalid_argument("dimension mismatch");
  double acc = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < est.height; ++y)
    for (int x = 0; x < est.width; ++x) {
      if (occlusion(x, y)) continue;
      const Eigen::Vector4d a = est.at(x, y), b = gt.at(x, y);
      if (!a.allFinite() || !b.allFinite()) continue;
      // angle between (u, v, p, 1) vectors
      Eigen::Vector4d ha(a[0], a[1], a[3], 1.0), hb(b[0], b[1], b[3], 1.0);
      acc += angle_deg(ha, hb);
      ++n;
    }
  if (n == 0) no_pixels();
  return acc / n;
}

Flow2dErrors flow2d_errors(const FlowField& est, const FlowField& gt,
                           const BitMask* mask) {
  const int w = est.width(), h = est.height();
  if (gt.width() != w || gt.height() != h)
    throw std::invalid_argument("dimension mismatch");
  if (mask && (mask->width() != w || mask->height() != h))
    throw std::invalid_argument("mask dimension mismatch");
  Flow2dErrors out;
  double mee = 0.0, aae = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (mask && !(*mask)(x, y)) continue;
      if (!est.valid(x, y) || !gt.valid(x, y)) continue;
      const Eigen::Vector2d a = est.flow(x, y).cast<double>();
      const Eigen::Vector2d b = gt.flow(x, y).cast<double>();
      mee += (a - b).norm();
      const Eigen::Vector3d ha(a.x(), a.y(), 1.0), hb(b.x(), b.y(), 1.0);
      aae += angle_deg(ha, hb);
      ++out.count;
    }
  if (out.count == 0) no_pixels();
  out.mee = mee / out.count;
  out.aae = aae / out.count;
  return out;
}

}  // namespace wbsf
