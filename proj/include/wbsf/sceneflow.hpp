#pragma once

#include <memory>
#include <string>
#include <vector>

#include "wbsf/geometry.hpp"
#include "wbsf/matcher.hpp"
#include "wbsf/raster.hpp"

namespace wbsf {

struct SceneFlowParams {
  double alpha1 = 10.0, alpha2 = 10.0;    // epipolar weights
  double beta1 = 31.0, beta2 = 60.0, beta3 = 200.0;  // smoothness of u1, u2, u3
  double psi_eps = 1e-6;                  // penaliser regularisation
  double eta = 0.9;                       // pyramid scale factor, (0,1)
  int warps_per_level = 5;
  int fixed_point_iterations = 5;
  double sor_omega = 1.9;
  int sor_iterations = 30;
  double gamma = 1.0;                     // gradient-constancy weight
  bool sampson_epipolar = false;          // normalised epipolar residual variant
};

/// The two views at two time steps.
struct FourFrames {
  Raster view1_t, view1_t1, view2_t, view2_t1;
};

/// u1: view-1 optical flow t->t+1; u2: stereo flow at t; u3: loop closure.
/// All on the view-1 pixel grid.
struct FourFrameFlows {
  FlowField u1, u2, u3;
};

struct SceneFlowOutput {
  int width = 0, height = 0;
  std::vector<Eigen::Vector3d> position;  // X_t, world coordinates
  std::vector<Eigen::Vector3d> motion;    // X_{t+1} - X_t
  std::vector<std::uint8_t> valid;
  Raster depth;  // z of X_t in camera-1 coordinates
};

/// Regularised l1 penaliser sqrt(s^2 + eps) and its derivative in s^2.
double psi(double s_squared, double eps = 1e-6);
double psi_deriv(double s_squared, double eps = 1e-6);

/// data/epipolar/smoothness are the raw per-family sums; the alpha/beta
/// weights enter only the total.
struct EnergyBreakdown {
  double total = 0.0, data = 0.0, epipolar = 0.0, smoothness = 0.0;
};

enum class EnergyTerm { Data, Epipolar, Smoothness };

/// Discretised four-frame energy at one resolution. Unknowns pack as a 6xN
/// matrix with one column (u1x,u1y,u2x,u2y,u3x,u3y) per pixel.
/// View-1 images are colour-corrected with T on construction; data terms are
/// disabled at occluded pixels and where any warp leaves the image domain.
class SceneFlowSystem {
 public:
  SceneFlowSystem(const FourFrames& images, const Eigen::Matrix3d& F_t,
                  const Eigen::Matrix3d& F_t1, const BitMask& occlusion,
                  const ColourTransform& T, const SceneFlowParams& p);
  ~SceneFlowSystem();
  SceneFlowSystem(SceneFlowSystem&&) noexcept;

  int width() const;
  int height() const;

  EnergyBreakdown energy(const Eigen::MatrixXd& U) const;
  /// Weighted single-family energy (alpha/beta included), for derivative checks.
  double energy(const Eigen::MatrixXd& U, EnergyTerm family) const;
  /// Exact gradient of the weighted family energy, 6xN.
  Eigen::MatrixXd gradient(const Eigen::MatrixXd& U, EnergyTerm family) const;

  /// One linearised warp update (lagged-penaliser fixed point + pointwise
  /// coupled 6x6 SOR); returns the increment, 6xN.
  Eigen::MatrixXd solve_increment(const Eigen::MatrixXd& U) const;

  static Eigen::MatrixXd pack(const FourFrameFlows& flows);
  static FourFrameFlows unpack(const Eigen::MatrixXd& U, int width, int height);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

EnergyBreakdown energy_eval(const FourFrameFlows& flows, const FourFrames& images,
                            const Eigen::Matrix3d& F_t, const Eigen::Matrix3d& F_t1,
                            const BitMask& occlusion, const ColourTransform& T,
                            const SceneFlowParams& p);

/// Coarse-to-fine refinement starting near quarter resolution. Never returns
/// flows with higher full-resolution energy than the initialisation; throws
/// std::runtime_error if the energy turns non-finite.
FourFrameFlows refine(const FourFrameFlows& flows_init, const FourFrames& images,
                      const Eigen::Matrix3d& F_t, const Eigen::Matrix3d& F_t1,
                      const BitMask& occlusion, const ColourTransform& T,
                      const SceneFlowParams& p);

/// u3(x) = flow2(x + u2(x)) - u1(x); invalid where x + u2(x) leaves the domain.
FlowField init_u3(const FlowField& u1, const FlowField& u2, const FlowField& flow2);

/// Triangulates X_t from (x, x+u2) and X_{t+1} from (x+u1, x+u1+u2+u3);
/// motion is their difference. Occluded or degenerate pixels come back invalid.
SceneFlowOutput triangulate_scene_flow(const FourFrameFlows& flows,
                                       const StereoRigFrame& rig_t,
                                       const StereoRigFrame& rig_t1,
                                       const BitMask& occlusion);

/// Binary little-endian PLY: float x,y,z,mx,my,mz + uchar RGB from view 1.
void write_ply(const std::string& path, const SceneFlowOutput& out, const Raster& view1);

struct PlyCloud {
  std::vector<Eigen::Vector3f> position, motion;
  std::vector<Eigen::Matrix<std::uint8_t, 3, 1>> color;
};
PlyCloud read_ply(const std::string& path);

}  // namespace wbsf
