#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace wbsf {

using Matrix34d = Eigen::Matrix<double, 3, 4>;

struct CameraCalib {
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Matrix34d projection() const {
    Matrix34d P;
    P.leftCols<3>() = R;
    P.col(3) = t;
    return K * P;
  }
  /// Camera centre in world coordinates.
  Eigen::Vector3d center() const { return -R.transpose() * t; }
};

/// Per-time-step calibration bundle for the two views.
struct StereoRigFrame {
  CameraCalib cam1, cam2;
  Eigen::Matrix3d F = Eigen::Matrix3d::Zero();  // view 1 -> view 2
};

/// Projects a world point; throws std::domain_error behind the camera plane
/// only when z is exactly zero.
Eigen::Vector2d project(const Matrix34d& P, const Eigen::Vector3d& X);

struct SampsonResult {
  double cost = 0.0;
  bool degenerate = false;  // both points at the epipoles
};

/// First-order epipolar deviation w_e * (y'Fx)^2 / (|Fx|_12^2 + |F'y|_12^2).
/// Near-zero denominators (points at the epipoles) return 0 with the flag set.
SampsonResult sampson_cost(const Eigen::Matrix3d& F, const Eigen::Vector2d& x,
                           const Eigen::Vector2d& y, double w_e);

enum class EpipolarSide { Image1, Image2 };

/// Unit direction of the epipolar line l = F*point (line in image 2) or
/// l = F^T*point (line in image 1). Sign fixed to a non-negative first
/// component, ties broken toward a non-negative second. Throws
/// std::domain_error when the point is an epipole (l1 = l2 = 0).
Eigen::Vector2d epipolar_direction(const Eigen::Matrix3d& F,
                                   const Eigen::Vector2d& point, EpipolarSide side);

/// Orientation angles (radians) for descriptors at a pixel x of image 1 and at
/// its candidate positions in image 2: image 2 uses the line F*x directly; the
/// image-1 line through x is recovered from F^T applied to a point of F*x.
/// Both depend only on x. Degenerate geometry yields angle 0.
std::pair<double, double> epipolar_orientations(const Eigen::Matrix3d& F,
                                                const Eigen::Vector2d& x);

/// Homogeneous DLT triangulation (4x4 SVD), dehomogenised. Throws
/// std::domain_error for points at infinity or rank-deficient ray pairs.
Eigen::Vector3d triangulate_dlt(const Matrix34d& P1, const Matrix34d& P2,
                                const Eigen::Vector2d& x, const Eigen::Vector2d& y);

/// Fundamental matrix from two projection matrices via the epipole /
/// pseudo-inverse construction: F = [P2*C1]_x * P2 * pinv(P1).
Eigen::Matrix3d fundamental_from_projections(const Matrix34d& P1, const Matrix34d& P2);

/// Calibration JSON:
///   { "frames": [ { "cam1": {"K": [9], "R": [9], "t": [3]},
///                   "cam2": {...}, "F": [9, optional] }, ... ] }
/// Matrices row-major. F is recomputed from the projections when absent.
std::vector<StereoRigFrame> load_calibration(const std::string& path);
void save_calibration(const std::string& path, const std::vector<StereoRigFrame>& frames);

}  // namespace wbsf
