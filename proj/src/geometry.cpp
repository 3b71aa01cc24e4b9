#include "wbsf/geometry.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <json.hpp>

namespace wbsf {

Eigen::Vector2d project(const Matrix34d& P, const Eigen::Vector3d& X) {
  const Eigen::Vector3d h = P * X.homogeneous();
  if (h.z() == 0.0) throw std::domain_error("projection at infinity");
  return h.hnormalized();
}

SampsonResult sampson_cost(const Eigen::Matrix3d& F, const Eigen::Vector2d& x,
                           const Eigen::Vector2d& y, double w_e) {
  const Eigen::Vector3d Fx = F * x.homogeneous();
  const Eigen::Vector3d Fty = F.transpose() * y.homogeneous();
  const double denom = Fx.head<2>().squaredNorm() + Fty.head<2>().squaredNorm();
  if (denom < 1e-12) return {0.0, true};
  const double r = y.homogeneous().dot(Fx);
  return {w_e * r * r / denom, false};
}

namespace {

Eigen::Vector2d line_direction(const Eigen::Vector3d& line) {
  const Eigen::Vector2d normal = line.head<2>();
  if (normal.squaredNorm() < 1e-24)
    throw std::domain_error("point is the epipole; epipolar line undefined");
  Eigen::Vector2d d(-normal.y(), normal.x());
  d.normalize();
  if (d.x() < 0.0 || (d.x() == 0.0 && d.y() < 0.0)) d = -d;
  return d;
}

}  // namespace

Eigen::Vector2d epipolar_direction(const Eigen::Matrix3d& F,
                                   const Eigen::Vector2d& point, EpipolarSide side) {
  const Eigen::Vector3d l = side == EpipolarSide::Image2
                                ? Eigen::Vector3d(F * point.homogeneous())
                                : Eigen::Vector3d(F.transpose() * point.homogeneous());
  return line_direction(l);
}

std::pair<double, double> epipolar_orientations(const Eigen::Matrix3d& F,
                                                const Eigen::Vector2d& x) {
  try {
    const Eigen::Vector3d l2 = F * x.homogeneous();
    const Eigen::Vector2d d2 = line_direction(l2);
    // A point on l2 (nearest the origin); every such point maps back to the
    // epipolar line in image 1 through x.
    const Eigen::Vector2d n = l2.head<2>();
    const Eigen::Vector2d p = -l2.z() * n / n.squaredNorm();
    const Eigen::Vector2d d1 = epipolar_direction(F, p, EpipolarSide::Image1);
    return {std::atan2(d1.y(), d1.x()), std::atan2(d2.y(), d2.x())};
  } catch (const std::domain_error&) {
    return {0.0, 0.0};
  }
}

Eigen::Vector3d triangulate_dlt(const Matrix34d& P1, const Matrix34d& P2,
                                const Eigen::Vector2d& x, const Eigen::Vector2d& y) {
  Eigen::Matrix4d A;
  A.row(0) = x.x() * P1.row(2) - P1.row(0);
  A.row(1) = x.y() * P1.row(2) - P1.row(1);
  A.row(2) = y.x() * P2.row(2) - P2.row(0);
  A.row(3) = y.y() * P2.row(2) - P2.row(1);
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(2) < 1e-12 * sv(0))
    throw std::domain_error("degenerate triangulation: identical rays");
  const Eigen::Vector4d X = svd.matrixV().col(3);
  if (std::abs(X(3)) < 1e-12 * X.norm())
    throw std::domain_error("triangulated point at infinity");
  return X.head<3>() / X(3);
}

Eigen::Matrix3d fundamental_from_projections(const Matrix34d& P1, const Matrix34d& P2) {
  Eigen::JacobiSVD<Matrix34d> svd(P1, Eigen::ComputeFullV);
  const Eigen::Vector4d C1 = svd.matrixV().col(3);  // camera-1 centre
  const Eigen::Vector3d e2 = P2 * C1;
  Eigen::Matrix3d e2x;
  e2x << 0, -e2.z(), e2.y(), e2.z(), 0, -e2.x(), -e2.y(), e2.x(), 0;
  const Eigen::Matrix<double, 4, 3> P1pinv =
      P1.transpose() * (P1 * P1.transpose()).inverse();
  return e2x * P2 * P1pinv;
}

namespace {

using nlohmann::json;

Eigen::Matrix3d mat3_from(const json& a, const std::string& what) {
  if (!a.is_array() || a.size() != 9)
    throw std::runtime_error("calibration: " + what + " must be 9 floats");
  Eigen::Matrix3d m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = a[i].get<double>();
  return m;
}

Eigen::Vector3d vec3_from(const json& a, const std::string& what) {
  if (!a.is_array() || a.size() != 3)
    throw std::runtime_error("calibration: " + what + " must be 3 floats");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

CameraCalib camera_from(const json& j, const std::string& what) {
  if (!j.is_object()) throw std::runtime_error("calibration: " + what + " must be an object");
  CameraCalib cam;
  cam.K = mat3_from(j.at("K"), what + ".K");
  cam.R = mat3_from(j.at("R"), what + ".R");
  cam.t = vec3_from(j.at("t"), what + ".t");

  if (cam.K(0, 0) <= 0 || cam.K(1, 1) <= 0 || cam.K(2, 2) <= 0)
    throw std::runtime_error("calibration: " + what + ".K diagonal must be positive");
  const double knorm = cam.K.norm();
  if (std::abs(cam.K(1, 0)) + std::abs(cam.K(2, 0)) + std::abs(cam.K(2, 1)) > 1e-9 * knorm)
    throw std::runtime_error("calibration: " + what + ".K must be upper-triangular");
  if (std::abs(cam.K.determinant()) < 1e-12 * knorm * knorm * knorm)
    throw std::runtime_error("calibration: " + what + ".K is not invertible");
  if ((cam.R.transpose() * cam.R - Eigen::Matrix3d::Identity()).norm() > 1e-6)
    throw std::runtime_error("calibration: " + what + ".R is not orthonormal");
  if (cam.R.determinant() < 0)
    throw std::runtime_error("calibration: " + what + ".R has determinant -1");
  return cam;
}

json camera_to(const CameraCalib& cam) {
  json j;
  json K = json::array(), R = json::array(), t = json::array();
  for (int i = 0; i < 9; ++i) K.push_back(cam.K(i / 3, i % 3));
  for (int i = 0; i < 9; ++i) R.push_back(cam.R(i / 3, i % 3));
  for (int i = 0; i < 3; ++i) t.push_back(cam.t(i));
  j["K"] = K;
  j["R"] = R;
  j["t"] = t;
  return j;
}

}  // namespace

std::vector<StereoRigFrame> load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open calibration file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw std::runtime_error("calibration: invalid JSON: " + std::string(e.what()));
  }
  if (!doc.is_object() || !doc.contains("frames") || !doc["frames"].is_array())
    throw std::runtime_error("calibration: missing \"frames\" array");

  std::vector<StereoRigFrame> frames;
  for (const auto& jf : doc["frames"]) {
    StereoRigFrame frame;
    frame.cam1 = camera_from(jf.at("cam1"), "cam1");
    frame.cam2 = camera_from(jf.at("cam2"), "cam2");
    if (jf.contains("F"))
      frame.F = mat3_from(jf["F"], "F");
    else
      frame.F = fundamental_from_projections(frame.cam1.projection(),
                                             frame.cam2.projection());
    frames.push_back(frame);
  }
  return frames;
}

void save_calibration(const std::string& path, const std::vector<StereoRigFrame>& frames) {
  json doc;
  doc["frames"] = json::array();
  for (const auto& f : frames) {
    json jf;
    jf["cam1"] = camera_to(f.cam1);
    jf["cam2"] = camera_to(f.cam2);
    json F = json::array();
    for (int i = 0; i < 9; ++i) F.push_back(f.F(i / 3, i % 3));
    jf["F"] = F;
    doc["frames"].push_back(jf);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write calibration file: " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace wbsf
