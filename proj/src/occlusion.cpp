#include "wbsf/occlusion.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "wbsf/resample.hpp"

namespace wbsf {

BitMask forward_backward_mask(const FlowField& fwd, const FlowField& bwd, double tau) {
  if (fwd.width() != bwd.width() || fwd.height() != bwd.height())
    throw std::invalid_argument("flow fields must share dimensions");
  const int w = fwd.width(), h = fwd.height();
  BitMask mask(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!fwd.valid(x, y)) {
        mask.set(x, y, true);
        continue;
      }
      const Eigen::Vector2f u = fwd.flow(x, y);
      const double tx = x + u.x(), ty = y + u.y();
      if (tx < 0 || tx > w - 1 || ty < 0 || ty > h - 1) {
        mask.set(x, y, true);
        continue;
      }
      const auto back = sample_flow(bwd, tx, ty);
      if (!back) {
        mask.set(x, y, true);
        continue;
      }
      mask.set(x, y, (u + *back).norm() > tau);
    }
  return mask;
}

namespace {

BitMask dilate(const BitMask& m, int r) {
  const int w = m.width(), h = m.height();
  BitMask out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool v = false;
      for (int dy = -r; dy <= r && !v; ++dy)
        for (int dx = -r; dx <= r && !v; ++dx) {
          const int sx = x + dx, sy = y + dy;
          if (sx >= 0 && sx < w && sy >= 0 && sy < h && m(sx, sy)) v = true;
        }
      out.set(x, y, v);
    }
  return out;
}

BitMask erode(const BitMask& m, int r) {
  const int w = m.width(), h = m.height();
  BitMask out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool v = true;
      for (int dy = -r; dy <= r && v; ++dy)
        for (int dx = -r; dx <= r && v; ++dx) {
          const int sx = x + dx, sy = y + dy;
          if (sx >= 0 && sx < w && sy >= 0 && sy < h && !m(sx, sy)) v = false;
          // outside the image counts as occluded, so it does not erode
        }
      out.set(x, y, v);
    }
  return out;
}

}  // namespace

BitMask morphological_close(const BitMask& m, int radius) {
  if (radius < 0) throw std::invalid_argument("closing radius must be >= 0");
  if (radius == 0) return m;
  return erode(dilate(m, radius), radius);
}

// ---------------------------------------------------------------------------

struct SparseSym::Impl {
  Eigen::SparseMatrix<double> mat;
  mutable std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> chol;

  const Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>& factorization() const {
    if (!chol) {
      chol = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
      chol->compute(mat);
      if (chol->info() != Eigen::Success) {
        // Roundoff can produce a non-positive pivot on a PSD system.
        Eigen::SparseMatrix<double> shifted = mat;
        for (int i = 0; i < shifted.rows(); ++i) shifted.coeffRef(i, i) += 1e-9;
        chol->compute(shifted);
        if (chol->info() != Eigen::Success)
          throw std::runtime_error("sparse Cholesky factorisation failed");
      }
    }
    return *chol;
  }
};

SparseSym::SparseSym(Eigen::SparseMatrix<double> matrix)
    : impl_(std::make_unique<Impl>()) {
  if (matrix.rows() != matrix.cols())
    throw std::invalid_argument("SparseSym requires a square matrix");
  impl_->mat = std::move(matrix);
  impl_->mat.makeCompressed();
}

SparseSym::~SparseSym() = default;
SparseSym::SparseSym(SparseSym&&) noexcept = default;

int SparseSym::dimension() const { return static_cast<int>(impl_->mat.rows()); }
const Eigen::SparseMatrix<double>& SparseSym::matrix() const { return impl_->mat; }

Eigen::VectorXd SparseSym::solve(const Eigen::VectorXd& rhs) const {
  return impl_->factorization().solve(rhs);
}

Eigen::SparseMatrix<double> build_matting_laplacian(const Raster& image, double epsilon) {
  if (image.channels() != 3)
    throw std::invalid_argument("matting Laplacian expects a 3-channel image");
  const int w = image.width(), h = image.height();
  if (w < 3 || h < 3)
    throw std::invalid_argument("image smaller than the 3x3 window");
  const int N = w * h;
  constexpr int win = 9;

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(w - 2) * (h - 2) * win * win);

  Eigen::Matrix<double, 9, 3> colors;
  int index[9];
  for (int cy = 1; cy < h - 1; ++cy)
    for (int cx = 1; cx < w - 1; ++cx) {
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx, ++n) {
          const int x = cx + dx, y = cy + dy;
          index[n] = y * w + x;
          colors.row(n) = Eigen::Vector3d(image(x, y, 0), image(x, y, 1),
                                          image(x, y, 2));
        }
      const Eigen::Vector3d mu = colors.colwise().mean();
      const Eigen::Matrix<double, 9, 3> centered = colors.rowwise() - mu.transpose();
      const Eigen::Matrix3d sigma = centered.transpose() * centered / win;
      const Eigen::Matrix3d reg =
          (sigma + (epsilon / win) * Eigen::Matrix3d::Identity()).inverse();
      const Eigen::Matrix<double, 9, 9> quad = centered * reg * centered.transpose();
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double v = (i == j ? 1.0 : 0.0) - (1.0 + quad(i, j)) / win;
          triplets.emplace_back(index[i], index[j], v);
        }
    }

  Eigen::SparseMatrix<double> L(N, N);
  L.setFromTriplets(triplets.begin(), triplets.end());
  L.makeCompressed();
  return L;
}

FlowField laplacian_fill(const FlowField& flow, const BitMask& mask,
                         const Raster& image, const FillParams& p) {
  const int w = flow.width(), h = flow.height();
  if (mask.width() != w || mask.height() != h || image.width() != w ||
      image.height() != h)
    throw std::invalid_argument("flow, mask and image dimensions must match");
  const std::size_t occluded = mask.count();
  if (occluded == static_cast<std::size_t>(w) * h)
    throw std::invalid_argument("all pixels occluded; system is singular");

  Eigen::SparseMatrix<double> system = build_matting_laplacian(image, p.epsilon);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (!mask(x, y)) system.coeffRef(y * w + x, y * w + x) += p.lambda;
  SparseSym factor(std::move(system));

  FlowField out(w, h);
  // One factorisation, one solve per flow component.
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(w * h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (!mask(x, y)) rhs(y * w + x) = p.lambda * flow.raster()(x, y, c);
    const Eigen::VectorXd sol = factor.solve(rhs);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.raster()(x, y, c) = static_cast<float>(sol(y * w + x));
  }
  return out;
}

FlowField diffusion_fill(const FlowField& flow, const BitMask& mask) {
  const int w = flow.width(), h = flow.height();
  if (mask.width() != w || mask.height() != h)
    throw std::invalid_argument("flow and mask dimensions must match");

  std::vector<int> unknown_index(static_cast<std::size_t>(w) * h, -1);
  int n_unknown = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask(x, y)) unknown_index[y * w + x] = n_unknown++;
  if (n_unknown == w * h)
    throw std::invalid_argument("all pixels occluded; no boundary values");

  FlowField out = flow;
  if (n_unknown == 0) return out;

  constexpr int dx[4] = {-1, 1, 0, 0};
  constexpr int dy[4] = {0, 0, -1, 1};

  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n_unknown, 2);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int row = unknown_index[y * w + x];
      if (row < 0) continue;
      int degree = 0;
      for (int d = 0; d < 4; ++d) {
        const int nx = x + dx[d], ny = y + dy[d];
        if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
        ++degree;
        const int col = unknown_index[ny * w + nx];
        if (col >= 0) {
          triplets.emplace_back(row, col, -1.0);
        } else {
          rhs(row, 0) += flow.raster()(nx, ny, 0);
          rhs(row, 1) += flow.raster()(nx, ny, 1);
        }
      }
      triplets.emplace_back(row, row, static_cast<double>(degree));
    }

  Eigen::SparseMatrix<double> A(n_unknown, n_unknown);
  A.setFromTriplets(triplets.begin(), triplets.end());
  SparseSym factor(std::move(A));
  for (int c = 0; c < 2; ++c) {
    const Eigen::VectorXd sol = factor.solve(rhs.col(c));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int row = unknown_index[y * w + x];
        if (row >= 0) out.raster()(x, y, c) = static_cast<float>(sol(row));
      }
  }
  return out;
}

LocalLinearityReport local_linearity_report(const FlowField& flow,
                                            const Raster& image, double epsilon) {
  const int w = flow.width(), h = flow.height();
  if (image.width() != w || image.height() != h || image.channels() != 3)
    throw std::invalid_argument("report needs a matching 3-channel image");
  if (w < 3 || h < 3) throw std::invalid_argument("image smaller than the window");

  LocalLinearityReport report;
  double sum_mee = 0.0, sum_aae = 0.0;
  constexpr int win = 9;
  for (int cy = 1; cy < h - 1; ++cy)
    for (int cx = 1; cx < w - 1; ++cx) {
      Eigen::Matrix<double, 9, 4> phi;   // [colour, 1]
      Eigen::Matrix<double, 9, 2> u;
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx, ++n) {
          const int x = cx + dx, y = cy + dy;
          phi.row(n) << image(x, y, 0), image(x, y, 1), image(x, y, 2), 1.0;
          u.row(n) = flow.flow(x, y).cast<double>().transpose();
        }
      // min ||phi M - u||^2 + eps ||B||_F^2, M = [B; b'].
      Eigen::Matrix4d G = phi.transpose() * phi;
      G.topLeftCorner<3, 3>() += epsilon * Eigen::Matrix3d::Identity();
      const Eigen::Matrix<double, 4, 2> M = G.ldlt().solve(phi.transpose() * u);
      const Eigen::Matrix<double, 9, 2> fitted = phi * M;
      for (int i = 0; i < win; ++i) {
        const Eigen::Vector2d est = fitted.row(i), gt = u.row(i);
        sum_mee += (est - gt).norm();
        const Eigen::Vector3d a = est.homogeneous(), b = gt.homogeneous();
        const double c = std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0);
        sum_aae += std::acos(c) * 180.0 / M_PI;
      }
      ++report.window_count;
    }
  const double samples = static_cast<double>(report.window_count) * win;
  if (samples > 0) {
    report.mean_endpoint_error = sum_mee / samples;
    report.average_angular_error = sum_aae / samples;
  }
  return report;
}

}  // namespace wbsf
