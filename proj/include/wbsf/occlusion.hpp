#pragma once

#include <memory>

#include <Eigen/SparseCore>

#include "wbsf/raster.hpp"

namespace wbsf {

struct FillParams {
  double fb_threshold = 3.0;  // forward-backward check, pixels
  double epsilon = 1e-4;      // window-regression regulariser
  double lambda = 5.0;        // soft-constraint weight
  int closing_radius = 0;     // 0 = morphological cleaning off
};

/// Marks x occluded iff ||fwd(x) + bwd(x + fwd(x))|| > tau (strictly), the
/// target leaves the image, or fwd(x) is unknown.
BitMask forward_backward_mask(const FlowField& fwd, const FlowField& bwd, double tau);

/// Dilation then erosion with a (2r+1)^2 square element; r = 0 is identity.
BitMask morphological_close(const BitMask& m, int radius);

/// Symmetric PSD sparse matrix with a lazily cached Cholesky factorisation
/// (fill-reducing ordering; 1e-9 diagonal shift retry on pivot failure).
class SparseSym {
 public:
  explicit SparseSym(Eigen::SparseMatrix<double> matrix);
  ~SparseSym();
  SparseSym(SparseSym&&) noexcept;

  int dimension() const;
  const Eigen::SparseMatrix<double>& matrix() const;
  /// Solves this * x = rhs through the cached factorisation.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Matting Laplacian over all interior 3x3 windows of a 3-channel image:
/// L_ij = sum_k [ delta_ij - (1/9)(1 + (I_i - mu_k)' (Sigma_k + eps/9 I)^-1
/// (I_j - mu_k)) ]. Constants span its null space.
Eigen::SparseMatrix<double> build_matting_laplacian(const Raster& image, double epsilon);

/// Solves (L + lambda D_C) U = lambda U_C with one factorisation and one
/// triangular-solve pair per flow component; the whole field is replaced by
/// the solution (soft constraints smooth visible pixels as well).
FlowField laplacian_fill(const FlowField& flow, const BitMask& mask,
                         const Raster& image, const FillParams& p);

/// Homogeneous 4-neighbour graph-Laplacian Dirichlet fill; visible pixels are
/// hard boundary values and pass through bit-identically.
FlowField diffusion_fill(const FlowField& flow, const BitMask& mask);

/// Quality of the per-window linear colour->flow regression (with the epsilon
/// Frobenius penalty): mean endpoint error and average angular error of the
/// fitted values against the input flow, over all interior windows.
struct LocalLinearityReport {
  double mean_endpoint_error = 0.0;   // px
  double average_angular_error = 0.0; // degrees
  std::size_t window_count = 0;
};
LocalLinearityReport local_linearity_report(const FlowField& flow,
                                            const Raster& image, double epsilon);

}  // namespace wbsf
