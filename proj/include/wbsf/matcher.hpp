#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "wbsf/daisy.hpp"
#include "wbsf/geometry.hpp"
#include "wbsf/raster.hpp"

namespace wbsf {

/// Affine RGB adjustment c -> A*c + a mapping image-1 colours toward image 2.
struct ColourTransform {
  Eigen::Matrix3d A = Eigen::Matrix3d::Identity();
  Eigen::Vector3d a = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& c) const { return A * c + a; }
};

struct MatchWeights {
  double w_d = 1.0;
  double w_c = 1.0;
  double w_e = 1.0;
  double w_p = 0.01;
  double tau_p = 50.0;  // pairwise truncation
};

struct MatchPass {
  MatchWeights weights;
  int pmbp_iterations = 2;
  bool refit_colour_transform = false;
  bool cache_descriptors = false;  // dense image-2 descriptors for this pass
};

using PassSchedule = std::vector<MatchPass>;

/// Four passes of two iterations; w_p = 0.01, 0.02, 0.1, 1 and w_c raised to
/// 10 once the colour transform has been estimated after the first pass.
PassSchedule stereo_pass_schedule();
/// Two passes of 6 and 4 iterations with (w_d, w_c, w_e, w_p) = (1, 20, 0,
/// 0.01) and dense descriptor precomputation in the first pass.
PassSchedule flow_pass_schedule();

enum class MatchKind { Stereo, Flow };

struct MatchParams {
  int particles = 2;          // K
  double search_range = 0.0;  // <= 0 selects width/4 (stereo) or width/8 (flow)
  std::uint64_t seed = 0;
  double fb_threshold = 3.0;      // consistency gate for colour-transform fits
  int max_fit_samples = 50000;    // pixel budget for the fit
  std::optional<DaisyParams> daisy_override;
};

/// w_c * ||A*c1 + a - c2||_2 (unsquared).
double colour_cost(const Eigen::Vector3d& c1, const Eigen::Vector3d& c2,
                   const ColourTransform& T, double w_c);

/// min(tau_p, w_p * ||(y1-x1) - (y2-x2)||^2).
double pairwise_cost(const Eigen::Vector2d& x1, const Eigen::Vector2d& y1,
                     const Eigen::Vector2d& x2, const Eigen::Vector2d& y2,
                     double w_p, double tau_p);
double pairwise_cost_flow(const Eigen::Vector2d& u1, const Eigen::Vector2d& u2,
                          double w_p, double tau_p);

/// Least-squares fit of (A, a) over colour pairs, Tikhonov-regularised toward
/// the identity with rho = 1e-4 * pair count (overridable; rho = 0 gives the
/// plain normal equations). Requires at least 4 pairs.
ColourTransform estimate_colour_transform(
    const std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>>& pairs,
    std::optional<double> rho = std::nullopt);

/// Evaluates the combined matching cost c_D + c_C + c_E for one direction.
/// Image-1 descriptors are cached densely; descriptors orient along the
/// epipolar lines when F is present.
class MatchCostContext {
 public:
  MatchCostContext(const Raster& img1, const Raster& img2,
                   const OrientationPyramid& pyr1, const OrientationPyramid& pyr2,
                   std::optional<Eigen::Matrix3d> F, DaisyParams daisy);
  ~MatchCostContext();
  MatchCostContext(MatchCostContext&&) noexcept;

  void set_weights(const MatchWeights& w);
  void set_transform(const ColourTransform& T);
  const ColourTransform& transform() const;
  /// Dense image-2 descriptor cache (integer-pixel positions; lookups
  /// quantise to the nearest pixel while enabled). Flow matching only.
  void set_descriptor_cache(bool enabled);

  double unary(int x1, int y1, const Eigen::Vector2d& y) const;

  // Individual terms, for compositional checks.
  double descriptor_term(int x1, int y1, const Eigen::Vector2d& y) const;
  double colour_term(int x1, int y1, const Eigen::Vector2d& y) const;
  double epipolar_term(int x1, int y1, const Eigen::Vector2d& y) const;

  int width() const;
  int height() const;
  const MatchWeights& weights() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  friend class PmbpEngine;
};

/// Per-pixel particle sets with cached unary costs and the per-directed-edge
/// max-product messages (aligned with the receiving pixel's slots).
class ParticleField {
 public:
  ParticleField() = default;
  ParticleField(int width, int height, int particles);

  int width() const { return width_; }
  int height() const { return height_; }
  int particle_count() const { return k_; }

  Eigen::Vector2f particle(int x, int y, int k) const {
    return particles_[idx(x, y) * k_ + k];
  }
  double unary(int x, int y, int k) const { return unary_[idx(x, y) * k_ + k]; }
  /// Incoming message from the neighbour in direction d (0 left, 1 right,
  /// 2 up, 3 down), evaluated at slot k.
  double message(int x, int y, int d, int k) const {
    return messages_[(idx(x, y) * 4 + d) * k_ + k];
  }
  double belief(int x, int y, int k) const;
  /// Minimum-belief slot; ties resolve to the lowest index.
  int best_slot(int x, int y) const;

 private:
  std::size_t idx(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }
  int width_ = 0, height_ = 0, k_ = 0;
  std::vector<Eigen::Vector2f> particles_;
  std::vector<double> unary_;
  std::vector<double> messages_;
  friend class PmbpEngine;
};

struct PmbpResult {
  FlowField flow;
  std::vector<double> energy_trace;  // Eq-style energy after each pass
  ParticleField particles;           // final optimisation state
};

/// PatchMatch belief propagation over the pass schedule. When init is given,
/// particle 0 seeds from it; remaining particles draw uniformly in the search
/// window. Fixed seeds reproduce bit-identically.
PmbpResult pmbp_optimize(const Raster& img1, const Raster& img2,
                         const OrientationPyramid& pyr1, const OrientationPyramid& pyr2,
                         const std::optional<Eigen::Matrix3d>& F,
                         const PassSchedule& schedule, const MatchParams& params,
                         const std::optional<FlowField>& init = std::nullopt,
                         const ColourTransform& transform = ColourTransform{});

struct BidirectionalMatch {
  FlowField forward;   // image 1 -> image 2
  FlowField backward;  // image 2 -> image 1
  ColourTransform transform;  // final image-1 -> image-2 colour fit
  std::vector<double> forward_trace, backward_trace;
};

/// Runs the stereo or optical-flow schedule in both directions, re-fitting the
/// affine colour transform from forward-backward-consistent pixels after the
/// passes that request it. Stereo requires F.
BidirectionalMatch match_bidirectional(
    MatchKind kind, const Raster& img1, const Raster& img2,
    const std::optional<Eigen::Matrix3d>& F, const MatchParams& params,
    const std::optional<FlowField>& prior_forward = std::nullopt,
    const std::optional<FlowField>& prior_backward = std::nullopt);

}  // namespace wbsf
