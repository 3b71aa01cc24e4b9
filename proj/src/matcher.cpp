#include "wbsf/matcher.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "wbsf/resample.hpp"
#include "wbsf/rng.hpp"

namespace wbsf {

PassSchedule stereo_pass_schedule() {
  PassSchedule s;
  const double wp[4] = {0.01, 0.02, 0.1, 1.0};
  for (int p = 0; p < 4; ++p) {
    MatchPass pass;
    pass.weights = {1.0, p == 0 ? 1.0 : 10.0, 1.0, wp[p], 50.0};
    pass.pmbp_iterations = 2;
    pass.refit_colour_transform = true;
    s.push_back(pass);
  }
  return s;
}

PassSchedule flow_pass_schedule() {
  PassSchedule s;
  MatchPass pass;
  pass.weights = {1.0, 20.0, 0.0, 0.01, 50.0};
  pass.pmbp_iterations = 6;
  pass.cache_descriptors = true;
  s.push_back(pass);
  pass.pmbp_iterations = 4;
  pass.cache_descriptors = false;
  s.push_back(pass);
  return s;
}

double colour_cost(const Eigen::Vector3d& c1, const Eigen::Vector3d& c2,
                   const ColourTransform& T, double w_c) {
  return w_c * (T.A * c1 + T.a - c2).norm();
}

double pairwise_cost(const Eigen::Vector2d& x1, const Eigen::Vector2d& y1,
                     const Eigen::Vector2d& x2, const Eigen::Vector2d& y2,
                     double w_p, double tau_p) {
  return pairwise_cost_flow(y1 - x1, y2 - x2, w_p, tau_p);
}

double pairwise_cost_flow(const Eigen::Vector2d& u1, const Eigen::Vector2d& u2,
                          double w_p, double tau_p) {
  return std::min(tau_p, w_p * (u1 - u2).squaredNorm());
}

ColourTransform estimate_colour_transform(
    const std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>>& pairs,
    std::optional<double> rho_opt) {
  if (pairs.size() < 4)
    throw std::invalid_argument("colour transform fit needs at least 4 pairs");
  const double rho = rho_opt.value_or(1e-4 * static_cast<double>(pairs.size()));

  // Homogeneous-augmented normal equations: M (sum phi phi^T + rho I) =
  // sum c2 phi^T + rho [I 0], with phi = [c1; 1] and M = [A a].
  Eigen::Matrix4d G = rho * Eigen::Matrix4d::Identity();
  Eigen::Matrix<double, 3, 4> rhs = Eigen::Matrix<double, 3, 4>::Zero();
  rhs.leftCols<3>() = rho * Eigen::Matrix3d::Identity();
  for (const auto& [c1, c2] : pairs) {
    const Eigen::Vector4d phi = c1.homogeneous();
    G += phi * phi.transpose();
    rhs += c2 * phi.transpose();
  }
  const Eigen::Matrix<double, 4, 3> sol =
      G.ldlt().solve(rhs.transpose());
  ColourTransform T;
  T.A = sol.topRows<3>().transpose();
  T.a = sol.row(3).transpose();
  return T;
}

// ---------------------------------------------------------------------------
// Cost context

struct MatchCostContext::Impl {
  const Raster& img1;
  const Raster& img2;
  const OrientationPyramid& pyr1;
  const OrientationPyramid& pyr2;
  std::optional<Eigen::Matrix3d> F;
  DaisyParams daisy;

  MatchWeights weights;
  ColourTransform transform;

  // Per-pixel epipolar orientations (radians); zero without F.
  std::vector<float> theta1, theta2;

  Eigen::MatrixXf desc1;        // image-1 descriptors, one column per pixel
  Eigen::MatrixXf desc2_cache;  // optional dense image-2 descriptors
  bool cache_enabled = false;

  Impl(const Raster& i1, const Raster& i2, const OrientationPyramid& p1,
       const OrientationPyramid& p2, std::optional<Eigen::Matrix3d> f, DaisyParams d)
      : img1(i1), img2(i2), pyr1(p1), pyr2(p2), F(std::move(f)), daisy(d) {
    if (img1.width() != img2.width() || img1.height() != img2.height())
      throw std::invalid_argument("matching requires equal image dimensions");
    if (pyr1.params().rings != daisy.rings ||
        pyr1.params().orientations != daisy.orientations ||
        pyr2.params().rings != daisy.rings ||
        pyr2.params().orientations != daisy.orientations)
      throw std::invalid_argument("pyramid layout does not match descriptor params");
    const int w = img1.width(), h = img1.height();
    theta1.assign(static_cast<std::size_t>(w) * h, 0.f);
    theta2.assign(static_cast<std::size_t>(w) * h, 0.f);
    if (F) {
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const auto [t1, t2] = epipolar_orientations(*F, {double(x), double(y)});
          theta1[static_cast<std::size_t>(y) * w + x] = static_cast<float>(t1);
          theta2[static_cast<std::size_t>(y) * w + x] = static_cast<float>(t2);
        }
    }
    desc1.resize(daisy.descriptor_length(), static_cast<Eigen::Index>(w) * h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        desc1.col(static_cast<Eigen::Index>(i)) =
            daisy_descriptor(pyr1, {double(x), double(y)}, theta1[i], daisy);
      }
  }

  void enable_cache(bool on) {
    cache_enabled = on && !F;  // orientation varies with x under F
    if (cache_enabled && desc2_cache.size() == 0) {
      const int w = img2.width(), h = img2.height();
      desc2_cache.resize(daisy.descriptor_length(), static_cast<Eigen::Index>(w) * h);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          desc2_cache.col(static_cast<Eigen::Index>(y) * w + x) =
              daisy_descriptor(pyr2, {double(x), double(y)}, 0.0, daisy);
    }
  }

  std::size_t pix(int x, int y) const {
    return static_cast<std::size_t>(y) * img1.width() + x;
  }

  double desc_term(int x1, int y1, const Eigen::Vector2d& y) const {
    if (weights.w_d == 0.0) return 0.0;
    const auto d1 = desc1.col(static_cast<Eigen::Index>(pix(x1, y1)));
    if (cache_enabled) {
      const int cx = std::clamp(static_cast<int>(std::lround(y.x())), 0, img2.width() - 1);
      const int cy = std::clamp(static_cast<int>(std::lround(y.y())), 0, img2.height() - 1);
      const auto d2 = desc2_cache.col(static_cast<Eigen::Index>(cy) * img2.width() + cx);
      return weights.w_d * static_cast<double>((d1 - d2).squaredNorm());
    }
    const Eigen::VectorXf d2 = daisy_descriptor(pyr2, y, theta2[pix(x1, y1)], daisy);
    return weights.w_d * static_cast<double>((d1 - d2).squaredNorm());
  }

  double col_term(int x1, int y1, const Eigen::Vector2d& y) const {
    if (weights.w_c == 0.0) return 0.0;
    Eigen::Vector3d c1, c2;
    if (img1.channels() == 3) {
      c1 = Eigen::Vector3d(img1(x1, y1, 0), img1(x1, y1, 1), img1(x1, y1, 2));
      c2 = bilinear_sample3(img2, y.x(), y.y()).cast<double>();
    } else {
      const double g1 = img1(x1, y1, 0);
      const double g2 = bilinear_sample1(img2, y.x(), y.y());
      c1 = Eigen::Vector3d::Constant(g1);
      c2 = Eigen::Vector3d::Constant(g2);
    }
    return colour_cost(c1, c2, transform, weights.w_c);
  }

  double epi_term(int x1, int y1, const Eigen::Vector2d& y) const {
    if (!F || weights.w_e == 0.0) return 0.0;
    return sampson_cost(*F, {double(x1), double(y1)}, y, weights.w_e).cost;
  }
};

MatchCostContext::MatchCostContext(const Raster& img1, const Raster& img2,
                                   const OrientationPyramid& pyr1,
                                   const OrientationPyramid& pyr2,
                                   std::optional<Eigen::Matrix3d> F, DaisyParams daisy)
    : impl_(std::make_unique<Impl>(img1, img2, pyr1, pyr2, std::move(F), daisy)) {}

MatchCostContext::~MatchCostContext() = default;
MatchCostContext::MatchCostContext(MatchCostContext&&) noexcept = default;

void MatchCostContext::set_weights(const MatchWeights& w) { impl_->weights = w; }
void MatchCostContext::set_transform(const ColourTransform& T) { impl_->transform = T; }
const ColourTransform& MatchCostContext::transform() const { return impl_->transform; }
void MatchCostContext::set_descriptor_cache(bool enabled) { impl_->enable_cache(enabled); }

double MatchCostContext::unary(int x1, int y1, const Eigen::Vector2d& y) const {
  return impl_->desc_term(x1, y1, y) + impl_->col_term(x1, y1, y) +
         impl_->epi_term(x1, y1, y);
}
double MatchCostContext::descriptor_term(int x1, int y1, const Eigen::Vector2d& y) const {
  return impl_->desc_term(x1, y1, y);
}
double MatchCostContext::colour_term(int x1, int y1, const Eigen::Vector2d& y) const {
  return impl_->col_term(x1, y1, y);
}
double MatchCostContext::epipolar_term(int x1, int y1, const Eigen::Vector2d& y) const {
  return impl_->epi_term(x1, y1, y);
}
int MatchCostContext::width() const { return impl_->img1.width(); }
int MatchCostContext::height() const { return impl_->img1.height(); }
const MatchWeights& MatchCostContext::weights() const { return impl_->weights; }

// ---------------------------------------------------------------------------
// Particle field

ParticleField::ParticleField(int width, int height, int particles)
    : width_(width), height_(height), k_(particles),
      particles_(static_cast<std::size_t>(width) * height * particles,
                 Eigen::Vector2f::Zero()),
      unary_(particles_.size(), 0.0),
      messages_(particles_.size() * 4, 0.0) {
  if (particles < 1) throw std::invalid_argument("need at least one particle");
}

double ParticleField::belief(int x, int y, int k) const {
  const std::size_t i = idx(x, y);
  double b = unary_[i * k_ + k];
  for (int d = 0; d < 4; ++d) b += messages_[(i * 4 + d) * k_ + k];
  return b;
}

int ParticleField::best_slot(int x, int y) const {
  int best = 0;
  double best_b = belief(x, y, 0);
  for (int k = 1; k < k_; ++k) {
    const double b = belief(x, y, k);
    if (b < best_b) {
      best_b = b;
      best = k;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// PMBP engine

namespace {
constexpr int kDx[4] = {-1, 1, 0, 0};
constexpr int kDy[4] = {0, 0, -1, 1};
inline int opposite(int d) { return d ^ 1; }
}  // namespace

class PmbpEngine {
 public:
  PmbpEngine(MatchCostContext& ctx, const MatchParams& params, std::uint64_t seed)
      : ctx_(ctx), params_(params), rng_(seed),
        w_(ctx.width()), h_(ctx.height()), k_(params.particles),
        field_(w_, h_, k_) {
    if (k_ > 16) throw std::invalid_argument("particle count capped at 16");
    range_ = params.search_range;
  }

  void initialize(const FlowField* prior) {
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x)
        for (int k = 0; k < k_; ++k) {
          Eigen::Vector2f u;
          if (k == 0 && prior && prior->valid(x, y))
            u = prior->flow(x, y);
          else
            u = Eigen::Vector2f(static_cast<float>(rng_.uniform(-range_, range_)),
                                static_cast<float>(rng_.uniform(-range_, range_)));
          set_particle(x, y, k, u);
        }
  }

  void begin_pass(const MatchPass& pass, const ColourTransform& T) {
    ctx_.set_weights(pass.weights);
    ctx_.set_transform(T);
    ctx_.set_descriptor_cache(pass.cache_descriptors);
    w_p_ = pass.weights.w_p;
    tau_p_ = pass.weights.tau_p;
    // Weights changed: refresh cached unaries and restart message passing.
    std::fill(field_.messages_.begin(), field_.messages_.end(), 0.0);
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x)
        for (int k = 0; k < k_; ++k)
          field_.unary_[field_.idx(x, y) * k_ + k] =
              unary_of(x, y, field_.particle(x, y, k));
  }

  void run_pass(const MatchPass& pass, const ColourTransform& T) {
    begin_pass(pass, T);
    for (int it = 0; it < pass.pmbp_iterations; ++it) {
      const bool forward = (it % 2) == 0;
      if (forward) {
        for (int y = 0; y < h_; ++y)
          for (int x = 0; x < w_; ++x) visit(x, y, forward);
      } else {
        for (int y = h_ - 1; y >= 0; --y)
          for (int x = w_ - 1; x >= 0; --x) visit(x, y, forward);
      }
    }
  }

  FlowField extract_flow() const {
    FlowField out(w_, h_);
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x)
        out.set_flow(x, y, field_.particle(x, y, field_.best_slot(x, y)));
    return out;
  }

  /// Eq. 5 energy of the minimum-belief labeling under the current weights.
  double labeling_energy() const {
    double e = 0.0;
    std::vector<int> label(static_cast<std::size_t>(w_) * h_);
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) {
        const int k = field_.best_slot(x, y);
        label[field_.idx(x, y)] = k;
        e += field_.unary(x, y, k);
      }
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) {
        const Eigen::Vector2d ui =
            field_.particle(x, y, label[field_.idx(x, y)]).cast<double>();
        for (int d = 0; d < 4; ++d) {
          const int nx = x + kDx[d], ny = y + kDy[d];
          if (nx < 0 || nx >= w_ || ny < 0 || ny >= h_) continue;
          const Eigen::Vector2d uj =
              field_.particle(nx, ny, label[field_.idx(nx, ny)]).cast<double>();
          e += pairwise_cost_flow(ui, uj, w_p_, tau_p_);
        }
      }
    return e;
  }

  const ParticleField& field() const { return field_; }
  ParticleField take_field() { return std::move(field_); }

 private:
  double unary_of(int x, int y, const Eigen::Vector2f& u) const {
    return ctx_.unary(x, y, Eigen::Vector2d(x + u.x(), y + u.y()));
  }

  void set_particle(int x, int y, int k, const Eigen::Vector2f& u) {
    const std::size_t i = field_.idx(x, y);
    field_.particles_[i * k_ + k] = u;
    field_.unary_[i * k_ + k] = unary_of(x, y, u);
  }

  /// Message from neighbour (nx,ny) to a hypothetical label u at (x,y); d is
  /// the direction of the neighbour as seen from (x,y).
  double message_for(int x, int y, int d, const Eigen::Vector2d& u) const {
    const int nx = x + kDx[d], ny = y + kDy[d];
    const std::size_t j = field_.idx(nx, ny);
    const int back = opposite(d);  // direction of (x,y) as seen from n
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < k_; ++k) {
      const double b = field_.belief(nx, ny, k) -
                       field_.messages_[(j * 4 + back) * k_ + k] +
                       pairwise_cost_flow(field_.particles_[j * k_ + k].cast<double>(),
                                          u, w_p_, tau_p_);
      best = std::min(best, b);
    }
    return best;
  }

  void try_candidate(int x, int y, const Eigen::Vector2f& u) {
    const std::size_t i = field_.idx(x, y);
    for (int k = 0; k < k_; ++k)
      if (field_.particles_[i * k_ + k] == u) return;  // already present

    double msgs[4] = {0, 0, 0, 0};
    double b = ctx_.unary(x, y, Eigen::Vector2d(x + u.x(), y + u.y()));
    const double c = b;
    for (int d = 0; d < 4; ++d) {
      const int nx = x + kDx[d], ny = y + kDy[d];
      if (nx < 0 || nx >= w_ || ny < 0 || ny >= h_) continue;
      msgs[d] = message_for(x, y, d, u.cast<double>());
      b += msgs[d];
    }

    int worst = 0;
    double worst_b = field_.belief(x, y, 0);
    for (int k = 1; k < k_; ++k) {
      const double bk = field_.belief(x, y, k);
      if (bk > worst_b) {
        worst_b = bk;
        worst = k;
      }
    }
    if (b < worst_b) {
      field_.particles_[i * k_ + worst] = u;
      field_.unary_[i * k_ + worst] = c;
      for (int d = 0; d < 4; ++d)
        field_.messages_[(i * 4 + d) * k_ + worst] = msgs[d];
    }
  }

  /// Recomputes the messages entering (x,y) for the incumbent particles, so
  /// incumbents and fresh candidates are compared on the same footing.
  void refresh_incoming(int x, int y) {
    const std::size_t i = field_.idx(x, y);
    double fresh[16];
    for (int d = 0; d < 4; ++d) {
      const int nx = x + kDx[d], ny = y + kDy[d];
      if (nx < 0 || nx >= w_ || ny < 0 || ny >= h_) continue;
      for (int k = 0; k < k_; ++k)
        fresh[k] = message_for(x, y, d, field_.particles_[i * k_ + k].cast<double>());
      for (int k = 0; k < k_; ++k) field_.messages_[(i * 4 + d) * k_ + k] = fresh[k];
    }
  }

  void visit(int x, int y, bool forward) {
    refresh_incoming(x, y);

    // Spatial propagation from the two sweep-causal neighbours.
    const int dirs[2] = {forward ? 0 : 1, forward ? 2 : 3};
    for (int d : dirs) {
      const int nx = x + kDx[d], ny = y + kDy[d];
      if (nx < 0 || nx >= w_ || ny < 0 || ny >= h_) continue;
      const std::size_t j = field_.idx(nx, ny);
      for (int k = 0; k < k_; ++k) try_candidate(x, y, field_.particles_[j * k_ + k]);
    }

    // Random search around the current best particle, radius halving down to
    // half a pixel.
    const Eigen::Vector2f best = field_.particle(x, y, field_.best_slot(x, y));
    for (double r = range_; r >= 0.5; r *= 0.5) {
      const Eigen::Vector2d delta = rng_.in_disc(r);
      try_candidate(x, y, best + delta.cast<float>());
    }

    update_outgoing(x, y);
  }

  void update_outgoing(int x, int y) {
    const std::size_t i = field_.idx(x, y);
    for (int d = 0; d < 4; ++d) {
      const int nx = x + kDx[d], ny = y + kDy[d];
      if (nx < 0 || nx >= w_ || ny < 0 || ny >= h_) continue;
      const std::size_t j = field_.idx(nx, ny);
      const int back = opposite(d);
      double out[16];  // K <= 16 by construction below
      double lo = std::numeric_limits<double>::infinity();
      for (int l = 0; l < k_; ++l) {
        const Eigen::Vector2d ul = field_.particles_[j * k_ + l].cast<double>();
        double best = std::numeric_limits<double>::infinity();
        for (int k = 0; k < k_; ++k) {
          const double b = field_.belief(x, y, k) -
                           field_.messages_[(i * 4 + d) * k_ + k] +
                           pairwise_cost_flow(
                               field_.particles_[i * k_ + k].cast<double>(), ul,
                               w_p_, tau_p_);
          best = std::min(best, b);
        }
        out[l] = best;
        lo = std::min(lo, best);
      }
      // Normalise so the per-edge minimum is zero.
      for (int l = 0; l < k_; ++l)
        field_.messages_[(j * 4 + back) * k_ + l] = out[l] - lo;
    }
  }

  MatchCostContext& ctx_;
  MatchParams params_;
  Rng rng_;
  int w_, h_, k_;
  double range_ = 0.0;
  double w_p_ = 0.01, tau_p_ = 50.0;
  ParticleField field_;
};

namespace {

double auto_range(double requested, int width, MatchKind kind) {
  if (requested > 0.0) return requested;
  return kind == MatchKind::Stereo ? width / 4.0 : width / 8.0;
}

}  // namespace

PmbpResult pmbp_optimize(const Raster& img1, const Raster& img2,
                         const OrientationPyramid& pyr1, const OrientationPyramid& pyr2,
                         const std::optional<Eigen::Matrix3d>& F,
                         const PassSchedule& schedule, const MatchParams& params,
                         const std::optional<FlowField>& init,
                         const ColourTransform& transform) {
  if (schedule.empty()) throw std::invalid_argument("empty pass schedule");
  MatchParams p = params;
  p.search_range = auto_range(params.search_range, img1.width(),
                              F ? MatchKind::Stereo : MatchKind::Flow);
  p.daisy_override = params.daisy_override.value_or(
      F ? DaisyParams::stereo_preset() : DaisyParams::flow_preset());

  MatchCostContext ctx(img1, img2, pyr1, pyr2, F, *p.daisy_override);
  ctx.set_transform(transform);
  PmbpEngine engine(ctx, p, p.seed);
  engine.initialize(init ? &*init : nullptr);

  PmbpResult result;
  for (const auto& pass : schedule) {
    engine.run_pass(pass, transform);
    result.energy_trace.push_back(engine.labeling_energy());
  }
  result.flow = engine.extract_flow();
  result.particles = engine.take_field();
  return result;
}

namespace {

std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> consistent_colour_pairs(
    const Raster& img1, const Raster& img2, const FlowField& fwd,
    const FlowField& bwd, double fb_threshold, int max_samples) {
  std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> pairs;
  const int w = fwd.width(), h = fwd.height();
  const std::size_t total = static_cast<std::size_t>(w) * h;
  const int stride = std::max<std::size_t>(1, total / std::max(1, max_samples));
  std::size_t index = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x, ++index) {
      if (index % stride != 0) continue;
      if (!fwd.valid(x, y)) continue;
      const Eigen::Vector2f u = fwd.flow(x, y);
      const double tx = x + u.x(), ty = y + u.y();
      if (tx < 0 || tx > w - 1 || ty < 0 || ty > h - 1) continue;
      const auto back = sample_flow(bwd, tx, ty);
      if (!back) continue;
      if ((u + *back).norm() > fb_threshold) continue;
      Eigen::Vector3d c1, c2;
      if (img1.channels() == 3) {
        c1 = Eigen::Vector3d(img1(x, y, 0), img1(x, y, 1), img1(x, y, 2));
        c2 = bilinear_sample3(img2, tx, ty).cast<double>();
      } else {
        c1 = Eigen::Vector3d::Constant(img1(x, y, 0));
        c2 = Eigen::Vector3d::Constant(bilinear_sample1(img2, tx, ty));
      }
      pairs.emplace_back(c1, c2);
    }
  return pairs;
}

}  // namespace

BidirectionalMatch match_bidirectional(MatchKind kind, const Raster& img1,
                                       const Raster& img2,
                                       const std::optional<Eigen::Matrix3d>& F,
                                       const MatchParams& params,
                                       const std::optional<FlowField>& prior_forward,
                                       const std::optional<FlowField>& prior_backward) {
  if (kind == MatchKind::Stereo && !F)
    throw std::invalid_argument("stereo matching requires a fundamental matrix");

  MatchParams p = params;
  p.search_range = auto_range(params.search_range, img1.width(), kind);
  const DaisyParams daisy = params.daisy_override.value_or(
      kind == MatchKind::Stereo ? DaisyParams::stereo_preset()
                                : DaisyParams::flow_preset());
  const PassSchedule schedule =
      kind == MatchKind::Stereo ? stereo_pass_schedule() : flow_pass_schedule();

  const OrientationPyramid pyr1 = build_orientation_pyramid(img1, daisy);
  const OrientationPyramid pyr2 = build_orientation_pyramid(img2, daisy);

  std::optional<Eigen::Matrix3d> F_fwd = F;
  std::optional<Eigen::Matrix3d> F_bwd;
  if (F) F_bwd = F->transpose();

  p.daisy_override = daisy;
  MatchCostContext ctx_fwd(img1, img2, pyr1, pyr2, F_fwd, daisy);
  MatchCostContext ctx_bwd(img2, img1, pyr2, pyr1, F_bwd, daisy);

  PmbpEngine fwd(ctx_fwd, p, p.seed);
  PmbpEngine bwd(ctx_bwd, p, p.seed ^ 0x9e3779b97f4a7c15ull);
  fwd.initialize(prior_forward ? &*prior_forward : nullptr);
  bwd.initialize(prior_backward ? &*prior_backward : nullptr);

  ColourTransform T_fwd, T_bwd;
  BidirectionalMatch out;
  for (const auto& pass : schedule) {
    fwd.run_pass(pass, T_fwd);
    bwd.run_pass(pass, T_bwd);
    out.forward_trace.push_back(fwd.labeling_energy());
    out.backward_trace.push_back(bwd.labeling_energy());
    if (pass.refit_colour_transform) {
      const FlowField f = fwd.extract_flow();
      const FlowField b = bwd.extract_flow();
      const auto pairs_fwd = consistent_colour_pairs(img1, img2, f, b,
                                                     p.fb_threshold, p.max_fit_samples);
      if (pairs_fwd.size() >= 4) T_fwd = estimate_colour_transform(pairs_fwd);
      const auto pairs_bwd = consistent_colour_pairs(img2, img1, b, f,
                                                     p.fb_threshold, p.max_fit_samples);
      if (pairs_bwd.size() >= 4) T_bwd = estimate_colour_transform(pairs_bwd);
    }
  }
  out.forward = fwd.extract_flow();
  out.backward = bwd.extract_flow();
  out.transform = T_fwd;
  return out;
}

}  // namespace wbsf
