#include "wbsf/sceneflow.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "wbsf/resample.hpp"

namespace wbsf {

double psi(double s_squared, double eps) { return std::sqrt(s_squared + eps); }
double psi_deriv(double s_squared, double eps) {
  return 0.5 / std::sqrt(s_squared + eps);
}

namespace {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

// Unknown positions within a column: (u1x,u1y,u2x,u2y,u3x,u3y).
// Warp position ids: 0 fixed x, 1 = x+u1, 2 = x+u2, 3 = x+u1+u2+u3.

void add_spread(Vector6d& g, int pos, const Eigen::Vector2d& w) {
  switch (pos) {
    case 1:
      g[0] += w.x();
      g[1] += w.y();
      break;
    case 2:
      g[2] += w.x();
      g[3] += w.y();
      break;
    case 3:
      for (int k = 0; k < 3; ++k) {
        g[2 * k] += w.x();
        g[2 * k + 1] += w.y();
      }
      break;
    default:
      break;
  }
}

struct SampleG {
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  Eigen::Vector3d gx = Eigen::Vector3d::Zero();
  Eigen::Vector3d gy = Eigen::Vector3d::Zero();
};

// Clamped bilinear sample with the exact in-cell derivative of the
// interpolant; a clamped axis contributes zero derivative.
SampleG sample_grad(const Rasterd& r, double px, double py) {
  const int w = r.width(), h = r.height();
  const bool clamped_x = px < 0.0 || px > w - 1;
  const bool clamped_y = py < 0.0 || py > h - 1;
  const double x = std::clamp(px, 0.0, static_cast<double>(w - 1));
  const double y = std::clamp(py, 0.0, static_cast<double>(h - 1));
  const int x0 = std::min(static_cast<int>(std::floor(x)), std::max(0, w - 2));
  const int y0 = std::min(static_cast<int>(std::floor(y)), std::max(0, h - 2));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0, fy = y - y0;
  SampleG s;
  for (int c = 0; c < r.channels(); ++c) {
    const double v00 = r(x0, y0, c), v10 = r(x1, y0, c);
    const double v01 = r(x0, y1, c), v11 = r(x1, y1, c);
    s.v[c] = (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
    s.gx[c] = clamped_x ? 0.0 : (1 - fy) * (v10 - v00) + fy * (v11 - v01);
    s.gy[c] = clamped_y ? 0.0 : (1 - fx) * (v01 - v00) + fx * (v11 - v10);
  }
  return s;
}

struct EpiEval {
  double r = 0.0;           // residual entering Psi(r^2)
  Vector6d g = Vector6d::Zero();  // d r / d unknowns
};

// r = h(xa)^T F h(xb); optional first-order (Sampson) normalisation.
EpiEval epipolar_residual(const Eigen::Matrix3d& F, const Eigen::Vector2d& xa,
                          int pos_a, const Eigen::Vector2d& xb, int pos_b,
                          bool sampson) {
  const Eigen::Vector3d ha = xa.homogeneous();
  const Eigen::Vector3d hb = xb.homogeneous();
  const Eigen::Vector3d Fb = F * hb;
  const Eigen::Vector3d Fta = F.transpose() * ha;
  const double r = ha.dot(Fb);
  const Eigen::Vector2d dr_dxa = Fb.head<2>();
  const Eigen::Vector2d dr_dxb = Fta.head<2>();

  EpiEval out;
  if (!sampson) {
    out.r = r;
    add_spread(out.g, pos_a, dr_dxa);
    add_spread(out.g, pos_b, dr_dxb);
    return out;
  }
  const double D = Fb.head<2>().squaredNorm() + Fta.head<2>().squaredNorm();
  if (D < 1e-12) return out;  // epipole; contributes Psi(0)
  const double s = 1.0 / std::sqrt(D);
  out.r = r * s;
  // dD/dxb via Fb, dD/dxa via Fta.
  Eigen::Vector2d dD_dxb, dD_dxa;
  for (int j = 0; j < 2; ++j) {
    dD_dxb[j] = 2.0 * (Fb.x() * F(0, j) + Fb.y() * F(1, j));
    dD_dxa[j] = 2.0 * (Fta.x() * F(j, 0) + Fta.y() * F(j, 1));
  }
  const double t = -0.5 * r * s / D;
  add_spread(out.g, pos_a, (s * dr_dxa + t * dD_dxa).eval());
  add_spread(out.g, pos_b, (s * dr_dxb + t * dD_dxb).eval());
  return out;
}

struct TermSpec {
  int img_a, pos_a, img_b, pos_b;
};
constexpr TermSpec kDataTerms[4] = {
    {1, 1, 0, 0},  // I1(t+1) at x+u1 vs I1(t) at x
    {3, 3, 2, 2},  // I2(t+1) at x+u1+u2+u3 vs I2(t) at x+u2
    {2, 2, 0, 0},  // I2(t) at x+u2 vs I1(t) at x
    {3, 3, 1, 1},  // I2(t+1) vs I1(t+1)
};

struct DataTermEval {
  Eigen::Vector3d r_b = Eigen::Vector3d::Zero();
  Eigen::Matrix<double, 3, 6> J_b = Eigen::Matrix<double, 3, 6>::Zero();
  Vector6d r_g = Vector6d::Zero();
  Matrix6d J_g = Matrix6d::Zero();
};

}  // namespace

struct SceneFlowSystem::Impl {
  int w = 0, h = 0, channels = 0;
  Rasterd I[4], Gx[4], Gy[4];
  BitMask occ;
  Eigen::Matrix3d Ft, Ft1;
  SceneFlowParams p;

  Impl(const FourFrames& images, const Eigen::Matrix3d& F_t,
       const Eigen::Matrix3d& F_t1, const BitMask& occlusion,
       const ColourTransform& T, const SceneFlowParams& params)
      : occ(occlusion), Ft(F_t), Ft1(F_t1), p(params) {
    const Raster* src[4] = {&images.view1_t, &images.view1_t1, &images.view2_t,
                            &images.view2_t1};
    w = src[0]->width();
    h = src[0]->height();
    channels = src[0]->channels();
    for (int i = 1; i < 4; ++i)
      if (src[i]->width() != w || src[i]->height() != h ||
          src[i]->channels() != channels)
        throw std::invalid_argument("four-frame images must share shape");
    if (occ.width() != w || occ.height() != h)
      throw std::invalid_argument("occlusion mask dimensions mismatch");

    const bool identity_T = T.A.isIdentity(0.0) && T.a.isZero(0.0);
    if (channels == 1 && !identity_T)
      throw std::invalid_argument("colour correction needs 3-channel images");

    for (int i = 0; i < 4; ++i) {
      I[i] = src[i]->cast<double>();
      // View-1 images are colour-corrected to match view 2.
      if ((i == 0 || i == 1) && !identity_T) {
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const Eigen::Vector3d c(I[i](x, y, 0), I[i](x, y, 1), I[i](x, y, 2));
            const Eigen::Vector3d cc = T.apply(c);
            for (int ch = 0; ch < 3; ++ch) I[i](x, y, ch) = cc[ch];
          }
      }
      Gx[i] = Rasterd(w, h, channels);
      Gy[i] = Rasterd(w, h, channels);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < channels; ++c) {
            Gx[i](x, y, c) =
                0.5 * (I[i].at_clamped(x + 1, y, c) - I[i].at_clamped(x - 1, y, c));
            Gy[i](x, y, c) =
                0.5 * (I[i].at_clamped(x, y + 1, c) - I[i].at_clamped(x, y - 1, c));
          }
    }
  }

  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * w + x; }

  bool in_bounds(const Eigen::Vector2d& q) const {
    return q.x() >= 0.0 && q.x() <= w - 1 && q.y() >= 0.0 && q.y() <= h - 1;
  }

  void positions(int x, int y, const Eigen::Ref<const Vector6d>& u,
                 Eigen::Vector2d pos[4]) const {
    const Eigen::Vector2d base(x, y);
    pos[0] = base;
    pos[1] = base + Eigen::Vector2d(u[0], u[1]);
    pos[2] = base + Eigen::Vector2d(u[2], u[3]);
    pos[3] = base + Eigen::Vector2d(u[0] + u[2] + u[4], u[1] + u[3] + u[5]);
  }

  /// Data terms active here? Occlusion and out-of-bounds warps disable them.
  bool data_active(int x, int y, const Eigen::Vector2d pos[4]) const {
    return !occ(x, y) && in_bounds(pos[1]) && in_bounds(pos[2]) && in_bounds(pos[3]);
  }

  void eval_data_terms(const Eigen::Vector2d pos[4], DataTermEval out[4]) const {
    SampleG sI[4], sGx[4], sGy[4];
    for (int i = 0; i < 4; ++i) {
      sI[i] = sample_grad(I[i], pos[i].x(), pos[i].y());
      sGx[i] = sample_grad(Gx[i], pos[i].x(), pos[i].y());
      sGy[i] = sample_grad(Gy[i], pos[i].x(), pos[i].y());
    }
    // Position index i doubles as the image index: term spec {img,pos} pairs
    // coincide by construction of kDataTerms.
    for (int t = 0; t < 4; ++t) {
      const TermSpec& spec = kDataTerms[t];
      DataTermEval& e = out[t];
      e = DataTermEval{};
      const SampleG& A = sI[spec.img_a];
      const SampleG& B = sI[spec.img_b];
      const SampleG& Agx = sGx[spec.img_a];
      const SampleG& Bgx = sGx[spec.img_b];
      const SampleG& Agy = sGy[spec.img_a];
      const SampleG& Bgy = sGy[spec.img_b];
      for (int c = 0; c < channels; ++c) {
        e.r_b[c] = A.v[c] - B.v[c];
        Vector6d row = Vector6d::Zero();
        add_spread(row, spec.pos_a, {A.gx[c], A.gy[c]});
        Vector6d rowb = Vector6d::Zero();
        add_spread(rowb, spec.pos_b, {B.gx[c], B.gy[c]});
        e.J_b.row(c) = (row - rowb).transpose();

        e.r_g[2 * c] = Agx.v[c] - Bgx.v[c];
        e.r_g[2 * c + 1] = Agy.v[c] - Bgy.v[c];
        Vector6d rgx = Vector6d::Zero(), rgxb = Vector6d::Zero();
        add_spread(rgx, spec.pos_a, {Agx.gx[c], Agx.gy[c]});
        add_spread(rgxb, spec.pos_b, {Bgx.gx[c], Bgx.gy[c]});
        e.J_g.row(2 * c) = (rgx - rgxb).transpose();
        Vector6d rgy = Vector6d::Zero(), rgyb = Vector6d::Zero();
        add_spread(rgy, spec.pos_a, {Agy.gx[c], Agy.gy[c]});
        add_spread(rgyb, spec.pos_b, {Bgy.gx[c], Bgy.gy[c]});
        e.J_g.row(2 * c + 1) = (rgy - rgyb).transpose();
      }
    }
  }

  EpiEval eval_e1(const Eigen::Vector2d pos[4]) const {
    return epipolar_residual(Ft, pos[2], 2, pos[0], 0, p.sampson_epipolar);
  }
  EpiEval eval_e2(const Eigen::Vector2d pos[4]) const {
    return epipolar_residual(Ft1, pos[3], 3, pos[1], 1, p.sampson_epipolar);
  }

  double smoothness_arg(const Eigen::MatrixXd& U, int field, int x, int y) const {
    double s = 0.0;
    const std::size_t i = idx(x, y);
    for (int c = 2 * field; c < 2 * field + 2; ++c) {
      if (x + 1 < w) {
        const double d = U(c, idx(x + 1, y)) - U(c, i);
        s += d * d;
      }
      if (y + 1 < h) {
        const double d = U(c, idx(x, y + 1)) - U(c, i);
        s += d * d;
      }
    }
    return s;
  }

  double beta(int field) const {
    return field == 0 ? p.beta1 : (field == 1 ? p.beta2 : p.beta3);
  }
};

SceneFlowSystem::SceneFlowSystem(const FourFrames& images, const Eigen::Matrix3d& F_t,
                                 const Eigen::Matrix3d& F_t1, const BitMask& occlusion,
                                 const ColourTransform& T, const SceneFlowParams& p)
    : impl_(std::make_unique<Impl>(images, F_t, F_t1, occlusion, T, p)) {}

SceneFlowSystem::~SceneFlowSystem() = default;
SceneFlowSystem::SceneFlowSystem(SceneFlowSystem&&) noexcept = default;

int SceneFlowSystem::width() const { return impl_->w; }
int SceneFlowSystem::height() const { return impl_->h; }

EnergyBreakdown SceneFlowSystem::energy(const Eigen::MatrixXd& U) const {
  const Impl& s = *impl_;
  EnergyBreakdown e;
  double epi_weighted = 0.0, smooth_weighted = 0.0;
  DataTermEval terms[4];
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      const std::size_t i = s.idx(x, y);
      Eigen::Vector2d pos[4];
      s.positions(x, y, U.col(i), pos);
      if (s.data_active(x, y, pos)) {
        s.eval_data_terms(pos, terms);
        for (int t = 0; t < 4; ++t)
          e.data += psi(terms[t].r_b.squaredNorm(), s.p.psi_eps) +
                    s.p.gamma * psi(terms[t].r_g.squaredNorm(), s.p.psi_eps);
      }
      const double p1 = psi(std::pow(s.eval_e1(pos).r, 2), s.p.psi_eps);
      const double p2 = psi(std::pow(s.eval_e2(pos).r, 2), s.p.psi_eps);
      e.epipolar += p1 + p2;
      epi_weighted += s.p.alpha1 * p1 + s.p.alpha2 * p2;
      for (int f = 0; f < 3; ++f) {
        const double ps = psi(s.smoothness_arg(U, f, x, y), s.p.psi_eps);
        e.smoothness += ps;
        smooth_weighted += s.beta(f) * ps;
      }
    }
  e.total = e.data + epi_weighted + smooth_weighted;
  return e;
}

double SceneFlowSystem::energy(const Eigen::MatrixXd& U, EnergyTerm family) const {
  const Impl& s = *impl_;
  double acc = 0.0;
  DataTermEval terms[4];
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      const std::size_t i = s.idx(x, y);
      Eigen::Vector2d pos[4];
      s.positions(x, y, U.col(i), pos);
      switch (family) {
        case EnergyTerm::Data:
          if (s.data_active(x, y, pos)) {
            s.eval_data_terms(pos, terms);
            for (int t = 0; t < 4; ++t)
              acc += psi(terms[t].r_b.squaredNorm(), s.p.psi_eps) +
                     s.p.gamma * psi(terms[t].r_g.squaredNorm(), s.p.psi_eps);
          }
          break;
        case EnergyTerm::Epipolar:
          acc += s.p.alpha1 * psi(std::pow(s.eval_e1(pos).r, 2), s.p.psi_eps) +
                 s.p.alpha2 * psi(std::pow(s.eval_e2(pos).r, 2), s.p.psi_eps);
          break;
        case EnergyTerm::Smoothness:
          for (int f = 0; f < 3; ++f)
            acc += s.beta(f) * psi(s.smoothness_arg(U, f, x, y), s.p.psi_eps);
          break;
      }
    }
  return acc;
}

Eigen::MatrixXd SceneFlowSystem::gradient(const Eigen::MatrixXd& U,
                                          EnergyTerm family) const {
  const Impl& s = *impl_;
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(6, U.cols());
  DataTermEval terms[4];
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      const std::size_t i = s.idx(x, y);
      Eigen::Vector2d pos[4];
      s.positions(x, y, U.col(i), pos);
      switch (family) {
        case EnergyTerm::Data: {
          if (!s.data_active(x, y, pos)) break;
          s.eval_data_terms(pos, terms);
          for (int t = 0; t < 4; ++t) {
            const auto& e = terms[t];
            const double wb = 2.0 * psi_deriv(e.r_b.squaredNorm(), s.p.psi_eps);
            G.col(i) += wb * (e.J_b.topRows(s.channels).transpose() *
                              e.r_b.head(s.channels));
            const double wg =
                2.0 * s.p.gamma * psi_deriv(e.r_g.squaredNorm(), s.p.psi_eps);
            G.col(i) += wg * (e.J_g.topRows(2 * s.channels).transpose() *
                              e.r_g.head(2 * s.channels));
          }
          break;
        }
        case EnergyTerm::Epipolar: {
          const EpiEval e1 = s.eval_e1(pos);
          const EpiEval e2 = s.eval_e2(pos);
          G.col(i) += s.p.alpha1 * psi_deriv(e1.r * e1.r, s.p.psi_eps) * 2.0 * e1.r * e1.g;
          G.col(i) += s.p.alpha2 * psi_deriv(e2.r * e2.r, s.p.psi_eps) * 2.0 * e2.r * e2.g;
          break;
        }
        case EnergyTerm::Smoothness: {
          for (int f = 0; f < 3; ++f) {
            const double wq =
                2.0 * s.beta(f) * psi_deriv(s.smoothness_arg(U, f, x, y), s.p.psi_eps);
            for (int c = 2 * f; c < 2 * f + 2; ++c) {
              if (x + 1 < s.w) {
                const double d = U(c, s.idx(x + 1, y)) - U(c, i);
                G(c, i) -= wq * d;
                G(c, s.idx(x + 1, y)) += wq * d;
              }
              if (y + 1 < s.h) {
                const double d = U(c, s.idx(x, y + 1)) - U(c, i);
                G(c, i) -= wq * d;
                G(c, s.idx(x, y + 1)) += wq * d;
              }
            }
          }
          break;
        }
      }
    }
  return G;
}

Eigen::MatrixXd SceneFlowSystem::solve_increment(const Eigen::MatrixXd& U) const {
  const Impl& s = *impl_;
  const int w = s.w, h = s.h;
  const std::size_t N = static_cast<std::size_t>(w) * h;

  // Warp-time quantities, fixed across the fixed-point iterations.
  std::vector<DataTermEval> data(N * 4);
  std::vector<EpiEval> e1(N), e2(N);
  std::vector<std::uint8_t> active(N);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = s.idx(x, y);
      Eigen::Vector2d pos[4];
      s.positions(x, y, U.col(i), pos);
      active[i] = s.data_active(x, y, pos);
      if (active[i]) s.eval_data_terms(pos, &data[i * 4]);
      e1[i] = s.eval_e1(pos);
      e2[i] = s.eval_e2(pos);
    }

  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(6, static_cast<Eigen::Index>(N));
  std::vector<Eigen::LDLT<Matrix6d>> blocks(N);
  std::vector<Vector6d> rhs0(N);
  // Smoothness weight of the forward-difference edges owned by each pixel,
  // per flow field.
  Eigen::MatrixXd ws(3, static_cast<Eigen::Index>(N));

  for (int fp = 0; fp < s.p.fixed_point_iterations; ++fp) {
    Eigen::MatrixXd V = U + D;  // lagged nonlinearity point
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = s.idx(x, y);
        for (int f = 0; f < 3; ++f)
          ws(f, i) = s.beta(f) * psi_deriv(s.smoothness_arg(V, f, x, y), s.p.psi_eps);
      }

    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = s.idx(x, y);
        Matrix6d A = Matrix6d::Zero();
        Vector6d b = Vector6d::Zero();
        if (active[i]) {
          for (int t = 0; t < 4; ++t) {
            const DataTermEval& e = data[i * 4 + t];
            const auto Jb = e.J_b.topRows(s.channels);
            const auto rb = e.r_b.head(s.channels);
            const double wb =
                psi_deriv((rb + Jb * D.col(i)).squaredNorm(), s.p.psi_eps);
            A += wb * (Jb.transpose() * Jb);
            b -= wb * (Jb.transpose() * rb);
            const auto Jg = e.J_g.topRows(2 * s.channels);
            const auto rg = e.r_g.head(2 * s.channels);
            const double wg = s.p.gamma *
                psi_deriv((rg + Jg * D.col(i)).squaredNorm(), s.p.psi_eps);
            A += wg * (Jg.transpose() * Jg);
            b -= wg * (Jg.transpose() * rg);
          }
        }
        {
          const double lin1 = e1[i].r + e1[i].g.dot(D.col(i));
          const double w1 = s.p.alpha1 * psi_deriv(lin1 * lin1, s.p.psi_eps);
          A += w1 * (e1[i].g * e1[i].g.transpose());
          b -= w1 * e1[i].r * e1[i].g;
          const double lin2 = e2[i].r + e2[i].g.dot(D.col(i));
          const double w2 = s.p.alpha2 * psi_deriv(lin2 * lin2, s.p.psi_eps);
          A += w2 * (e2[i].g * e2[i].g.transpose());
          b -= w2 * e2[i].r * e2[i].g;
        }
        // Diagonal smoothness coupling (per component of each field).
        for (int f = 0; f < 3; ++f) {
          double deg = 0.0;
          if (x + 1 < w) deg += ws(f, i);
          if (y + 1 < h) deg += ws(f, i);
          if (x > 0) deg += ws(f, s.idx(x - 1, y));
          if (y > 0) deg += ws(f, s.idx(x, y - 1));
          A(2 * f, 2 * f) += deg;
          A(2 * f + 1, 2 * f + 1) += deg;
        }
        A.diagonal().array() += 1e-12;  // keeps isolated blocks factorable
        blocks[i].compute(A);
        rhs0[i] = b;
      }

    // Pointwise-coupled SOR over the 6-vector increments.
    for (int it = 0; it < s.p.sor_iterations; ++it) {
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const std::size_t i = s.idx(x, y);
          Vector6d rhs = rhs0[i];
          for (int f = 0; f < 3; ++f)
            for (int c = 2 * f; c < 2 * f + 2; ++c) {
              double acc = 0.0;
              if (x + 1 < w) {
                const std::size_t n = s.idx(x + 1, y);
                acc += ws(f, i) * (U(c, n) - U(c, i) + D(c, n));
              }
              if (x > 0) {
                const std::size_t n = s.idx(x - 1, y);
                acc += ws(f, n) * (U(c, n) - U(c, i) + D(c, n));
              }
              if (y + 1 < h) {
                const std::size_t n = s.idx(x, y + 1);
                acc += ws(f, i) * (U(c, n) - U(c, i) + D(c, n));
              }
              if (y > 0) {
                const std::size_t n = s.idx(x, y - 1);
                acc += ws(f, n) * (U(c, n) - U(c, i) + D(c, n));
              }
              rhs[c] += acc;
            }
          const Vector6d sol = blocks[i].solve(rhs);
          D.col(i) = (1.0 - s.p.sor_omega) * D.col(i) + s.p.sor_omega * sol;
        }
    }
  }
  return D;
}

Eigen::MatrixXd SceneFlowSystem::pack(const FourFrameFlows& flows) {
  const int w = flows.u1.width(), h = flows.u1.height();
  if (flows.u2.width() != w || flows.u3.width() != w || flows.u2.height() != h ||
      flows.u3.height() != h)
    throw std::invalid_argument("flow fields must share dimensions");
  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(6, static_cast<Eigen::Index>(w) * h);
  const FlowField* fields[3] = {&flows.u1, &flows.u2, &flows.u3};
  for (int f = 0; f < 3; ++f)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        // Unknown (sentinel) values enter the solver as zero.
        if (!fields[f]->valid(x, y)) continue;
        const Eigen::Vector2f u = fields[f]->flow(x, y);
        U(2 * f, static_cast<Eigen::Index>(y) * w + x) = u.x();
        U(2 * f + 1, static_cast<Eigen::Index>(y) * w + x) = u.y();
      }
  return U;
}

FourFrameFlows SceneFlowSystem::unpack(const Eigen::MatrixXd& U, int width, int height) {
  FourFrameFlows flows{FlowField(width, height), FlowField(width, height),
                       FlowField(width, height)};
  FlowField* fields[3] = {&flows.u1, &flows.u2, &flows.u3};
  for (int f = 0; f < 3; ++f)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const Eigen::Index i = static_cast<Eigen::Index>(y) * width + x;
        fields[f]->set_flow(x, y, {static_cast<float>(U(2 * f, i)),
                                   static_cast<float>(U(2 * f + 1, i))});
      }
  return flows;
}

EnergyBreakdown energy_eval(const FourFrameFlows& flows, const FourFrames& images,
                            const Eigen::Matrix3d& F_t, const Eigen::Matrix3d& F_t1,
                            const BitMask& occlusion, const ColourTransform& T,
                            const SceneFlowParams& p) {
  SceneFlowSystem sys(images, F_t, F_t1, occlusion, T, p);
  return sys.energy(SceneFlowSystem::pack(flows));
}

namespace {

struct Level {
  int w, h;
  double sx, sy;  // position scale relative to full resolution
  FourFrames images;
  BitMask occ;
  Eigen::Matrix3d Ft, Ft1;
};

BitMask resize_mask(const BitMask& m, int nw, int nh) {
  Raster f(m.width(), m.height(), 1);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) f(x, y) = m(x, y) ? 1.f : 0.f;
  const Raster r = resize_area(f, nw, nh);
  BitMask out(nw, nh);
  for (int y = 0; y < nh; ++y)
    for (int x = 0; x < nw; ++x) out.set(x, y, r(x, y) >= 0.5f);  // majority
  return out;
}

Eigen::Matrix3d rescale_fundamental(const Eigen::Matrix3d& F, double sx, double sy) {
  // Positions at the level are x_l = diag(sx,sy,1) * x; the constraint maps by
  // congruence with the inverse scales.
  const Eigen::DiagonalMatrix<double, 3> Dinv(1.0 / sx, 1.0 / sy, 1.0);
  return Dinv * F * Dinv;
}

Eigen::MatrixXd resize_unknowns(const Eigen::MatrixXd& U, int ow, int oh, int nw,
                                int nh) {
  // Bilinear per-component resize with displacement rescaling.
  const double vx = ow > 1 && nw > 1 ? static_cast<double>(nw - 1) / (ow - 1) : 1.0;
  const double vy = oh > 1 && nh > 1 ? static_cast<double>(nh - 1) / (oh - 1) : 1.0;
  Eigen::MatrixXd out(6, static_cast<Eigen::Index>(nw) * nh);
  for (int c = 0; c < 6; ++c) {
    Rasterd plane(ow, oh, 1);
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x)
        plane(x, y) = U(c, static_cast<Eigen::Index>(y) * ow + x);
    const Rasterd resized = resize_bilinear(plane, nw, nh);
    const double scale = (c % 2 == 0) ? vx : vy;
    for (int y = 0; y < nh; ++y)
      for (int x = 0; x < nw; ++x)
        out(c, static_cast<Eigen::Index>(y) * nw + x) = resized(x, y) * scale;
  }
  return out;
}

double checked_total(const SceneFlowSystem& sys, const Eigen::MatrixXd& U) {
  const double e = sys.energy(U).total;
  if (!std::isfinite(e))
    throw std::runtime_error("scene-flow energy diverged (non-finite)");
  return e;
}

}  // namespace

FourFrameFlows refine(const FourFrameFlows& flows_init, const FourFrames& images,
                      const Eigen::Matrix3d& F_t, const Eigen::Matrix3d& F_t1,
                      const BitMask& occlusion, const ColourTransform& T,
                      const SceneFlowParams& p) {
  const int w0 = images.view1_t.width(), h0 = images.view1_t.height();
  if (p.eta <= 0.0 || p.eta >= 1.0)
    throw std::invalid_argument("pyramid factor must lie in (0,1)");

  // Start at the level nearest quarter resolution.
  const int start =
      std::max(0, static_cast<int>(std::lround(std::log(0.25) / std::log(p.eta))));

  std::vector<Level> levels(start + 1);
  for (int l = 0; l <= start; ++l) {
    const double scale = std::pow(p.eta, l);
    Level& lv = levels[l];
    lv.w = std::max(4, static_cast<int>(std::lround(w0 * scale)));
    lv.h = std::max(4, static_cast<int>(std::lround(h0 * scale)));
    lv.sx = lv.w > 1 && w0 > 1 ? static_cast<double>(lv.w - 1) / (w0 - 1) : 1.0;
    lv.sy = lv.h > 1 && h0 > 1 ? static_cast<double>(lv.h - 1) / (h0 - 1) : 1.0;
    if (l == 0) {
      lv.images = images;
      lv.occ = occlusion;
      lv.Ft = F_t;
      lv.Ft1 = F_t1;
    } else {
      lv.images.view1_t = resize_area(images.view1_t, lv.w, lv.h);
      lv.images.view1_t1 = resize_area(images.view1_t1, lv.w, lv.h);
      lv.images.view2_t = resize_area(images.view2_t, lv.w, lv.h);
      lv.images.view2_t1 = resize_area(images.view2_t1, lv.w, lv.h);
      lv.occ = resize_mask(occlusion, lv.w, lv.h);
      lv.Ft = rescale_fundamental(F_t, 1.0 / lv.sx, 1.0 / lv.sy);
      lv.Ft1 = rescale_fundamental(F_t1, 1.0 / lv.sx, 1.0 / lv.sy);
    }
  }

  const Eigen::MatrixXd U_init = SceneFlowSystem::pack(flows_init);
  Eigen::MatrixXd U = resize_unknowns(U_init, w0, h0, levels[start].w, levels[start].h);

  for (int l = start; l >= 0; --l) {
    const Level& lv = levels[l];
    if (l != start) {
      const Level& prev = levels[l + 1];
      U = resize_unknowns(U, prev.w, prev.h, lv.w, lv.h);
    }
    SceneFlowSystem sys(lv.images, lv.Ft, lv.Ft1, lv.occ, T, p);
    if (l == 0 && checked_total(sys, U_init) < checked_total(sys, U)) U = U_init;

    double current = checked_total(sys, U);
    for (int warp = 0; warp < p.warps_per_level; ++warp) {
      const Eigen::MatrixXd D = sys.solve_increment(U);
      // Backtrack increments that would raise the level energy.
      double step = 1.0;
      bool accepted = false;
      for (int tries = 0; tries < 5; ++tries, step *= 0.5) {
        const Eigen::MatrixXd cand = U + step * D;
        const double e = checked_total(sys, cand);
        if (e <= current) {
          U = cand;
          current = e;
          accepted = true;
          break;
        }
      }
      if (!accepted) break;  // stationary at this level
    }
  }
  return SceneFlowSystem::unpack(U, w0, h0);
}

FlowField init_u3(const FlowField& u1, const FlowField& u2, const FlowField& flow2) {
  const int w = u1.width(), h = u1.height();
  if (u2.width() != w || u2.height() != h)
    throw std::invalid_argument("u1/u2 must share the view-1 grid");
  FlowField out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!u1.valid(x, y) || !u2.valid(x, y)) {
        out.set_invalid(x, y);
        continue;
      }
      const Eigen::Vector2f s = u2.flow(x, y);
      const double tx = x + s.x(), ty = y + s.y();
      if (tx < 0 || tx > flow2.width() - 1 || ty < 0 || ty > flow2.height() - 1) {
        out.set_invalid(x, y);
        continue;
      }
      const auto f2 = sample_flow(flow2, tx, ty);
      if (!f2) {
        out.set_invalid(x, y);
        continue;
      }
      out.set_flow(x, y, *f2 - u1.flow(x, y));
    }
  return out;
}

SceneFlowOutput triangulate_scene_flow(const FourFrameFlows& flows,
                                       const StereoRigFrame& rig_t,
                                       const StereoRigFrame& rig_t1,
                                       const BitMask& occlusion) {
  const int w = flows.u1.width(), h = flows.u1.height();
  SceneFlowOutput out;
  out.width = w;
  out.height = h;
  const std::size_t N = static_cast<std::size_t>(w) * h;
  out.position.assign(N, Eigen::Vector3d::Zero());
  out.motion.assign(N, Eigen::Vector3d::Zero());
  out.valid.assign(N, 0);
  out.depth = Raster(w, h, 1, 0.f);

  const Matrix34d P1t = rig_t.cam1.projection();
  const Matrix34d P2t = rig_t.cam2.projection();
  const Matrix34d P1t1 = rig_t1.cam1.projection();
  const Matrix34d P2t1 = rig_t1.cam2.projection();

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (occlusion(x, y) || !flows.u1.valid(x, y) || !flows.u2.valid(x, y) ||
          !flows.u3.valid(x, y))
        continue;
      const Eigen::Vector2d base(x, y);
      const Eigen::Vector2d u1 = flows.u1.flow(x, y).cast<double>();
      const Eigen::Vector2d u2 = flows.u2.flow(x, y).cast<double>();
      const Eigen::Vector2d u3 = flows.u3.flow(x, y).cast<double>();
      try {
        const Eigen::Vector3d Xt = triangulate_dlt(P1t, P2t, base, base + u2);
        const Eigen::Vector3d Xt1 =
            triangulate_dlt(P1t1, P2t1, base + u1, base + u1 + u2 + u3);
        out.position[i] = Xt;
        out.motion[i] = Xt1 - Xt;
        out.depth(x, y) =
            static_cast<float>((rig_t.cam1.R * Xt + rig_t.cam1.t).z());
        out.valid[i] = 1;
      } catch (const std::domain_error&) {
        // degenerate triangulation: leave the pixel invalid
      }
    }
  return out;
}

void write_ply(const std::string& path, const SceneFlowOutput& out, const Raster& view1) {
  if (view1.width() != out.width || view1.height() != out.height)
    throw std::invalid_argument("view-1 image dimensions mismatch");
  std::size_t count = 0;
  for (auto v : out.valid) count += v;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write PLY: " + path);
  os << "ply\nformat binary_little_endian 1.0\nelement vertex " << count << "\n"
     << "property float x\nproperty float y\nproperty float z\n"
     << "property float mx\nproperty float my\nproperty float mz\n"
     << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
     << "end_header\n";
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * out.width + x;
      if (!out.valid[i]) continue;
      float rec[6] = {static_cast<float>(out.position[i].x()),
                      static_cast<float>(out.position[i].y()),
                      static_cast<float>(out.position[i].z()),
                      static_cast<float>(out.motion[i].x()),
                      static_cast<float>(out.motion[i].y()),
                      static_cast<float>(out.motion[i].z())};
      os.write(reinterpret_cast<const char*>(rec), sizeof(rec));
      for (int c = 0; c < 3; ++c) {
        const float v = view1.channels() == 3 ? view1(x, y, c) : view1(x, y, 0);
        const auto byte = static_cast<unsigned char>(
            std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
        os.put(static_cast<char>(byte));
      }
    }
  if (!os) throw std::runtime_error("PLY write failed: " + path);
}

PlyCloud read_ply(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open PLY: " + path);
  std::string line;
  std::size_t count = 0;
  bool header_done = false;
  while (std::getline(is, line)) {
    if (line.rfind("element vertex", 0) == 0)
      count = std::stoul(line.substr(15));
    else if (line == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done) throw std::runtime_error("malformed PLY header: " + path);
  PlyCloud cloud;
  cloud.position.resize(count);
  cloud.motion.resize(count);
  cloud.color.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    float rec[6];
    is.read(reinterpret_cast<char*>(rec), sizeof(rec));
    unsigned char rgb[3];
    is.read(reinterpret_cast<char*>(rgb), 3);
    if (!is) throw std::runtime_error("truncated PLY: " + path);
    cloud.position[i] = {rec[0], rec[1], rec[2]};
    cloud.motion[i] = {rec[3], rec[4], rec[5]};
    cloud.color[i] = {rgb[0], rgb[1], rgb[2]};
  }
  return cloud;
}

}  // namespace wbsf
