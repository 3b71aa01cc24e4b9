#include "wbsf/flow_color.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace wbsf {

namespace {

// Six-segment colour wheel used by the Middlebury flow tools (55 entries).
struct Wheel {
  std::vector<Eigen::Vector3f> colors;
  Wheel() {
    const int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    auto push = [&](int n, auto fn) {
      for (int i = 0; i < n; ++i) colors.push_back(fn(static_cast<float>(i) / n));
    };
    push(RY, [](float t) { return Eigen::Vector3f(1.f, t, 0.f); });
    push(YG, [](float t) { return Eigen::Vector3f(1.f - t, 1.f, 0.f); });
    push(GC, [](float t) { return Eigen::Vector3f(0.f, 1.f, t); });
    push(CB, [](float t) { return Eigen::Vector3f(0.f, 1.f - t, 1.f); });
    push(BM, [](float t) { return Eigen::Vector3f(t, 0.f, 1.f); });
    push(MR, [](float t) { return Eigen::Vector3f(1.f, 0.f, 1.f - t); });
  }
};

const Wheel& wheel() {
  static const Wheel w;
  return w;
}

}  // namespace

Eigen::Vector3f flow_wheel_color(float fx, float fy) {
  const auto& colors = wheel().colors;
  const int ncols = static_cast<int>(colors.size());
  const float rad = std::sqrt(fx * fx + fy * fy);
  const float a = std::atan2(-fy, -fx) / static_cast<float>(M_PI);
  const float fk = (a + 1.f) / 2.f * (ncols - 1);
  int k0 = static_cast<int>(std::floor(fk));
  if (k0 >= ncols) k0 = ncols - 1;
  const int k1 = (k0 + 1) % ncols;
  const float f = fk - k0;
  Eigen::Vector3f col = (1.f - f) * colors[k0] + f * colors[k1];
  if (rad <= 1.f)
    col = Eigen::Vector3f::Ones() - rad * (Eigen::Vector3f::Ones() - col);
  else
    col *= 0.75f;  // out of range
  return col;
}

Raster flow_to_color(const FlowField& f, float max_magnitude) {
  float maxmag = max_magnitude;
  if (maxmag <= 0.f) {
    std::vector<float> mags;
    mags.reserve(static_cast<std::size_t>(f.width()) * f.height());
    for (int y = 0; y < f.height(); ++y)
      for (int x = 0; x < f.width(); ++x)
        if (f.valid(x, y)) mags.push_back(f.flow(x, y).norm());
    if (mags.empty()) {
      maxmag = 1.f;
    } else {
      const std::size_t idx =
          std::min(mags.size() - 1, static_cast<std::size_t>(0.99 * mags.size()));
      std::nth_element(mags.begin(), mags.begin() + idx, mags.end());
      maxmag = std::max(mags[idx], 1e-6f);
    }
  }
  Raster out(f.width(), f.height(), 3, 0.f);
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      if (!f.valid(x, y)) continue;  // invalid stays black
      const Eigen::Vector2f u = f.flow(x, y) / maxmag;
      // Saturate at the wheel rim.
      const float n = u.norm();
      const Eigen::Vector2f v = n > 1.f ? Eigen::Vector2f(u / n) : u;
      const Eigen::Vector3f col = flow_wheel_color(v.x(), v.y());
      out(x, y, 0) = col.x();
      out(x, y, 1) = col.y();
      out(x, y, 2) = col.z();
    }
  return out;
}

}  // namespace wbsf
