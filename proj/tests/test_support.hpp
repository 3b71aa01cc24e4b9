#pragma once

#include <filesystem>
#include <string>

#include "wbsf/geometry.hpp"
#include "wbsf/raster.hpp"
#include "wbsf/rng.hpp"

namespace wbsf::test {

inline Raster random_raster(int w, int h, int ch, Rng& rng, float lo = 0.f,
                            float hi = 1.f) {
  Raster r(w, h, ch);
  for (std::size_t i = 0; i < r.size(); ++i)
    r.data()[i] = static_cast<float>(rng.uniform(lo, hi));
  return r;
}

inline FlowField random_flow(int w, int h, Rng& rng, float mag = 10.f) {
  FlowField f(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      f.set_flow(x, y, {static_cast<float>(rng.uniform(-mag, mag)),
                        static_cast<float>(rng.uniform(-mag, mag))});
  return f;
}

/// Smooth random texture: white noise blurred by repeated box passes. Keeps
/// enough gradient structure for descriptor matching.
Raster textured_image(int w, int h, std::uint64_t seed);

/// Random well-posed stereo rig (two cameras looking roughly at +z).
StereoRigFrame random_rig(Rng& rng, int width = 640, int height = 480);

/// Scratch directory under the system temp path, wiped on construction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    path_ = (std::filesystem::temp_directory_path() / name).string();
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const { return path_ + "/" + name; }

 private:
  std::string path_;
};

}  // namespace wbsf::test
