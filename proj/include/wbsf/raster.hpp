#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace wbsf {

/// Row-major interleaved image container. Colour data lives in [0,1], flow
/// data in pixels, depth in scene units.
template <typename Scalar>
class RasterT {
 public:
  RasterT() = default;

  RasterT(int width, int height, int channels, Scalar fill = Scalar(0))
      : width_(width),
        height_(height),
        channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {
    if (width < 1 || height < 1)
      throw std::invalid_argument("raster dimensions must be >= 1");
    if (channels < 1 || channels > 3)
      throw std::invalid_argument("raster channels must be 1, 2 or 3");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  std::size_t size() const { return data_.size(); }

  Scalar& operator()(int x, int y, int c = 0) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  Scalar operator()(int x, int y, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  /// Clamp-to-edge access; the border rule used throughout.
  Scalar at_clamped(int x, int y, int c = 0) const {
    x = std::clamp(x, 0, width_ - 1);
    y = std::clamp(y, 0, height_ - 1);
    return (*this)(x, y, c);
  }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar* row(int y) { return data_.data() + static_cast<std::size_t>(y) * width_ * channels_; }
  const Scalar* row(int y) const {
    return data_.data() + static_cast<std::size_t>(y) * width_ * channels_;
  }

  bool same_shape(const RasterT& other) const {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_;
  }

  template <typename Other>
  RasterT<Other> cast() const {
    RasterT<Other> out(width_, height_, channels_);
    for (std::size_t i = 0; i < data_.size(); ++i)
      out.data()[i] = static_cast<Other>(data_[i]);
    return out;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<Scalar> data_;
};

using Raster = RasterT<float>;
using Rasterd = RasterT<double>;

/// Per-pixel 2-vector field in pixel units. Components with magnitude above
/// 1e9 (Middlebury convention) mark the pixel as unknown.
class FlowField {
 public:
  static constexpr float kInvalid = 1e10f;

  static bool component_valid(float v) {
    return std::isfinite(v) && std::abs(v) <= 1e9f;
  }

  FlowField() = default;
  FlowField(int width, int height, Eigen::Vector2f fill = {0.f, 0.f})
      : raster_(width, height, 2) {
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) set_flow(x, y, fill);
  }
  explicit FlowField(Raster r) : raster_(std::move(r)) {
    if (raster_.channels() != 2)
      throw std::invalid_argument("flow field requires a 2-channel raster");
  }

  int width() const { return raster_.width(); }
  int height() const { return raster_.height(); }
  bool empty() const { return raster_.empty(); }

  Eigen::Vector2f flow(int x, int y) const {
    return {raster_(x, y, 0), raster_(x, y, 1)};
  }
  void set_flow(int x, int y, const Eigen::Vector2f& f) {
    raster_(x, y, 0) = f.x();
    raster_(x, y, 1) = f.y();
  }
  bool valid(int x, int y) const {
    return component_valid(raster_(x, y, 0)) && component_valid(raster_(x, y, 1));
  }
  void set_invalid(int x, int y) {
    raster_(x, y, 0) = kInvalid;
    raster_(x, y, 1) = kInvalid;
  }

  Raster& raster() { return raster_; }
  const Raster& raster() const { return raster_; }

 private:
  Raster raster_;
};

/// Per-pixel boolean mask; true = occluded/invalid.
class BitMask {
 public:
  BitMask() = default;
  BitMask(int width, int height, bool fill = false)
      : width_(width), height_(height),
        bits_(static_cast<std::size_t>(width) * height, fill ? 1 : 0) {
    if (width < 1 || height < 1)
      throw std::invalid_argument("mask dimensions must be >= 1");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return bits_.empty(); }

  bool operator()(int x, int y) const {
    return bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  void set(int x, int y, bool v) {
    bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Rec.601 luma of a 1- or 3-channel raster.
template <typename Scalar>
RasterT<Scalar> luma(const RasterT<Scalar>& image) {
  if (image.channels() == 1) return image;
  if (image.channels() != 3)
    throw std::invalid_argument("luma expects 1 or 3 channels");
  RasterT<Scalar> out(image.width(), image.height(), 1);
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      out(x, y) = Scalar(0.299) * image(x, y, 0) + Scalar(0.587) * image(x, y, 1) +
                  Scalar(0.114) * image(x, y, 2);
  return out;
}

}  // namespace wbsf
