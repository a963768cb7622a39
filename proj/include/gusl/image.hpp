#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "gusl/error.hpp"

namespace gusl {

// H x W x C grid of intensities, row-major with interleaved channels.
// Values are nominally in [0, 1]; only clamp() and save_image() enforce it.
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int height, int width, int channels, double fill = 0.0)
      : height_(height), width_(width), channels_(channels) {
    detail::require(height > 0 && width > 0, "image dimensions must be positive");
    detail::require(channels == 1 || channels == 3, "image must have 1 or 3 channels");
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const ImageBuffer& o) const {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// Single-channel real-valued map (transmission, dark channel, depth).
class ScalarMap {
 public:
  ScalarMap() = default;
  ScalarMap(int height, int width, double fill = 0.0) : height_(height), width_(width) {
    detail::require(height > 0 && width > 0, "map dimensions must be positive");
    data_.assign(static_cast<std::size_t>(height) * width, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  double& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  double at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  friend bool operator==(const ScalarMap&, const ScalarMap&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// H x W x C real tensor with no range constraint; carries Saab responses.
struct FeatureTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  FeatureTensor() = default;
  FeatureTensor(int h, int w, int c, double fill = 0.0) : height(h), width(w), channels(c) {
    detail::require(h > 0 && w > 0 && c > 0, "tensor dimensions must be positive");
    data.assign(static_cast<std::size_t>(h) * w * c, fill);
  }

  double& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  const double* pixel(int y, int x) const {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
  }

  friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;
};

inline FeatureTensor to_tensor(const ImageBuffer& img) {
  FeatureTensor t(img.height(), img.width(), img.channels());
  std::copy(img.data().begin(), img.data().end(), t.data.begin());
  return t;
}

inline ImageBuffer clamp(ImageBuffer img) {
  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

// BT.601 luma. Written relative to G so that gray pixels map to exactly
// their own value.
inline double luma(double r, double g, double b) {
  return g + 0.299 * (r - g) + 0.114 * (b - g);
}

inline ScalarMap luminance(const ImageBuffer& img) {
  ScalarMap out(img.height(), img.width());
  auto src = img.data();
  auto dst = out.data();
  if (img.channels() == 1) {
    std::copy(src.begin(), src.end(), dst.begin());
    return out;
  }
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst[i] = luma(src[3 * i], src[3 * i + 1], src[3 * i + 2]);
  return out;
}

// BT.601 full-range YCbCr: Y in [0,1], chroma offset by 0.5 into [0,1].
inline ImageBuffer rgb_to_yuv(const ImageBuffer& img) {
  detail::require(img.channels() == 3, "rgb_to_yuv requires a 3-channel image");
  ImageBuffer out(img.height(), img.width(), 3);
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const double r = src[3 * i], g = src[3 * i + 1], b = src[3 * i + 2];
    const double y = luma(r, g, b);
    dst[3 * i] = y;
    dst[3 * i + 1] = (b - y) / 1.772 + 0.5;
    dst[3 * i + 2] = (r - y) / 1.402 + 0.5;
  }
  return out;
}

namespace detail {

struct Tap {
  int lo;
  int hi;
  double frac;
};

// Half-pixel-center source coordinates, clamped at the borders.
inline std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    int lo = static_cast<int>(std::floor(s));
    int hi = std::min(lo + 1, in - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, s - lo};
  }
  return taps;
}

inline double lerp(double a, double b, double f) { return a + f * (b - a); }

template <typename Get, typename Put>
void resize_plane(int in_h, int in_w, int out_h, int out_w, int channels, Get get, Put put) {
  const auto ty = bilinear_taps(in_h, out_h);
  const auto tx = bilinear_taps(in_w, out_w);
  for (int y = 0; y < out_h; ++y) {
    const Tap& vy = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_w; ++x) {
      const Tap& vx = tx[static_cast<std::size_t>(x)];
      for (int c = 0; c < channels; ++c) {
        const double top = lerp(get(vy.lo, vx.lo, c), get(vy.lo, vx.hi, c), vx.frac);
        const double bottom = lerp(get(vy.hi, vx.lo, c), get(vy.hi, vx.hi, c), vx.frac);
        put(y, x, c, lerp(top, bottom, vy.frac));
      }
    }
  }
}

}  // namespace detail

// Bilinear resampling. Interpolating inputs in [0,1] keeps outputs in [0,1].
inline ImageBuffer resize(const ImageBuffer& img, int new_h, int new_w) {
  detail::require(new_h >= 1 && new_w >= 1, "resize target must be at least 1x1");
  detail::require(!img.empty(), "resize of empty image");
  ImageBuffer out(new_h, new_w, img.channels());
  detail::resize_plane(
      img.height(), img.width(), new_h, new_w, img.channels(),
      [&](int y, int x, int c) { return img.at(y, x, c); },
      [&](int y, int x, int c, double v) { out.at(y, x, c) = v; });
  return out;
}

inline ScalarMap resize(const ScalarMap& map, int new_h, int new_w) {
  detail::require(new_h >= 1 && new_w >= 1, "resize target must be at least 1x1");
  ScalarMap out(new_h, new_w);
  detail::resize_plane(
      map.height(), map.width(), new_h, new_w, 1, [&](int y, int x, int) { return map.at(y, x); },
      [&](int y, int x, int, double v) { out.at(y, x) = v; });
  return out;
}

inline ImageBuffer add(const ImageBuffer& a, const ImageBuffer& b) {
  detail::require(a.same_shape(b), "image shape mismatch");
  ImageBuffer out = a;
  auto o = out.data();
  auto s = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += s[i];
  return out;
}

inline ImageBuffer subtract(const ImageBuffer& a, const ImageBuffer& b) {
  detail::require(a.same_shape(b), "image shape mismatch");
  ImageBuffer out = a;
  auto o = out.data();
  auto s = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= s[i];
  return out;
}

}  // namespace gusl
