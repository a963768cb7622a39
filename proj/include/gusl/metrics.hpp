#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "gusl/error.hpp"
#include "gusl/image.hpp"

namespace gusl {

inline constexpr double kPsnrSentinel = 99.0;

inline double mse(const ImageBuffer& a, const ImageBuffer& b) {
  detail::require(a.same_shape(b), "mse: shape mismatch");
  auto x = a.data();
  auto y = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    acc += d * d;
  }
  return acc / static_cast<double>(x.size());
}

// Peak 1. Identical images give the 99 dB sentinel instead of infinity.
inline double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  const double e = mse(a, b);
  if (e == 0.0) return kPsnrSentinel;
  return -10.0 * std::log10(e);
}

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size) * size);
  const double c = (size - 1) / 2.0;
  double total = 0.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dy = y - c, dx = x - c;
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      w[static_cast<std::size_t>(y) * size + x] = v;
      total += v;
    }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace detail

// Mean SSIM over all fully-contained windows ("valid" placement), computed
// on luminance for RGB inputs. Local moments are centered per window so
// ssim(x, x) is exactly 1.
inline double ssim(const ImageBuffer& a, const ImageBuffer& b, const SsimOptions& opt = {}) {
  detail::require(a.same_shape(b), "ssim: shape mismatch");
  const int n = opt.window;
  detail::require(a.height() >= n && a.width() >= n, "ssim: image smaller than window");
  const ScalarMap x = luminance(a);
  const ScalarMap y = luminance(b);
  const auto w = detail::gaussian_window(n, opt.sigma);
  const double c1 = (opt.k1) * (opt.k1);
  const double c2 = (opt.k2) * (opt.k2);

  const int out_h = a.height() - n + 1;
  const int out_w = a.width() - n + 1;
  double total = 0.0;
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      double mx = 0.0, my = 0.0;
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          const double wt = w[static_cast<std::size_t>(j) * n + i];
          mx += wt * x.at(oy + j, ox + i);
          my += wt * y.at(oy + j, ox + i);
        }
      double vx = 0.0, vy = 0.0, cxy = 0.0;
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          const double wt = w[static_cast<std::size_t>(j) * n + i];
          const double dx = x.at(oy + j, ox + i) - mx;
          const double dy = y.at(oy + j, ox + i) - my;
          vx += wt * dx * dx;
          vy += wt * dy * dy;
          cxy += wt * dx * dy;
        }
      total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  }
  return total / (static_cast<double>(out_h) * out_w);
}

}  // namespace gusl
