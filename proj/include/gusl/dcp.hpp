#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "gusl/error.hpp"
#include "gusl/image.hpp"
#include "gusl/metrics.hpp"
#include "gusl/parallel.hpp"
#include "gusl/trees.hpp"

namespace gusl {

struct DcpParams {
  double omega = 0.95;
  double t0 = 0.1;
  int patch_radius = 7;
  double bright_fraction = 0.001;
  int gf_radius = 20;
  double gf_eps = 1e-3;

  void validate() const {
    detail::require(omega > 0.0 && omega <= 1.0, "dcp: omega must be in (0, 1]");
    detail::require(t0 > 0.0 && t0 < 1.0, "dcp: t0 must be in (0, 1)");
    detail::require(patch_radius >= 1, "dcp: patch_radius must be >= 1");
    detail::require(bright_fraction > 0.0 && bright_fraction <= 1.0, "dcp: bright_fraction must be in (0, 1]");
    detail::require(gf_radius >= 1, "dcp: gf_radius must be >= 1");
    detail::require(gf_eps > 0.0, "dcp: gf_eps must be > 0");
  }

  friend bool operator==(const DcpParams&, const DcpParams&) = default;
};

inline constexpr double kAirlightFloor = 0.05;
inline constexpr double kOmegaMin = 0.5;
inline constexpr double kOmegaMax = 0.98;

struct Airlight {
  std::array<double, 3> a{1.0, 1.0, 1.0};
};

namespace detail {

// Separable (2r+1)^2 window minimum with edge replication.
inline ScalarMap window_min(const ScalarMap& in, int r) {
  const int h = in.height(), w = in.width();
  ScalarMap rows(h, w), out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double m = in.at(y, x);
      for (int k = -r; k <= r; ++k) m = std::min(m, in.at(y, std::clamp(x + k, 0, w - 1)));
      rows.at(y, x) = m;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double m = rows.at(y, x);
      for (int k = -r; k <= r; ++k) m = std::min(m, rows.at(std::clamp(y + k, 0, h - 1), x));
      out.at(y, x) = m;
    }
  return out;
}

// Separable (2r+1)^2 box mean with edge replication.
inline ScalarMap box_mean(const ScalarMap& in, int r) {
  const int h = in.height(), w = in.width();
  const double norm = 1.0 / (2.0 * r + 1.0);
  ScalarMap rows(h, w), out(h, w);
  std::vector<double> prefix(static_cast<std::size_t>(std::max(h, w) + 2 * r + 2));
  for (int y = 0; y < h; ++y) {
    const int len = w + 2 * r;
    prefix[0] = 0.0;
    for (int k = 0; k < len; ++k)
      prefix[static_cast<std::size_t>(k + 1)] = prefix[static_cast<std::size_t>(k)] + in.at(y, std::clamp(k - r, 0, w - 1));
    for (int x = 0; x < w; ++x)
      rows.at(y, x) = (prefix[static_cast<std::size_t>(x + 2 * r + 1)] - prefix[static_cast<std::size_t>(x)]) * norm;
  }
  for (int x = 0; x < w; ++x) {
    const int len = h + 2 * r;
    prefix[0] = 0.0;
    for (int k = 0; k < len; ++k)
      prefix[static_cast<std::size_t>(k + 1)] = prefix[static_cast<std::size_t>(k)] + rows.at(std::clamp(k - r, 0, h - 1), x);
    for (int y = 0; y < h; ++y)
      out.at(y, x) = (prefix[static_cast<std::size_t>(y + 2 * r + 1)] - prefix[static_cast<std::size_t>(y)]) * norm;
  }
  return out;
}

inline ScalarMap channel_min(const ImageBuffer& img) {
  ScalarMap out(img.height(), img.width());
  auto s = img.data();
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::min({s[3 * i], s[3 * i + 1], s[3 * i + 2]});
  return out;
}

}  // namespace detail

// Per-pixel channel minimum followed by a (2r+1)^2 window minimum.
inline ScalarMap dark_channel(const ImageBuffer& img, int radius) {
  detail::require(img.channels() == 3, "dark_channel requires a 3-channel image");
  detail::require(radius >= 0, "dark_channel: radius must be >= 0");
  return detail::window_min(detail::channel_min(img), radius);
}

// Among the brightest bright_fraction of dark-channel pixels, the one with
// the highest luminance supplies A.
inline Airlight estimate_airlight(const ImageBuffer& img, const ScalarMap& dark, double bright_fraction) {
  detail::require(img.channels() == 3, "estimate_airlight requires a 3-channel image");
  detail::require(dark.height() == img.height() && dark.width() == img.width(),
                  "estimate_airlight: dark channel size mismatch");
  detail::require(bright_fraction > 0.0 && bright_fraction <= 1.0, "estimate_airlight: bright_fraction must be in (0, 1]");
  const std::size_t n = img.pixel_count();
  auto count = static_cast<std::size_t>(std::ceil(bright_fraction * static_cast<double>(n) - 1e-9));
  count = std::clamp<std::size_t>(count, 1, n);

  auto dv = dark.data();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto brighter = [&](std::size_t a, std::size_t b) { return dv[a] > dv[b] || (dv[a] == dv[b] && a < b); };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(), brighter);

  auto s = img.data();
  std::size_t best = idx[0];
  double best_lum = -1.0;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = idx[k];
    const double lum = luma(s[3 * i], s[3 * i + 1], s[3 * i + 2]);
    if (lum > best_lum || (lum == best_lum && i < best)) {
      best_lum = lum;
      best = i;
    }
  }
  Airlight out;
  for (int c = 0; c < 3; ++c) out.a[static_cast<std::size_t>(c)] = std::max(kAirlightFloor, s[3 * best + static_cast<std::size_t>(c)]);
  return out;
}

// t~ = 1 - omega * dark(I / A). The normalized image is capped at 1 so the
// estimate stays in [1 - omega, 1].
inline ScalarMap estimate_transmission(const ImageBuffer& img, const Airlight& a, double omega, int radius) {
  detail::require(img.channels() == 3, "estimate_transmission requires a 3-channel image");
  for (double v : a.a)
    if (!(v > 0.0)) throw InvalidArgument("estimate_transmission: airlight components must be > 0");
  detail::require(omega > 0.0 && omega <= 1.0, "estimate_transmission: omega must be in (0, 1]");
  ImageBuffer norm(img.height(), img.width(), 3);
  auto s = img.data();
  auto d = norm.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::min(1.0, s[i] / a.a[i % 3]);
  ScalarMap t = dark_channel(norm, radius);
  for (double& v : t.data()) v = 1.0 - omega * v;
  return t;
}

// Guided filter (He et al. style) with box windows of the given radius.
// A 3-channel guide is reduced to its luminance.
inline ScalarMap guided_filter(const ImageBuffer& guide, const ScalarMap& input, int radius, double eps) {
  detail::require(guide.height() == input.height() && guide.width() == input.width(),
                  "guided_filter: guide and input dimensions differ");
  detail::require(eps > 0.0, "guided_filter: eps must be > 0");
  detail::require(radius >= 0, "guided_filter: radius must be >= 0");
  const ScalarMap g = luminance(guide);
  const std::size_t n = input.size();
  ScalarMap gp(input.height(), input.width()), gg(input.height(), input.width());
  for (std::size_t i = 0; i < n; ++i) {
    gp.data()[i] = g.data()[i] * input.data()[i];
    gg.data()[i] = g.data()[i] * g.data()[i];
  }
  const ScalarMap mean_g = detail::box_mean(g, radius);
  const ScalarMap mean_p = detail::box_mean(input, radius);
  const ScalarMap mean_gp = detail::box_mean(gp, radius);
  const ScalarMap mean_gg = detail::box_mean(gg, radius);

  ScalarMap a(input.height(), input.width()), b(input.height(), input.width());
  for (std::size_t i = 0; i < n; ++i) {
    const double cov = mean_gp.data()[i] - mean_g.data()[i] * mean_p.data()[i];
    const double var = mean_gg.data()[i] - mean_g.data()[i] * mean_g.data()[i];
    a.data()[i] = cov / (var + eps);
    b.data()[i] = mean_p.data()[i] - a.data()[i] * mean_g.data()[i];
  }
  const ScalarMap mean_a = detail::box_mean(a, radius);
  const ScalarMap mean_b = detail::box_mean(b, radius);
  ScalarMap out(input.height(), input.width());
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = mean_a.data()[i] * g.data()[i] + mean_b.data()[i];
  return out;
}

// Radiance before clamping: J = I + (I - A)(1 / max(t, t0) - 1).
inline ImageBuffer recover_radiance_unclamped(const ImageBuffer& img, const Airlight& a, const ScalarMap& t, double t0) {
  detail::require(img.channels() == 3, "recover_radiance requires a 3-channel image");
  detail::require(t.height() == img.height() && t.width() == img.width(), "recover_radiance: transmission size mismatch");
  detail::require(t0 > 0.0 && t0 < 1.0, "recover_radiance: t0 must be in (0, 1)");
  ImageBuffer out(img.height(), img.width(), 3);
  auto s = img.data();
  auto d = out.data();
  auto tv = t.data();
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const double k = 1.0 / std::max(tv[i], t0) - 1.0;
    for (std::size_t c = 0; c < 3; ++c) d[3 * i + c] = s[3 * i + c] + (s[3 * i + c] - a.a[c]) * k;
  }
  return out;
}

inline ImageBuffer recover_radiance(const ImageBuffer& img, const Airlight& a, const ScalarMap& t, double t0) {
  return clamp(recover_radiance_unclamped(img, a, t, t0));
}

inline constexpr int kGlobalStatsDim = 24;

// mean, min, max, population variance for R, G, B, Y, U, V in that order.
inline std::vector<double> global_stats_features(const ImageBuffer& img) {
  detail::require(img.channels() == 3, "global_stats_features requires a 3-channel image");
  const ImageBuffer yuv = rgb_to_yuv(img);
  std::vector<double> out;
  out.reserve(kGlobalStatsDim);
  const auto n = static_cast<double>(img.pixel_count());
  for (const ImageBuffer* src : {&img, &yuv}) {
    auto s = src->data();
    for (std::size_t c = 0; c < 3; ++c) {
      double sum = 0.0, lo = s[c], hi = s[c];
      for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const double v = s[3 * i + c];
        sum += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      const double mean = sum / n;
      double var = 0.0;
      for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const double dv = s[3 * i + c] - mean;
        var += dv * dv;
      }
      out.insert(out.end(), {mean, lo, hi, var / n});
    }
  }
  return out;
}

inline double predict_omega(const TreeEnsembleModel& model, std::span<const double> feats) {
  detail::require(static_cast<int>(feats.size()) == kGlobalStatsDim, "predict_omega: expected 24 global features");
  return std::clamp(model.predict(feats), kOmegaMin, kOmegaMax);
}

// Stage outputs of one DCP run; dehaze_dcp returns only `radiance`.
struct DcpTrace {
  double omega = 0.0;
  ScalarMap dark;
  Airlight airlight;
  ScalarMap raw_transmission;
  ScalarMap transmission;
  ImageBuffer radiance;
};

inline DcpTrace dehaze_dcp_trace(const ImageBuffer& img, const DcpParams& params,
                                 const TreeEnsembleModel* omega_model = nullptr) {
  detail::require(img.channels() == 3, "dehaze_dcp requires a 3-channel image");
  params.validate();
  DcpTrace tr;
  tr.omega = omega_model ? predict_omega(*omega_model, global_stats_features(img)) : params.omega;
  tr.dark = dark_channel(img, params.patch_radius);
  tr.airlight = estimate_airlight(img, tr.dark, params.bright_fraction);
  tr.raw_transmission = estimate_transmission(img, tr.airlight, tr.omega, params.patch_radius);
  tr.transmission = guided_filter(img, tr.raw_transmission, params.gf_radius, params.gf_eps);
  for (double& v : tr.transmission.data()) v = std::clamp(v, 0.0, 1.0);
  tr.radiance = recover_radiance(img, tr.airlight, tr.transmission, params.t0);
  return tr;
}

inline ImageBuffer dehaze_dcp(const ImageBuffer& img, const DcpParams& params,
                              const std::optional<TreeEnsembleModel>& omega_model = std::nullopt) {
  return dehaze_dcp_trace(img, params, omega_model ? &*omega_model : nullptr).radiance;
}

inline std::vector<double> omega_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 9; ++k) grid.push_back(0.50 + 0.05 * k);
  grid.push_back(kOmegaMax);
  return grid;
}

struct HazyPair {
  ImageBuffer clear;
  ImageBuffer hazy;
};

// Grid omega maximizing PSNR(dehaze_dcp(hazy), clear); ties go to the
// smaller omega.
inline double best_omega(const HazyPair& pair, const DcpParams& params) {
  double best = 0.0, best_psnr = -1e300;
  for (double w : omega_grid()) {
    DcpParams p = params;
    p.omega = w;
    const double q = psnr(dehaze_dcp(pair.hazy, p), pair.clear);
    if (q > best_psnr) {
      best_psnr = q;
      best = w;
    }
  }
  return best;
}

struct OmegaFit {
  TreeEnsembleModel model;
  std::vector<double> labels;
  Matrix features;  // one row of global stats per pair
};

inline ForestParams default_omega_forest() {
  ForestParams p;
  p.n_trees = 100;
  p.max_depth = 10;
  p.feature_subsample = 1.0 / 3.0;
  p.seed = 7;
  return p;
}

// Sweeps omega per pair, then fits a random forest from global hazy-image
// statistics to the argmax-PSNR label.
inline OmegaFit fit_omega_regressor(const std::vector<HazyPair>& pairs, const DcpParams& params = {},
                                    const ForestParams& forest = default_omega_forest()) {
  if (pairs.size() < 10) throw IntegrityError("fit_omega_regressor: need at least 10 pairs");
  OmegaFit fit;
  fit.labels.resize(pairs.size());
  fit.features.resize(static_cast<Eigen::Index>(pairs.size()), kGlobalStatsDim);
  parallel_for(pairs.size(), [&](std::size_t i) {
    fit.labels[i] = best_omega(pairs[i], params);
    const auto f = global_stats_features(pairs[i].hazy);
    for (int j = 0; j < kGlobalStatsDim; ++j) fit.features(static_cast<Eigen::Index>(i), j) = f[static_cast<std::size_t>(j)];
  });
  fit.model = fit_random_forest(fit.features, fit.labels, forest);
  return fit;
}

}  // namespace gusl
