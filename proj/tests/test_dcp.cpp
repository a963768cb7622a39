#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gusl/dcp.hpp"
#include "gusl/harness.hpp"
#include "gusl/metrics.hpp"

namespace {

using gusl::Airlight;
using gusl::ImageBuffer;
using gusl::ScalarMap;

ImageBuffer random_image(int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  gusl::Rng rng(seed);
  ImageBuffer img(h, w, 3);
  for (double& v : img.data()) v = rng.uniform(lo, hi);
  return img;
}

ScalarMap dark_oracle(const ImageBuffer& img, int r) {
  ScalarMap out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double m = 1e300;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int yy = std::clamp(y + dy, 0, img.height() - 1), xx = std::clamp(x + dx, 0, img.width() - 1);
          for (int c = 0; c < 3; ++c) m = std::min(m, img.at(yy, xx, c));
        }
      out.at(y, x) = m;
    }
  return out;
}

Airlight airlight_oracle(const ImageBuffer& img, const ScalarMap& dark, double fraction) {
  const std::size_t n = img.pixel_count();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return dark.data()[a] > dark.data()[b]; });
  const auto k = static_cast<std::size_t>(std::max(1.0, std::ceil(fraction * n - 1e-9)));
  std::size_t best = idx[0];
  double best_y = -1;
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t i = idx[j];
    const double* p = img.data().data() + 3 * i;
    const double y = gusl::luma(p[0], p[1], p[2]);
    if (y > best_y) {
      best_y = y;
      best = i;
    }
  }
  Airlight a;
  for (int c = 0; c < 3; ++c) a.a[c] = std::max(0.05, img.data()[3 * best + c]);
  return a;
}

TEST(DarkChannel, ConstantAndBlack) {
  ImageBuffer img(6, 7, 3);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 7; ++x) {
      img.at(y, x, 0) = 0.4;
      img.at(y, x, 1) = 0.6;
      img.at(y, x, 2) = 0.5;
    }
  for (const auto map = gusl::dark_channel(img, 2); double v : map.data()) EXPECT_EQ(v, 0.4);
  for (const auto map = gusl::dark_channel(ImageBuffer(5, 5, 3, 0.0), 1); double v : map.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(gusl::dark_channel(ImageBuffer(5, 5, 1), 1), gusl::InvalidArgument);
}

TEST(DarkChannel, BrightPixelMatchesBruteForce) {
  ImageBuffer img(5, 5, 3, 0.2);
  for (int c = 0; c < 3; ++c) img.at(2, 3, c) = 1.0;
  EXPECT_EQ(gusl::dark_channel(img, 1), dark_oracle(img, 1));
}

TEST(DarkChannel, RandomImagesMatchBruteForceExactly) {
  for (std::uint64_t s = 0; s < 6; ++s) {
    const ImageBuffer img = random_image(9 + static_cast<int>(s), 14 - static_cast<int>(s), s);
    for (int r : {0, 1, 3, 7}) {
      const ScalarMap d = gusl::dark_channel(img, r);
      EXPECT_EQ(d, dark_oracle(img, r));
      for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
          EXPECT_LE(d.at(y, x), std::min({img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)}));
    }
  }
}

TEST(Airlight, ConstantImage) {
  const ImageBuffer img(8, 8, 3, 0.8);
  const Airlight a = gusl::estimate_airlight(img, gusl::dark_channel(img, 2), 0.01);
  for (double v : a.a) EXPECT_EQ(v, 0.8);
}

TEST(Airlight, WhitePatchDominates) {
  ImageBuffer img = random_image(40, 40, 3, 0.0, 0.6);
  for (int y = 10; y < 14; ++y)
    for (int x = 20; x < 24; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = 1.0;
  const Airlight a = gusl::estimate_airlight(img, gusl::dark_channel(img, 1), 0.005);
  for (double v : a.a) EXPECT_EQ(v, 1.0);
}

TEST(Airlight, MatchesSortAndScanOracle) {
  for (std::uint64_t s = 0; s < 8; ++s) {
    const ImageBuffer img = random_image(50, 61, 40 + s);
    const ScalarMap dark = gusl::dark_channel(img, 2);
    for (double f : {0.001, 0.01, 0.2}) {
      const Airlight a = gusl::estimate_airlight(img, dark, f), o = airlight_oracle(img, dark, f);
      EXPECT_EQ(a.a, o.a);
    }
  }
}

TEST(Airlight, FloorsDarkComponents) {
  ImageBuffer img(4, 4, 3, 0.0);
  const Airlight a = gusl::estimate_airlight(img, gusl::dark_channel(img, 1), 0.5);
  for (double v : a.a) EXPECT_EQ(v, gusl::kAirlightFloor);
}

TEST(Transmission, ImageEqualToAirlight) {
  Airlight a;
  a.a = {0.7, 0.8, 0.9};
  ImageBuffer img(6, 6, 3);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = a.a[c];
  for (const auto map = gusl::estimate_transmission(img, a, 0.95, 2); double v : map.data()) EXPECT_NEAR(v, 0.05, 1e-15);
  for (const auto map = gusl::estimate_transmission(ImageBuffer(6, 6, 3, 0.0), a, 0.7, 2); double v : map.data()) EXPECT_EQ(v, 1.0);
  a.a[1] = 0.0;
  EXPECT_THROW(gusl::estimate_transmission(img, a, 0.95, 2), gusl::InvalidArgument);
}

TEST(Transmission, ConstantHazeClosedForm) {
  // I = J t* + A (1 - t*)  =>  dark(I/A) = t* dark(J/A) + 1 - t*.
  const ImageBuffer clear = gusl::procedural_scene(32, 11);
  Airlight a;
  a.a = {0.9, 0.85, 0.95};
  gusl::HazeSpec spec;
  spec.airlight = a;
  spec.beta = 1.0;
  spec.constant_depth = -std::log(0.6);
  const ImageBuffer hazy = gusl::synthesize_haze(clear, spec);
  ImageBuffer jn = clear;
  for (std::size_t i = 0; i < jn.data().size(); ++i) jn.data()[i] /= a.a[i % 3];
  const ScalarMap jdark = gusl::dark_channel(jn, 3);
  const ScalarMap t = gusl::estimate_transmission(hazy, a, 0.9, 3);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(t.data()[i], 1 - 0.9 * (1 - 0.6 * (1 - jdark.data()[i])), 1e-12);
}

TEST(Transmission, StaysWithinBounds) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const ImageBuffer img = random_image(20, 20, 70 + s);
    Airlight a;
    a.a = {0.3, 0.5, 0.4};  // dimmer than many pixels
    for (double w : {0.5, 0.8, 1.0})
      for (const auto map = gusl::estimate_transmission(img, a, w, 2); double v : map.data()) {
        EXPECT_GE(v, 1 - w - 1e-15);
        EXPECT_LE(v, 1.0);
      }
  }
}

TEST(GuidedFilter, ConstantInputStaysConstant) {
  const ImageBuffer guide = random_image(30, 25, 3);
  const ScalarMap in(30, 25, 0.42);
  for (int r : {1, 4, 20})
    for (double eps : {1e-6, 1e-3, 1.0})
      for (const auto map = gusl::guided_filter(guide, in, r, eps); double v : map.data()) EXPECT_NEAR(v, 0.42, 1e-12);
}

TEST(GuidedFilter, ConstantGuideGivesBoxMean) {
  gusl::Rng rng(4);
  ScalarMap in(12, 15);
  for (double& v : in.data()) v = rng.uniform();
  const ScalarMap out = gusl::guided_filter(ImageBuffer(12, 15, 3, 0.5), in, 2, 1e-3);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 15; ++x) {
      // Box mean of the box mean (the filter averages b over windows too).
      double acc = 0;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          const int yy = std::clamp(y + dy, 0, 11), xx = std::clamp(x + dx, 0, 14);
          double inner = 0;
          for (int ey = -2; ey <= 2; ++ey)
            for (int ex = -2; ex <= 2; ++ex) inner += in.at(std::clamp(yy + ey, 0, 11), std::clamp(xx + ex, 0, 14));
          acc += inner / 25;
        }
      EXPECT_NEAR(out.at(y, x), acc / 25, 1e-12);
    }
}

TEST(GuidedFilter, SelfGuidanceApproximatesIdentity) {
  gusl::Rng rng(8);
  ImageBuffer guide(20, 20, 1);
  for (double& v : guide.data()) v = rng.uniform();
  ScalarMap in(20, 20);
  for (std::size_t i = 0; i < in.size(); ++i) in.data()[i] = guide.data()[i];
  for (double eps : {1e-4, 1e-6}) {
    const ScalarMap out = gusl::guided_filter(guide, in, 2, eps);
    double worst = 0;
    for (std::size_t i = 0; i < in.size(); ++i) worst = std::max(worst, std::abs(out.data()[i] - in.data()[i]));
    EXPECT_LT(worst, 2000 * eps);
  }
  EXPECT_THROW(gusl::guided_filter(guide, in, 2, 0.0), gusl::InvalidArgument);
  EXPECT_THROW(gusl::guided_filter(ImageBuffer(5, 5, 3), in, 2, 1e-3), gusl::InvalidArgument);
}

TEST(RecoverRadiance, IdentityAndAirlightCases) {
  const ImageBuffer img = random_image(8, 8, 21);
  Airlight a;
  a.a = {0.8, 0.9, 0.7};
  EXPECT_EQ(gusl::recover_radiance_unclamped(img, a, ScalarMap(8, 8, 1.0), 0.1), img);
  ImageBuffer flat(8, 8, 3);
  for (std::size_t i = 0; i < flat.data().size(); ++i) flat.data()[i] = a.a[i % 3];
  gusl::Rng rng(2);
  ScalarMap t(8, 8);
  for (double& v : t.data()) v = rng.uniform();
  EXPECT_EQ(gusl::recover_radiance(flat, a, t, 0.1), flat);
}

TEST(RecoverRadiance, InvertsScatteringModel) {
  const ImageBuffer clear = random_image(16, 16, 31);
  gusl::Rng rng(32);
  ScalarMap t(16, 16);
  for (double& v : t.data()) v = rng.uniform(0.1, 1.0);
  Airlight a;
  a.a = {0.92, 0.88, 0.95};
  ImageBuffer hazy(16, 16, 3);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c) hazy.data()[3 * i + c] = clear.data()[3 * i + c] * t.data()[i] + a.a[c] * (1 - t.data()[i]);
  const ImageBuffer j = gusl::recover_radiance(hazy, a, t, 0.1);
  for (std::size_t i = 0; i < j.data().size(); ++i) EXPECT_NEAR(j.data()[i], clear.data()[i], 1e-12);
}

TEST(GlobalStats, ConstantGray) {
  const auto f = gusl::global_stats_features(ImageBuffer(9, 9, 3, 0.3));
  ASSERT_EQ(f.size(), 24u);
  for (int ch = 0; ch < 6; ++ch) {
    const double v = ch < 4 ? 0.3 : 0.5;
    EXPECT_NEAR(f[4 * ch], v, 1e-12);
    EXPECT_NEAR(f[4 * ch + 1], v, 1e-12);
    EXPECT_NEAR(f[4 * ch + 2], v, 1e-12);
    EXPECT_NEAR(f[4 * ch + 3], 0.0, 1e-12);
  }
}

TEST(GlobalStats, MatchesTwoPassOracle) {
  const ImageBuffer img = random_image(13, 17, 50);
  const auto f = gusl::global_stats_features(img);
  ASSERT_EQ(f.size(), 24u);
  for (int ch = 0; ch < 6; ++ch) {
    std::vector<double> v;
    for (int y = 0; y < 13; ++y)
      for (int x = 0; x < 17; ++x) {
        const double r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
        const double yy = 0.299 * r + 0.587 * g + 0.114 * b;
        const double vals[6] = {r, g, b, yy, (b - yy) / 1.772 + 0.5, (r - yy) / 1.402 + 0.5};
        v.push_back(vals[ch]);
      }
    double mean = 0;
    for (double x : v) mean += x;
    mean /= v.size();
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= v.size();
    EXPECT_NEAR(f[4 * ch], mean, 1e-12);
    EXPECT_NEAR(f[4 * ch + 1], *std::min_element(v.begin(), v.end()), 1e-12);
    EXPECT_NEAR(f[4 * ch + 2], *std::max_element(v.begin(), v.end()), 1e-12);
    EXPECT_NEAR(f[4 * ch + 3], var, 1e-12);
  }
}

gusl::TreeEnsembleModel single_leaf(double w) {
  gusl::TreeEnsembleModel m;
  m.mode = gusl::EnsembleMode::bagged;
  m.feature_dim = 24;
  gusl::RegressionTree t;
  t.nodes.emplace_back();
  t.nodes[0].weight = w;
  m.trees.push_back(t);
  return m;
}

TEST(PredictOmega, ConstantModelAndClamp) {
  const std::vector<double> f(24, 0.3);
  EXPECT_EQ(gusl::predict_omega(single_leaf(0.9), f), 0.9);
  EXPECT_EQ(gusl::predict_omega(single_leaf(1.3), f), 0.98);
  EXPECT_EQ(gusl::predict_omega(single_leaf(0.1), f), 0.5);
  EXPECT_THROW(gusl::predict_omega(single_leaf(0.9), std::vector<double>(5)), gusl::InvalidArgument);
}

TEST(PredictOmega, ForestIsMeanOfTrees) {
  gusl::Rng rng(3);
  gusl::Matrix x(40, 24);
  std::vector<double> y(40);
  for (int i = 0; i < 40; ++i) {
    for (int j = 0; j < 24; ++j) x(i, j) = rng.uniform();
    y[i] = rng.uniform(0.6, 0.9);
  }
  gusl::ForestParams p = gusl::default_omega_forest();
  p.n_trees = 12;
  const auto m = gusl::fit_random_forest(x, y, p);
  std::vector<double> probe(24);
  for (double& v : probe) v = rng.uniform();
  double acc = 0;
  for (const auto& t : m.trees) acc += t.predict(probe.data());
  EXPECT_NEAR(gusl::predict_omega(m, probe), std::clamp(acc / 12, 0.5, 0.98), 1e-12);
}

TEST(DehazeDcp, ShapeAndUniformHazeImprovement) {
  const ImageBuffer clear = gusl::procedural_scene(64, 5);
  gusl::HazeSpec spec;
  spec.airlight.a = {0.85, 0.85, 0.85};
  spec.beta = 1.0;
  spec.constant_depth = std::log(2.0);
  const ImageBuffer hazy = gusl::synthesize_haze(clear, spec);
  const ImageBuffer out = gusl::dehaze_dcp(hazy, gusl::DcpParams{});
  EXPECT_TRUE(out.same_shape(hazy));
  EXPECT_GT(gusl::psnr(out, clear), gusl::psnr(hazy, clear));
}

TEST(DehazeDcp, ClearInputWithSmallOmegaIsNearIdentity) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    const ImageBuffer clear = gusl::procedural_scene(64, 100 + s);
    gusl::DcpParams p;
    p.omega = 0.5;
    const double gentle = gusl::psnr(gusl::dehaze_dcp(clear, p), clear);
    p.omega = 0.95;
    // The pale sky band breaks the prior locally, so only a loose floor.
    EXPECT_GE(gentle, 25.0);
    EXPECT_GT(gentle, gusl::psnr(gusl::dehaze_dcp(clear, p), clear));
  }
}

TEST(DehazeDcp, OmegaModelOverridesParams) {
  const ImageBuffer img = gusl::procedural_scene(48, 9);
  gusl::DcpParams p;
  p.omega = 0.6;
  const auto trace = gusl::dehaze_dcp_trace(img, p, nullptr);
  EXPECT_EQ(trace.omega, 0.6);
  const auto model = single_leaf(0.85);
  EXPECT_EQ(gusl::dehaze_dcp_trace(img, p, &model).omega, 0.85);
  p.omega = 0.85;
  EXPECT_EQ(gusl::dehaze_dcp(img, p), gusl::dehaze_dcp(img, gusl::DcpParams{.omega = 0.6}, model));
}

TEST(OmegaRegressor, GridAndLabelOfClearInput) {
  const auto grid = gusl::omega_grid();
  ASSERT_EQ(grid.size(), 11u);
  EXPECT_DOUBLE_EQ(grid.front(), 0.5);
  EXPECT_DOUBLE_EQ(grid[9], 0.95);
  EXPECT_EQ(grid.back(), 0.98);
  const ImageBuffer clear = gusl::procedural_scene(48, 77);
  EXPECT_EQ(gusl::best_omega({clear, clear}, gusl::DcpParams{}), 0.5);
}

TEST(OmegaRegressor, IdenticalBetaGivesConsistentPredictions) {
  std::vector<gusl::HazyPair> pairs;
  for (std::uint64_t s = 0; s < 12; ++s) {
    const ImageBuffer clear = gusl::procedural_scene(48, 300 + s);
    gusl::HazeSpec spec;
    spec.beta = 1.0;
    spec.airlight.a = {0.9, 0.9, 0.9};
    spec.depth = gusl::ramp_depth(48, 48);
    pairs.push_back({clear, gusl::synthesize_haze(clear, spec)});
  }
  const auto fit = gusl::fit_omega_regressor(pairs);
  ASSERT_EQ(fit.labels.size(), 12u);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double pred = gusl::predict_omega(fit.model, gusl::global_stats_features(pairs[i].hazy));
    EXPECT_LE(std::abs(pred - fit.labels[i]), 0.05 + 1e-12);
  }
  pairs.resize(9);
  EXPECT_THROW(gusl::fit_omega_regressor(pairs), gusl::IntegrityError);
}

TEST(OmegaRegressor, DepthZeroForestPredictsMeanLabel) {
  gusl::Matrix x = gusl::Matrix::Random(20, 24);
  std::vector<double> y(20, 0.8);
  y[3] = 0.7;
  gusl::ForestParams p = gusl::default_omega_forest();
  p.max_depth = 0;
  p.bootstrap = false;
  const auto m = gusl::fit_random_forest(x, y, p);
  std::vector<double> probe(24, 0.0);
  EXPECT_NEAR(m.predict(probe), 0.795, 1e-12);
}

}  // namespace
