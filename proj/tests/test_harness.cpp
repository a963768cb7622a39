#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "gusl/harness.hpp"
#include "gusl/image_io.hpp"

namespace fs = std::filesystem;

namespace {

using gusl::ImageBuffer;

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "gusl_harness" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<ImageBuffer> scenes(int n, int size, std::uint64_t seed) {
  std::vector<ImageBuffer> out;
  for (int i = 0; i < n; ++i) out.push_back(gusl::procedural_scene(size, seed + static_cast<std::uint64_t>(i)));
  return out;
}

TEST(SynthesizeHaze, ZeroBetaIsIdentity) {
  const ImageBuffer clear = gusl::procedural_scene(24, 1);
  gusl::HazeSpec spec;
  spec.beta = 0.0;
  spec.airlight.a = {0.9, 0.8, 0.7};
  spec.depth = gusl::ramp_depth(24, 24);
  EXPECT_EQ(gusl::synthesize_haze(clear, spec), clear);
}

TEST(SynthesizeHaze, LargeBetaApproachesAirlight) {
  const ImageBuffer clear = gusl::procedural_scene(16, 2);
  gusl::HazeSpec spec;
  spec.beta = 60.0;
  spec.constant_depth = 1.0;
  spec.airlight.a = {0.9, 0.85, 0.8};
  const ImageBuffer hazy = gusl::synthesize_haze(clear, spec);
  for (std::size_t i = 0; i < hazy.data().size(); ++i) EXPECT_NEAR(hazy.data()[i], spec.airlight.a[i % 3], 1e-12);
}

TEST(SynthesizeHaze, HalfTransmissionIsPixelwiseAverage) {
  const ImageBuffer clear = gusl::procedural_scene(16, 3);
  gusl::HazeSpec spec;
  spec.beta = 1.0;
  spec.depth = gusl::ScalarMap(16, 16, 0.6931);
  spec.airlight.a = {0.9, 0.9, 0.9};
  const double t = std::exp(-0.6931);
  EXPECT_NEAR(t, 0.5, 1e-4);
  const ImageBuffer hazy = gusl::synthesize_haze(clear, spec);
  for (std::size_t i = 0; i < hazy.data().size(); ++i) {
    EXPECT_NEAR(hazy.data()[i], t * clear.data()[i] + (1 - t) * 0.9, 1e-15);
    EXPECT_NEAR(hazy.data()[i], 0.5 * clear.data()[i] + 0.45, 1e-4);
  }
  EXPECT_THROW(gusl::synthesize_haze(ImageBuffer(8, 8, 3), spec), gusl::InvalidArgument);
  spec.beta = -1;
  EXPECT_THROW(gusl::synthesize_haze(clear, spec), gusl::InvalidArgument);
}

TEST(RampDepth, EndpointsAndLinearity) {
  const auto d = gusl::ramp_depth(5, 3);
  EXPECT_EQ(d.at(0, 0), 1.0);
  EXPECT_NEAR(d.at(4, 2), 0.2, 1e-15);
  EXPECT_NEAR(d.at(2, 1), 0.6, 1e-15);
}

TEST(ProceduralScene, DeterministicAndInRange) {
  const ImageBuffer a = gusl::procedural_scene(32, 10);
  EXPECT_EQ(a, gusl::procedural_scene(32, 10));
  EXPECT_NE(a, gusl::procedural_scene(32, 11));
  for (double v : a.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(SyntheticSet, LabelsInvertScatteringModel) {
  const auto set = gusl::make_synthetic_set(scenes(6, 24, 20), gusl::SynthesisRanges{}, 4);
  for (const auto& p : set) {
    gusl::ScalarMap t(24, 24);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = std::exp(-p.beta * p.depth.data()[i]);
    const ImageBuffer back = gusl::recover_radiance_unclamped(p.hazy, p.airlight, t, 0.1);
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t.data()[i] < 0.1) continue;
      for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(back.data()[3 * i + c], p.clear.data()[3 * i + c], 1e-10);
    }
  }
}

TEST(SyntheticSet, RangesAndDeterminism) {
  const auto clears = scenes(8, 16, 30);
  const auto a = gusl::make_synthetic_set(clears, gusl::SynthesisRanges{}, 5);
  const auto b = gusl::make_synthetic_set(clears, gusl::SynthesisRanges{}, 5);
  ASSERT_EQ(a.size(), 8u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].hazy, b[i].hazy);
    EXPECT_EQ(a[i].beta, b[i].beta);
    EXPECT_EQ(a[i].airlight.a, b[i].airlight.a);
    EXPECT_GE(a[i].beta, 0.6);
    EXPECT_LE(a[i].beta, 1.8);
    const auto [lo, hi] = std::minmax_element(a[i].airlight.a.begin(), a[i].airlight.a.end());
    EXPECT_LE(*hi - *lo, 0.1 + 1e-12);
    EXPECT_GE(*lo, 0.65 - 1e-12);
    EXPECT_LE(*hi, 1.0);
  }
  // Labels of image i do not depend on how many images follow it.
  const auto head = gusl::make_synthetic_set({clears[0], clears[1]}, gusl::SynthesisRanges{}, 5);
  EXPECT_EQ(head[1].beta, a[1].beta);
  EXPECT_NE(gusl::make_synthetic_set(clears, gusl::SynthesisRanges{}, 6)[0].beta, a[0].beta);

  gusl::SynthesisRanges point;
  point.beta_min = point.beta_max = 1.2;
  for (const auto& p : gusl::make_synthetic_set(clears, point, 7)) EXPECT_EQ(p.beta, 1.2);
  EXPECT_THROW(gusl::make_synthetic_set({}, gusl::SynthesisRanges{}, 1), gusl::InvalidArgument);
}

TEST(Manifest, RoundTripWithLabelsAndComments) {
  const auto dir = temp_dir("manifest");
  std::vector<gusl::PairEntry> entries(3);
  entries[0].clear = "clear/a.png";
  entries[0].hazy = "hazy/a.png";
  entries[1].clear = "clear/b.png";
  entries[1].hazy = "hazy/b.png";
  entries[1].beta = 0.123456789012345678;
  entries[2].clear = "/abs/c.png";
  entries[2].hazy = "hazy/c.png";
  entries[2].beta = 1.5;
  entries[2].airlight = gusl::Airlight{{0.9, 0.85, 0.8}};
  const auto path = (dir / "m.txt").string();
  gusl::write_manifest(path, entries);
  const auto back = gusl::read_manifest(path);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[0].clear, (dir / "clear/a.png").string());
  EXPECT_FALSE(back[0].beta.has_value());
  EXPECT_EQ(*back[1].beta, *entries[1].beta);
  EXPECT_EQ(back[2].clear, "/abs/c.png");
  EXPECT_EQ(back[2].airlight->a, entries[2].airlight->a);

  std::ofstream(dir / "bad.txt") << "# comment\n\nonly-one-field\n";
  EXPECT_THROW(gusl::read_manifest((dir / "bad.txt").string()), gusl::IntegrityError);
  std::ofstream(dir / "bad2.txt") << "a\tb\tnot-a-number\n";
  EXPECT_THROW(gusl::read_manifest((dir / "bad2.txt").string()), gusl::IntegrityError);
  EXPECT_THROW(gusl::read_manifest((dir / "none.txt").string()), gusl::IoError);
}

TEST(Splits, DisjointByClearImageAndSeedStable) {
  std::vector<gusl::PairEntry> entries;
  for (int i = 0; i < 30; ++i) {
    gusl::PairEntry e;
    e.clear = "c" + std::to_string(i % 10);  // three hazy versions per clear image
    e.hazy = "h" + std::to_string(i);
    entries.push_back(e);
  }
  const auto s = gusl::assign_splits(entries, 3);
  EXPECT_EQ(s, gusl::assign_splits(entries, 3));
  std::set<std::string> train, test;
  for (std::size_t i = 0; i < entries.size(); ++i) (s[i] == gusl::Split::train ? train : test).insert(entries[i].clear);
  EXPECT_EQ(train.size(), 8u);
  EXPECT_EQ(test.size(), 2u);
  for (const auto& c : train) EXPECT_EQ(test.count(c), 0u);

  gusl::PairSet set;
  set.pairs = entries;
  set.split = s;
  const auto tr = gusl::split_indices(set, "train"), te = gusl::split_indices(set, "test");
  EXPECT_EQ(tr.size() + te.size(), 30u);
  EXPECT_EQ(gusl::split_indices(set, "all").size(), 30u);
  EXPECT_THROW(gusl::split_indices(set, "val"), gusl::InvalidArgument);
}

const gusl::UShapeModel& small_model(const std::vector<gusl::TrainingPair>& pairs) {
  static const gusl::UShapeModel model = [&] {
    gusl::TrainConfig cfg;
    cfg.input_size = 32;
    cfg.rft_keep = 8;
    cfg.gbt.rounds = 6;
    cfg.gbt.max_depth = 3;
    cfg.fit_omega = false;
    return gusl::train_pipeline(pairs, cfg).model;
  }();
  return model;
}

std::vector<gusl::TrainingPair> training_pairs() {
  std::vector<gusl::TrainingPair> out;
  for (auto& p : gusl::make_synthetic_set(scenes(10, 32, 40), gusl::SynthesisRanges{}, 8)) out.push_back({p.hazy, p.clear});
  return out;
}

TEST(Evaluate, IdentitySetGivesSentinelAndMeansAverage) {
  const auto pairs = training_pairs();
  const auto& model = small_model(pairs);
  std::vector<gusl::TrainingPair> identity;
  for (const auto& p : pairs) identity.push_back({p.clear, p.clear});
  const auto rep = gusl::evaluate_pairs(model, identity);
  EXPECT_EQ(rep.hazy_psnr, 99.0);
  EXPECT_EQ(rep.hazy_ssim, 1.0);
  double m = 0, d = 0;
  for (const auto& s : rep.images) {
    m += s.model_psnr;
    d += s.dcp_ssim;
  }
  EXPECT_NEAR(rep.model_psnr, m / rep.images.size(), 1e-9);
  EXPECT_NEAR(rep.dcp_ssim, d / rep.images.size(), 1e-9);
  EXPECT_THROW(gusl::evaluate_pairs(model, {}), gusl::IntegrityError);
}

TEST(Evaluate, TrainingSplitBeatsWorstBaseline) {
  const auto pairs = training_pairs();
  const auto rep = gusl::evaluate_pairs(small_model(pairs), pairs);
  EXPECT_GE(rep.model_psnr, std::min(rep.dcp_psnr, rep.hazy_psnr));
}

TEST(Evaluate, FromManifestOnDisk) {
  const auto pairs = training_pairs();
  const auto dir = temp_dir("eval");
  std::vector<gusl::PairEntry> entries;
  for (std::size_t i = 0; i < 4; ++i) {
    gusl::PairEntry e;
    e.clear = "c" + std::to_string(i) + ".png";
    e.hazy = "h" + std::to_string(i) + ".png";
    gusl::save_image(pairs[i].clear, (dir / e.clear).string());
    gusl::save_image(pairs[i].hazy, (dir / e.hazy).string());
    entries.push_back(e);
  }
  gusl::write_manifest((dir / "m.txt").string(), entries);
  const auto set = gusl::load_pair_set((dir / "m.txt").string(), 1);
  const auto rep = gusl::evaluate(small_model(pairs), set, "all");
  EXPECT_EQ(rep.images.size(), 4u);
  EXPECT_EQ(rep.images[0].name, (dir / "h0.png").string());
  EXPECT_EQ(rep.split, "all");
  gusl::PairSet empty = set;
  std::fill(empty.split.begin(), empty.split.end(), gusl::Split::train);
  EXPECT_THROW(gusl::evaluate(small_model(pairs), empty, "test"), gusl::IntegrityError);
}

}  // namespace
