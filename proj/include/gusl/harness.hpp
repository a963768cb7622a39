#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gusl/dcp.hpp"
#include "gusl/error.hpp"
#include "gusl/image.hpp"
#include "gusl/image_io.hpp"
#include "gusl/metrics.hpp"
#include "gusl/parallel.hpp"
#include "gusl/ushape.hpp"

namespace gusl {

// Atmospheric scattering parameters. An empty depth map means the
// constant `constant_depth` everywhere.
struct HazeSpec {
  double beta = 1.0;
  Airlight airlight;
  ScalarMap depth;
  double constant_depth = 1.0;
};

inline ScalarMap transmission_map(const HazeSpec& spec, int h, int w) {
  detail::require(spec.beta >= 0.0, "haze: beta must be >= 0");
  ScalarMap t(h, w);
  if (spec.depth.size() == 0) {
    std::fill(t.data().begin(), t.data().end(), std::exp(-spec.beta * spec.constant_depth));
    return t;
  }
  detail::require(spec.depth.height() == h && spec.depth.width() == w, "haze: depth map does not match image size");
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = std::exp(-spec.beta * spec.depth.data()[i]);
  return t;
}

// I = J t + A (1 - t), t = exp(-beta d), clamped to [0, 1].
inline ImageBuffer synthesize_haze(const ImageBuffer& clear, const HazeSpec& spec) {
  detail::require(clear.channels() == 3, "synthesize_haze: clear image must be RGB");
  const ScalarMap t = transmission_map(spec, clear.height(), clear.width());
  ImageBuffer out(clear.height(), clear.width(), 3);
  auto s = clear.data();
  auto d = out.data();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double ti = t.data()[i];
    for (std::size_t c = 0; c < 3; ++c)
      d[3 * i + c] = std::clamp(s[3 * i + c] * ti + spec.airlight.a[c] * (1.0 - ti), 0.0, 1.0);
  }
  return out;
}

// Linear in the row index: `top` on the first row, `bottom` on the last.
inline ScalarMap ramp_depth(int h, int w, double top = 1.0, double bottom = 0.2) {
  ScalarMap d(h, w);
  for (int y = 0; y < h; ++y) {
    const double f = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
    for (int x = 0; x < w; ++x) d.at(y, x) = top + f * (bottom - top);
  }
  return d;
}

namespace detail {

inline std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

inline std::array<double, 3> saturated_color(Rng& rng) {
  return hsv_to_rgb(rng.uniform(), rng.uniform(0.65, 1.0), rng.uniform(0.35, 1.0));
}

}  // namespace detail

// Synthetic outdoor-like scene: saturated background gradient under a pale
// sky band, random rectangles and discs, smooth shading and fine texture. Most local
// windows contain a near-zero channel, so the dark channel prior holds.
inline ImageBuffer procedural_scene(int size, std::uint64_t seed) {
  detail::require(size >= 8, "procedural_scene: size must be >= 8");
  Rng rng(seed);
  ImageBuffer img(size, size, 3);
  const auto top = detail::saturated_color(rng), bottom = detail::saturated_color(rng);
  for (int y = 0; y < size; ++y) {
    const double f = static_cast<double>(y) / (size - 1);
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = top[static_cast<std::size_t>(c)] + f * (bottom[static_cast<std::size_t>(c)] - top[static_cast<std::size_t>(c)]);
  }

  // Pale sky band across the top, where the ramp depth is largest.
  const int sky_rows = static_cast<int>(rng.uniform(0.15, 0.3) * size);
  const auto sky = detail::hsv_to_rgb(rng.uniform(0.5, 0.67), rng.uniform(0.05, 0.25), rng.uniform(0.85, 1.0));
  for (int y = 0; y < sky_rows; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = sky[static_cast<std::size_t>(c)] * (0.92 + 0.08 * y / std::max(1, sky_rows));

  const int shapes = 6 + static_cast<int>(rng.below(9));
  for (int k = 0; k < shapes; ++k) {
    const auto color = detail::saturated_color(rng);
    const double cy = rng.uniform(0, size), cx = rng.uniform(0, size);
    const double ry = rng.uniform(0.06, 0.3) * size, rx = rng.uniform(0.06, 0.3) * size;
    const bool disc = rng.uniform() < 0.5;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
        const bool inside = disc ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        if (inside)
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[static_cast<std::size_t>(c)];
      }
  }

  // Shading from a few low-frequency waves, then fine multiplicative grain.
  struct Wave {
    double fy, fx, phase, amp;
  };
  std::vector<Wave> waves;
  for (int k = 0; k < 4; ++k)
    waves.push_back({rng.uniform(0.5, 4.0), rng.uniform(0.5, 4.0), rng.uniform(0, 2 * std::numbers::pi), rng.uniform(0.02, 0.06)});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double shade = 1.0;
      for (const auto& w : waves)
        shade += w.amp * std::sin(2 * std::numbers::pi * (w.fy * y + w.fx * x) / size + w.phase);
      const double grain = 1.0 + rng.uniform(-0.04, 0.04);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::clamp(img.at(y, x, c) * shade * grain, 0.0, 1.0);
    }
  return img;
}

struct SynthesisRanges {
  double beta_min = 0.6;
  double beta_max = 1.8;
  double airlight_min = 0.7;  // luminance range
  double airlight_max = 1.0;
  double chroma_jitter = 0.05;

  void validate() const {
    detail::require(beta_min >= 0.0 && beta_max >= beta_min, "synthesis: invalid beta range");
    detail::require(airlight_min > 0.0 && airlight_max <= 1.0 && airlight_max >= airlight_min,
                    "synthesis: invalid airlight range");
    detail::require(chroma_jitter >= 0.0, "synthesis: chroma jitter must be >= 0");
  }
};

struct SyntheticPair {
  ImageBuffer clear;
  ImageBuffer hazy;
  double beta = 0.0;
  Airlight airlight;
  ScalarMap depth;
};

// One hazy version per clear image. Image i draws from its own stream of
// `seed`, so labels do not depend on the number of images.
inline std::vector<SyntheticPair> make_synthetic_set(const std::vector<ImageBuffer>& clears, const SynthesisRanges& ranges,
                                                     std::uint64_t seed, const std::vector<ScalarMap>& depths = {}) {
  if (clears.empty()) throw InvalidArgument("make_synthetic_set: no clear images");
  ranges.validate();
  detail::require(depths.empty() || depths.size() == clears.size(), "make_synthetic_set: one depth map per image");
  std::vector<SyntheticPair> out(clears.size());
  parallel_for(clears.size(), [&](std::size_t i) {
    Rng rng(mix_seed(seed, i));
    SyntheticPair& p = out[i];
    p.clear = clears[i];
    p.beta = rng.uniform(ranges.beta_min, ranges.beta_max);
    const double lum = rng.uniform(ranges.airlight_min, ranges.airlight_max);
    for (auto& a : p.airlight.a)
      a = std::clamp(lum + rng.uniform(-ranges.chroma_jitter, ranges.chroma_jitter), kAirlightFloor, 1.0);
    p.depth = depths.empty() ? ramp_depth(p.clear.height(), p.clear.width()) : depths[i];
    HazeSpec spec;
    spec.beta = p.beta;
    spec.airlight = p.airlight;
    spec.depth = p.depth;
    p.hazy = synthesize_haze(p.clear, spec);
  });
  return out;
}

enum class Split { train, test };

struct PairEntry {
  std::string clear;  // resolved paths
  std::string hazy;
  std::optional<double> beta;
  std::optional<Airlight> airlight;
};

struct PairSet {
  std::vector<PairEntry> pairs;
  std::vector<Split> split;
  std::uint64_t seed = 0;
};

// Seeded shuffle of the distinct clear images; the first train_fraction
// of them (and every pair built from them) go to train, the rest to test.
inline std::vector<Split> assign_splits(const std::vector<PairEntry>& pairs, std::uint64_t seed, double train_fraction = 0.8) {
  detail::require(train_fraction >= 0.0 && train_fraction <= 1.0, "splits: train fraction must be in [0, 1]");
  std::map<std::string, std::size_t> group_of;
  std::vector<std::size_t> group(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto [it, inserted] = group_of.emplace(pairs[i].clear, group_of.size());
    group[i] = it->second;
  }
  std::vector<std::size_t> order(group_of.size());
  for (std::size_t g = 0; g < order.size(); ++g) order[g] = g;
  Rng rng(mix_seed(seed, 0x5b11));
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(order.size())));
  std::vector<Split> of_group(order.size(), Split::test);
  for (std::size_t k = 0; k < n_train; ++k) of_group[order[k]] = Split::train;
  std::vector<Split> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) out[i] = of_group[group[i]];
  return out;
}

// Indices of the pairs in `name`: "train", "test" or "all".
inline std::vector<std::size_t> split_indices(const PairSet& set, const std::string& name) {
  detail::require(name == "train" || name == "test" || name == "all", "unknown split '" + name + "' (train, test, all)");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < set.pairs.size(); ++i)
    if (name == "all" || (name == "train") == (set.split[i] == Split::train)) out.push_back(i);
  return out;
}

namespace detail {

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_real(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) throw IntegrityError(where + ": bad number '" + s + "'");
  return v;
}

}  // namespace detail

// One pair per line: clear<TAB>hazy[<TAB>beta[<TAB>A_r<TAB>A_g<TAB>A_b]].
// Relative paths are resolved against the manifest's directory.
inline std::vector<PairEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest '" + path + "'");
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<PairEntry> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    const std::string where = path + ":" + std::to_string(lineno);
    if (fields.size() != 2 && fields.size() != 3 && fields.size() != 6)
      throw IntegrityError(where + ": expected 2, 3 or 6 tab-separated fields");
    PairEntry e;
    auto resolve = [&](const std::string& p) {
      const std::filesystem::path q(p);
      return (q.is_absolute() ? q : base / q).lexically_normal().string();
    };
    e.clear = resolve(fields[0]);
    e.hazy = resolve(fields[1]);
    if (fields.size() >= 3) e.beta = detail::parse_real(fields[2], where);
    if (fields.size() == 6) {
      Airlight a;
      for (std::size_t c = 0; c < 3; ++c) a.a[c] = detail::parse_real(fields[3 + c], where);
      e.airlight = a;
    }
    out.push_back(std::move(e));
  }
  return out;
}

// Paths are written as given.
inline void write_manifest(const std::string& path, const std::vector<PairEntry>& pairs) {
  std::ostringstream out;
  out << "# clear\thazy\tbeta\tA_r\tA_g\tA_b\n";
  for (const auto& e : pairs) {
    out << e.clear << '\t' << e.hazy;
    if (e.beta) {
      out << '\t' << detail::format_real(*e.beta);
      if (e.airlight)
        for (double a : e.airlight->a) out << '\t' << detail::format_real(a);
    }
    out << '\n';
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write manifest '" + path + "'");
  f << out.str();
  if (!f) throw IoError("cannot write manifest '" + path + "'");
}

inline PairSet load_pair_set(const std::string& manifest, std::uint64_t seed, double train_fraction = 0.8) {
  PairSet set;
  set.pairs = read_manifest(manifest);
  set.seed = seed;
  set.split = assign_splits(set.pairs, seed, train_fraction);
  return set;
}

inline std::vector<TrainingPair> load_pairs(const PairSet& set, const std::vector<std::size_t>& indices) {
  std::vector<TrainingPair> out(indices.size());
  parallel_for(indices.size(), [&](std::size_t k) {
    const PairEntry& e = set.pairs[indices[k]];
    out[k].clear = load_image(e.clear);
    out[k].hazy = load_image(e.hazy);
    if (!out[k].clear.same_shape(out[k].hazy))
      throw IntegrityError("pair '" + e.hazy + "': clear and hazy sizes differ");
  });
  return out;
}

struct ImageScore {
  std::string name;
  double model_psnr = 0.0, model_ssim = 0.0;
  double dcp_psnr = 0.0, dcp_ssim = 0.0;
  double hazy_psnr = 0.0, hazy_ssim = 0.0;
};

struct ScoreReport {
  std::string split;
  std::vector<ImageScore> images;
  double model_psnr = 0.0, model_ssim = 0.0;
  double dcp_psnr = 0.0, dcp_ssim = 0.0;
  double hazy_psnr = 0.0, hazy_ssim = 0.0;
};

// Scores infer(hazy), the DCP stage alone and the untouched hazy input
// against the clear image.
inline ScoreReport evaluate_pairs(const UShapeModel& model, const std::vector<TrainingPair>& pairs,
                                  const std::vector<std::string>& names = {}, const std::string& split = "all") {
  if (pairs.empty()) throw IntegrityError("evaluate: split '" + split + "' is empty");
  ScoreReport rep;
  rep.split = split;
  rep.images.resize(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    const TrainingPair& p = pairs[i];
    ImageScore& s = rep.images[i];
    s.name = i < names.size() ? names[i] : std::to_string(i);
    const ImageBuffer out = infer(p.hazy, model);
    const ImageBuffer dcp = infer_dcp_only(p.hazy, model);
    s.model_psnr = psnr(out, p.clear);
    s.model_ssim = ssim(out, p.clear);
    s.dcp_psnr = psnr(dcp, p.clear);
    s.dcp_ssim = ssim(dcp, p.clear);
    s.hazy_psnr = psnr(p.hazy, p.clear);
    s.hazy_ssim = ssim(p.hazy, p.clear);
  });
  const double n = static_cast<double>(pairs.size());
  for (const auto& s : rep.images) {
    rep.model_psnr += s.model_psnr;
    rep.model_ssim += s.model_ssim;
    rep.dcp_psnr += s.dcp_psnr;
    rep.dcp_ssim += s.dcp_ssim;
    rep.hazy_psnr += s.hazy_psnr;
    rep.hazy_ssim += s.hazy_ssim;
  }
  for (double* m : {&rep.model_psnr, &rep.model_ssim, &rep.dcp_psnr, &rep.dcp_ssim, &rep.hazy_psnr, &rep.hazy_ssim}) *m /= n;
  return rep;
}

inline ScoreReport evaluate(const UShapeModel& model, const PairSet& set, const std::string& split) {
  const auto idx = split_indices(set, split);
  std::vector<std::string> names;
  for (std::size_t i : idx) names.push_back(set.pairs[i].hazy);
  if (idx.empty()) throw IntegrityError("evaluate: split '" + split + "' is empty");
  return evaluate_pairs(model, load_pairs(set, idx), names, split);
}

}  // namespace gusl
