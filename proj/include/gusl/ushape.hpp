#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gusl/dcp.hpp"
#include "gusl/error.hpp"
#include "gusl/image.hpp"
#include "gusl/lnt.hpp"
#include "gusl/metrics.hpp"
#include "gusl/parallel.hpp"
#include "gusl/rft.hpp"
#include "gusl/saab.hpp"
#include "gusl/trees.hpp"

namespace gusl {

inline constexpr int kModelFormatVersion = 1;

// Per color channel: feature selection, Level-2 transform and the two
// residual regressors. The level's residual is
//   active ? blend * raw(x) + (1 - blend) * lnt(d) : 0.
struct ChannelModel {
  std::vector<int> rft_selected;
  LntTransform lnt;  // output_dim() == 0 when no Level-2 features exist
  TreeEnsembleModel regressor_raw;
  TreeEnsembleModel regressor_lnt;
  double blend = 1.0;
  bool active = true;

  friend bool operator==(const ChannelModel&, const ChannelModel&) = default;
};

struct LevelModel {
  int resolution = 0;
  int cascade_hop = 0;
  std::array<ChannelModel, 3> channels;

  friend bool operator==(const LevelModel&, const LevelModel&) = default;
};

struct UShapeModel {
  int version = kModelFormatVersion;
  int input_size = 256;
  std::vector<LevelModel> levels;  // coarse to fine
  SaabCascade cascade;
  DcpParams dcp;
  std::optional<TreeEnsembleModel> omega_model;

  friend bool operator==(const UShapeModel&, const UShapeModel&) = default;
};

// Window/filter (7/5), (5/3), then (3/3) for the last hop; 2x pooling
// between hops.
inline std::vector<HopConfig> default_hops(int levels) {
  std::vector<HopConfig> hops;
  for (int h = 0; h < levels; ++h) {
    HopConfig c;
    const bool last = h + 1 == levels;
    if (h == 0 && !last) {
      c.window = 7;
      c.filter = 5;
    } else if (!last) {
      c.window = 5;
      c.filter = 3;
    } else {
      c.window = 3;
      c.filter = 3;
    }
    c.pool = last ? 1 : 2;
    c.keep.energy_threshold = 0.98;
    hops.push_back(c);
  }
  return hops;
}

struct TrainConfig {
  int input_size = 256;
  int levels = 3;
  double pixel_subsample = 0.25;
  int rft_keep = 1000;
  int rft_bins = 31;
  int lnt_bins = 8;
  GbtParams gbt;
  std::uint64_t seed = 0;
  double val_fraction = 0.25;
  std::vector<HopConfig> hops;  // empty: default_hops(levels)
  std::size_t max_patches_per_image = 4096;
  bool fit_omega = true;
  ForestParams omega_forest = default_omega_forest();
  DcpParams dcp;

  void validate() const {
    detail::require(levels >= 1, "train: levels must be >= 1");
    detail::require(input_size >= 2 && input_size % (1 << levels) == 0, "train: input_size must be divisible by 2^levels");
    detail::require(pixel_subsample > 0.0 && pixel_subsample <= 1.0, "train: pixel_subsample must be in (0, 1]");
    detail::require(rft_keep >= 1 && rft_bins >= 1, "train: rft_keep and rft_bins must be >= 1");
    detail::require(lnt_bins >= 2, "train: lnt_bins must be >= 2");
    detail::require(val_fraction > 0.0 && val_fraction < 1.0, "train: val_fraction must be in (0, 1)");
    detail::require(hops.empty() || static_cast<int>(hops.size()) == levels, "train: one hop per level is required");
  }
};

// Repeated bilinear halving: sizes input/2, input/4, ... (fine to coarse).
inline std::vector<ImageBuffer> build_pyramid(const ImageBuffer& img, int levels, int input_size) {
  detail::require(levels >= 1, "build_pyramid: levels must be >= 1");
  detail::require(input_size % (1 << levels) == 0, "build_pyramid: input_size must be divisible by 2^levels");
  ImageBuffer current = (img.height() == input_size && img.width() == input_size) ? img : resize(img, input_size, input_size);
  std::vector<ImageBuffer> out;
  for (int k = 1; k <= levels; ++k) {
    const int s = input_size >> k;
    current = resize(current, s, s);
    out.push_back(current);
  }
  return out;
}

inline int level_feature_width(const ChannelModel& ch) { return static_cast<int>(ch.rft_selected.size()) + 8; }

// One row per requested pixel: selected Saab responses at the site, the
// three DCP channels, the three base-prediction channels, then normalized
// (row, col) of the pixel center.
inline Matrix assemble_features(std::span<const int> selected, const FeatureTensor& hop, const ImageBuffer& dcp_out,
                                const ImageBuffer& coarse_pred, std::span<const int> pixels) {
  const int h = dcp_out.height(), w = dcp_out.width();
  detail::require(hop.height == h && hop.width == w, "assemble_features: Saab tensor not aligned with level");
  detail::require(coarse_pred.height() == h && coarse_pred.width() == w && coarse_pred.channels() == 3 &&
                      dcp_out.channels() == 3,
                  "assemble_features: prediction not aligned with level");
  for (int s : selected) detail::require(s >= 0 && s < hop.channels, "assemble_features: selected index out of range");
  const auto k = static_cast<Eigen::Index>(selected.size());
  Matrix rows(static_cast<Eigen::Index>(pixels.size()), k + 8);
  for (std::size_t r = 0; r < pixels.size(); ++r) {
    const int y = pixels[r] / w, x = pixels[r] % w;
    const auto ri = static_cast<Eigen::Index>(r);
    const double* site = hop.pixel(y, x);
    for (Eigen::Index j = 0; j < k; ++j) rows(ri, j) = site[selected[static_cast<std::size_t>(j)]];
    for (int c = 0; c < 3; ++c) {
      rows(ri, k + c) = dcp_out.at(y, x, c);
      rows(ri, k + 3 + c) = coarse_pred.at(y, x, c);
    }
    rows(ri, k + 6) = (y + 0.5) / h;
    rows(ri, k + 7) = (x + 0.5) / w;
  }
  return rows;
}

inline std::vector<int> all_pixels(int h, int w) {
  std::vector<int> p(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<int>(i);
  return p;
}

inline std::vector<double> blend_predictions(const std::vector<double>& raw, const std::vector<double>& lnt, double blend) {
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = blend * raw[i] + (1.0 - blend) * lnt[i];
  return out;
}

// The level's residual for every pixel of one image.
inline ImageBuffer predict_level_residual(const LevelModel& level, const FeatureTensor& hop, const ImageBuffer& dcp_out,
                                          const ImageBuffer& base) {
  ImageBuffer residual(dcp_out.height(), dcp_out.width(), 3, 0.0);
  const auto pixels = all_pixels(dcp_out.height(), dcp_out.width());
  for (int c = 0; c < 3; ++c) {
    const ChannelModel& ch = level.channels[static_cast<std::size_t>(c)];
    if (!ch.active) continue;
    const Matrix raw = assemble_features(ch.rft_selected, hop, dcp_out, base, pixels);
    const std::vector<double> p_raw = ch.regressor_raw.predict(raw);
    const std::vector<double> p_lnt = ch.regressor_lnt.predict(apply_lnt(ch.lnt, raw));
    const std::vector<double> p = blend_predictions(p_raw, p_lnt, ch.blend);
    for (std::size_t i = 0; i < pixels.size(); ++i) residual.data()[3 * i + static_cast<std::size_t>(c)] = p[i];
  }
  return residual;
}

// Intermediate results of one coarse-to-fine pass.
struct InferenceTrace {
  ImageBuffer resized_input;
  ImageBuffer dcp_full;
  std::vector<ImageBuffer> dcp_levels;    // coarse to fine
  std::vector<ImageBuffer> bases;         // per level, before the residual
  std::vector<ImageBuffer> residuals;     // per level
  std::vector<ImageBuffer> predictions;   // base + residual
  ImageBuffer correction;                 // finest prediction - finest DCP
  ImageBuffer output;                     // at input_size, clamped
};

// Base prediction for a level: the DCP output at that resolution plus the
// upsampled correction accumulated at coarser levels.
inline ImageBuffer level_base(const ImageBuffer& dcp_level, const ImageBuffer* coarser_correction) {
  if (!coarser_correction) return dcp_level;
  return add(dcp_level, resize(*coarser_correction, dcp_level.height(), dcp_level.width()));
}

inline InferenceTrace infer_trace(const ImageBuffer& img, const UShapeModel& model) {
  detail::require(img.channels() == 3, "infer: input must be a 3-channel image");
  const int levels = static_cast<int>(model.levels.size());
  if (levels == 0 || model.cascade.hops.size() != static_cast<std::size_t>(levels))
    throw IntegrityError("infer: model is untrained or inconsistent");
  InferenceTrace tr;
  const int s = model.input_size;
  tr.resized_input = (img.height() == s && img.width() == s) ? img : resize(img, s, s);
  tr.dcp_full = dehaze_dcp(tr.resized_input, model.dcp, model.omega_model);
  std::vector<ImageBuffer> pyr = build_pyramid(tr.dcp_full, levels, s);  // fine to coarse
  const std::vector<FeatureTensor> hops = apply_cascade(pyr.front(), model.cascade);

  const ImageBuffer* correction = nullptr;
  ImageBuffer current_correction;
  for (int j = 0; j < levels; ++j) {
    const LevelModel& level = model.levels[static_cast<std::size_t>(j)];
    const ImageBuffer& dcp_l = pyr[static_cast<std::size_t>(levels - 1 - j)];
    if (dcp_l.height() != level.resolution) throw IntegrityError("infer: level resolution does not match model");
    const FeatureTensor& hop = hops[static_cast<std::size_t>(level.cascade_hop)];
    ImageBuffer base = level_base(dcp_l, correction);
    ImageBuffer residual = predict_level_residual(level, hop, dcp_l, base);
    ImageBuffer pred = add(base, residual);
    current_correction = subtract(pred, dcp_l);
    correction = &current_correction;
    tr.dcp_levels.push_back(dcp_l);
    tr.bases.push_back(std::move(base));
    tr.residuals.push_back(std::move(residual));
    tr.predictions.push_back(std::move(pred));
  }
  tr.correction = current_correction;
  tr.output = clamp(add(tr.dcp_full, resize(tr.correction, s, s)));
  return tr;
}

// Dehazed image at the input's original size.
inline ImageBuffer infer(const ImageBuffer& img, const UShapeModel& model) {
  ImageBuffer out = infer_trace(img, model).output;
  if (out.height() != img.height() || out.width() != img.width()) out = clamp(resize(out, img.height(), img.width()));
  return out;
}

// DCP stage alone with the model's parameters and omega predictor.
inline ImageBuffer infer_dcp_only(const ImageBuffer& img, const UShapeModel& model) {
  return dehaze_dcp(img, model.dcp, model.omega_model);
}

struct ChannelReport {
  double train_mse = 0.0;       // level prediction vs clear, training images
  double val_mse_base = 0.0;    // base prediction vs clear, validation images
  double val_mse_model = 0.0;   // level prediction vs clear, validation images
  double val_mse_raw = 0.0;     // residual MSE, raw-feature regressor only
  double val_mse_lnt = 0.0;     // residual MSE, Level-2 regressor only
  double val_mse_combined = 0.0;  // residual MSE, best active blend
  int selected = 0;
  int level2_dim = 0;
  double blend = 1.0;
  bool active = true;
};

struct LevelReport {
  int resolution = 0;
  std::array<ChannelReport, 3> channels;
};

struct TrainReport {
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
  std::vector<double> omega_labels;  // per training pair, empty if omega is fixed
  std::vector<LevelReport> levels;   // coarse to fine
};

struct TrainResult {
  UShapeModel model;
  TrainReport report;
};

struct TrainingPair {
  ImageBuffer hazy;
  ImageBuffer clear;
};

namespace detail {

inline double channel_mse(const std::vector<const ImageBuffer*>& a, const std::vector<const ImageBuffer*>& b, int c) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    auto x = a[k]->data();
    auto y = b[k]->data();
    for (std::size_t i = static_cast<std::size_t>(c); i < x.size(); i += 3) {
      acc += (x[i] - y[i]) * (x[i] - y[i]);
      ++n;
    }
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

inline double vector_mse(const std::vector<double>& p, const std::vector<double>& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - y[i]) * (p[i] - y[i]);
  return p.empty() ? 0.0 : acc / static_cast<double>(p.size());
}

inline std::vector<int> sample_pixels(int h, int w, double fraction, std::uint64_t seed) {
  std::vector<int> p = all_pixels(h, w);
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * static_cast<double>(p.size()))));
  if (k >= p.size()) return p;
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(p[i], p[i + rng.below(p.size() - i)]);
  p.resize(k);
  std::sort(p.begin(), p.end());
  return p;
}

// Level-2 features with the largest workable bin count; an empty transform
// when the target has fewer than two distinct values.
inline LntTransform fit_level2(const Matrix& raw, std::span<const double> target, int bins) {
  for (int m = bins; m >= 2; --m) {
    try {
      return make_level2(raw, target, m).transform;
    } catch (const InvalidArgument&) {
    } catch (const RankDeficientError&) {
      break;
    }
  }
  LntTransform empty;
  empty.a_matrix.resize(0, raw.cols());
  empty.b_bias.resize(0);
  empty.x_mean = raw.colwise().mean().transpose();
  return empty;
}

struct LevelData {
  std::vector<ImageBuffer> dcp;    // per image at level resolution
  std::vector<ImageBuffer> clear;
  std::vector<ImageBuffer> base;
};

inline std::vector<double> gather_channel(const std::vector<ImageBuffer>& imgs, const std::vector<std::size_t>& which,
                                          const std::vector<std::vector<int>>& pixels, int c) {
  std::vector<double> out;
  for (std::size_t k = 0; k < which.size(); ++k)
    for (int p : pixels[k]) out.push_back(imgs[which[k]].data()[3 * static_cast<std::size_t>(p) + static_cast<std::size_t>(c)]);
  return out;
}

}  // namespace detail

// Coarse-to-fine training. Pairs are split into a fitting set and a
// validation set; blends are chosen on the validation set.
inline TrainResult train_pipeline(const std::vector<TrainingPair>& input_pairs, const TrainConfig& cfg) {
  cfg.validate();
  if (input_pairs.size() < 8) throw IntegrityError("train: need at least 8 pairs");
  const int s = cfg.input_size;
  const int levels = cfg.levels;
  const std::vector<HopConfig> hop_cfgs = cfg.hops.empty() ? default_hops(levels) : cfg.hops;

  std::vector<TrainingPair> pairs(input_pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    const auto& p = input_pairs[i];
    detail::require(p.hazy.channels() == 3 && p.clear.channels() == 3, "train: images must be RGB");
    pairs[i].hazy = (p.hazy.height() == s && p.hazy.width() == s) ? p.hazy : resize(p.hazy, s, s);
    pairs[i].clear = (p.clear.height() == s && p.clear.width() == s) ? p.clear : resize(p.clear, s, s);
  });

  TrainResult result;
  TrainReport& rep = result.report;
  UShapeModel& model = result.model;
  model.input_size = s;
  model.dcp = cfg.dcp;

  // Split.
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(mix_seed(cfg.seed, 1));
  split_rng.shuffle(order);
  const std::size_t n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(cfg.val_fraction * static_cast<double>(pairs.size()))), 2, pairs.size() - 6);
  rep.val_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  rep.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(rep.val_indices.begin(), rep.val_indices.end());
  std::sort(rep.train_indices.begin(), rep.train_indices.end());
  const std::vector<std::size_t>& val = rep.val_indices;

  // Omega regressor and preliminary dehazing.
  if (cfg.fit_omega && rep.train_indices.size() >= 10) {
    std::vector<HazyPair> hp;
    for (std::size_t i : rep.train_indices) hp.push_back({pairs[i].clear, pairs[i].hazy});
    OmegaFit fit = fit_omega_regressor(hp, cfg.dcp, cfg.omega_forest);
    model.omega_model = std::move(fit.model);
    rep.omega_labels = std::move(fit.labels);
  }
  std::vector<ImageBuffer> dcp_full(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) { dcp_full[i] = dehaze_dcp(pairs[i].hazy, model.dcp, model.omega_model); });

  // Pyramids (fine to coarse) and Saab cascade on the finest DCP level.
  std::vector<std::vector<ImageBuffer>> dcp_pyr(pairs.size()), clear_pyr(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    dcp_pyr[i] = build_pyramid(dcp_full[i], levels, s);
    clear_pyr[i] = build_pyramid(pairs[i].clear, levels, s);
  });
  {
    std::vector<ImageBuffer> fit_imgs;
    for (std::size_t i : rep.train_indices) fit_imgs.push_back(dcp_pyr[i].front());
    model.cascade = fit_cascade(fit_imgs, hop_cfgs, cfg.max_patches_per_image);
  }
  std::vector<std::vector<FeatureTensor>> hop_maps(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) { hop_maps[i] = apply_cascade(dcp_pyr[i].front(), model.cascade); });

  std::vector<ImageBuffer> correction(pairs.size());
  for (int j = 0; j < levels; ++j) {
    const auto pyr_index = static_cast<std::size_t>(levels - 1 - j);
    const int res = s >> (levels - j);
    LevelModel level;
    level.resolution = res;
    level.cascade_hop = levels - 1 - j;
    LevelReport lrep;
    lrep.resolution = res;

    std::vector<ImageBuffer> base(pairs.size()), target(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t i) {
      base[i] = level_base(dcp_pyr[i][pyr_index], j == 0 ? nullptr : &correction[i]);
      target[i] = subtract(clear_pyr[i][pyr_index], base[i]);
    });

    std::vector<std::vector<int>> train_px, val_px;
    for (std::size_t i : rep.train_indices)
      train_px.push_back(detail::sample_pixels(res, res, cfg.pixel_subsample,
                                               mix_seed(cfg.seed, 1000u * static_cast<std::uint64_t>(j + 1) + i)));
    for (std::size_t k = 0; k < val.size(); ++k) val_px.push_back(all_pixels(res, res));

    auto rows_for = [&](std::span<const int> selected, const std::vector<std::size_t>& which,
                        const std::vector<std::vector<int>>& px) {
      std::vector<Matrix> parts(which.size());
      parallel_for(which.size(), [&](std::size_t k) {
        const std::size_t i = which[k];
        parts[k] = assemble_features(selected, hop_maps[i][static_cast<std::size_t>(level.cascade_hop)],
                                     dcp_pyr[i][pyr_index], base[i], px[k]);
      });
      Eigen::Index total = 0;
      for (const auto& p : parts) total += p.rows();
      Matrix out(total, parts.empty() ? 0 : parts.front().cols());
      Eigen::Index at = 0;
      for (const auto& p : parts) {
        out.middleRows(at, p.rows()) = p;
        at += p.rows();
      }
      return out;
    };

    const int hop_channels = model.cascade.hops[static_cast<std::size_t>(level.cascade_hop)].bank.output_channels();
    std::vector<int> every_channel(static_cast<std::size_t>(hop_channels));
    for (int k = 0; k < hop_channels; ++k) every_channel[static_cast<std::size_t>(k)] = k;
    const Matrix saab_train = rows_for(every_channel, rep.train_indices, train_px).leftCols(hop_channels);

    for (int c = 0; c < 3; ++c) {
      ChannelModel& ch = level.channels[static_cast<std::size_t>(c)];
      ChannelReport& cr = lrep.channels[static_cast<std::size_t>(c)];
      const std::vector<double> y_train = detail::gather_channel(target, rep.train_indices, train_px, c);
      const std::vector<double> y_val = detail::gather_channel(target, val, val_px, c);

      const RftReport rft = rft_select(saab_train, y_train, std::min(cfg.rft_keep, hop_channels), cfg.rft_bins);
      ch.rft_selected = rft.selected;

      const Matrix raw_train = rows_for(ch.rft_selected, rep.train_indices, train_px);
      ch.lnt = detail::fit_level2(raw_train, y_train, cfg.lnt_bins);
      ch.regressor_raw = fit_gbt(raw_train, y_train, cfg.gbt);
      ch.regressor_lnt = fit_gbt(apply_lnt(ch.lnt, raw_train), y_train, cfg.gbt);

      const Matrix raw_val = rows_for(ch.rft_selected, val, val_px);
      const std::vector<double> p_raw = ch.regressor_raw.predict(raw_val);
      const std::vector<double> p_lnt = ch.regressor_lnt.predict(apply_lnt(ch.lnt, raw_val));

      // Candidates in preference order; a later one must be strictly better.
      // Leaving the channel inactive (zero residual) is tried first.
      double best_mse = detail::vector_mse(std::vector<double>(y_val.size(), 0.0), y_val);
      ch.active = false;
      ch.blend = 1.0;
      double best_active_mse = 0.0;
      bool have_active = false;
      for (double b : {1.0, 0.75, 0.5, 0.25, 0.0}) {
        const double e = detail::vector_mse(blend_predictions(p_raw, p_lnt, b), y_val);
        if (!have_active || e < best_active_mse) {
          best_active_mse = e;
          have_active = true;
        }
        if (e < best_mse) {
          best_mse = e;
          ch.blend = b;
          ch.active = true;
        }
      }
      cr.val_mse_raw = detail::vector_mse(p_raw, y_val);
      cr.val_mse_lnt = detail::vector_mse(p_lnt, y_val);
      cr.val_mse_combined = best_active_mse;
      cr.selected = static_cast<int>(ch.rft_selected.size());
      cr.level2_dim = ch.lnt.output_dim();
      cr.blend = ch.blend;
      cr.active = ch.active;
    }

    // Advance every image to this level's prediction.
    std::vector<ImageBuffer> pred(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t i) {
      const ImageBuffer residual = predict_level_residual(level, hop_maps[i][static_cast<std::size_t>(level.cascade_hop)],
                                                          dcp_pyr[i][pyr_index], base[i]);
      pred[i] = add(base[i], residual);
      correction[i] = subtract(pred[i], dcp_pyr[i][pyr_index]);
    });

    std::vector<const ImageBuffer*> tp, tc, rp, rb, rc;
    for (std::size_t i : rep.train_indices) {
      tp.push_back(&pred[i]);
      tc.push_back(&clear_pyr[i][pyr_index]);
    }
    for (std::size_t i : val) {
      rp.push_back(&pred[i]);
      rb.push_back(&base[i]);
      rc.push_back(&clear_pyr[i][pyr_index]);
    }
    for (int c = 0; c < 3; ++c) {
      ChannelReport& cr = lrep.channels[static_cast<std::size_t>(c)];
      cr.train_mse = detail::channel_mse(tp, tc, c);
      cr.val_mse_base = detail::channel_mse(rb, rc, c);
      cr.val_mse_model = detail::channel_mse(rp, rc, c);
    }
    model.levels.push_back(std::move(level));
    rep.levels.push_back(lrep);
  }
  return result;
}

struct LevelParameters {
  int resolution = 0;
  std::size_t saab = 0;
  std::size_t rft = 0;
  std::size_t lnt = 0;
  std::size_t trees = 0;

  std::size_t total() const { return saab + rft + lnt + trees; }
};

struct ParameterReport {
  std::size_t omega_forest = 0;
  std::size_t dcp = 0;
  std::vector<LevelParameters> levels;

  std::size_t total() const {
    std::size_t t = omega_forest + dcp;
    for (const auto& l : levels) t += l.total();
    return t;
  }
};

inline std::size_t count_parameters(const SaabBank& bank) {
  return static_cast<std::size_t>(bank.dc_vector.size() + bank.ac_vectors.size() + 1 + bank.ac_biases.size());
}

// Saab: filter entries and biases of the hop feeding the level. RFT: kept
// indices. LNT: matrix entries and bin edges. Trees: count_parameters.
inline ParameterReport report_parameters(const UShapeModel& model) {
  ParameterReport rep;
  if (model.omega_model) rep.omega_forest = count_parameters(*model.omega_model);
  if (!model.levels.empty()) rep.dcp = 6;
  for (const auto& level : model.levels) {
    LevelParameters lp;
    lp.resolution = level.resolution;
    if (level.cascade_hop >= 0 && static_cast<std::size_t>(level.cascade_hop) < model.cascade.hops.size())
      lp.saab = count_parameters(model.cascade.hops[static_cast<std::size_t>(level.cascade_hop)].bank);
    for (const auto& ch : level.channels) {
      lp.rft += ch.rft_selected.size();
      lp.lnt += static_cast<std::size_t>(ch.lnt.a_matrix.size()) + ch.lnt.bin_edges.size();
      lp.trees += count_parameters(ch.regressor_raw) + count_parameters(ch.regressor_lnt);
    }
    rep.levels.push_back(lp);
  }
  return rep;
}

}  // namespace gusl
