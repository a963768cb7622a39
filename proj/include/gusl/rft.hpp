#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "gusl/error.hpp"
#include "gusl/parallel.hpp"
#include "gusl/trees.hpp"

namespace gusl {

struct RftReport {
  std::vector<double> scores;   // minimal weighted split MSE per feature
  std::vector<int> ranking;     // feature indices, ascending score
  std::vector<int> selected;    // first `keep` entries of ranking
  int bin_count = 0;
};

inline double population_variance(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(v.size());
}

// Best single-threshold split loss of one feature. Candidate cuts are
// `bins` evenly spaced points strictly inside [min, max]; each side is
// modelled by its mean and the side MSEs are weighted by side size.
inline double rft_score(std::span<const double> feature, std::span<const double> target, int bins) {
  detail::require(!feature.empty(), "rft_score: empty input");
  detail::require(feature.size() == target.size(), "rft_score: feature and target lengths differ");
  detail::require(bins >= 1, "rft_score: bins must be >= 1");
  const std::size_t n = feature.size();
  const double total_var = population_variance(target);
  const auto [lo_it, hi_it] = std::minmax_element(feature.begin(), feature.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return total_var;

  // Side statistics are accumulated in row order, so any two features that
  // induce the same partition receive bit-identical losses.
  double best = total_var;
  bool any = false;
  std::size_t prev_nl = n + 1;
  for (int b = 1; b <= bins; ++b) {
    const double cut = lo + (hi - lo) * b / (bins + 1);
    std::size_t nl = 0;
    double sum_l = 0.0, sum_r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (feature[i] <= cut) {
        ++nl;
        sum_l += target[i];
      } else {
        sum_r += target[i];
      }
    }
    if (nl == 0 || nl == n || nl == prev_nl) continue;
    prev_nl = nl;
    const double mean_l = sum_l / static_cast<double>(nl);
    const double mean_r = sum_r / static_cast<double>(n - nl);
    double sse_l = 0.0, sse_r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (feature[i] <= cut) {
        sse_l += (target[i] - mean_l) * (target[i] - mean_l);
      } else {
        sse_r += (target[i] - mean_r) * (target[i] - mean_r);
      }
    }
    const double nd = static_cast<double>(n);
    const double loss = (static_cast<double>(nl) / nd) * (sse_l / static_cast<double>(nl)) +
                        (static_cast<double>(n - nl) / nd) * (sse_r / static_cast<double>(n - nl));
    if (!any || loss < best) best = loss;
    any = true;
  }
  return any ? best : total_var;
}

// Scores every column and keeps the `keep` lowest-loss features; ties go to
// the lower column index.
inline RftReport rft_select(const Matrix& features, std::span<const double> target, int keep, int bins = 31) {
  const int d = static_cast<int>(features.cols());
  detail::require(keep >= 0 && keep <= d, "rft_select: keep exceeds feature count");
  detail::require(static_cast<std::size_t>(features.rows()) == target.size(), "rft_select: row count mismatch");
  RftReport rep;
  rep.bin_count = bins;
  rep.scores.resize(static_cast<std::size_t>(d));
  parallel_for(static_cast<std::size_t>(d), [&](std::size_t j) {
    std::vector<double> col(static_cast<std::size_t>(features.rows()));
    for (Eigen::Index i = 0; i < features.rows(); ++i) col[static_cast<std::size_t>(i)] = features(i, static_cast<Eigen::Index>(j));
    rep.scores[j] = rft_score(col, target, bins);
  });
  rep.ranking.resize(static_cast<std::size_t>(d));
  std::iota(rep.ranking.begin(), rep.ranking.end(), 0);
  std::stable_sort(rep.ranking.begin(), rep.ranking.end(), [&](int a, int b) {
    return rep.scores[static_cast<std::size_t>(a)] < rep.scores[static_cast<std::size_t>(b)];
  });
  rep.selected.assign(rep.ranking.begin(), rep.ranking.begin() + keep);
  return rep;
}

}  // namespace gusl
