#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gusl/error.hpp"
#include "gusl/parallel.hpp"
#include "gusl/trees.hpp"

namespace gusl {

// Linear map d = A (x - mean) fitted by least squares against a one-hot
// superclass indicator. Matrices follow the library convention of samples
// as rows; a_matrix is m x n (outputs x inputs).
struct LntTransform {
  Matrix a_matrix;
  Vector b_bias;     // E[T] - A E[X]; kept for bookkeeping, not applied
  Vector x_mean;
  std::vector<double> bin_edges;

  int input_dim() const { return static_cast<int>(a_matrix.cols()); }
  int output_dim() const { return static_cast<int>(a_matrix.rows()); }

  friend bool operator==(const LntTransform& a, const LntTransform& b) {
    return a.a_matrix == b.a_matrix && a.b_bias == b.b_bias && a.x_mean == b.x_mean && a.bin_edges == b.bin_edges;
  }
};

struct Indicator {
  Matrix t;                        // m x l, one-hot columns
  std::vector<int> bin_of_sample;
  std::vector<double> edges;       // m + 1 ascending cut points
};

// Equal-population quantile bins over the target. Samples with equal
// values share the lower bin.
inline Indicator build_indicator(std::span<const double> target, int m) {
  const std::size_t l = target.size();
  detail::require(m >= 2, "build_indicator: need at least two bins");
  detail::require(l >= static_cast<std::size_t>(m), "build_indicator: fewer samples than bins");
  std::vector<std::size_t> order(l);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return target[a] < target[b]; });

  Indicator ind;
  ind.bin_of_sample.assign(l, 0);
  int prev_bin = 0;
  for (std::size_t r = 0; r < l; ++r) {
    int bin = static_cast<int>(r * static_cast<std::size_t>(m) / l);
    if (r > 0 && target[order[r]] == target[order[r - 1]]) bin = prev_bin;
    ind.bin_of_sample[order[r]] = bin;
    prev_bin = bin;
  }

  std::vector<double> lo(static_cast<std::size_t>(m), 0.0), hi(static_cast<std::size_t>(m), 0.0);
  std::vector<std::size_t> pop(static_cast<std::size_t>(m), 0);
  for (std::size_t r = 0; r < l; ++r) {
    const auto b = static_cast<std::size_t>(ind.bin_of_sample[order[r]]);
    const double v = target[order[r]];
    if (pop[b] == 0) lo[b] = v;
    hi[b] = v;
    ++pop[b];
  }
  for (std::size_t b = 0; b < pop.size(); ++b)
    if (pop[b] == 0) throw InvalidArgument("build_indicator: degenerate binning (too few distinct target values)");

  ind.edges.resize(static_cast<std::size_t>(m) + 1);
  ind.edges.front() = lo.front();
  ind.edges.back() = hi.back();
  for (std::size_t b = 1; b < static_cast<std::size_t>(m); ++b) ind.edges[b] = 0.5 * (hi[b - 1] + lo[b]);

  ind.t = Matrix::Zero(m, static_cast<Eigen::Index>(l));
  for (std::size_t i = 0; i < l; ++i) ind.t(ind.bin_of_sample[i], static_cast<Eigen::Index>(i)) = 1.0;
  return ind;
}

// 1e-6 * trace(X_c^T X_c) / n on the centered features.
inline double default_ridge(const Matrix& features) {
  const Matrix xc = features.rowwise() - features.colwise().mean();
  return 1e-6 * xc.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, features.cols()));
}

// A = T X^T (X X^T + ridge I)^-1 on mean-centered features,
// B = E[T] - A E[X]. `features` is l x n (samples as rows), `indicator`
// is m x l.
inline LntTransform fit_lnt(const Matrix& features, const Matrix& indicator, double ridge,
                            std::vector<double> bin_edges = {}) {
  const Eigen::Index l = features.rows(), n = features.cols();
  detail::require(l >= 1 && n >= 1, "fit_lnt: empty feature matrix");
  detail::require(indicator.cols() == l, "fit_lnt: indicator column count must equal sample count");
  detail::require(ridge >= 0.0, "fit_lnt: ridge must be >= 0");

  LntTransform xf;
  xf.x_mean = features.colwise().mean().transpose();
  const Matrix xc = features.rowwise() - xf.x_mean.transpose();
  Matrix gram = xc.transpose() * xc;
  gram.diagonal().array() += ridge;
  const Matrix rhs = (indicator * xc).transpose();  // n x m

  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-14)
    throw RankDeficientError("fit_lnt: X X^T is singular or rank deficient; use ridge > 0");
  xf.a_matrix = llt.solve(rhs).transpose();
  xf.b_bias = indicator.rowwise().mean() - xf.a_matrix * xf.x_mean;
  xf.bin_edges = std::move(bin_edges);
  return xf;
}

// d = A (x - mean).
inline void apply_lnt(const LntTransform& xf, std::span<const double> x, std::span<double> out) {
  detail::require(static_cast<int>(x.size()) == xf.input_dim(), "apply_lnt: input dimension mismatch");
  detail::require(static_cast<int>(out.size()) == xf.output_dim(), "apply_lnt: output dimension mismatch");
  for (int r = 0; r < xf.output_dim(); ++r) {
    double acc = 0.0;
    for (int c = 0; c < xf.input_dim(); ++c) acc += xf.a_matrix(r, c) * (x[static_cast<std::size_t>(c)] - xf.x_mean(c));
    out[static_cast<std::size_t>(r)] = acc;
  }
}

inline std::vector<double> apply_lnt(const LntTransform& xf, std::span<const double> x) {
  std::vector<double> out(static_cast<std::size_t>(xf.output_dim()));
  apply_lnt(xf, x, out);
  return out;
}

// Row-wise application; each row uses the same kernel as the single-vector
// overload, so results agree bit for bit.
inline Matrix apply_lnt(const LntTransform& xf, const Matrix& rows) {
  detail::require(static_cast<int>(rows.cols()) == xf.input_dim(), "apply_lnt: input dimension mismatch");
  Matrix out(rows.rows(), xf.output_dim());
  parallel_for(static_cast<std::size_t>(rows.rows()), [&](std::size_t i) {
    std::vector<double> x(static_cast<std::size_t>(rows.cols())), d(static_cast<std::size_t>(xf.output_dim()));
    for (Eigen::Index c = 0; c < rows.cols(); ++c) x[static_cast<std::size_t>(c)] = rows(static_cast<Eigen::Index>(i), c);
    apply_lnt(xf, x, d);
    for (int r = 0; r < xf.output_dim(); ++r) out(static_cast<Eigen::Index>(i), r) = d[static_cast<std::size_t>(r)];
  });
  return out;
}

struct Level2 {
  LntTransform transform;
  Matrix features;  // l x m
};

// Level-2 features: indicator from the target, LNT fitted on the Level-1
// rows, then applied to every row. ridge defaults to default_ridge().
inline Level2 make_level2(const Matrix& level1, std::span<const double> target, int m,
                          std::optional<double> ridge = std::nullopt) {
  detail::require(static_cast<std::size_t>(level1.rows()) == target.size(), "make_level2: row count mismatch");
  Indicator ind = build_indicator(target, m);
  Level2 out;
  out.transform = fit_lnt(level1, ind.t, ridge.value_or(default_ridge(level1)), std::move(ind.edges));
  out.features = apply_lnt(out.transform, level1);
  return out;
}

}  // namespace gusl
