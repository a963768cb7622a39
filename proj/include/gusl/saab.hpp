#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "gusl/error.hpp"
#include "gusl/image.hpp"
#include "gusl/parallel.hpp"
#include "gusl/trees.hpp"

namespace gusl {

// How many AC filters a bank keeps: a fixed count when count > 0, otherwise
// the fewest leading filters whose energies reach energy_threshold.
// max_filters (0 = unbounded) caps either rule.
struct KeepRule {
  int count = 0;
  double energy_threshold = 0.98;
  int max_filters = 0;

  friend bool operator==(const KeepRule&, const KeepRule&) = default;
};

struct HopConfig {
  int window = 7;
  int filter = 5;
  int pool = 2;
  KeepRule keep;

  void validate() const {
    detail::require(filter >= 1 && filter <= window, "hop: filter size must be in [1, window]");
    detail::require(filter % 2 == 1, "hop: filter size must be odd");
    detail::require(pool == 1 || pool == 2, "hop: pool must be 1 or 2");
  }

  friend bool operator==(const HopConfig&, const HopConfig&) = default;
};

// One hop's Saab filters. Responses are ordered DC first, then AC filters
// by descending energy.
struct SaabBank {
  int spatial_size = 0;
  int in_channels = 0;
  Vector dc_vector;     // constant, unit norm
  Matrix ac_vectors;    // rows are orthonormal AC filters
  double dc_bias = 0.0;
  Vector ac_biases;
  Vector energies;      // AC eigenvalues / total AC variance
  double dc_variance = 0.0;
  double ac_variance = 0.0;  // trace of the AC residual covariance

  int patch_dim() const { return spatial_size * spatial_size * in_channels; }
  int ac_count() const { return static_cast<int>(ac_vectors.rows()); }
  int output_channels() const { return 1 + ac_count(); }

  friend bool operator==(const SaabBank& a, const SaabBank& b) {
    return a.spatial_size == b.spatial_size && a.in_channels == b.in_channels && a.dc_vector == b.dc_vector &&
           a.ac_vectors == b.ac_vectors && a.dc_bias == b.dc_bias && a.ac_biases == b.ac_biases &&
           a.energies == b.energies && a.dc_variance == b.dc_variance && a.ac_variance == b.ac_variance;
  }
};

struct SaabHop {
  HopConfig config;
  SaabBank bank;

  friend bool operator==(const SaabHop&, const SaabHop&) = default;
};

struct SaabCascade {
  std::vector<SaabHop> hops;

  friend bool operator==(const SaabCascade&, const SaabCascade&) = default;
};

// Each valid m x m window becomes one row, flattened row-major with the
// channel index fastest.
inline Matrix extract_patches(const FeatureTensor& t, int m, int stride = 1) {
  detail::require(m >= 1 && m <= std::min(t.height, t.width), "extract_patches: window larger than tensor");
  detail::require(stride >= 1, "extract_patches: stride must be >= 1");
  const int oh = (t.height - m) / stride + 1;
  const int ow = (t.width - m) / stride + 1;
  Matrix out(static_cast<Eigen::Index>(oh) * ow, static_cast<Eigen::Index>(m) * m * t.channels);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      const Eigen::Index row = static_cast<Eigen::Index>(oy) * ow + ox;
      Eigen::Index col = 0;
      for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i)
          for (int c = 0; c < t.channels; ++c) out(row, col++) = t.at(oy * stride + j, ox * stride + i, c);
    }
  return out;
}

namespace detail {

// Mean of a patch anchored at its first entry, so constant patches have a
// residual of exactly zero.
inline double patch_mean(const double* v, int n) {
  double acc = 0.0;
  for (int k = 0; k < n; ++k) acc += v[k] - v[0];
  return v[0] + acc / n;
}

// Streaming statistics of patches: DC coefficient moments and the AC
// residual covariance, accumulated around a fixed shift.
class SaabAccumulator {
 public:
  explicit SaabAccumulator(int dim) : dim_(dim), shift_(Vector::Zero(dim)), sum_(Vector::Zero(dim)), outer_(Matrix::Zero(dim, dim)) {}

  void add(const Eigen::Ref<const Matrix>& patches) {
    if (patches.rows() == 0) return;
    Matrix res(patches.rows(), dim_);
    for (Eigen::Index r = 0; r < patches.rows(); ++r) {
      Eigen::RowVectorXd row = patches.row(r);
      const double mean = patch_mean(row.data(), dim_);
      const double dc = std::sqrt(static_cast<double>(dim_)) * mean;
      if (count_ == 0 && r == 0) {
        dc_shift_ = dc;
        shift_ = (row.array() - mean).matrix().transpose();
      }
      dc_sum_ += dc - dc_shift_;
      dc_sq_ += (dc - dc_shift_) * (dc - dc_shift_);
      res.row(r) = (row.array() - mean).matrix() - shift_.transpose();
    }
    sum_ += res.colwise().sum().transpose();
    outer_.noalias() += res.transpose() * res;
    count_ += patches.rows();
  }

  void merge(const SaabAccumulator& o) {
    if (o.count_ == 0) return;
    if (count_ == 0) {
      *this = o;
      return;
    }
    // Re-express o's moments around this accumulator's shifts.
    const Vector delta = o.shift_ - shift_;
    const double n = static_cast<double>(o.count_);
    outer_ += o.outer_ + delta * o.sum_.transpose() + o.sum_ * delta.transpose() + n * delta * delta.transpose();
    sum_ += o.sum_ + n * delta;
    const double dd = o.dc_shift_ - dc_shift_;
    dc_sq_ += o.dc_sq_ + 2.0 * dd * o.dc_sum_ + n * dd * dd;
    dc_sum_ += o.dc_sum_ + n * dd;
    count_ += o.count_;
  }

  Eigen::Index count() const { return count_; }

  Matrix covariance() const {
    const double n = static_cast<double>(count_);
    const Vector mean = sum_ / n;
    Matrix cov = outer_ / n - mean * mean.transpose();
    return 0.5 * (cov + cov.transpose());
  }

  double dc_variance() const {
    const double n = static_cast<double>(count_);
    const double m = dc_sum_ / n;
    return std::max(0.0, dc_sq_ / n - m * m);
  }

 private:
  int dim_;
  Eigen::Index count_ = 0;
  Vector shift_;
  Vector sum_;
  Matrix outer_;
  double dc_shift_ = 0.0;
  double dc_sum_ = 0.0;
  double dc_sq_ = 0.0;
};

// Largest-magnitude entry positive.
inline void canonical_sign(Eigen::Ref<Vector> v) {
  Eigen::Index arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v(arg) < 0) v = -v;
}

inline SaabBank bank_from_stats(const SaabAccumulator& acc, int spatial_size, int in_channels, const KeepRule& keep) {
  const int dim = spatial_size * spatial_size * in_channels;
  detail::require(acc.count() >= 2, "fit_saab: need at least two patches");
  detail::require(keep.count <= dim, "fit_saab: kept filter count exceeds patch dimension");

  SaabBank bank;
  bank.spatial_size = spatial_size;
  bank.in_channels = in_channels;
  bank.dc_vector = Vector::Constant(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
  bank.dc_variance = acc.dc_variance();

  const Matrix cov = acc.covariance();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector evals = eig.eigenvalues().reverse();
  const Matrix evecs = eig.eigenvectors().rowwise().reverse();
  const double total = std::max(0.0, cov.trace());
  bank.ac_variance = total;

  // Directions with negligible variance (including the DC direction, which
  // the residual covariance annihilates) are not filters.
  const double floor = std::max(1e-12 * total, 1e-300);
  int available = 0;
  while (available < dim - 1 && available < evals.size() && evals(available) > floor) ++available;

  int kept = 0;
  if (total > 0.0) {
    if (keep.count > 0) {
      kept = std::min(keep.count, available);
    } else {
      double cum = 0.0;
      while (kept < available) {
        cum += evals(kept) / total;
        ++kept;
        if (cum >= keep.energy_threshold) break;
      }
    }
    if (keep.max_filters > 0) kept = std::min(kept, keep.max_filters);
  }

  bank.ac_vectors.resize(kept, dim);
  bank.energies.resize(kept);
  for (int k = 0; k < kept; ++k) {
    Vector v = evecs.col(k);
    v -= bank.dc_vector.dot(v) * bank.dc_vector;
    v.normalize();
    canonical_sign(v);
    bank.ac_vectors.row(k) = v.transpose();
    bank.energies(k) = std::max(0.0, evals(k)) / total;
  }
  bank.ac_biases = Vector::Zero(kept);
  return bank;
}

inline void saab_response(const SaabBank& bank, const double* v, double* out, std::vector<double>& scratch) {
  const int dim = bank.patch_dim();
  const double mean = patch_mean(v, dim);
  scratch.resize(static_cast<std::size_t>(dim));
  for (int k = 0; k < dim; ++k) scratch[static_cast<std::size_t>(k)] = v[k] - mean;
  out[0] = std::sqrt(static_cast<double>(dim)) * mean + bank.dc_bias;
  for (int k = 0; k < bank.ac_count(); ++k) {
    double acc = 0.0;
    for (int j = 0; j < dim; ++j) acc += bank.ac_vectors(k, j) * scratch[static_cast<std::size_t>(j)];
    out[k + 1] = acc + bank.ac_biases(k);
  }
}

// Unbiased responses, used to set the non-negativity biases.
inline void update_min_response(const SaabBank& bank, const Eigen::Ref<const Matrix>& patches, Vector& min_resp) {
  std::vector<double> scratch, out(static_cast<std::size_t>(bank.output_channels()));
  for (Eigen::Index r = 0; r < patches.rows(); ++r) {
    Eigen::RowVectorXd row = patches.row(r);
    saab_response(bank, row.data(), out.data(), scratch);
    for (int k = 0; k < bank.output_channels(); ++k) min_resp(k) = std::min(min_resp(k), out[static_cast<std::size_t>(k)]);
  }
}

inline void set_biases(SaabBank& bank, const Vector& min_resp) {
  bank.dc_bias = std::max(0.0, -min_resp(0));
  for (int k = 0; k < bank.ac_count(); ++k) bank.ac_biases(k) = std::max(0.0, -min_resp(k + 1));
}

}  // namespace detail

// Saab filters from a patch matrix: constant DC kernel, PCA of the
// DC-removed residual for the AC kernels, biases that shift every training
// response to be non-negative.
inline SaabBank fit_saab(const Matrix& patches, int spatial_size, int in_channels, const KeepRule& keep = {}) {
  detail::require(patches.rows() >= 2, "fit_saab: need at least two patches");
  detail::require(patches.cols() == static_cast<Eigen::Index>(spatial_size) * spatial_size * in_channels,
                  "fit_saab: patch width does not match spatial_size^2 * in_channels");
  detail::SaabAccumulator acc(static_cast<int>(patches.cols()));
  acc.add(patches);
  SaabBank bank = detail::bank_from_stats(acc, spatial_size, in_channels, keep);
  Vector min_resp = Vector::Constant(bank.output_channels(), std::numeric_limits<double>::infinity());
  detail::update_min_response(bank, patches, min_resp);
  detail::set_biases(bank, min_resp);
  return bank;
}

// Responses of every valid window: output is
// ((H-m)/stride+1) x ((W-m)/stride+1) x (1 + AC count).
inline FeatureTensor apply_saab(const FeatureTensor& t, const SaabBank& bank, int stride = 1) {
  detail::require(t.channels == bank.in_channels, "apply_saab: channel count does not match bank");
  const int m = bank.spatial_size;
  detail::require(m <= std::min(t.height, t.width), "apply_saab: tensor smaller than filter");
  const int oh = (t.height - m) / stride + 1;
  const int ow = (t.width - m) / stride + 1;
  FeatureTensor out(oh, ow, bank.output_channels());
  parallel_for(static_cast<std::size_t>(oh), [&](std::size_t oyu) {
    const int oy = static_cast<int>(oyu);
    std::vector<double> patch(static_cast<std::size_t>(bank.patch_dim())), scratch;
    for (int ox = 0; ox < ow; ++ox) {
      std::size_t k = 0;
      for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i)
          for (int c = 0; c < t.channels; ++c) patch[k++] = t.at(oy * stride + j, ox * stride + i, c);
      detail::saab_response(bank, patch.data(), &out.at(oy, ox, 0), scratch);
    }
  });
  return out;
}

inline FeatureTensor max_pool(const FeatureTensor& t, int factor = 2) {
  detail::require(factor == 2, "max_pool: only factor 2 is supported");
  detail::require(t.height % 2 == 0 && t.width % 2 == 0, "max_pool: spatial dimensions must be even");
  FeatureTensor out(t.height / 2, t.width / 2, t.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < t.channels; ++c)
        out.at(y, x, c) = std::max({t.at(2 * y, 2 * x, c), t.at(2 * y, 2 * x + 1, c), t.at(2 * y + 1, 2 * x, c),
                                    t.at(2 * y + 1, 2 * x + 1, c)});
  return out;
}

// Replicates border pixels so a "valid" m x m filter returns the input size.
inline FeatureTensor pad_replicate(const FeatureTensor& t, int r) {
  if (r == 0) return t;
  FeatureTensor out(t.height + 2 * r, t.width + 2 * r, t.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const int sy = std::clamp(y - r, 0, t.height - 1);
      const int sx = std::clamp(x - r, 0, t.width - 1);
      for (int c = 0; c < t.channels; ++c) out.at(y, x, c) = t.at(sy, sx, c);
    }
  return out;
}

namespace detail {

// Hop output at the input's spatial size.
inline FeatureTensor apply_hop(const FeatureTensor& in, const SaabHop& hop) {
  return apply_saab(pad_replicate(in, hop.config.filter / 2), hop.bank, 1);
}

inline int patch_stride_for(const FeatureTensor& t, int m, std::size_t max_patches_per_image) {
  if (max_patches_per_image == 0) return 1;
  int stride = 1;
  while (static_cast<std::size_t>((t.height - m) / stride + 1) * static_cast<std::size_t>((t.width - m) / stride + 1) >
         max_patches_per_image)
    ++stride;
  return stride;
}

}  // namespace detail

// Fits hop 1 on valid patches of the inputs, then every later hop on the
// (pooled) outputs of the previous hop over all images. Patches are thinned
// by a per-image stride when max_patches_per_image is non-zero.
inline SaabCascade fit_cascade(const std::vector<ImageBuffer>& images, const std::vector<HopConfig>& configs,
                               std::size_t max_patches_per_image = 0) {
  detail::require(!images.empty(), "fit_cascade: no images");
  detail::require(!configs.empty(), "fit_cascade: no hops");
  for (const auto& c : configs) c.validate();

  std::vector<FeatureTensor> current;
  current.reserve(images.size());
  for (const auto& img : images) current.push_back(to_tensor(img));

  SaabCascade cascade;
  for (std::size_t h = 0; h < configs.size(); ++h) {
    const HopConfig& cfg = configs[h];
    const int m = cfg.filter;
    const int channels = current.front().channels;
    for (const auto& t : current) {
      detail::require(t.channels == channels, "fit_cascade: inconsistent channel counts");
      detail::require(m <= std::min(t.height, t.width), "fit_cascade: image too small for hop filter");
    }
    const int dim = m * m * channels;

    std::vector<detail::SaabAccumulator> partial(current.size(), detail::SaabAccumulator(dim));
    parallel_for(current.size(), [&](std::size_t i) {
      const int stride = detail::patch_stride_for(current[i], m, max_patches_per_image);
      partial[i].add(extract_patches(current[i], m, stride));
    });
    detail::SaabAccumulator acc(dim);
    for (const auto& p : partial) acc.merge(p);

    SaabHop hop;
    hop.config = cfg;
    hop.bank = detail::bank_from_stats(acc, m, channels, cfg.keep);
    std::vector<Vector> mins(current.size(),
                             Vector::Constant(hop.bank.output_channels(), std::numeric_limits<double>::infinity()));
    parallel_for(current.size(), [&](std::size_t i) {
      const int stride = detail::patch_stride_for(current[i], m, max_patches_per_image);
      detail::update_min_response(hop.bank, extract_patches(current[i], m, stride), mins[i]);
    });
    Vector min_resp = mins.front();
    for (const auto& v : mins) min_resp = min_resp.cwiseMin(v);
    detail::set_biases(hop.bank, min_resp);

    if (h + 1 < configs.size()) {
      parallel_for(current.size(), [&](std::size_t i) {
        FeatureTensor out = detail::apply_hop(current[i], hop);
        current[i] = cfg.pool == 2 ? max_pool(out) : std::move(out);
      });
    }
    cascade.hops.push_back(std::move(hop));
  }
  return cascade;
}

// Every hop's pre-pool response map; hop outputs keep their input's size.
inline std::vector<FeatureTensor> apply_cascade(const ImageBuffer& img, const SaabCascade& cascade) {
  detail::require(!cascade.hops.empty(), "apply_cascade: empty cascade");
  std::vector<FeatureTensor> out;
  FeatureTensor current = to_tensor(img);
  for (std::size_t h = 0; h < cascade.hops.size(); ++h) {
    const SaabHop& hop = cascade.hops[h];
    detail::require(current.channels == hop.bank.in_channels, "apply_cascade: channel mismatch");
    detail::require(std::min(current.height, current.width) >= hop.config.filter, "apply_cascade: image too small");
    FeatureTensor resp = detail::apply_hop(current, hop);
    if (h + 1 < cascade.hops.size()) current = hop.config.pool == 2 ? max_pool(resp) : resp;
    out.push_back(std::move(resp));
  }
  return out;
}

}  // namespace gusl
