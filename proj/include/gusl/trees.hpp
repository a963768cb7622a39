#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gusl/error.hpp"
#include "gusl/parallel.hpp"

namespace gusl {

// Samples are rows, features are columns.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct GbtParams {
  int rounds = 200;
  double eta = 0.3;
  double lambda = 1.0;
  double gamma = 0.0;
  int max_depth = 6;
  double min_child_weight = 1.0;
};

struct ForestParams {
  int n_trees = 100;
  int max_depth = 8;
  double feature_subsample = 1.0 / 3.0;
  bool bootstrap = true;
  double min_leaf = 1.0;
  std::uint64_t seed = 0;
};

// Internal nodes route x[feature] <= threshold to the left child.
struct TreeNode {
  bool leaf = true;
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double weight = 0.0;

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  int leaf_index(const double* x) const {
    int n = 0;
    while (!nodes[static_cast<std::size_t>(n)].leaf) {
      const TreeNode& node = nodes[static_cast<std::size_t>(n)];
      n = x[node.feature] <= node.threshold ? node.left : node.right;
    }
    return n;
  }

  double predict(const double* x) const { return nodes[static_cast<std::size_t>(leaf_index(x))].weight; }

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

enum class EnsembleMode { boosted, bagged };

struct TreeEnsembleModel {
  EnsembleMode mode = EnsembleMode::boosted;
  std::vector<RegressionTree> trees;
  double base_score = 0.0;
  double eta = 1.0;
  int feature_dim = 0;

  double predict(std::span<const double> x) const {
    detail::require(static_cast<int>(x.size()) == feature_dim, "tree model: feature dimension mismatch");
    if (mode == EnsembleMode::bagged) {
      if (trees.empty()) return base_score;
      double acc = 0.0;
      for (const auto& t : trees) acc += t.predict(x.data());
      return acc / static_cast<double>(trees.size());
    }
    double acc = 0.0;
    for (const auto& t : trees) acc += t.predict(x.data());
    return base_score + eta * acc;
  }

  std::vector<double> predict(const Matrix& rows) const {
    detail::require(static_cast<int>(rows.cols()) == feature_dim, "tree model: feature dimension mismatch");
    std::vector<double> out(static_cast<std::size_t>(rows.rows()));
    parallel_for(out.size(), [&](std::size_t i) {
      std::vector<double> x(static_cast<std::size_t>(feature_dim));
      for (int f = 0; f < feature_dim; ++f) x[static_cast<std::size_t>(f)] = rows(static_cast<Eigen::Index>(i), f);
      out[i] = predict(x);
    });
    return out;
  }

  friend bool operator==(const TreeEnsembleModel&, const TreeEnsembleModel&) = default;
};

inline double predict_gbt(const TreeEnsembleModel& model, std::span<const double> x) {
  detail::require(model.mode == EnsembleMode::boosted, "predict_gbt requires a boosted model");
  return model.predict(x);
}

// Internal nodes hold a feature index and a threshold, leaves one weight.
inline std::size_t count_parameters(const RegressionTree& tree) {
  std::size_t n = 0;
  for (const auto& node : tree.nodes) n += node.leaf ? 1 : 2;
  return n;
}

inline std::size_t count_parameters(const TreeEnsembleModel& model) {
  std::size_t n = 0;
  for (const auto& t : model.trees) n += count_parameters(t);
  return n;
}

namespace detail {

// Mean anchored at the first element: identical inputs give exactly that
// value back.
inline double anchored_mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += x - v[0];
  return v[0] + acc / static_cast<double>(v.size());
}

// Per-feature row order by ascending value, with the sorted values cached.
struct SortedColumns {
  std::vector<std::vector<int>> order;
  std::vector<std::vector<double>> values;

  explicit SortedColumns(const Matrix& x) {
    const auto n = static_cast<int>(x.rows());
    const auto d = static_cast<std::size_t>(x.cols());
    order.resize(d);
    values.resize(d);
    parallel_for(d, [&](std::size_t f) {
      auto& ord = order[f];
      ord.resize(static_cast<std::size_t>(n));
      std::iota(ord.begin(), ord.end(), 0);
      const auto col = static_cast<Eigen::Index>(f);
      std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) { return x(a, col) < x(b, col); });
      auto& val = values[f];
      val.resize(ord.size());
      for (std::size_t k = 0; k < ord.size(); ++k) val[k] = x(ord[k], col);
    });
  }
};

struct TreeOptions {
  int max_depth = 6;
  double lambda = 1.0;
  double gamma = 0.0;
  double min_child_weight = 1.0;
  double feature_fraction = 1.0;
  Rng* rng = nullptr;  // required when feature_fraction < 1
};

struct SplitCandidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

inline double midpoint(double lo, double hi) {
  const double m = lo + 0.5 * (hi - lo);
  return m < hi ? m : lo;
}

// Level-wise exact greedy tree growth on the second-order objective.
// Rows with h == 0 are excluded. leaf_of_row receives each row's final leaf
// node (or -1 for excluded rows).
inline RegressionTree grow_tree(const Matrix& x, const SortedColumns& sorted, std::span<const double> g,
                                std::span<const double> h, const TreeOptions& opt, std::vector<int>& leaf_of_row) {
  const auto n = static_cast<std::size_t>(x.rows());
  const int d = static_cast<int>(x.cols());
  RegressionTree tree;
  std::vector<double> node_g, node_h;
  std::vector<int> pos(n, -1);
  leaf_of_row.assign(n, -1);

  tree.nodes.emplace_back();
  node_g.push_back(0.0);
  node_h.push_back(0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (h[i] <= 0.0) continue;
    pos[i] = 0;
    node_g[0] += g[i];
    node_h[0] += h[i];
  }

  auto finalize_leaf = [&](int node) {
    tree.nodes[static_cast<std::size_t>(node)].leaf = true;
    tree.nodes[static_cast<std::size_t>(node)].weight =
        -node_g[static_cast<std::size_t>(node)] / (node_h[static_cast<std::size_t>(node)] + opt.lambda);
  };

  std::vector<int> frontier{0};
  for (int depth = 0; !frontier.empty(); ++depth) {
    if (depth >= opt.max_depth || d == 0) {
      for (int node : frontier) finalize_leaf(node);
      break;
    }
    const std::size_t slots = frontier.size();
    std::vector<int> slot_of(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < slots; ++s) slot_of[static_cast<std::size_t>(frontier[s])] = static_cast<int>(s);

    // Feature subsets per node, drawn in frontier order.
    std::vector<std::vector<char>> allowed;
    if (opt.feature_fraction < 1.0) {
      const int k = std::max(1, static_cast<int>(std::lround(opt.feature_fraction * d)));
      allowed.assign(slots, std::vector<char>(static_cast<std::size_t>(d), 0));
      for (std::size_t s = 0; s < slots; ++s) {
        std::vector<int> feats(static_cast<std::size_t>(d));
        std::iota(feats.begin(), feats.end(), 0);
        for (int j = 0; j < k; ++j) {
          const std::size_t pick = static_cast<std::size_t>(j) + opt.rng->below(static_cast<std::size_t>(d - j));
          std::swap(feats[static_cast<std::size_t>(j)], feats[pick]);
          allowed[s][static_cast<std::size_t>(feats[static_cast<std::size_t>(j)])] = 1;
        }
      }
    }

    std::vector<std::vector<SplitCandidate>> best(static_cast<std::size_t>(d), std::vector<SplitCandidate>(slots));
    parallel_for(static_cast<std::size_t>(d), [&](std::size_t f) {
      std::vector<double> gl(slots, 0.0), hl(slots, 0.0), last(slots, 0.0);
      std::vector<char> seen(slots, 0);
      auto& out = best[f];
      const auto& ord = sorted.order[f];
      const auto& val = sorted.values[f];
      for (std::size_t k = 0; k < ord.size(); ++k) {
        const auto i = static_cast<std::size_t>(ord[k]);
        const int node = pos[i];
        if (node < 0) continue;
        const int s = slot_of[static_cast<std::size_t>(node)];
        if (s < 0) continue;
        const auto su = static_cast<std::size_t>(s);
        if (!allowed.empty() && !allowed[su][f]) continue;
        const double v = val[k];
        if (seen[su] && v > last[su]) {
          const double hr = node_h[static_cast<std::size_t>(node)] - hl[su];
          if (hl[su] >= opt.min_child_weight && hr >= opt.min_child_weight) {
            const double gt = node_g[static_cast<std::size_t>(node)];
            const double gr = gt - gl[su];
            const double score_l = gl[su] * gl[su] / (hl[su] + opt.lambda);
            const double score_r = gr * gr / (hr + opt.lambda);
            const double score_p = gt * gt / (node_h[static_cast<std::size_t>(node)] + opt.lambda);
            const double gain = 0.5 * (score_l + score_r - score_p) - opt.gamma;
            // Rounding noise on pure nodes is not a split.
            const bool significant = gain > 1e-12 * (score_l + score_r + score_p);
            if (significant && gain > out[su].gain) out[su] = {gain, static_cast<int>(f), midpoint(last[su], v)};
          }
        }
        gl[su] += g[i];
        hl[su] += h[i];
        last[su] = v;
        seen[su] = 1;
      }
    });

    std::vector<int> next;
    std::vector<char> is_split(tree.nodes.size(), 0);
    for (std::size_t s = 0; s < slots; ++s) {
      SplitCandidate pick;
      for (int f = 0; f < d; ++f) {
        const auto& c = best[static_cast<std::size_t>(f)][s];
        if (c.feature >= 0 && c.gain > pick.gain) pick = c;
      }
      const int node = frontier[s];
      if (pick.feature < 0) {
        finalize_leaf(node);
        continue;
      }
      const int left = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      node_g.resize(tree.nodes.size(), 0.0);
      node_h.resize(tree.nodes.size(), 0.0);
      TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
      nd.leaf = false;
      nd.feature = pick.feature;
      nd.threshold = pick.threshold;
      nd.left = left;
      nd.right = left + 1;
      is_split.resize(tree.nodes.size(), 0);
      is_split[static_cast<std::size_t>(node)] = 1;
      next.push_back(left);
      next.push_back(left + 1);
    }

    for (std::size_t i = 0; i < n; ++i) {
      const int node = pos[i];
      if (node < 0) continue;
      if (!is_split[static_cast<std::size_t>(node)]) {
        leaf_of_row[i] = node;
        pos[i] = -1;
        continue;
      }
      const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
      const int child = x(static_cast<Eigen::Index>(i), nd.feature) <= nd.threshold ? nd.left : nd.right;
      pos[i] = child;
      node_g[static_cast<std::size_t>(child)] += g[i];
      node_h[static_cast<std::size_t>(child)] += h[i];
    }
    frontier = std::move(next);
  }
  for (std::size_t i = 0; i < n; ++i)
    if (pos[i] >= 0) leaf_of_row[i] = pos[i];

  // Renumber nodes in preorder (node, left subtree, right subtree).
  std::vector<int> new_index(tree.nodes.size(), -1);
  RegressionTree ordered;
  ordered.nodes.reserve(tree.nodes.size());
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const int old = stack.back();
    stack.pop_back();
    new_index[static_cast<std::size_t>(old)] = static_cast<int>(ordered.nodes.size());
    ordered.nodes.push_back(tree.nodes[static_cast<std::size_t>(old)]);
    const TreeNode& nd = tree.nodes[static_cast<std::size_t>(old)];
    if (!nd.leaf) {
      stack.push_back(nd.right);
      stack.push_back(nd.left);
    }
  }
  for (auto& nd : ordered.nodes)
    if (!nd.leaf) {
      nd.left = new_index[static_cast<std::size_t>(nd.left)];
      nd.right = new_index[static_cast<std::size_t>(nd.right)];
    }
  for (int& l : leaf_of_row)
    if (l >= 0) l = new_index[static_cast<std::size_t>(l)];
  return ordered;
}

inline void check_training_data(const Matrix& x, std::span<const double> y) {
  if (x.rows() == 0 || y.empty()) throw InvalidArgument("tree fit: empty training data");
  detail::require(static_cast<std::size_t>(x.rows()) == y.size(), "tree fit: row count does not match target length");
  if (!x.allFinite()) throw InvalidArgument("tree fit: non-finite feature value");
  for (double v : y)
    if (!std::isfinite(v)) throw InvalidArgument("tree fit: non-finite target value");
}

}  // namespace detail

// Second-order gradient boosting on squared error (g = yhat - y, h = 1).
// When history is given it receives the training MSE after every round.
inline TreeEnsembleModel fit_gbt(const Matrix& x, std::span<const double> y, const GbtParams& params,
                                 std::vector<double>* history = nullptr) {
  detail::check_training_data(x, y);
  detail::require(x.rows() >= 2, "fit_gbt: need at least two samples");
  detail::require(params.rounds >= 1, "fit_gbt: rounds must be >= 1");
  detail::require(params.max_depth >= 0, "fit_gbt: max_depth must be >= 0");
  detail::require(params.eta > 0.0 && params.eta <= 1.0, "fit_gbt: eta must be in (0, 1]");
  detail::require(params.lambda >= 0.0 && params.gamma >= 0.0, "fit_gbt: lambda and gamma must be >= 0");

  TreeEnsembleModel model;
  model.mode = EnsembleMode::boosted;
  model.eta = params.eta;
  model.feature_dim = static_cast<int>(x.cols());
  model.base_score = detail::anchored_mean(y);

  const std::size_t n = y.size();
  const detail::SortedColumns sorted(x);
  std::vector<double> pred(n, model.base_score), g(n), h(n, 1.0);
  std::vector<int> leaf_of_row;
  detail::TreeOptions opt;
  opt.max_depth = params.max_depth;
  opt.lambda = params.lambda;
  opt.gamma = params.gamma;
  opt.min_child_weight = params.min_child_weight;

  for (int round = 0; round < params.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) g[i] = pred[i] - y[i];
    RegressionTree tree = detail::grow_tree(x, sorted, g, h, opt, leaf_of_row);
    for (std::size_t i = 0; i < n; ++i)
      pred[i] += params.eta * tree.nodes[static_cast<std::size_t>(leaf_of_row[i])].weight;
    model.trees.push_back(std::move(tree));
    if (history) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += (pred[i] - y[i]) * (pred[i] - y[i]);
      history->push_back(acc / static_cast<double>(n));
    }
  }
  return model;
}

// Bagged regression trees: bootstrap rows, per-node feature subsets,
// variance-reduction splits, leaves hold the mean resident target.
inline TreeEnsembleModel fit_random_forest(const Matrix& x, std::span<const double> y, const ForestParams& params) {
  detail::check_training_data(x, y);
  detail::require(params.n_trees >= 1, "fit_random_forest: n_trees must be >= 1");
  detail::require(params.max_depth >= 0, "fit_random_forest: max_depth must be >= 0");
  detail::require(params.feature_subsample > 0.0 && params.feature_subsample <= 1.0,
                  "fit_random_forest: feature_subsample must be in (0, 1]");

  TreeEnsembleModel model;
  model.mode = EnsembleMode::bagged;
  model.eta = 1.0;
  model.feature_dim = static_cast<int>(x.cols());
  model.base_score = detail::anchored_mean(y);
  model.trees.resize(static_cast<std::size_t>(params.n_trees));

  const std::size_t n = y.size();
  const detail::SortedColumns sorted(x);
  for (int t = 0; t < params.n_trees; ++t) {
    Rng rng(mix_seed(params.seed, static_cast<std::uint64_t>(t)));
    std::vector<double> h(n, params.bootstrap ? 0.0 : 1.0);
    if (params.bootstrap)
      for (std::size_t k = 0; k < n; ++k) h[rng.below(n)] += 1.0;
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = -h[i] * y[i];
    detail::TreeOptions opt;
    opt.max_depth = params.max_depth;
    opt.lambda = 0.0;
    opt.gamma = 0.0;
    opt.min_child_weight = params.min_leaf;
    opt.feature_fraction = params.feature_subsample;
    opt.rng = &rng;
    std::vector<int> leaf_of_row;
    model.trees[static_cast<std::size_t>(t)] = detail::grow_tree(x, sorted, g, h, opt, leaf_of_row);
  }
  return model;
}

}  // namespace gusl
