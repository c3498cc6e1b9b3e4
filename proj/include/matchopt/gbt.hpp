#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "matchopt/common.hpp"

// Least-squares gradient boosting with depth-2 regression trees on
// quantile-binned features. No randomness anywhere: fits are a pure
// function of (data, config).
namespace matchopt::gbt {

struct Config {
  int rounds = 200;
  double learning_rate = 0.1;
  int max_bins = 256;
  std::size_t min_leaf = 0;  // 0: use max(20, N/1000)
};

struct Split {
  int feature = -1;  // negative: no split, node is a leaf
  double threshold = 0.0;

  bool is_leaf() const { return feature < 0; }
};

// Root split plus one optional split per side; at most four leaves.
// Leaf index: (root_side << 1) | child_side; a side without a child
// split stores its value at child_side = 0.
struct DepthTwoTree {
  Split root;
  Split child[2];
  double leaf[4] = {0.0, 0.0, 0.0, 0.0};

  double value(std::span<const double> x) const {
    if (root.is_leaf()) return leaf[0];
    const int side = x[static_cast<std::size_t>(root.feature)] <= root.threshold ? 0 : 1;
    const Split& c = child[side];
    if (c.is_leaf()) return leaf[side << 1];
    const int sub = x[static_cast<std::size_t>(c.feature)] <= c.threshold ? 0 : 1;
    return leaf[(side << 1) | sub];
  }
};

struct Model {
  double base = 0.0;
  double learning_rate = 0.1;
  std::size_t n_features = 0;
  std::vector<DepthTwoTree> trees;

  double predict(std::span<const double> x) const {
    double v = base;
    for (const auto& t : trees) v += learning_rate * t.value(x);
    return v;
  }
};

namespace detail {

struct BinnedFeature {
  std::vector<double> cuts;          // strictly increasing split candidates
  std::vector<std::uint16_t> index;  // per-sample bin: first cut >= value
};

inline BinnedFeature bin_feature(const std::vector<double>& values, int max_bins) {
  BinnedFeature out;
  const std::size_t n = values.size();
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  out.cuts.reserve(static_cast<std::size_t>(max_bins));
  for (int k = 1; k < max_bins; ++k) {
    const std::size_t pos = static_cast<std::size_t>(
        static_cast<double>(k) * static_cast<double>(n) / max_bins);
    const double cut = sorted[std::min(pos, n - 1)];
    if (out.cuts.empty() || cut > out.cuts.back()) out.cuts.push_back(cut);
  }
  out.index.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    const auto it = std::lower_bound(out.cuts.begin(), out.cuts.end(), values[s]);
    out.index[s] = static_cast<std::uint16_t>(it - out.cuts.begin());
  }
  return out;
}

struct NodeStats {
  std::vector<double> sum;     // residual sum per bin
  std::vector<std::size_t> count;
};

struct BestSplit {
  double gain = 0.0;
  int feature = -1;
  std::size_t cut = 0;
};

// Scan all (feature, cut) pairs; gain is the squared-error reduction
// S_L^2/n_L + S_R^2/n_R - S^2/n. Ties keep the first candidate in
// (feature, cut) order.
inline BestSplit best_split(const std::vector<NodeStats>& hist, double total_sum,
                            std::size_t total_count, std::size_t min_leaf) {
  BestSplit best;
  if (total_count < 2 * min_leaf || total_count == 0) return best;
  const double parent = total_sum * total_sum / static_cast<double>(total_count);
  for (std::size_t f = 0; f < hist.size(); ++f) {
    const auto& h = hist[f];
    if (h.sum.size() < 2) continue;
    double left_sum = 0.0;
    std::size_t left_count = 0;
    for (std::size_t b = 0; b + 1 < h.sum.size(); ++b) {
      left_sum += h.sum[b];
      left_count += h.count[b];
      const std::size_t right_count = total_count - left_count;
      if (left_count < min_leaf) continue;
      if (right_count < min_leaf) break;
      const double right_sum = total_sum - left_sum;
      const double gain = left_sum * left_sum / static_cast<double>(left_count) +
                          right_sum * right_sum / static_cast<double>(right_count) -
                          parent;
      if (gain > best.gain) best = {gain, static_cast<int>(f), b};
    }
  }
  return best;
}

}  // namespace detail

// columns: one vector per feature, all of length N.
inline Model fit(const std::vector<std::vector<double>>& columns,
                 const std::vector<double>& y, const Config& config = {}) {
  const std::size_t n_features = columns.size();
  if (n_features == 0) throw InvalidInput("gbt::fit: no features");
  const std::size_t n = y.size();
  if (n == 0) throw InvalidInput("gbt::fit: empty sample");
  for (const auto& col : columns)
    if (col.size() != n) throw InvalidInput("gbt::fit: ragged columns");

  const std::size_t min_leaf =
      config.min_leaf > 0 ? config.min_leaf
                          : std::max<std::size_t>(20, n / 1000);

  std::vector<detail::BinnedFeature> binned;
  binned.reserve(n_features);
  for (const auto& col : columns) binned.push_back(detail::bin_feature(col, config.max_bins));

  Model model;
  model.learning_rate = config.learning_rate;
  model.n_features = n_features;
  model.base = 0.0;
  for (double v : y) model.base += v;
  model.base /= static_cast<double>(n);

  std::vector<double> residual(n);
  for (std::size_t s = 0; s < n; ++s) residual[s] = y[s] - model.base;

  // node id per sample within the round: 0 = left of root, 1 = right.
  std::vector<std::uint8_t> side(n, 0);
  std::vector<detail::NodeStats> hist(n_features);

  auto build_hist = [&](auto&& include) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t f = 0; f < n_features; ++f) {
      const std::size_t bins = binned[f].cuts.size() + 1;
      hist[f].sum.assign(bins, 0.0);
      hist[f].count.assign(bins, 0);
    }
    for (std::size_t s = 0; s < n; ++s) {
      if (!include(s)) continue;
      ++count;
      total += residual[s];
      for (std::size_t f = 0; f < n_features; ++f) {
        const auto b = binned[f].index[s];
        hist[f].sum[b] += residual[s];
        hist[f].count[b] += 1;
      }
    }
    return std::pair{total, count};
  };

  for (int round = 0; round < config.rounds; ++round) {
    DepthTwoTree tree;
    std::size_t child_cut[2] = {0, 0};
    const auto [root_sum, root_count] = build_hist([](std::size_t) { return true; });
    const auto root_best = detail::best_split(hist, root_sum, root_count, min_leaf);

    if (root_best.feature < 0) {
      tree.leaf[0] = root_sum / static_cast<double>(root_count);
    } else {
      tree.root = {root_best.feature, binned[static_cast<std::size_t>(root_best.feature)]
                                          .cuts[root_best.cut]};
      const auto& root_bins = binned[static_cast<std::size_t>(root_best.feature)].index;
      for (std::size_t s = 0; s < n; ++s)
        side[s] = root_bins[s] <= root_best.cut ? 0 : 1;

      for (int sd = 0; sd < 2; ++sd) {
        const auto [sub_sum, sub_count] =
            build_hist([&](std::size_t s) { return side[s] == sd; });
        const auto sub_best = detail::best_split(hist, sub_sum, sub_count, min_leaf);
        if (sub_best.feature < 0) {
          tree.leaf[sd << 1] = sub_sum / static_cast<double>(sub_count);
        } else {
          const auto& feat = binned[static_cast<std::size_t>(sub_best.feature)];
          tree.child[sd] = {sub_best.feature, feat.cuts[sub_best.cut]};
          child_cut[sd] = sub_best.cut;
          double sums[2] = {0.0, 0.0};
          std::size_t counts[2] = {0, 0};
          for (std::size_t s = 0; s < n; ++s) {
            if (side[s] != sd) continue;
            const int sub = feat.index[s] <= sub_best.cut ? 0 : 1;
            sums[sub] += residual[s];
            counts[sub] += 1;
          }
          tree.leaf[sd << 1] = sums[0] / static_cast<double>(counts[0]);
          tree.leaf[(sd << 1) | 1] = sums[1] / static_cast<double>(counts[1]);
        }
      }
    }

    for (std::size_t s = 0; s < n; ++s) {
      double v;
      if (tree.root.is_leaf()) {
        v = tree.leaf[0];
      } else {
        const int sd = side[s];
        const Split& c = tree.child[sd];
        if (c.is_leaf()) {
          v = tree.leaf[sd << 1];
        } else {
          const auto& feat = binned[static_cast<std::size_t>(c.feature)];
          const int sub = feat.index[s] <= child_cut[sd] ? 0 : 1;
          v = tree.leaf[(sd << 1) | sub];
        }
      }
      residual[s] -= config.learning_rate * v;
    }
    model.trees.push_back(tree);
  }
  return model;
}

}  // namespace matchopt::gbt
