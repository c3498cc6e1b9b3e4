#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

#include "matchopt/ot.hpp"
#include "matchopt/rng.hpp"

namespace matchopt {

// Convex combination of permutation matrices reconstructing n times a
// coupling (Birkhoff-von Neumann decomposition).
struct PermutationMixture {
  struct Component {
    double weight;
    std::vector<int> sigma;
  };
  std::vector<Component> components;
  std::size_t source_n = 0;

  double weight_sum() const {
    double s = 0.0;
    for (const auto& comp : components) s += comp.weight;
    return s;
  }
};

namespace detail {

// Hopcroft-Karp maximum matching on a bipartite graph given as
// adjacency lists of the left side. Returns match_left (or -1).
class HopcroftKarp {
 public:
  explicit HopcroftKarp(const std::vector<std::vector<int>>& adj)
      : adj_(adj), n_(adj.size()) {}

  std::vector<int> solve() {
    match_left_.assign(n_, -1);
    match_right_.assign(n_, -1);
    while (bfs()) {
      for (std::size_t u = 0; u < n_; ++u)
        if (match_left_[u] < 0) dfs(static_cast<int>(u));
    }
    return match_left_;
  }

 private:
  static constexpr int inf = std::numeric_limits<int>::max();

  bool bfs() {
    std::queue<int> q;
    dist_.assign(n_, inf);
    for (std::size_t u = 0; u < n_; ++u) {
      if (match_left_[u] < 0) {
        dist_[u] = 0;
        q.push(static_cast<int>(u));
      }
    }
    bool found_free = false;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v : adj_[static_cast<std::size_t>(u)]) {
        const int w = match_right_[static_cast<std::size_t>(v)];
        if (w < 0) {
          found_free = true;
        } else if (dist_[static_cast<std::size_t>(w)] == inf) {
          dist_[static_cast<std::size_t>(w)] = dist_[static_cast<std::size_t>(u)] + 1;
          q.push(w);
        }
      }
    }
    return found_free;
  }

  bool dfs(int u) {
    for (int v : adj_[static_cast<std::size_t>(u)]) {
      const int w = match_right_[static_cast<std::size_t>(v)];
      if (w < 0 || (dist_[static_cast<std::size_t>(w)] ==
                        dist_[static_cast<std::size_t>(u)] + 1 &&
                    dfs(w))) {
        match_left_[static_cast<std::size_t>(u)] = v;
        match_right_[static_cast<std::size_t>(v)] = u;
        return true;
      }
    }
    dist_[static_cast<std::size_t>(u)] = inf;
    return false;
  }

  const std::vector<std::vector<int>>& adj_;
  std::size_t n_;
  std::vector<int> match_left_, match_right_;
  std::vector<int> dist_;
};

}  // namespace detail

// Reconstruction sum_k w_k P(sigma_k); should equal n * pi entrywise.
inline Matrix mixture_matrix(const PermutationMixture& mix) {
  const std::size_t n = mix.source_n;
  Matrix m(n, n, 0.0);
  for (const auto& comp : mix.components)
    for (std::size_t i = 0; i < n; ++i)
      m(i, static_cast<std::size_t>(comp.sigma[i])) += comp.weight;
  return m;
}

namespace detail {

// One peeling pass at a fixed support cut. Matchings are searched on the
// cells at or above a level that starts at the largest remaining entry
// and backs off geometrically; the first level admitting a perfect
// matching bounds the peeled weight from below, which keeps weights
// large and component counts near-minimal (pure algorithm-order peeling
// degenerates into ~n^2 vanishing-weight components on concentrated
// couplings). A residual whose entries are all below `debris` no longer
// needs a perfect matching: it is the unpeelable remainder of the source
// coupling's own marginal error and gets discarded. Returns nullopt only
// when matching fails while large entries remain.
inline std::optional<std::vector<PermutationMixture::Component>> bvn_peel(
    Matrix r, double support_cut, double stop, double debris) {
  const std::size_t n = r.rows();
  std::vector<PermutationMixture::Component> components;
  std::vector<std::vector<int>> adj(n);
  const std::size_t max_peels = n * n + 1;
  for (std::size_t peel = 0; peel < max_peels; ++peel) {
    double visible_mass = 0.0;
    double max_entry = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = r.row(i);
      for (std::size_t j = 0; j < n; ++j) {
        if (row[j] > support_cut) {
          visible_mass += row[j];
          max_entry = std::max(max_entry, row[j]);
        }
      }
    }
    if (visible_mass / static_cast<double>(n) <= stop) break;

    std::vector<int> match;
    bool perfect = false;
    for (double level = max_entry;; level /= 8.0) {
      const double threshold = std::max(level, support_cut);
      for (std::size_t i = 0; i < n; ++i) {
        adj[i].clear();
        const auto row = r.row(i);
        for (std::size_t j = 0; j < n; ++j)
          if (row[j] >= threshold) adj[i].push_back(static_cast<int>(j));
      }
      match = detail::HopcroftKarp(adj).solve();
      perfect = true;
      for (int m : match)
        if (m < 0) perfect = false;
      if (perfect || threshold <= support_cut) break;
    }
    if (!perfect) {
      if (max_entry <= debris) break;
      return std::nullopt;
    }

    double w = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
      w = std::min(w, r(i, static_cast<std::size_t>(match[i])));
    for (std::size_t i = 0; i < n; ++i) r(i, static_cast<std::size_t>(match[i])) -= w;
    components.push_back({w, std::move(match)});
  }
  return components;
}

}  // namespace detail

// Greedy Birkhoff peeling: repeatedly find a perfect matching on the
// support of the remaining mass (entries above the support cut),
// subtract the minimum matched entry, and record it as a component.
// The discarded residual is renormalized away and the entrywise
// reconstruction verified. A coupling whose marginals are exact up to
// float noise reconstructs within tolerances::bvn; one that is feasible
// only to residual r cannot do better than O(n r), which widens the
// accepted error accordingly. If mass hides below the support cut,
// peeling retries with a finer cut before declaring the input
// degenerate.
inline PermutationMixture bvn_decompose(const Coupling& pi) {
  const std::size_t n = pi.n();
  if (!pi.mass.square() || n == 0) throw InvalidInput("bvn_decompose: bad coupling");
  const double n_d = static_cast<double>(n);

  // Work on the doubly stochastic scale: R = n * pi.
  Matrix original = pi.mass;
  for (double& v : original) v *= n_d;

  // Rebalance to double stochasticity at float precision before peeling
  // (alternating row/column rescaling). The source coupling's marginal
  // error, left in place, resurfaces as residual cells that no perfect
  // matching can cover once their column pattern concentrates; balancing
  // first shifts each entry by at most its share of that error and keeps
  // Birkhoff's theorem applicable throughout the peel.
  Matrix balanced = original;
  for (int pass = 0; pass < 50; ++pass) {
    double dev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) sum += balanced(i, j);
      dev = std::max(dev, std::fabs(sum - 1.0));
      if (sum > 0.0)
        for (std::size_t j = 0; j < n; ++j) balanced(i, j) /= sum;
    }
    std::vector<double> col_sums(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) col_sums[j] += balanced(i, j);
    for (std::size_t j = 0; j < n; ++j) {
      dev = std::max(dev, std::fabs(col_sums[j] - 1.0));
      if (col_sums[j] > 0.0)
        for (std::size_t i = 0; i < n; ++i) balanced(i, j) /= col_sums[j];
    }
    if (dev <= n_d * 1e-15) break;
  }

  double support_cut = n_d * tolerances::support;
  const double stop = 0.25 * tolerances::bvn;
  const double infeasibility = n_d * marginal_residual(pi, n);
  const double debris = 0.25 * tolerances::bvn + 3.0 * infeasibility;
  const double allowed_error = tolerances::bvn + 3.0 * infeasibility;

  for (int attempt = 0; attempt < 4; ++attempt, support_cut /= 1000.0) {
    auto components = detail::bvn_peel(balanced, support_cut, stop, debris);
    if (!components || components->empty()) continue;

    PermutationMixture mix;
    mix.source_n = n;
    mix.components = std::move(*components);
    const double total = mix.weight_sum();
    for (auto& comp : mix.components) comp.weight /= total;

    // Verify against the source coupling, not the balanced copy.
    const Matrix rebuilt = mixture_matrix(mix);
    double err = 0.0;
    for (std::size_t k = 0; k < original.size(); ++k)
      err = std::max(err, std::fabs(original.data()[k] - rebuilt.data()[k]));
    if (err <= allowed_error) return mix;
  }
  throw NumericalDegeneracy(
      "bvn_decompose: no perfect matching on residual support");
}

// Draws one permutation by inverse CDF over the component weights, using
// the first value of the splitmix64-counter stream for `seed`.
inline std::vector<int> sample_assignment(const PermutationMixture& mix,
                                          std::uint64_t seed) {
  if (mix.components.empty()) throw InvalidInput("sample_assignment: empty mixture");
  Rng rng(seed);
  const double u = rng.next_uniform() * mix.weight_sum();
  double cum = 0.0;
  for (const auto& comp : mix.components) {
    cum += comp.weight;
    if (u < cum) return comp.sigma;
  }
  return mix.components.back().sigma;
}

// Batch variant: draw k uses stream value k, so a batch of size m agrees
// with m single draws at seeds derived from consecutive counters.
inline std::vector<std::vector<int>> sample_assignments(const PermutationMixture& mix,
                                                        std::uint64_t seed,
                                                        std::size_t count) {
  if (mix.components.empty()) throw InvalidInput("sample_assignments: empty mixture");
  Rng rng(seed);
  const double total = mix.weight_sum();
  std::vector<std::vector<int>> draws;
  draws.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double u = rng.next_uniform() * total;
    double cum = 0.0;
    const PermutationMixture::Component* chosen = &mix.components.back();
    for (const auto& comp : mix.components) {
      cum += comp.weight;
      if (u < cum) {
        chosen = &comp;
        break;
      }
    }
    draws.push_back(chosen->sigma);
  }
  return draws;
}

}  // namespace matchopt
