#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "matchopt/ot.hpp"

namespace matchopt {

// A deterministic one-to-one matching: X-index i pairs with W-index
// sigma[i]. total_cost is the per-match average of the selected cells.
struct Assignment {
  std::vector<int> sigma;
  double total_cost = 0.0;

  std::size_t n() const { return sigma.size(); }
};

namespace detail {

inline double average_cost(const Matrix& c, const std::vector<int>& sigma) {
  double s = 0.0;
  for (std::size_t i = 0; i < sigma.size(); ++i)
    s += c(i, static_cast<std::size_t>(sigma[i]));
  return s / static_cast<double>(sigma.size());
}

}  // namespace detail

// Exact minimum-cost assignment by shortest augmenting paths with dual
// potentials (Jonker-Volgenant style), O(n^3) on dense matrices.
// Optionally reports the LP duals (u, v) with u_i + v_j <= c_ij.
inline Assignment hungarian_solve(const CostMatrix& cm,
                                  std::vector<double>* u_out = nullptr,
                                  std::vector<double>* v_out = nullptr) {
  const Matrix& c = cm.values;
  if (!c.square() || c.rows() == 0)
    throw InvalidInput("hungarian_solve: matrix must be square and non-empty");
  if (!c.all_finite()) throw InvalidInput("hungarian_solve: non-finite entries");
  const int n = static_cast<int>(c.rows());
  const double inf = std::numeric_limits<double>::infinity();

  // 1-based with column 0 as the virtual start of each augmenting path.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1, 0);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = -1;
      const auto row = c.row(static_cast<std::size_t>(i0 - 1));
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[static_cast<std::size_t>(j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment result;
  result.sigma.assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) result.sigma[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  result.total_cost = detail::average_cost(c, result.sigma);
  if (u_out) u_out->assign(u.begin() + 1, u.end());
  if (v_out) v_out->assign(v.begin() + 1, v.end());
  return result;
}

// Exhaustive oracle over all n! permutations; ties resolved in favor of
// the lexicographically smallest permutation. Refuses n > 10.
inline Assignment brute_force_solve(const CostMatrix& cm) {
  const Matrix& c = cm.values;
  if (!c.square() || c.rows() == 0)
    throw InvalidInput("brute_force_solve: matrix must be square and non-empty");
  const std::size_t n = c.rows();
  if (n > 10) throw InvalidInput("brute_force_solve: refused for n > 10");

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_sum = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += c(i, static_cast<std::size_t>(perm[i]));
    if (s < best_sum) {
      best_sum = s;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  return Assignment{std::move(best), best_sum / static_cast<double>(n)};
}

// Pads a rectangular cost matrix with zero-cost dummy rows or columns so
// both sides have equal size; dummies never distort real match costs.
inline CostMatrix pad_to_square(const Matrix& rect, double c_bar) {
  const std::size_t n = std::max(rect.rows(), rect.cols());
  Matrix padded(n, n, 0.0);
  for (std::size_t i = 0; i < rect.rows(); ++i)
    for (std::size_t j = 0; j < rect.cols(); ++j) padded(i, j) = rect(i, j);
  return CostMatrix{std::move(padded), c_bar};
}

}  // namespace matchopt
