#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "matchopt/matrix.hpp"
#include "matchopt/numeric.hpp"

namespace matchopt {

// Characteristics of the two sides of a market of size n.
struct MarketProfiles {
  std::vector<double> x_values;
  std::vector<double> w_values;

  std::size_t n() const { return x_values.size(); }

  void validate() const {
    if (x_values.empty() || x_values.size() != w_values.size())
      throw InvalidInput("MarketProfiles: sides must have equal length n >= 1");
    for (double v : x_values)
      if (!std::isfinite(v)) throw InvalidInput("MarketProfiles: non-finite x value");
    for (double v : w_values)
      if (!std::isfinite(v)) throw InvalidInput("MarketProfiles: non-finite w value");
  }
};

// Average match costs over a concrete market; entries lie in [0, c_bar].
struct CostMatrix {
  Matrix values;
  double c_bar = 1.0;

  std::size_t n() const { return values.rows(); }

  void validate() const {
    if (!values.square() || values.rows() == 0)
      throw InvalidInput("CostMatrix: must be square and non-empty");
    if (!std::isfinite(c_bar)) throw InvalidInput("CostMatrix: c_bar must be finite");
    for (double v : values)
      if (!(v >= 0.0 && v <= c_bar))
        throw InvalidInput("CostMatrix: entries must lie in [0, c_bar]");
  }
};

// Joint probability mass over the n x n grid with uniform marginals 1/n.
struct Coupling {
  Matrix mass;

  std::size_t n() const { return mass.rows(); }
};

// Dual variables of the regularized problem at inverse regularization eta.
struct DualPotentials {
  std::vector<double> f;  // X-side multiplier
  std::vector<double> g;  // W-side multiplier, normalized to mean zero
  double eta = 1.0;
};

struct SinkhornReport {
  std::size_t iterations = 0;
  double final_marginal_residual = 0.0;
  bool converged = false;
  double dual_value = 0.0;
};

struct SinkhornResult {
  DualPotentials potentials;
  Coupling coupling;
  SinkhornReport report;
};

// Max over all rows and columns of |sum - 1/n|: feasibility distance from
// the transport polytope.
inline double marginal_residual(const Coupling& pi, std::size_t n) {
  const Matrix& m = pi.mass;
  if (!m.square() || m.rows() != n) throw InvalidInput("marginal_residual: bad shape");
  const double target = 1.0 / static_cast<double>(n);
  double worst = 0.0;
  std::vector<double> col_sums(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    const auto row = m.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      row_sum += row[j];
      col_sums[j] += row[j];
    }
    worst = std::max(worst, std::fabs(row_sum - target));
  }
  for (std::size_t j = 0; j < n; ++j)
    worst = std::max(worst, std::fabs(col_sums[j] - target));
  return worst;
}

// KL(pi || mu_n x nu_n) = sum pi_ij log(pi_ij n^2), with 0 log 0 := 0.
// Zero at the uniform coupling, log(n) at a permutation coupling.
inline double kl_divergence(const Coupling& pi, std::size_t n) {
  const Matrix& m = pi.mass;
  if (!m.square() || m.rows() != n) throw InvalidInput("kl_divergence: bad shape");
  const double log_n2 = 2.0 * std::log(static_cast<double>(n));
  double kl = 0.0;
  for (double v : m) {
    if (!std::isfinite(v) || v < 0.0)
      throw InvalidInput("kl_divergence: entries must be finite and nonnegative");
    if (v > 0.0) kl += v * (std::log(v) + log_n2);
  }
  return kl;
}

// pi(c) = sum_ij c_ij pi_ij: per-match average cost of the plan.
inline double plan_cost(const Coupling& pi, const CostMatrix& c) {
  if (pi.n() != c.n()) throw InvalidInput("plan_cost: dimension mismatch");
  double s = 0.0;
  const std::size_t total = pi.mass.size();
  const double* pm = pi.mass.data();
  const double* cm = c.values.data();
  for (std::size_t k = 0; k < total; ++k) s += pm[k] * cm[k];
  return s;
}

// pi(c) + (1/eta) KL(pi || mu_n x nu_n).
inline double primal_objective(const Coupling& pi, const CostMatrix& c, double eta) {
  if (!(eta > 0.0)) throw InvalidInput("primal_objective: eta must be > 0");
  if (pi.n() != c.n()) throw InvalidInput("primal_objective: dimension mismatch");
  return plan_cost(pi, c) + kl_divergence(pi, pi.n()) / eta;
}

// mu_n(f) + nu_n(g) - (1/eta)(mu_n x nu_n)(e^{-eta(c - f - g)} - 1).
// The -1 term makes the optimum equal the primal value.
inline double dual_objective(const CostMatrix& c, const DualPotentials& pot) {
  const std::size_t n = c.n();
  if (pot.f.size() != n || pot.g.size() != n)
    throw InvalidInput("dual_objective: dimension mismatch");
  const double eta = pot.eta;
  double mean_f = 0.0, mean_g = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_f += pot.f[i];
    mean_g += pot.g[i];
  }
  mean_f /= static_cast<double>(n);
  mean_g /= static_cast<double>(n);
  double integral = 0.0;  // (mu_n x nu_n)(e^{-eta(c-f-g)} - 1)
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = c.values.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      s += std::expm1(-eta * (row[j] - pot.f[i] - pot.g[j]));
    integral += s;
  }
  integral /= static_cast<double>(n) * static_cast<double>(n);
  return mean_f + mean_g - integral / eta;
}

// pi_ij = (1/n^2) exp(-eta (c_ij - f_i - g_j)), assembled in the log
// domain so large exponents are caught rather than silently overflowing.
inline Coupling coupling_from_potentials(const CostMatrix& c, const DualPotentials& pot) {
  const std::size_t n = c.n();
  if (pot.f.size() != n || pot.g.size() != n)
    throw InvalidInput("coupling_from_potentials: dimension mismatch");
  const double eta = pot.eta;
  const double log_n2 = 2.0 * std::log(static_cast<double>(n));
  Matrix mass(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto crow = c.values.row(i);
    auto mrow = mass.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double log_mass = -eta * (crow[j] - pot.f[i] - pot.g[j]) - log_n2;
      const double v = std::exp(log_mass);
      if (!std::isfinite(v))
        throw NumericalError("coupling_from_potentials: non-finite mass");
      mrow[j] = v;
    }
  }
  return Coupling{std::move(mass)};
}

namespace detail {

// One Sinkhorn half-step in scaled variables (F = eta f, A = -eta c):
// F_i <- log n - logsumexp_j(A_ij + G_j). Rows of the implied coupling
// are exact afterwards.
inline void sinkhorn_half_step(const Matrix& a, std::span<const double> other,
                               double log_n, std::vector<double>& out) {
  const std::size_t n = a.rows();
  for (std::size_t i = 0; i < n; ++i)
    out[i] = log_n - logsumexp_sum(a.row(i), other);
}

}  // namespace detail

// Log-domain Sinkhorn for min pi(c) + KL/eta over the transport polytope.
// Alternates exact row and column scalings starting from f = g = 0 and
// stops when the max marginal residual (probability-mass units) of the
// current iterate drops to tol. On success g is shifted to mean zero and
// f compensated, which leaves the coupling unchanged.
inline SinkhornResult sinkhorn_solve(const CostMatrix& c, double eta,
                                     double tol = 1e-9,
                                     std::size_t max_iter = 100000) {
  if (!(eta > 0.0)) throw InvalidInput("sinkhorn_solve: eta must be > 0");
  if (!(tol > 0.0)) throw InvalidInput("sinkhorn_solve: tol must be > 0");
  if (max_iter == 0) throw InvalidInput("sinkhorn_solve: max_iter must be >= 1");
  c.validate();

  const std::size_t n = c.n();
  const double log_n = std::log(static_cast<double>(n));
  const double inv_n = 1.0 / static_cast<double>(n);

  // Scaled problem: A = -eta c, F = eta f, G = eta g.
  Matrix a(n, n);
  for (std::size_t k = 0; k < a.size(); ++k) a.data()[k] = -eta * c.values.data()[k];
  const Matrix at = a.transposed();

  std::vector<double> f_scaled(n, 0.0), g_scaled(n, 0.0), g_next(n, 0.0);

  SinkhornReport report;
  double residual = std::numeric_limits<double>::infinity();
  for (std::size_t iter = 1; iter <= max_iter; ++iter) {
    report.iterations = iter;
    detail::sinkhorn_half_step(a, g_scaled, log_n, f_scaled);
    // Candidate column scaling. The column sums of the coupling at
    // (F, G) equal (1/n) exp(G_j - G'_j), so the residual of the current
    // iterate falls out of the update itself.
    residual = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      g_next[j] = log_n - logsumexp_sum(at.row(j), f_scaled);
      residual = std::max(residual,
                          inv_n * std::fabs(std::expm1(g_scaled[j] - g_next[j])));
    }
    if (residual <= tol) {
      report.converged = true;
      break;  // keep g_scaled: its residual is the one just measured
    }
    if (iter == max_iter) break;  // same: report the state whose residual we know
    std::swap(g_scaled, g_next);
  }
  report.final_marginal_residual = residual;

  DualPotentials pot;
  pot.eta = eta;
  pot.f.resize(n);
  pot.g.resize(n);
  const double g_mean =
      std::accumulate(g_scaled.begin(), g_scaled.end(), 0.0) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) pot.f[i] = (f_scaled[i] + g_mean) / eta;
  for (std::size_t j = 0; j < n; ++j) pot.g[j] = (g_scaled[j] - g_mean) / eta;

  Coupling pi = coupling_from_potentials(c, pot);
  report.dual_value = dual_objective(c, pot);
  return SinkhornResult{std::move(pot), std::move(pi), report};
}

// Uniform coupling 1/n^2: the product measure, KL = 0.
inline Coupling uniform_coupling(std::size_t n) {
  const double v = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
  return Coupling{Matrix(n, n, v)};
}

// Coupling with mass 1/n on the cells (i, sigma(i)).
inline Coupling permutation_coupling(std::span<const int> sigma) {
  const std::size_t n = sigma.size();
  Matrix mass(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    mass(i, static_cast<std::size_t>(sigma[i])) = 1.0 / static_cast<double>(n);
  return Coupling{std::move(mass)};
}

}  // namespace matchopt
