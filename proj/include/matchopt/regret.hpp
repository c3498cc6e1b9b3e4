#pragma once

#include <cmath>
#include <limits>

#include "matchopt/assignment.hpp"
#include "matchopt/ot.hpp"

namespace matchopt {

// Welfare accounting for one market: realized plan vs oracle plans.
struct RegretRecord {
  double feasible_welfare = 0.0;    // pi_hat(c)
  double oracle_rot_welfare = 0.0;  // pi_rot(c)
  double oracle_opt_welfare = 0.0;  // pi_star(c)
  double regret = 0.0;              // pi_hat(c) - pi_star(c)
  double rot_regret = 0.0;          // regularized-objective regret
  double kl_feasible = 0.0;
  double kl_oracle = 0.0;
};

// eta is needed for the KL terms of the regularized-objective regret; it
// is the eta both couplings were solved at.
inline RegretRecord compute_regret(const CostMatrix& c_true, const Coupling& feasible,
                                   const Coupling& oracle_rot,
                                   const Assignment& oracle_opt, double eta) {
  const std::size_t n = c_true.n();
  if (feasible.n() != n || oracle_rot.n() != n || oracle_opt.n() != n)
    throw InvalidInput("compute_regret: dimension mismatch");
  if (!(eta > 0.0)) throw InvalidInput("compute_regret: eta must be > 0");
  RegretRecord rec;
  rec.feasible_welfare = plan_cost(feasible, c_true);
  rec.oracle_rot_welfare = plan_cost(oracle_rot, c_true);
  rec.oracle_opt_welfare = oracle_opt.total_cost;
  rec.kl_feasible = kl_divergence(feasible, n);
  rec.kl_oracle = kl_divergence(oracle_rot, n);
  rec.regret = rec.feasible_welfare - rec.oracle_opt_welfare;
  rec.rot_regret = rec.feasible_welfare - rec.oracle_rot_welfare +
                   (rec.kl_feasible - rec.kl_oracle) / eta;
  return rec;
}

// log(n) / eta: uniform bound on the welfare cost of regularization.
inline double regularization_bias_bound(std::size_t n, double eta) {
  if (n == 0) throw InvalidInput("regularization_bias_bound: n must be >= 1");
  if (!(eta > 0.0)) throw InvalidInput("regularization_bias_bound: eta must be > 0");
  return std::log(static_cast<double>(n)) / eta;
}

namespace detail {

// exp(2 eta c_bar) * term computed in log space; +inf (a vacuous but
// valid bound) once the exponent leaves double range.
inline double amplified(double log_factor, double term) {
  if (term <= 0.0) return 0.0;
  const double log_value = log_factor + std::log(term);
  if (log_value > 700.0) return std::numeric_limits<double>::infinity();
  return std::exp(log_value);
}

}  // namespace detail

// Assembled finite-sample regret bound
//   e^{2 eta c_bar} (L1 + L2^2) + log(n)/eta.
struct BoundReport {
  double l1_term = 0.0;
  double l2_sq_term = 0.0;
  double variance_bound = 0.0;
  double bias_bound = 0.0;
  double total_bound = 0.0;
  bool vacuous = false;  // variance factor overflowed: bound is +inf
  bool holds = false;

  bool check(double regret, double tol = tolerances::gap) {
    holds = regret <= total_bound + tol;
    return holds;
  }
};

inline BoundReport regret_bound(double l1, double l2, double eta, double c_bar,
                                 std::size_t n) {
  if (!(l1 >= 0.0) || !(l2 >= 0.0))
    throw InvalidInput("regret_bound: norms must be nonnegative");
  if (!(eta > 0.0)) throw InvalidInput("regret_bound: eta must be > 0");
  BoundReport report;
  report.l1_term = l1;
  report.l2_sq_term = l2 * l2;
  report.variance_bound = detail::amplified(2.0 * eta * c_bar, l1 + l2 * l2);
  report.vacuous = std::isinf(report.variance_bound);
  report.bias_bound = regularization_bias_bound(n, eta);
  report.total_bound = report.variance_bound + report.bias_bound;
  return report;
}

// Exact L1 / L2 distances between two cost surfaces over the empirical
// product measure (plain grid averages).
struct GridErrors {
  double l1 = 0.0;
  double l2 = 0.0;
};

inline GridErrors grid_errors(const CostMatrix& c_hat, const CostMatrix& c_true) {
  const std::size_t n = c_true.n();
  if (c_hat.n() != n) throw InvalidInput("grid_errors: dimension mismatch");
  double abs_sum = 0.0, sq_sum = 0.0;
  const double* a = c_hat.values.data();
  const double* b = c_true.values.data();
  for (std::size_t k = 0; k < n * n; ++k) {
    const double d = a[k] - b[k];
    abs_sum += std::fabs(d);
    sq_sum += d * d;
  }
  const double cells = static_cast<double>(n) * static_cast<double>(n);
  return {abs_sum / cells, std::sqrt(sq_sum / cells)};
}

// Per-inequality audit of the finite-sample plan/dual perturbation
// bounds at a converged solve under c_hat:
//   (i)  |pi_hat(c) - pi_hat(c_hat)|      <= e^{2 eta c_bar} (mu x nu)(|c_hat - c|)
//   (ii) |Phi(c_hat, f, g) - Phi(c, f, g)| <= e^{2 eta c_bar} (mu x nu)((c - c_hat)^2)
struct PerturbationReport {
  double lhs_plan = 0.0;
  double rhs_plan = 0.0;
  double slack_plan = 0.0;
  double lhs_dual = 0.0;
  double rhs_dual = 0.0;
  double slack_dual = 0.0;
  bool plan_holds = false;
  bool dual_holds = false;
  bool vacuous = false;

  bool both_hold() const { return plan_holds && dual_holds; }
};

inline PerturbationReport perturbation_bounds_check(const CostMatrix& c_true, const CostMatrix& c_hat,
                                      const DualPotentials& pot, const Coupling& pi_hat) {
  const std::size_t n = c_true.n();
  if (c_hat.n() != n || pi_hat.n() != n || pot.f.size() != n)
    throw InvalidInput("perturbation_bounds_check: dimension mismatch");
  const double c_bar = std::max(c_true.c_bar, c_hat.c_bar);
  const double log_factor = 2.0 * pot.eta * c_bar;
  const auto errs = grid_errors(c_hat, c_true);

  PerturbationReport report;
  report.lhs_plan = std::fabs(plan_cost(pi_hat, c_true) - plan_cost(pi_hat, c_hat));
  report.rhs_plan = detail::amplified(log_factor, errs.l1);
  report.lhs_dual =
      std::fabs(dual_objective(c_hat, pot) - dual_objective(c_true, pot));
  report.rhs_dual = detail::amplified(log_factor, errs.l2 * errs.l2);
  report.vacuous = std::isinf(report.rhs_plan) || std::isinf(report.rhs_dual);
  report.slack_plan = report.rhs_plan - report.lhs_plan;
  report.slack_dual = report.rhs_dual - report.lhs_dual;
  const double float_slop = 1e-12;
  report.plan_holds = report.lhs_plan <= report.rhs_plan * (1.0 + float_slop) + float_slop;
  report.dual_holds = report.lhs_dual <= report.rhs_dual * (1.0 + float_slop) + float_slop;
  return report;
}

// Audit of the potential box [-c_bar, c_bar] and the density box
//   e^{-3 eta c_bar} <= n^2 pi_ij <= e^{2 eta c_bar},
// checked in the log domain. When the cost matrix the potentials were
// solved against is supplied, log densities come from -eta(c - f - g)
// directly, which stays exact even where the materialized coupling
// underflows; otherwise they come from log(n^2 pi_ij).
struct PotentialDensityReport {
  double f_min = 0.0, f_max = 0.0;
  double g_min = 0.0, g_max = 0.0;
  double potential_slack = 0.0;       // min over potentials of c_bar - |value|
  double log_density_min = 0.0;
  double log_density_max = 0.0;
  double density_lower_slack = 0.0;   // log n^2 pi - (-3 eta c_bar), worst case
  double density_upper_slack = 0.0;   // 2 eta c_bar - log n^2 pi, worst case
  bool potentials_ok = false;
  bool densities_ok = false;

  bool all_hold() const { return potentials_ok && densities_ok; }
};

inline PotentialDensityReport potential_density_audit(const DualPotentials& pot, const Coupling& pi,
                                 double c_bar, const CostMatrix* solved_cost = nullptr,
                                 double pot_tol = 1e-9, double log_density_tol = 1e-6) {
  const std::size_t n = pi.n();
  if (pot.f.size() != n || pot.g.size() != n)
    throw InvalidInput("potential_density_audit: dimension mismatch");
  PotentialDensityReport report;
  report.f_min = *std::min_element(pot.f.begin(), pot.f.end());
  report.f_max = *std::max_element(pot.f.begin(), pot.f.end());
  report.g_min = *std::min_element(pot.g.begin(), pot.g.end());
  report.g_max = *std::max_element(pot.g.begin(), pot.g.end());
  report.potential_slack =
      std::min({c_bar - std::fabs(report.f_min), c_bar - std::fabs(report.f_max),
                c_bar - std::fabs(report.g_min), c_bar - std::fabs(report.g_max)});

  const double eta = pot.eta;
  const double log_n2 = 2.0 * std::log(static_cast<double>(n));
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double log_density =
          solved_cost
              ? -eta * (solved_cost->values(i, j) - pot.f[i] - pot.g[j])
              : std::log(pi.mass(i, j)) + log_n2;
      lo = std::min(lo, log_density);
      hi = std::max(hi, log_density);
    }
  }
  report.log_density_min = lo;
  report.log_density_max = hi;
  report.density_lower_slack = lo - (-3.0 * eta * c_bar);
  report.density_upper_slack = 2.0 * eta * c_bar - hi;
  report.potentials_ok = report.potential_slack >= -pot_tol;
  const double density_tol = log_density_tol * std::max(1.0, eta * c_bar);
  report.densities_ok = report.density_lower_slack >= -density_tol &&
                        report.density_upper_slack >= -density_tol;
  return report;
}

}  // namespace matchopt
