#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "matchopt/cost_model.hpp"
#include "matchopt/regret.hpp"

namespace matchopt {

struct SinkhornSettings {
  double tol = 1e-9;
  std::size_t max_iter = 100000;
};

// One sweep: markets are deterministic quantile grids; only the training
// samples are stochastic, redrawn per repetition.
struct ExperimentConfig {
  std::string dgp_kind = "pam";  // pam | logistic
  std::vector<double> gammas;    // logistic complementarity gaps; ignored for pam
  std::size_t n = 100;
  std::vector<double> eta_inverse_grid{0.0, 0.002, 0.01, 0.05};
  std::vector<std::size_t> training_sizes{500, 5000, 50000, 500000};
  std::size_t repetitions = 30;
  std::uint64_t base_seed = 1;
  std::size_t mc_draws = 10000;
  SinkhornSettings sinkhorn;
  gbt::Config boost;
  std::size_t workers = 0;     // 0: hardware concurrency
  bool oracle_inject = false;  // substitute the true cost for c_hat (tests)

  void validate() const {
    if (dgp_kind != "pam" && dgp_kind != "logistic")
      throw InvalidInput("ExperimentConfig: dgp must be 'pam' or 'logistic'");
    if (n < 2) throw InvalidInput("ExperimentConfig: n must be >= 2");
    if (repetitions < 1) throw InvalidInput("ExperimentConfig: repetitions must be >= 1");
    if (eta_inverse_grid.empty())
      throw InvalidInput("ExperimentConfig: eta_inverse grid must be non-empty");
    for (double v : eta_inverse_grid)
      if (!(v >= 0.0) || !std::isfinite(v))
        throw InvalidInput("ExperimentConfig: eta_inverse values must be finite and >= 0");
    if (training_sizes.empty())
      throw InvalidInput("ExperimentConfig: training_sizes must be non-empty");
    for (std::size_t s : training_sizes)
      if (s == 0) throw InvalidInput("ExperimentConfig: training sizes must be >= 1");
    if (dgp_kind == "logistic") {
      if (gammas.empty())
        throw InvalidInput("ExperimentConfig: logistic sweep needs at least one gamma");
      for (double g : gammas)
        if (!(g > 0.0 && g < 0.5 && 0.42 + g < 1.0))
          throw InvalidInput("ExperimentConfig: gamma out of range");
    }
    if (mc_draws == 0) throw InvalidInput("ExperimentConfig: mc_draws must be >= 1");
    if (!(sinkhorn.tol > 0.0) || sinkhorn.max_iter == 0)
      throw InvalidInput("ExperimentConfig: bad sinkhorn settings");
  }

  // Gamma list actually iterated: pam sweeps a single unparameterized DGP.
  std::vector<double> effective_gammas() const {
    if (dgp_kind == "pam") return {0.0};
    return gammas;
  }

  Dgp make_dgp(double gamma) const {
    if (dgp_kind == "pam") return Dgp{PamDgp{}};
    return Dgp{calibrate_logistic(gamma)};
  }
};

// Seed stream tags; part of the documented child-seed scheme
//   derive_seed(base_seed, {gamma_index, N, repetition, stage}).
enum class SeedStage : std::uint64_t { training = 1, mc_error = 2, sampling = 3 };

inline std::uint64_t experiment_seed(std::uint64_t base, std::size_t gamma_index,
                                     std::size_t training_size, std::size_t repetition,
                                     SeedStage stage) {
  return derive_seed(base, {gamma_index, training_size, repetition,
                            static_cast<std::uint64_t>(stage)});
}

// Deterministic market profiles at mid-quantile levels (k - 1/2)/n.
inline MarketProfiles build_market(const Dgp& dgp, std::size_t n) {
  if (n < 2) throw InvalidInput("build_market: n must be >= 2");
  MarketProfiles market;
  market.x_values.resize(n);
  market.w_values.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = (static_cast<double>(k) + 0.5) / static_cast<double>(n);
    market.x_values[k] = dgp_quantile_x(dgp, u);
    market.w_values[k] = dgp_quantile_w(dgp, u);
  }
  return market;
}

inline double random_matching_welfare(const CostMatrix& c) {
  if (!c.values.square()) throw InvalidInput("random_matching_welfare: not square");
  const double n = static_cast<double>(c.n());
  return c.values.sum() / (n * n);
}

inline CostMatrix true_cost_matrix(const Dgp& dgp, const MarketProfiles& market) {
  market.validate();
  const std::size_t n = market.n();
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      m(i, j) = dgp_cost(dgp, market.x_values[i], market.w_values[j]);
  return CostMatrix{std::move(m), dgp_c_bar(dgp)};
}

inline CostMatrix estimated_cost_matrix(const CostEstimator& est,
                                        const MarketProfiles& market) {
  market.validate();
  const std::size_t n = market.n();
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      m(i, j) = est.predict(market.x_values[i], market.w_values[j]);
  return CostMatrix{std::move(m), est.c_bar()};
}

struct OracleRow {
  double gamma = 0.0;
  double eta_inverse = 0.0;
  double welfare = 0.0;
  double abs_gain = 0.0;
  double rel_gain = 0.0;
  double kl = 0.0;
  double bias_bound = 0.0;
  bool converged = true;
  std::size_t iterations = 0;

  friend bool operator==(const OracleRow&, const OracleRow&) = default;
};

struct RunRecord {
  double gamma = 0.0;
  std::size_t training_size = 0;
  double eta_inverse = 0.0;
  std::size_t repetition = 0;
  std::uint64_t sample_seed = 0;
  bool converged = false;
  std::size_t iterations = 0;
  double welfare = 0.0;
  double abs_gain = 0.0;
  double rel_gain = 0.0;
  double regret = 0.0;
  double rot_regret = 0.0;
  double duality_gap = 0.0;
  double l1_grid = 0.0;
  double l2_grid = 0.0;
  double l1_mc = 0.0;
  double l2_mc = 0.0;
  double l1_mc_se = 0.0;
  double l2_mc_se = 0.0;
  double bound_total = 0.0;
  bool bound_vacuous = false;
  bool bound_holds = false;
  bool perturbation_checked = false;
  bool perturbation_holds = false;
  bool audit_checked = false;
  bool audit_holds = false;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct CellSummary {
  double gamma = 0.0;
  std::size_t training_size = 0;
  double eta_inverse = 0.0;
  std::size_t repetitions = 0;
  std::size_t converged_count = 0;
  double welfare_mean = 0.0;
  double welfare_std = 0.0;
  double abs_gain_mean = 0.0;
  double rel_gain_mean = 0.0;
  double rel_gain_std = 0.0;
  double regret_mean = 0.0;
  double regret_std = 0.0;
  double bound_holds_rate = 0.0;
  double bound_vacuous_rate = 0.0;
  double perturbation_holds_rate = 0.0;
  double audit_holds_rate = 0.0;
  double l1_grid_mean = 0.0;
  double l2_grid_mean = 0.0;
  double l1_mc_mean = 0.0;
  double l2_mc_mean = 0.0;

  friend bool operator==(const CellSummary&, const CellSummary&) = default;
};

struct WelfareSummary {
  std::string dgp_kind;
  std::size_t n = 0;

  struct MarketStats {
    double gamma = 0.0;
    double random_welfare = 0.0;
    double oracle_opt_welfare = 0.0;

    friend bool operator==(const MarketStats&, const MarketStats&) = default;
  };
  std::vector<MarketStats> markets;
  std::vector<OracleRow> oracle_rows;
  std::vector<RunRecord> runs;
  std::vector<CellSummary> cells;
  std::size_t non_converged_runs = 0;
  std::size_t non_converged_oracle = 0;

  friend bool operator==(const WelfareSummary&, const WelfareSummary&) = default;
};

namespace detail {

struct MarketBundle {
  double gamma = 0.0;
  Dgp dgp;
  MarketProfiles market;
  CostMatrix cost;
  double random_welfare = 0.0;
  Assignment oracle_opt;
  // Converged oracle ROT couplings per positive eta_inverse grid index.
  std::vector<std::shared_ptr<const Coupling>> oracle_couplings;
};

inline std::vector<MarketBundle> prepare_markets(const ExperimentConfig& cfg) {
  std::vector<MarketBundle> bundles;
  for (double gamma : cfg.effective_gammas()) {
    MarketBundle b{gamma, cfg.make_dgp(gamma), {}, {}, 0.0, {}, {}};
    b.market = build_market(b.dgp, cfg.n);
    b.cost = true_cost_matrix(b.dgp, b.market);
    b.random_welfare = random_matching_welfare(b.cost);
    b.oracle_opt = hungarian_solve(b.cost);
    bundles.push_back(std::move(b));
  }
  return bundles;
}

// Runs `count` tasks on up to `workers` threads; task order in outputs
// is fixed by index, so results do not depend on scheduling.
template <typename Fn>
void run_tasks(std::size_t count, std::size_t workers, Fn&& task) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) task(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t k = next.fetch_add(1);
        if (k >= count) return;
        task(k);
      }
    });
  }
  for (auto& th : pool) th.join();
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace detail

// Oracle policies only: plans solved with the true cost function. The
// sweep is deterministic, so there are no repetitions to average.
inline WelfareSummary run_oracle_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  WelfareSummary summary;
  summary.dgp_kind = cfg.dgp_kind;
  summary.n = cfg.n;
  for (const auto& bundle : detail::prepare_markets(cfg)) {
    const double denom = bundle.random_welfare - bundle.oracle_opt.total_cost;
    summary.markets.push_back(
        {bundle.gamma, bundle.random_welfare, bundle.oracle_opt.total_cost});
    for (double eta_inv : cfg.eta_inverse_grid) {
      OracleRow row;
      row.gamma = bundle.gamma;
      row.eta_inverse = eta_inv;
      if (eta_inv == 0.0) {
        row.welfare = bundle.oracle_opt.total_cost;
        row.kl = std::log(static_cast<double>(cfg.n));
        row.bias_bound = 0.0;
      } else {
        const double eta = 1.0 / eta_inv;
        const auto solved =
            sinkhorn_solve(bundle.cost, eta, cfg.sinkhorn.tol, cfg.sinkhorn.max_iter);
        row.welfare = plan_cost(solved.coupling, bundle.cost);
        row.kl = kl_divergence(solved.coupling, cfg.n);
        row.bias_bound = regularization_bias_bound(cfg.n, eta);
        row.converged = solved.report.converged;
        row.iterations = solved.report.iterations;
        if (!row.converged) ++summary.non_converged_oracle;
      }
      row.abs_gain = bundle.random_welfare - row.welfare;
      row.rel_gain = denom > 0.0 ? row.abs_gain / denom
                                 : std::numeric_limits<double>::quiet_NaN();
      summary.oracle_rows.push_back(row);
    }
  }
  return summary;
}

// Full pipeline: per (gamma, N, repetition) draw a training sample, fit
// the cost estimator, solve every plan on the eta_inverse grid under the
// estimated cost, and evaluate welfare under the true cost. Cells
// aggregate converged repetitions; non-converged solves are counted.
inline WelfareSummary run_feasible_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  WelfareSummary summary = run_oracle_sweep(cfg);

  auto bundles = detail::prepare_markets(cfg);
  // Oracle ROT couplings reused by every repetition's regret records.
  for (auto& bundle : bundles) {
    bundle.oracle_couplings.resize(cfg.eta_inverse_grid.size());
    for (std::size_t e = 0; e < cfg.eta_inverse_grid.size(); ++e) {
      const double eta_inv = cfg.eta_inverse_grid[e];
      if (eta_inv == 0.0) {
        bundle.oracle_couplings[e] = std::make_shared<const Coupling>(
            permutation_coupling(bundle.oracle_opt.sigma));
      } else {
        auto solved = sinkhorn_solve(bundle.cost, 1.0 / eta_inv, cfg.sinkhorn.tol,
                                     cfg.sinkhorn.max_iter);
        bundle.oracle_couplings[e] =
            std::make_shared<const Coupling>(std::move(solved.coupling));
      }
    }
  }

  struct Task {
    std::size_t gamma_index;
    std::size_t size_index;
    std::size_t repetition;
  };
  std::vector<Task> tasks;
  for (std::size_t g = 0; g < bundles.size(); ++g)
    for (std::size_t s = 0; s < cfg.training_sizes.size(); ++s)
      for (std::size_t r = 0; r < cfg.repetitions; ++r) tasks.push_back({g, s, r});

  std::vector<std::vector<RunRecord>> slots(tasks.size());
  detail::run_tasks(tasks.size(), cfg.workers, [&](std::size_t k) {
    const Task& task = tasks[k];
    const auto& bundle = bundles[task.gamma_index];
    const std::size_t n_train = cfg.training_sizes[task.size_index];
    const std::uint64_t sample_seed = experiment_seed(
        cfg.base_seed, task.gamma_index, n_train, task.repetition, SeedStage::training);
    const std::uint64_t mc_seed = experiment_seed(
        cfg.base_seed, task.gamma_index, n_train, task.repetition, SeedStage::mc_error);

    std::unique_ptr<CostEstimator> estimator;
    if (cfg.oracle_inject) {
      const Dgp& dgp = bundle.dgp;
      estimator = std::make_unique<FunctionCostEstimator>(
          [dgp](double x, double w) { return dgp_cost(dgp, x, w); }, dgp_c_bar(dgp));
    } else {
      const auto sample = generate_training_sample(bundle.dgp, n_train, sample_seed);
      estimator = std::make_unique<GbtCostEstimator>(
          fit_cost_estimator(bundle.dgp, sample, cfg.boost, sample_seed));
    }
    const CostMatrix c_hat = estimated_cost_matrix(*estimator, bundle.market);
    const auto grid = grid_errors(c_hat, bundle.cost);
    const auto mc = estimator_error(*estimator, bundle.dgp, cfg.mc_draws, mc_seed);
    const double denom = bundle.random_welfare - bundle.oracle_opt.total_cost;
    const double c_bar = std::max(bundle.cost.c_bar, c_hat.c_bar);

    auto& records = slots[k];
    for (std::size_t e = 0; e < cfg.eta_inverse_grid.size(); ++e) {
      const double eta_inv = cfg.eta_inverse_grid[e];
      RunRecord rec;
      rec.gamma = bundle.gamma;
      rec.training_size = n_train;
      rec.eta_inverse = eta_inv;
      rec.repetition = task.repetition;
      rec.sample_seed = sample_seed;
      rec.l1_grid = grid.l1;
      rec.l2_grid = grid.l2;
      rec.l1_mc = mc.l1;
      rec.l2_mc = mc.l2;
      rec.l1_mc_se = mc.l1_se;
      rec.l2_mc_se = mc.l2_se;

      if (eta_inv == 0.0) {
        const auto plan = hungarian_solve(c_hat);
        rec.converged = true;
        const auto feasible = permutation_coupling(plan.sigma);
        rec.welfare = plan_cost(feasible, bundle.cost);
        rec.regret = rec.welfare - bundle.oracle_opt.total_cost;
        // eta -> infinity limit: the KL terms vanish and the oracle ROT
        // plan is the optimal permutation, so both regrets coincide.
        rec.rot_regret = rec.regret;
        rec.duality_gap = 0.0;
        // The unregularized limit of the variance factor is infinite;
        // bound is vacuous by construction.
        rec.bound_total = std::numeric_limits<double>::infinity();
        rec.bound_vacuous = true;
        rec.bound_holds = true;
      } else {
        const double eta = 1.0 / eta_inv;
        const auto solved =
            sinkhorn_solve(c_hat, eta, cfg.sinkhorn.tol, cfg.sinkhorn.max_iter);
        rec.converged = solved.report.converged;
        rec.iterations = solved.report.iterations;
        rec.welfare = plan_cost(solved.coupling, bundle.cost);
        const auto regret_rec =
            compute_regret(bundle.cost, solved.coupling, *bundle.oracle_couplings[e],
                           bundle.oracle_opt, eta);
        rec.regret = regret_rec.regret;
        rec.rot_regret = regret_rec.rot_regret;
        const double primal = primal_objective(solved.coupling, c_hat, eta);
        rec.duality_gap =
            std::fabs(primal - solved.report.dual_value) /
            std::max({1.0, std::fabs(primal), std::fabs(solved.report.dual_value)});
        auto bound = regret_bound(grid.l1, grid.l2, eta, c_bar, cfg.n);
        bound.check(rec.regret);
        rec.bound_total = bound.total_bound;
        rec.bound_vacuous = bound.vacuous;
        rec.bound_holds = bound.holds;
        if (rec.converged) {
          rec.perturbation_checked = true;
          rec.perturbation_holds =
              perturbation_bounds_check(bundle.cost, c_hat, solved.potentials, solved.coupling)
                  .both_hold();
          rec.audit_checked = true;
          rec.audit_holds =
              potential_density_audit(solved.potentials, solved.coupling, c_bar, &c_hat).all_hold();
        }
      }
      rec.abs_gain = bundle.random_welfare - rec.welfare;
      rec.rel_gain = denom > 0.0 ? rec.abs_gain / denom
                                 : std::numeric_limits<double>::quiet_NaN();
      records.push_back(rec);
    }
  });

  for (auto& slot : slots)
    for (auto& rec : slot) {
      if (!rec.converged) ++summary.non_converged_runs;
      summary.runs.push_back(std::move(rec));
    }

  // Aggregate per (gamma, N, eta_inverse) over converged repetitions.
  for (std::size_t g = 0; g < bundles.size(); ++g) {
    for (std::size_t s = 0; s < cfg.training_sizes.size(); ++s) {
      for (std::size_t e = 0; e < cfg.eta_inverse_grid.size(); ++e) {
        CellSummary cell;
        cell.gamma = bundles[g].gamma;
        cell.training_size = cfg.training_sizes[s];
        cell.eta_inverse = cfg.eta_inverse_grid[e];
        std::vector<double> welfare, abs_gain, rel_gain, regret;
        std::vector<double> l1g, l2g, l1m, l2m;
        std::size_t bound_holds = 0, bound_vacuous = 0;
        std::size_t perturbation_checked = 0, perturbation_holds = 0;
        std::size_t audit_checked = 0, audit_holds = 0;
        for (const auto& rec : summary.runs) {
          if (rec.gamma != cell.gamma || rec.training_size != cell.training_size ||
              rec.eta_inverse != cell.eta_inverse)
            continue;
          ++cell.repetitions;
          if (!rec.converged) continue;
          ++cell.converged_count;
          welfare.push_back(rec.welfare);
          abs_gain.push_back(rec.abs_gain);
          rel_gain.push_back(rec.rel_gain);
          regret.push_back(rec.regret);
          l1g.push_back(rec.l1_grid);
          l2g.push_back(rec.l2_grid);
          l1m.push_back(rec.l1_mc);
          l2m.push_back(rec.l2_mc);
          bound_holds += rec.bound_holds ? 1 : 0;
          bound_vacuous += rec.bound_vacuous ? 1 : 0;
          if (rec.perturbation_checked) {
            ++perturbation_checked;
            perturbation_holds += rec.perturbation_holds ? 1 : 0;
          }
          if (rec.audit_checked) {
            ++audit_checked;
            audit_holds += rec.audit_holds ? 1 : 0;
          }
        }
        cell.welfare_mean = detail::mean_of(welfare);
        cell.welfare_std = detail::std_of(welfare);
        cell.abs_gain_mean = detail::mean_of(abs_gain);
        cell.rel_gain_mean = detail::mean_of(rel_gain);
        cell.rel_gain_std = detail::std_of(rel_gain);
        cell.regret_mean = detail::mean_of(regret);
        cell.regret_std = detail::std_of(regret);
        cell.l1_grid_mean = detail::mean_of(l1g);
        cell.l2_grid_mean = detail::mean_of(l2g);
        cell.l1_mc_mean = detail::mean_of(l1m);
        cell.l2_mc_mean = detail::mean_of(l2m);
        const double conv = static_cast<double>(cell.converged_count);
        cell.bound_holds_rate = conv > 0 ? bound_holds / conv : 0.0;
        cell.bound_vacuous_rate = conv > 0 ? bound_vacuous / conv : 0.0;
        cell.perturbation_holds_rate =
            perturbation_checked > 0 ? static_cast<double>(perturbation_holds) / perturbation_checked : 1.0;
        cell.audit_holds_rate =
            audit_checked > 0 ? static_cast<double>(audit_holds) / audit_checked : 1.0;
        summary.cells.push_back(cell);
      }
    }
  }
  return summary;
}

}  // namespace matchopt
