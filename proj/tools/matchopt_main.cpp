#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "matchopt/matchopt.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace matchopt;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_bad_input = 2;
constexpr int exit_not_converged = 3;

// Shortest round-trip representation; used for file names where the
// fixed 17-digit CSV form would be noise.
std::string format_compact(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Matrix load_matrix(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path.string() + "'");
  return csv::read_matrix(in);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path.string() + "'");
  return out;
}

void write_potentials_csv(std::ostream& os, const std::vector<double>& f,
                          const std::vector<double>& g) {
  csv::write_row(os, std::vector<std::string>{"index", "f", "g"});
  for (std::size_t i = 0; i < f.size(); ++i)
    csv::write_row(os, std::vector<std::string>{std::to_string(i),
                                                csv::format_double(f[i]),
                                                csv::format_double(g[i])});
}

void write_mixture_csv(std::ostream& os, const PermutationMixture& mix) {
  csv::write_row(os, std::vector<std::string>{"weight", "permutation"});
  for (const auto& comp : mix.components) {
    std::string perm;
    for (std::size_t i = 0; i < comp.sigma.size(); ++i) {
      if (i) perm += ' ';
      perm += std::to_string(comp.sigma[i]);
    }
    csv::write_row(os, std::vector<std::string>{csv::format_double(comp.weight), perm});
  }
}

void write_heatmap_csv(std::ostream& os, const Matrix& mass) {
  csv::write_row(os, std::vector<std::string>{"x_index", "w_index", "mass"});
  for (std::size_t i = 0; i < mass.rows(); ++i)
    for (std::size_t j = 0; j < mass.cols(); ++j)
      csv::write_row(os, std::vector<std::string>{std::to_string(i), std::to_string(j),
                                                  csv::format_double(mass(i, j))});
}

// Standalone SVG with a monotone white-to-blue ramp; mass scaled by the
// matrix maximum.
void write_heatmap_svg(std::ostream& os, const Matrix& mass) {
  const std::size_t n_rows = mass.rows(), n_cols = mass.cols();
  double peak = 0.0;
  for (double v : mass) peak = std::max(peak, v);
  if (peak <= 0.0) peak = 1.0;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" "
        "viewBox=\"0 0 "
     << n_cols << ' ' << n_rows << "\" shape-rendering=\"crispEdges\">\n";
  for (std::size_t i = 0; i < n_rows; ++i) {
    for (std::size_t j = 0; j < n_cols; ++j) {
      const double t = std::clamp(mass(i, j) / peak, 0.0, 1.0);
      const int r = static_cast<int>(255 + t * (8 - 255));
      const int g = static_cast<int>(255 + t * (48 - 255));
      const int b = static_cast<int>(255 + t * (107 - 255));
      // Row 0 at the bottom so the x characteristic increases upward.
      os << "<rect x=\"" << j << "\" y=\"" << (n_rows - 1 - i)
         << "\" width=\"1\" height=\"1\" fill=\"rgb(" << r << ',' << g << ',' << b
         << ")\"/>\n";
    }
  }
  os << "</svg>\n";
}

json config_to_json(const ExperimentConfig& cfg) {
  return {{"dgp", cfg.dgp_kind},
          {"gammas", cfg.gammas},
          {"n", cfg.n},
          {"eta_inverse", cfg.eta_inverse_grid},
          {"training_sizes", cfg.training_sizes},
          {"repetitions", cfg.repetitions},
          {"base_seed", cfg.base_seed},
          {"mc_draws", cfg.mc_draws},
          {"sinkhorn_tol", cfg.sinkhorn.tol},
          {"sinkhorn_max_iter", cfg.sinkhorn.max_iter},
          {"boost_rounds", cfg.boost.rounds},
          {"learning_rate", cfg.boost.learning_rate},
          {"max_bins", cfg.boost.max_bins},
          {"min_leaf", cfg.boost.min_leaf},
          {"workers", cfg.workers},
          {"oracle_inject", cfg.oracle_inject}};
}

int cmd_solve(const fs::path& cost_path, double eta_inverse, double tol,
              std::size_t max_iter, bool normalize, const fs::path& out_dir) {
  Matrix raw = load_matrix(cost_path);
  if (!raw.square() || raw.rows() == 0) {
    std::cerr << "solve: cost matrix must be square and non-empty\n";
    return exit_bad_input;
  }
  if (!raw.all_finite()) {
    std::cerr << "solve: cost matrix has non-finite entries\n";
    return exit_bad_input;
  }
  if (normalize) {
    double lo = raw(0, 0), hi = raw(0, 0);
    for (double v : raw) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double span = hi - lo;
    for (double& v : raw) v = span > 0.0 ? (v - lo) / span : 0.0;
  }
  double hi = 0.0;
  for (double v : raw) {
    if (v < 0.0) {
      std::cerr << "solve: negative costs; rerun with --normalize\n";
      return exit_bad_input;
    }
    hi = std::max(hi, v);
  }
  const std::size_t n = raw.rows();
  const CostMatrix cost{std::move(raw), normalize ? 1.0 : hi};

  fs::create_directories(out_dir);
  json summary{{"n", n},
               {"eta_inverse", eta_inverse},
               {"c_bar", cost.c_bar},
               {"normalized", normalize},
               {"prng", std::string(prng_id)},
               {"version", std::string(version)}};

  Coupling coupling;
  PermutationMixture mix;
  bool converged = true;

  if (eta_inverse == 0.0) {
    std::vector<double> u, v;
    const auto plan = hungarian_solve(cost, &u, &v);
    coupling = permutation_coupling(plan.sigma);
    mix.source_n = n;
    mix.components.push_back({1.0, plan.sigma});
    auto pot_csv = open_out(out_dir / "potentials.csv");
    write_potentials_csv(pot_csv, u, v);
    summary["welfare"] = plan.total_cost;
    summary["kl"] = std::log(static_cast<double>(n));
    summary["duality_gap_rel"] = 0.0;
    summary["converged"] = true;
    summary["iterations"] = 0;
  } else {
    const double eta = 1.0 / eta_inverse;
    const auto solved = sinkhorn_solve(cost, eta, tol, max_iter);
    converged = solved.report.converged;
    coupling = solved.coupling;
    const double primal = primal_objective(solved.coupling, cost, eta);
    const double dual = solved.report.dual_value;
    const auto audit = potential_density_audit(solved.potentials, solved.coupling, cost.c_bar, &cost);
    auto pot_csv = open_out(out_dir / "potentials.csv");
    write_potentials_csv(pot_csv, solved.potentials.f, solved.potentials.g);
    summary["welfare"] = plan_cost(solved.coupling, cost);
    summary["kl"] = kl_divergence(solved.coupling, n);
    summary["primal_objective"] = primal;
    summary["dual_objective"] = dual;
    summary["duality_gap_rel"] =
        std::fabs(primal - dual) / std::max({1.0, std::fabs(primal), std::fabs(dual)});
    summary["converged"] = converged;
    summary["iterations"] = solved.report.iterations;
    summary["marginal_residual"] = solved.report.final_marginal_residual;
    summary["solution_audit"] = {{"potential_slack", audit.potential_slack},
                         {"density_lower_slack", audit.density_lower_slack},
                         {"density_upper_slack", audit.density_upper_slack},
                         {"all_hold", audit.all_hold()}};
    if (converged) mix = bvn_decompose(solved.coupling);
  }

  auto coupling_csv = open_out(out_dir / "coupling.csv");
  csv::write_matrix(coupling_csv, coupling.mass, "w");
  if (!mix.components.empty()) {
    auto bvn_csv = open_out(out_dir / "bvn.csv");
    write_mixture_csv(bvn_csv, mix);
    summary["bvn_components"] = mix.components.size();
  }
  auto summary_json = open_out(out_dir / "summary.json");
  summary_json << summary.dump(2) << '\n';

  if (!converged) {
    std::cerr << "solve: sinkhorn did not converge within max-iter\n";
    return exit_not_converged;
  }
  return exit_ok;
}

void write_oracle_csv(std::ostream& os, const WelfareSummary& summary) {
  csv::write_row(os, std::vector<std::string>{
                         "gamma", "n", "eta_inverse", "welfare", "abs_gain",
                         "abs_gain_pp", "rel_gain", "kl", "bias_bound", "converged",
                         "iterations", "random_welfare", "oracle_opt_welfare"});
  for (const auto& row : summary.oracle_rows) {
    const WelfareSummary::MarketStats* stats = nullptr;
    for (const auto& m : summary.markets)
      if (m.gamma == row.gamma) stats = &m;
    csv::write_row(os, std::vector<std::string>{
                           csv::format_double(row.gamma), std::to_string(summary.n),
                           csv::format_double(row.eta_inverse),
                           csv::format_double(row.welfare),
                           csv::format_double(row.abs_gain),
                           csv::format_double(100.0 * row.abs_gain),
                           csv::format_double(row.rel_gain), csv::format_double(row.kl),
                           csv::format_double(row.bias_bound),
                           row.converged ? "1" : "0", std::to_string(row.iterations),
                           csv::format_double(stats ? stats->random_welfare : 0.0),
                           csv::format_double(stats ? stats->oracle_opt_welfare : 0.0)});
  }
}

void write_runs_csv(std::ostream& os, const WelfareSummary& summary) {
  csv::write_row(os, std::vector<std::string>{
                         "gamma", "n", "training_size", "eta_inverse", "repetition",
                         "sample_seed", "converged", "iterations", "welfare", "abs_gain",
                         "rel_gain", "regret", "rot_regret", "duality_gap", "l1_grid",
                         "l2_grid", "l1_mc", "l2_mc", "l1_mc_se", "l2_mc_se",
                         "bound_total", "bound_vacuous", "bound_holds", "perturbation_checked",
                         "perturbation_holds", "audit_checked", "audit_holds"});
  for (const auto& r : summary.runs) {
    csv::write_row(
        os, std::vector<std::string>{
                csv::format_double(r.gamma), std::to_string(summary.n),
                std::to_string(r.training_size), csv::format_double(r.eta_inverse),
                std::to_string(r.repetition), std::to_string(r.sample_seed),
                r.converged ? "1" : "0", std::to_string(r.iterations),
                csv::format_double(r.welfare), csv::format_double(r.abs_gain),
                csv::format_double(r.rel_gain), csv::format_double(r.regret),
                csv::format_double(r.rot_regret), csv::format_double(r.duality_gap),
                csv::format_double(r.l1_grid), csv::format_double(r.l2_grid),
                csv::format_double(r.l1_mc), csv::format_double(r.l2_mc),
                csv::format_double(r.l1_mc_se), csv::format_double(r.l2_mc_se),
                csv::format_double(r.bound_total), r.bound_vacuous ? "1" : "0",
                r.bound_holds ? "1" : "0", r.perturbation_checked ? "1" : "0",
                r.perturbation_holds ? "1" : "0", r.audit_checked ? "1" : "0",
                r.audit_holds ? "1" : "0"});
  }
}

void write_summary_csv(std::ostream& os, const WelfareSummary& summary) {
  csv::write_row(os, std::vector<std::string>{
                         "gamma", "n", "training_size", "eta_inverse", "repetitions",
                         "converged", "welfare_mean", "welfare_std", "abs_gain_mean",
                         "abs_gain_pp_mean", "rel_gain_mean", "rel_gain_std",
                         "regret_mean", "regret_std", "bound_holds_rate",
                         "bound_vacuous_rate", "perturbation_holds_rate", "audit_holds_rate",
                         "l1_grid_mean", "l2_grid_mean", "l1_mc_mean", "l2_mc_mean"});
  for (const auto& c : summary.cells) {
    csv::write_row(os, std::vector<std::string>{
                           csv::format_double(c.gamma), std::to_string(summary.n),
                           std::to_string(c.training_size),
                           csv::format_double(c.eta_inverse),
                           std::to_string(c.repetitions),
                           std::to_string(c.converged_count),
                           csv::format_double(c.welfare_mean),
                           csv::format_double(c.welfare_std),
                           csv::format_double(c.abs_gain_mean),
                           csv::format_double(100.0 * c.abs_gain_mean),
                           csv::format_double(c.rel_gain_mean),
                           csv::format_double(c.rel_gain_std),
                           csv::format_double(c.regret_mean),
                           csv::format_double(c.regret_std),
                           csv::format_double(c.bound_holds_rate),
                           csv::format_double(c.bound_vacuous_rate),
                           csv::format_double(c.perturbation_holds_rate),
                           csv::format_double(c.audit_holds_rate),
                           csv::format_double(c.l1_grid_mean),
                           csv::format_double(c.l2_grid_mean),
                           csv::format_double(c.l1_mc_mean),
                           csv::format_double(c.l2_mc_mean)});
  }
}

int cmd_experiment(const fs::path& config_path, const fs::path& out_dir,
                   std::optional<std::size_t> reps_override,
                   std::optional<std::size_t> workers_override,
                   std::optional<std::uint64_t> seed_override) {
  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "experiment: cannot open '" << config_path.string() << "'\n";
    return exit_bad_input;
  }
  ExperimentConfig cfg = parse_experiment_config(in);
  if (reps_override) cfg.repetitions = *reps_override;
  if (workers_override) cfg.workers = *workers_override;
  if (seed_override) cfg.base_seed = *seed_override;
  cfg.validate();

  const std::string started = utc_now();
  const WelfareSummary summary = run_feasible_sweep(cfg);

  fs::create_directories(out_dir);
  std::vector<std::string> files;
  {
    auto os = open_out(out_dir / "summary.csv");
    write_summary_csv(os, summary);
    files.push_back("summary.csv");
  }
  {
    auto os = open_out(out_dir / "runs.csv");
    write_runs_csv(os, summary);
    files.push_back("runs.csv");
  }
  {
    auto os = open_out(out_dir / "oracle.csv");
    write_oracle_csv(os, summary);
    files.push_back("oracle.csv");
  }
  {
    auto os = open_out(out_dir / "plot_relative_gain.csv");
    csv::write_row(os, std::vector<std::string>{"gamma", "training_size", "eta_inverse",
                                                "rel_gain_mean", "rel_gain_std"});
    for (const auto& c : summary.cells)
      csv::write_row(os, std::vector<std::string>{
                             csv::format_double(c.gamma), std::to_string(c.training_size),
                             csv::format_double(c.eta_inverse),
                             csv::format_double(c.rel_gain_mean),
                             csv::format_double(c.rel_gain_std)});
    files.push_back("plot_relative_gain.csv");
  }
  {
    auto os = open_out(out_dir / "plot_absolute_gain.csv");
    csv::write_row(os, std::vector<std::string>{"gamma", "training_size", "eta_inverse",
                                                "abs_gain_pp_mean"});
    for (const auto& c : summary.cells)
      csv::write_row(os, std::vector<std::string>{
                             csv::format_double(c.gamma), std::to_string(c.training_size),
                             csv::format_double(c.eta_inverse),
                             csv::format_double(100.0 * c.abs_gain_mean)});
    files.push_back("plot_absolute_gain.csv");
  }

  // Heatmap grids for the first gamma: random matching, the oracle
  // unregularized plan, and each regularized oracle plan.
  {
    const double gamma0 = cfg.effective_gammas().front();
    const Dgp dgp = cfg.make_dgp(gamma0);
    const auto market = build_market(dgp, cfg.n);
    const auto cost = true_cost_matrix(dgp, market);
    {
      auto os = open_out(out_dir / "heatmap_random.csv");
      write_heatmap_csv(os, uniform_coupling(cfg.n).mass);
      files.push_back("heatmap_random.csv");
    }
    {
      const auto plan = hungarian_solve(cost);
      auto os = open_out(out_dir / "heatmap_oracle_unregularized.csv");
      write_heatmap_csv(os, permutation_coupling(plan.sigma).mass);
      files.push_back("heatmap_oracle_unregularized.csv");
    }
    for (double eta_inv : cfg.eta_inverse_grid) {
      if (eta_inv == 0.0) continue;
      const auto solved = sinkhorn_solve(cost, 1.0 / eta_inv, cfg.sinkhorn.tol,
                                         cfg.sinkhorn.max_iter);
      const std::string name =
          "heatmap_oracle_eta_inverse_" + format_compact(eta_inv) + ".csv";
      auto os = open_out(out_dir / name);
      write_heatmap_csv(os, solved.coupling.mass);
      files.push_back(name);
    }
  }

  json cells = json::array();
  for (const auto& c : summary.cells)
    cells.push_back({{"gamma", c.gamma},
                     {"training_size", c.training_size},
                     {"eta_inverse", c.eta_inverse},
                     {"repetitions", c.repetitions},
                     {"converged", c.converged_count}});
  json oracle = json::array();
  for (const auto& row : summary.oracle_rows)
    oracle.push_back({{"gamma", row.gamma},
                      {"eta_inverse", row.eta_inverse},
                      {"converged", row.converged},
                      {"iterations", row.iterations}});
  const json manifest{{"version", std::string(version)},
                      {"prng", std::string(prng_id)},
                      {"config", config_to_json(cfg)},
                      {"config_path", config_path.string()},
                      {"started_utc", started},
                      {"finished_utc", utc_now()},
                      {"files", files},
                      {"cells", cells},
                      {"oracle", oracle},
                      {"diagnostics",
                       {{"non_converged_runs", summary.non_converged_runs},
                        {"non_converged_oracle", summary.non_converged_oracle}}}};
  auto manifest_os = open_out(out_dir / "manifest.json");
  manifest_os << manifest.dump(2) << '\n';
  return exit_ok;
}

int cmd_heatmap(const fs::path& plan_path, const fs::path& out_path,
                const std::optional<fs::path>& svg_path) {
  const Matrix mass = load_matrix(plan_path);
  if (!mass.square() || mass.rows() == 0) {
    std::cerr << "heatmap: coupling must be a non-empty square grid\n";
    return exit_bad_input;
  }
  for (double v : mass) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      std::cerr << "heatmap: coupling entries must be finite and nonnegative\n";
      return exit_bad_input;
    }
  }
  auto os = open_out(out_path);
  write_heatmap_csv(os, mass);
  if (svg_path) {
    auto svg = open_out(*svg_path);
    write_heatmap_svg(svg, mass);
  }
  return exit_ok;
}

int cmd_calibrate(double gamma) {
  const auto dgp = calibrate_logistic(gamma);
  const json out{{"gamma", gamma},
                 {"a", dgp.a},
                 {"b", dgp.b},
                 {"c", dgp.c_coef},
                 {"d", dgp.d},
                 {"beta_alpha", LogisticDgp::beta_alpha},
                 {"beta_beta", LogisticDgp::beta_beta},
                 {"anchors",
                  {{"p_20_w0", dgp.p(0.20, 0.0)},
                   {"p_40_w0", dgp.p(0.40, 0.0)},
                   {"effect_low", dgp.p(0.20, 1.0) - dgp.p(0.20, 0.0)},
                   {"gap", dgp.p(0.40, 1.0) - dgp.p(0.40, 0.0) -
                               (dgp.p(0.20, 1.0) - dgp.p(0.20, 0.0))}}}};
  std::cout << out.dump(2) << '\n';
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Welfare-optimal matching via entropy-regularized optimal transport"};
  app.require_subcommand(1);

  std::string cost_path, out_dir = ".";
  double eta_inverse = 0.0, tol = 1e-9;
  std::size_t max_iter = 100000;
  bool normalize = false;
  auto* solve = app.add_subcommand("solve", "Solve one matching problem from a cost CSV");
  solve->add_option("cost", cost_path, "square cost matrix CSV")->required();
  solve->add_option("--eta-inverse", eta_inverse,
                    "regularization 1/eta; 0 selects the exact assignment")
      ->check(CLI::NonNegativeNumber);
  solve->add_option("--tol", tol, "marginal residual tolerance");
  solve->add_option("--max-iter", max_iter, "sinkhorn iteration budget");
  solve->add_flag("--normalize", normalize, "affinely rescale costs to [0,1]");
  solve->add_option("--out", out_dir, "output directory");

  std::string config_path, exp_out = ".";
  std::optional<std::size_t> reps, workers;
  std::optional<std::uint64_t> seed;
  auto* experiment = app.add_subcommand("experiment", "Run a sweep from a config file");
  experiment->add_option("config", config_path, "experiment config")->required();
  experiment->add_option("--out", exp_out, "output directory");
  experiment->add_option("--reps", reps, "override repetitions");
  experiment->add_option("--workers", workers, "worker pool size")
      ->envname("MATCHOPT_WORKERS");
  experiment->add_option("--seed", seed, "override base seed");

  std::string plan_path, heat_out = "heatmap.csv";
  std::optional<std::string> svg_out;
  auto* heatmap = app.add_subcommand("heatmap", "Long-format heatmap data from a coupling");
  heatmap->add_option("plan", plan_path, "coupling CSV")->required();
  heatmap->add_option("--out", heat_out, "output CSV path");
  heatmap->add_option("--svg", svg_out, "also render a standalone SVG");

  double gamma = 0.06;
  auto* calibrate = app.add_subcommand("calibrate", "Print logistic DGP coefficients");
  calibrate->add_option("--gamma", gamma, "complementarity gap")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed())
      return cmd_solve(cost_path, eta_inverse, tol, max_iter, normalize, out_dir);
    if (experiment->parsed())
      return cmd_experiment(config_path, exp_out, reps, workers, seed);
    if (heatmap->parsed())
      return cmd_heatmap(plan_path, heat_out,
                         svg_out ? std::optional<fs::path>(*svg_out) : std::nullopt);
    if (calibrate->parsed()) return cmd_calibrate(gamma);
  } catch (const InvalidInput& err) {
    std::cerr << "error: " << err.what() << '\n';
    return exit_bad_input;
  } catch (const NumericalError& err) {
    std::cerr << "numerical error: " << err.what() << '\n';
    return exit_not_converged;
  } catch (const std::exception& err) {
    std::cerr << "unexpected error: " << err.what() << '\n';
    return 1;
  }
  return exit_ok;
}
