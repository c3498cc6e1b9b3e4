#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "matchopt/config.hpp"
#include "matchopt/csv.hpp"
#include "matchopt/experiments.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace matchopt;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MATCHOPT_CLI_PATH) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("matchopt_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json slurp_json(const fs::path& path) { return json::parse(slurp(path)); }

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out);
  out << text;
}

Matrix read_matrix_file(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in);
  return csv::read_matrix(in);
}

}  // namespace

TEST_CASE("solve: unregularized assignment on the swap matrix") {
  const auto dir = fresh_dir("solve_lp");
  write_file(dir / "cost.csv", "0,1\n1,0\n");
  REQUIRE(run_cli("solve " + (dir / "cost.csv").string() + " --eta-inverse 0 --out " +
                  dir.string()) == 0);

  const auto summary = slurp_json(dir / "summary.json");
  CHECK(summary["welfare"].get<double>() == 0.0);
  CHECK(summary["converged"].get<bool>());

  const auto coupling = read_matrix_file(dir / "coupling.csv");
  CHECK(coupling(0, 0) == 0.5);
  CHECK(coupling(0, 1) == 0.0);
  CHECK(coupling(1, 1) == 0.5);

  const auto bvn = slurp(dir / "bvn.csv");
  CHECK(bvn.find("0 1") != std::string::npos);
}

TEST_CASE("solve: constant costs give the uniform coupling with zero KL") {
  const auto dir = fresh_dir("solve_const");
  write_file(dir / "cost.csv", "0.4,0.4,0.4\n0.4,0.4,0.4\n0.4,0.4,0.4\n");
  REQUIRE(run_cli("solve " + (dir / "cost.csv").string() +
                  " --eta-inverse 0.1 --out " + dir.string()) == 0);
  const auto summary = slurp_json(dir / "summary.json");
  CHECK_THAT(summary["kl"].get<double>(), Catch::Matchers::WithinAbs(0.0, 1e-10));
  const auto coupling = read_matrix_file(dir / "coupling.csv");
  for (double v : coupling)
    CHECK_THAT(v, Catch::Matchers::WithinAbs(1.0 / 9.0, 1e-10));
}

TEST_CASE("solve: coupling output re-parses to a feasible coupling") {
  const auto dir = fresh_dir("solve_roundtrip");
  // PAM grid cost written to CSV, solved at 1/eta = 0.002.
  const Dgp dgp{PamDgp{}};
  const auto cost = true_cost_matrix(dgp, build_market(dgp, 100));
  {
    std::ofstream os(dir / "cost.csv");
    csv::write_matrix(os, cost.values);
  }
  REQUIRE(run_cli("solve " + (dir / "cost.csv").string() +
                  " --eta-inverse 0.002 --out " + dir.string()) == 0);

  const Coupling coupling{read_matrix_file(dir / "coupling.csv")};
  CHECK(marginal_residual(coupling, 100) <= tolerances::marginal);
  for (double v : coupling.mass) CHECK(v >= 0.0);

  // Welfare sits between the exact optimum and random matching.
  const auto summary = slurp_json(dir / "summary.json");
  const double welfare = summary["welfare"].get<double>();
  CHECK(welfare >= hungarian_solve(cost).total_cost - 1e-9);
  CHECK(welfare <= random_matching_welfare(cost) + 1e-9);
  CHECK(summary["duality_gap_rel"].get<double>() <= tolerances::gap);
  CHECK(summary["solution_audit"]["all_hold"].get<bool>());
}

TEST_CASE("solve: malformed input and non-negative validation exit 2") {
  const auto dir = fresh_dir("solve_bad");
  write_file(dir / "ragged.csv", "0,1\n1\n");
  CHECK(run_cli("solve " + (dir / "ragged.csv").string() + " --out " + dir.string()) == 2);

  write_file(dir / "rect.csv", "0,1,2\n1,0,2\n");
  CHECK(run_cli("solve " + (dir / "rect.csv").string() + " --out " + dir.string()) == 2);

  write_file(dir / "negative.csv", "-0.5,1\n1,0\n");
  CHECK(run_cli("solve " + (dir / "negative.csv").string() + " --out " + dir.string()) ==
        2);
  // Same matrix is accepted under --normalize.
  CHECK(run_cli("solve " + (dir / "negative.csv").string() +
                " --normalize --eta-inverse 0.1 --out " + dir.string()) == 0);
}

TEST_CASE("solve: iteration starvation exits 3 with a summary on disk") {
  const auto dir = fresh_dir("solve_stall");
  Rng rng(3);
  std::string csv_text;
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 20; ++j)
      csv_text += csv::format_double(rng.next_uniform()) + (j < 19 ? "," : "");
    csv_text += '\n';
  }
  write_file(dir / "cost.csv", csv_text);
  CHECK(run_cli("solve " + (dir / "cost.csv").string() +
                " --eta-inverse 0.0005 --max-iter 50 --out " + dir.string()) == 3);
  const auto summary = slurp_json(dir / "summary.json");
  CHECK_FALSE(summary["converged"].get<bool>());
  CHECK(summary["iterations"].get<int>() == 50);
}

TEST_CASE("heatmap: long format and support widening with regularization") {
  const auto dir = fresh_dir("heatmap");
  const Dgp dgp{PamDgp{}};
  const auto cost = true_cost_matrix(dgp, build_market(dgp, 60));

  auto support_cells = [&](double eta_inv) {
    const auto solved = sinkhorn_solve(cost, 1.0 / eta_inv);
    REQUIRE(solved.report.converged);
    const fs::path plan = dir / ("plan_" + csv::format_double(eta_inv) + ".csv");
    {
      std::ofstream os(plan);
      csv::write_matrix(os, solved.coupling.mass, "w");
    }
    const fs::path out = dir / ("heat_" + csv::format_double(eta_inv) + ".csv");
    REQUIRE(run_cli("heatmap " + plan.string() + " --out " + out.string() + " --svg " +
                    (dir / "heat.svg").string()) == 0);
    std::ifstream in(out);
    const auto rows = csv::read(in);
    REQUIRE(rows.size() == 60 * 60 + 1);
    std::size_t support = 0;
    const double threshold = 1e-6 / (60.0 * 60.0);
    for (std::size_t r = 1; r < rows.size(); ++r) {
      double mass;
      REQUIRE(csv::parse_double(rows[r][2], mass));
      if (mass > threshold) ++support;
    }
    return support;
  };

  CHECK(support_cells(0.01) > support_cells(0.002));
  CHECK(slurp(dir / "heat.svg").find("<svg") == 0);

  write_file(dir / "bad.csv", "0.1,0.2\n0.3\n");
  CHECK(run_cli("heatmap " + (dir / "bad.csv").string() + " --out " +
                (dir / "o.csv").string()) == 2);
}

TEST_CASE("heatmap: uniform coupling is flat") {
  const auto dir = fresh_dir("heatmap_flat");
  {
    std::ofstream os(dir / "plan.csv");
    csv::write_matrix(os, uniform_coupling(5).mass, "w");
  }
  REQUIRE(run_cli("heatmap " + (dir / "plan.csv").string() + " --out " +
                  (dir / "flat.csv").string()) == 0);
  std::ifstream in(dir / "flat.csv");
  const auto rows = csv::read(in);
  for (std::size_t r = 1; r < rows.size(); ++r) CHECK(rows[r][2] == rows[1][2]);
}

TEST_CASE("calibrate: prints coefficients hitting the anchors") {
  const std::string out_path =
      (fs::temp_directory_path() / "matchopt_calibrate.json").string();
  const std::string cmd = std::string(MATCHOPT_CLI_PATH) +
                          " calibrate --gamma 0.06 > " + out_path + " 2>/dev/null";
  REQUIRE(std::system(cmd.c_str()) == 0);
  const auto out = slurp_json(out_path);
  CHECK_THAT(out["anchors"]["p_20_w0"].get<double>(),
             Catch::Matchers::WithinAbs(0.20, 1e-10));
  CHECK_THAT(out["anchors"]["gap"].get<double>(),
             Catch::Matchers::WithinAbs(0.06, 1e-10));
  const auto dgp = calibrate_logistic(0.06);
  CHECK_THAT(out["b"].get<double>(), Catch::Matchers::WithinAbs(dgp.b, 1e-12));
}

TEST_CASE("experiment: outputs, manifest completeness, determinism") {
  const auto dir = fresh_dir("experiment");
  write_file(dir / "exp.cfg", R"(dgp = logistic
n = 30
gammas = 0.06
eta_inverse = 0, 0.05
training_sizes = 500
repetitions = 2
base_seed = 3
mc_draws = 500
boost_rounds = 40
workers = 1
)");
  const auto out1 = dir / "run1";
  const auto out2 = dir / "run2";
  REQUIRE(run_cli("experiment " + (dir / "exp.cfg").string() + " --out " +
                  out1.string()) == 0);
  REQUIRE(run_cli("experiment " + (dir / "exp.cfg").string() + " --out " +
                  out2.string()) == 0);

  for (const char* name :
       {"summary.csv", "runs.csv", "oracle.csv", "plot_relative_gain.csv",
        "plot_absolute_gain.csv", "heatmap_random.csv",
        "heatmap_oracle_unregularized.csv", "manifest.json"}) {
    CAPTURE(name);
    REQUIRE(fs::exists(out1 / name));
  }

  // Re-running the same config yields bit-identical CSVs.
  for (const char* name : {"summary.csv", "runs.csv", "oracle.csv"})
    CHECK(slurp(out1 / name) == slurp(out2 / name));

  // Manifest traceability: every runs.csv row's cell appears in the
  // manifest with a consistent repetition budget.
  const auto manifest = slurp_json(out1 / "manifest.json");
  std::ifstream runs_in(out1 / "runs.csv");
  const auto runs = csv::read(runs_in);
  for (std::size_t r = 1; r < runs.size(); ++r) {
    double gamma, eta_inv, rep;
    REQUIRE(csv::parse_double(runs[r][0], gamma));
    REQUIRE(csv::parse_double(runs[r][3], eta_inv));
    REQUIRE(csv::parse_double(runs[r][4], rep));
    bool traced = false;
    for (const auto& cell : manifest["cells"]) {
      if (cell["gamma"].get<double>() == gamma &&
          cell["eta_inverse"].get<double>() == eta_inv &&
          std::stoul(runs[r][2]) == cell["training_size"].get<std::size_t>() &&
          rep < cell["repetitions"].get<double>())
        traced = true;
    }
    CHECK(traced);
  }
  CHECK(manifest["prng"].get<std::string>() == "splitmix64-counter");

  // --reps override shrinks the sweep.
  const auto out3 = dir / "run3";
  REQUIRE(run_cli("experiment " + (dir / "exp.cfg").string() + " --reps 1 --out " +
                  out3.string()) == 0);
  std::ifstream rr(out3 / "runs.csv");
  CHECK(csv::read(rr).size() == 1 + 2);  // header + one rep x two etas

  // Worker count from the environment changes timing only.
  const auto out4 = dir / "run4";
  const std::string env_cmd = "MATCHOPT_WORKERS=2 " + std::string(MATCHOPT_CLI_PATH) +
                              " experiment " + (dir / "exp.cfg").string() + " --out " +
                              out4.string() + " 2>/dev/null";
  REQUIRE(WEXITSTATUS(std::system(env_cmd.c_str())) == 0);
  CHECK(slurp(out4 / "runs.csv") == slurp(out1 / "runs.csv"));
}

TEST_CASE("bundled configs parse and mirror the study designs") {
  {
    std::ifstream in(fs::path(MATCHOPT_CONFIG_DIR) / "pam.cfg");
    REQUIRE(in);
    const auto cfg = parse_experiment_config(in);
    CHECK(cfg.dgp_kind == "pam");
    CHECK(cfg.n == 100);
    CHECK(cfg.training_sizes ==
          std::vector<std::size_t>{500, 5000, 50000, 500000});
    CHECK(cfg.eta_inverse_grid == std::vector<double>{0.0, 0.002, 0.01, 0.05});
    CHECK(cfg.repetitions == 30);
    CHECK_NOTHROW(cfg.validate());
  }
  {
    std::ifstream in(fs::path(MATCHOPT_CONFIG_DIR) / "logistic.cfg");
    REQUIRE(in);
    const auto cfg = parse_experiment_config(in);
    CHECK(cfg.dgp_kind == "logistic");
    CHECK(cfg.n == 200);
    CHECK(cfg.gammas == std::vector<double>{0.02, 0.06, 0.10});
    CHECK(cfg.eta_inverse_grid == std::vector<double>{0.0, 0.002, 0.01, 0.05});
    CHECK_NOTHROW(cfg.validate());
  }
}

TEST_CASE("experiment: schema violations exit 2") {
  const auto dir = fresh_dir("experiment_bad");
  write_file(dir / "bad.cfg", "dgp = logistic\nrepetitions = \n");
  CHECK(run_cli("experiment " + (dir / "bad.cfg").string() + " --out " + dir.string()) ==
        2);
  write_file(dir / "unknown.cfg", "dgp = pam\nfrobnicate = 3\n");
  CHECK(run_cli("experiment " + (dir / "unknown.cfg").string() + " --out " +
                dir.string()) == 2);
  CHECK(run_cli("experiment " + (dir / "missing.cfg").string() + " --out " +
                dir.string()) == 2);
}
