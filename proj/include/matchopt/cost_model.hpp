#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "matchopt/gbt.hpp"
#include "matchopt/numeric.hpp"
#include "matchopt/rng.hpp"

namespace matchopt {

// Throughout, Y = 1 encodes the cost event (still unemployed at six
// months), so E[Y | x, w] = c(x, w) = 1 - p(x, w).

// Quadratic job-finding surface p = (x^2 + w^2 + xw)/3 on [0,1]^2 with
// uniform marginals on both sides; supermodular, so the optimal plan is
// positive assortative.
struct PamDgp {
  static double p(double x, double w) { return (x * x + w * w + x * w) / 3.0; }
  double cost(double x, double w) const { return 1.0 - p(x, w); }
  double quantile_x(double u) const { return u; }
  double quantile_w(double u) const { return u; }
  double c_bar() const { return 1.0; }
  std::size_t feature_count() const { return 2; }
  void features(double x, double w, double* out) const {
    out[0] = x;
    out[1] = w;
  }
};

inline double pam_cost(double x, double w) {
  if (!(x >= 0.0 && x <= 1.0 && w >= 0.0 && w <= 1.0))
    throw InvalidInput("pam_cost: inputs must lie in [0,1]");
  return 1.0 - PamDgp::p(x, w);
}

// Logistic job-finding surface with Beta-distributed job seekers and
// standard normal caseworker quality; the interaction coefficient d sets
// the complementarity gap gamma.
struct LogisticDgp {
  double a = 0.0;
  double b = 0.0;
  double c_coef = 0.0;
  double d = 0.0;
  double gamma = 0.0;

  static constexpr double beta_alpha = 3.7939;
  static constexpr double beta_beta = 8.8634;

  double p(double x, double w) const {
    return logistic(a + b * x + c_coef * w + d * x * w);
  }
  double cost(double x, double w) const { return 1.0 - p(x, w); }
  double quantile_x(double u) const { return beta_quantile(u, beta_alpha, beta_beta); }
  double quantile_w(double u) const { return normal_quantile(u); }
  double c_bar() const { return 1.0; }
  std::size_t feature_count() const { return 3; }
  void features(double x, double w, double* out) const {
    out[0] = x;
    out[1] = w;
    out[2] = x * w;
  }
};

// Solves the two 2x2 linear systems pinned by the anchor conditions
//   p(0.20, 0) = 0.20                     p(0.40, 0) = 0.40
//   p(0.20, 1) - p(0.20, 0) = 0.02
//   [p(0.40, 1) - p(0.40, 0)] - [p(0.20, 1) - p(0.20, 0)] = gamma
inline LogisticDgp calibrate_logistic(double gamma) {
  if (!(gamma > 0.0 && gamma < 0.5 && 0.42 + gamma < 1.0))
    throw InvalidInput("calibrate_logistic: gamma out of range");
  LogisticDgp dgp;
  dgp.gamma = gamma;
  dgp.b = (logit(0.40) - logit(0.20)) / 0.2;
  dgp.a = logit(0.20) - 0.2 * dgp.b;
  const double effect_low = logit(0.22) - logit(0.20);
  const double effect_high = logit(0.42 + gamma) - logit(0.40);
  dgp.d = (effect_high - effect_low) / 0.2;
  dgp.c_coef = effect_low - 0.2 * dgp.d;

  const double residual =
      std::max({std::fabs(dgp.p(0.20, 0.0) - 0.20), std::fabs(dgp.p(0.40, 0.0) - 0.40),
                std::fabs(dgp.p(0.20, 1.0) - dgp.p(0.20, 0.0) - 0.02),
                std::fabs(dgp.p(0.40, 1.0) - dgp.p(0.40, 0.0) -
                          (dgp.p(0.20, 1.0) - dgp.p(0.20, 0.0)) - gamma)});
  if (residual > 1e-10)
    throw NumericalError("calibrate_logistic: anchor residual above 1e-10");
  return dgp;
}

using Dgp = std::variant<PamDgp, LogisticDgp>;

inline double dgp_cost(const Dgp& dgp, double x, double w) {
  return std::visit([&](const auto& d) { return d.cost(x, w); }, dgp);
}
inline double dgp_quantile_x(const Dgp& dgp, double u) {
  return std::visit([&](const auto& d) { return d.quantile_x(u); }, dgp);
}
inline double dgp_quantile_w(const Dgp& dgp, double u) {
  return std::visit([&](const auto& d) { return d.quantile_w(u); }, dgp);
}
inline double dgp_c_bar(const Dgp& dgp) {
  return std::visit([](const auto& d) { return d.c_bar(); }, dgp);
}
inline std::size_t dgp_feature_count(const Dgp& dgp) {
  return std::visit([](const auto& d) { return d.feature_count(); }, dgp);
}
inline void dgp_features(const Dgp& dgp, double x, double w, double* out) {
  std::visit([&](const auto& d) { d.features(x, w, out); }, dgp);
}
inline std::string dgp_name(const Dgp& dgp) {
  return std::holds_alternative<PamDgp>(dgp) ? "pam" : "logistic";
}

// N observed matches with the binary cost outcome.
struct TrainingSample {
  std::vector<double> x;
  std::vector<double> w;
  std::vector<std::uint8_t> y;

  std::size_t size() const { return x.size(); }
};

// Draws (X, W) from the DGP marginals via inverse CDF and Y from
// Bernoulli(c(X, W)). Stream order per observation: u_x, u_w, u_y.
inline TrainingSample generate_training_sample(const Dgp& dgp, std::size_t n_obs,
                                               std::uint64_t seed) {
  if (n_obs == 0) throw InvalidInput("generate_training_sample: N must be >= 1");
  Rng rng(seed);
  TrainingSample sample;
  sample.x.resize(n_obs);
  sample.w.resize(n_obs);
  sample.y.resize(n_obs);
  for (std::size_t k = 0; k < n_obs; ++k) {
    const double x = dgp_quantile_x(dgp, rng.next_uniform());
    const double w = dgp_quantile_w(dgp, rng.next_uniform());
    sample.x[k] = x;
    sample.w[k] = w;
    sample.y[k] = rng.next_bernoulli(dgp_cost(dgp, x, w)) ? 1 : 0;
  }
  return sample;
}

// Fitted regression surface for c(x, w); predictions are clipped to
// [0, c_bar] so Assumption 1 holds for the estimator by construction.
class CostEstimator {
 public:
  virtual ~CostEstimator() = default;

  double predict(double x, double w) const {
    return std::clamp(raw_predict(x, w), 0.0, c_bar_);
  }

  double c_bar() const { return c_bar_; }
  virtual std::string kind() const = 0;
  virtual nlohmann::json to_json() const = 0;

 protected:
  explicit CostEstimator(double c_bar) : c_bar_(c_bar) {}
  virtual double raw_predict(double x, double w) const = 0;

 private:
  double c_bar_;
};

struct FitInfo {
  std::size_t n_train = 0;
  std::uint64_t seed = 0;  // seed of the generating sample, for provenance
};

// Boosted-tree estimator over the DGP's feature map ((x, w) or
// (x, w, xw)).
class GbtCostEstimator : public CostEstimator {
 public:
  GbtCostEstimator(gbt::Model model, bool with_interaction, double c_bar, FitInfo info)
      : CostEstimator(c_bar),
        model_(std::move(model)),
        with_interaction_(with_interaction),
        info_(info) {}

  std::string kind() const override { return "gbt"; }
  const gbt::Model& model() const { return model_; }
  const FitInfo& fit_info() const { return info_; }

  nlohmann::json to_json() const override {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : model_.trees) {
      trees.push_back({{"root", {t.root.feature, t.root.threshold}},
                       {"left", {t.child[0].feature, t.child[0].threshold}},
                       {"right", {t.child[1].feature, t.child[1].threshold}},
                       {"leaf", {t.leaf[0], t.leaf[1], t.leaf[2], t.leaf[3]}}});
    }
    return {{"format", "matchopt-cost-estimator"},
            {"version", 1},
            {"kind", kind()},
            {"c_bar", c_bar()},
            {"with_interaction", with_interaction_},
            {"fit", {{"n_train", info_.n_train}, {"seed", info_.seed}}},
            {"model",
             {{"base", model_.base},
              {"learning_rate", model_.learning_rate},
              {"n_features", model_.n_features},
              {"trees", std::move(trees)}}}};
  }

  static GbtCostEstimator from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "matchopt-cost-estimator" || j.value("version", 0) != 1 ||
        j.value("kind", "") != "gbt")
      throw InvalidInput("GbtCostEstimator: unrecognized serialization");
    gbt::Model model;
    const auto& jm = j.at("model");
    model.base = jm.at("base").get<double>();
    model.learning_rate = jm.at("learning_rate").get<double>();
    model.n_features = jm.at("n_features").get<std::size_t>();
    for (const auto& jt : jm.at("trees")) {
      gbt::DepthTwoTree t;
      auto split = [](const nlohmann::json& js) {
        return gbt::Split{js.at(0).get<int>(), js.at(1).get<double>()};
      };
      t.root = split(jt.at("root"));
      t.child[0] = split(jt.at("left"));
      t.child[1] = split(jt.at("right"));
      for (int k = 0; k < 4; ++k) t.leaf[k] = jt.at("leaf").at(k).get<double>();
      model.trees.push_back(t);
    }
    FitInfo info{j.at("fit").at("n_train").get<std::size_t>(),
                 j.at("fit").at("seed").get<std::uint64_t>()};
    return GbtCostEstimator(std::move(model), j.at("with_interaction").get<bool>(),
                            j.at("c_bar").get<double>(), info);
  }

 private:
  double raw_predict(double x, double w) const override {
    double feats[3] = {x, w, x * w};
    return model_.predict({feats, with_interaction_ ? 3u : 2u});
  }

  gbt::Model model_;
  bool with_interaction_;
  FitInfo info_;
};

inline GbtCostEstimator fit_cost_estimator(const Dgp& dgp, const TrainingSample& sample,
                                           const gbt::Config& config = {},
                                           std::uint64_t sample_seed = 0) {
  const std::size_t n_features = dgp_feature_count(dgp);
  std::vector<std::vector<double>> columns(n_features);
  for (auto& col : columns) col.reserve(sample.size());
  double feats[3];
  for (std::size_t s = 0; s < sample.size(); ++s) {
    dgp_features(dgp, sample.x[s], sample.w[s], feats);
    for (std::size_t f = 0; f < n_features; ++f) columns[f].push_back(feats[f]);
  }
  std::vector<double> y(sample.y.begin(), sample.y.end());
  gbt::Model model = gbt::fit(columns, y, config);
  return GbtCostEstimator(std::move(model), n_features == 3, dgp_c_bar(dgp),
                          FitInfo{sample.size(), sample_seed});
}

// Grid-of-cell-means estimator; trivially verifiable, used as a second
// route in tests.
class BinnedMeanEstimator : public CostEstimator {
 public:
  BinnedMeanEstimator(const TrainingSample& sample, std::size_t bins, double c_bar)
      : CostEstimator(c_bar), bins_(bins == 0 ? 1 : bins) {
    const auto [x_lo, x_hi] = std::minmax_element(sample.x.begin(), sample.x.end());
    const auto [w_lo, w_hi] = std::minmax_element(sample.w.begin(), sample.w.end());
    x_min_ = *x_lo;
    x_max_ = *x_hi;
    w_min_ = *w_lo;
    w_max_ = *w_hi;
    sums_.assign(bins_ * bins_, 0.0);
    counts_.assign(bins_ * bins_, 0);
    double total = 0.0;
    for (std::size_t s = 0; s < sample.size(); ++s) {
      const std::size_t cell = cell_of(sample.x[s], sample.w[s]);
      sums_[cell] += sample.y[s];
      counts_[cell] += 1;
      total += sample.y[s];
    }
    global_mean_ = total / static_cast<double>(sample.size());
  }

  std::string kind() const override { return "binned-mean"; }

  nlohmann::json to_json() const override {
    return {{"format", "matchopt-cost-estimator"},
            {"version", 1},
            {"kind", kind()},
            {"c_bar", c_bar()},
            {"bins", bins_},
            {"range", {x_min_, x_max_, w_min_, w_max_}},
            {"global_mean", global_mean_},
            {"sums", sums_},
            {"counts", counts_}};
  }

 private:
  double raw_predict(double x, double w) const override {
    const std::size_t cell = cell_of(x, w);
    if (counts_[cell] == 0) return global_mean_;
    return sums_[cell] / static_cast<double>(counts_[cell]);
  }

  std::size_t axis_bin(double v, double lo, double hi) const {
    if (hi <= lo) return 0;
    const double t = (v - lo) / (hi - lo);
    const auto b = static_cast<long>(t * static_cast<double>(bins_));
    return static_cast<std::size_t>(std::clamp<long>(b, 0, static_cast<long>(bins_) - 1));
  }
  std::size_t cell_of(double x, double w) const {
    return axis_bin(x, x_min_, x_max_) * bins_ + axis_bin(w, w_min_, w_max_);
  }

  std::size_t bins_;
  double x_min_, x_max_, w_min_, w_max_;
  double global_mean_ = 0.0;
  std::vector<double> sums_;
  std::vector<std::size_t> counts_;
};

// Wraps an arbitrary surface as an estimator (oracle injection and
// test doubles).
class FunctionCostEstimator : public CostEstimator {
 public:
  template <typename F>
  FunctionCostEstimator(F fn, double c_bar)
      : CostEstimator(c_bar), fn_(std::move(fn)) {}

  std::string kind() const override { return "function"; }
  nlohmann::json to_json() const override {
    throw InvalidInput("FunctionCostEstimator: not serializable");
  }

 private:
  double raw_predict(double x, double w) const override { return fn_(x, w); }
  std::function<double(double, double)> fn_;
};

struct ErrorReport {
  double l1 = 0.0;
  double l2 = 0.0;
  double l1_se = 0.0;
  double l2_se = 0.0;
  std::size_t draws = 0;
};

// Monte Carlo L1/L2 errors of the estimator against the true cost over
// the product of the DGP marginals, with standard errors. Stream order
// per draw: u_x, u_w.
inline ErrorReport estimator_error(const CostEstimator& est, const Dgp& dgp,
                                   std::size_t mc_draws, std::uint64_t seed) {
  if (mc_draws == 0) throw InvalidInput("estimator_error: mc_draws must be >= 1");
  Rng rng(seed);
  double abs_sum = 0.0, abs_sq_sum = 0.0, sq_sum = 0.0, sq_sq_sum = 0.0;
  for (std::size_t k = 0; k < mc_draws; ++k) {
    const double x = dgp_quantile_x(dgp, rng.next_uniform());
    const double w = dgp_quantile_w(dgp, rng.next_uniform());
    const double diff = est.predict(x, w) - dgp_cost(dgp, x, w);
    const double a = std::fabs(diff);
    abs_sum += a;
    abs_sq_sum += a * a;
    sq_sum += diff * diff;
    sq_sq_sum += diff * diff * diff * diff;
  }
  const double m = static_cast<double>(mc_draws);
  ErrorReport report;
  report.draws = mc_draws;
  report.l1 = abs_sum / m;
  const double var_abs = std::max(0.0, abs_sq_sum / m - report.l1 * report.l1);
  report.l1_se = std::sqrt(var_abs / m);
  const double mean_sq = sq_sum / m;
  report.l2 = std::sqrt(mean_sq);
  const double var_sq = std::max(0.0, sq_sq_sum / m - mean_sq * mean_sq);
  const double se_mean_sq = std::sqrt(var_sq / m);
  report.l2_se = report.l2 > 0.0 ? se_mean_sq / (2.0 * report.l2) : 0.0;
  return report;
}

}  // namespace matchopt
