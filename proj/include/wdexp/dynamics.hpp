#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "wdexp/trainer.hpp"

namespace wdexp {

// Index k holds time t = k - 1: R and eta cover t = -1..n, D and C cover t = -1..n-1.
struct NormSeries {
  std::vector<double> R, D, C, eta, lambda;
  double gamma = 0.0;

  std::int64_t steps() const { return static_cast<std::int64_t>(R.size()) - 2; }
  double r(std::int64_t t) const { return R.at(static_cast<std::size_t>(t + 1)); }
  double d(std::int64_t t) const { return D.at(static_cast<std::size_t>(t + 1)); }
  double c(std::int64_t t) const { return C.at(static_cast<std::size_t>(t + 1)); }
  double lr(std::int64_t t) const { return eta.at(static_cast<std::size_t>(t + 1)); }
  double wd(std::int64_t t) const { return lambda.at(static_cast<std::size_t>(t + 1)); }
};

NormSeries norm_series(const Trajectory& traj);

struct ResidualReport {
  std::vector<double> residual;  // per t
  double max_abs = 0.0;
  double scale = 0.0;  // tolerance reference
  double tol = 0.0;
  bool pass = true;
  nlohmann::json to_json() const;
};

// (R_{t+1}-R_t)/eta_t - gamma(R_t-R_{t-1})/eta_{t-1} - D_t/eta_t - gamma D_{t-1}/eta_{t-1} + 2 lambda_t R_t.
ResidualReport check_norm_recursion(const NormSeries& s);

struct MonotoneReport {
  double worst_margin = 0.0;  // min over t of (R_{t+1}-R_t) - gamma^{t+1}(eta_t/eta_0)(R_0-R_{-1}), relative to max R
  bool inequality_ok = true;
  bool constant_lr = false;
  double cumulative_max_rel_err = 0.0;  // only when constant_lr
  bool cumulative_ok = true;
  bool pass = true;
  nlohmann::json to_json() const;
};

// Requires lambda == 0 throughout.
MonotoneReport check_monotone_growth(const NormSeries& s);

struct EquilibriumReport {
  double ratio = 0.0;        // mean D / mean R after burn-in
  double theoretical = 0.0;  // 2 eta lambda / (1 + gamma)
  double rel_err = 0.0;
  std::int64_t burn_in = 0;
  bool pass = false;
  nlohmann::json to_json() const;
};

// burn_in < 0 selects the default of 20% of the run. Requires constant eta, lambda.
EquilibriumReport estimate_equilibrium(const NormSeries& s, std::int64_t burn_in = -1);

// R_t vs (1 - lambda eta)^2 R_{t-1} + eta^2 |grad L_{t-1}|^2 for gamma = 0.
ResidualReport check_pythagorean(const Trajectory& traj);

struct DecreaseAudit {
  std::int64_t late_start = 0;
  double fraction_holds = 0.0;       // whole run
  double late_fraction_fails = 0.0;  // over the late window
  double late_log_norm_slope = 0.0;  // per step
  bool collapsing = false;           // slope below -lambda eta / 2
  bool consistent = true;            // collapsing, or the condition fails somewhere late
  nlohmann::json to_json() const;
};

// Sufficient-decrease condition f(theta_{t+1}) - f(theta_t) <= -c eta |grad|^2; the late window is the second half.
// Meaningful for deterministic objectives, where the recorded loss is the same function at every t.
DecreaseAudit sufficient_decrease_audit(const Trajectory& traj, double c);

}  // namespace wdexp
