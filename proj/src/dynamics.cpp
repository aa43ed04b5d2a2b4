#include "wdexp/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "wdexp/errors.hpp"

namespace wdexp {

NormSeries norm_series(const Trajectory& traj) {
  const auto n = traj.steps();
  if (n < 0) throw InsufficientLength("empty trajectory");
  NormSeries s;
  s.gamma = traj.gamma;
  s.R.push_back(std::exp(2.0 * traj.log_norm_minus1));
  s.eta.push_back(std::exp(traj.log_lr_minus1));
  s.lambda.push_back(0.0);
  for (const auto& r : traj.records) {
    s.R.push_back(std::exp(2.0 * r.log_norm));
    // record t carries |theta_t - theta_{t-1}| and theta_{t-1}'(theta_t - theta_{t-1}), i.e. D_{t-1}, C_{t-1}
    s.D.push_back(r.update_norm * r.update_norm);
    s.C.push_back(r.inner_prev);
    if (r.t < n) {
      s.eta.push_back(std::exp(r.log_lr));
      s.lambda.push_back(r.lambda);
    }
  }
  return s;
}

nlohmann::json ResidualReport::to_json() const {
  return {{"max_abs_residual", max_abs}, {"scale", scale}, {"tol", tol}, {"pass", pass}, {"steps", residual.size()}};
}

ResidualReport check_norm_recursion(const NormSeries& s) {
  ResidualReport rep;
  const double g = s.gamma;
  for (std::int64_t t = 0; t < s.steps(); ++t) {
    const double res = (s.r(t + 1) - s.r(t)) / s.lr(t) - g * (s.r(t) - s.r(t - 1)) / s.lr(t - 1) - s.d(t) / s.lr(t) -
                       g * s.d(t - 1) / s.lr(t - 1) + 2.0 * s.wd(t) * s.r(t);
    rep.residual.push_back(res);
    rep.max_abs = std::max(rep.max_abs, std::abs(res));
  }
  rep.scale = *std::max_element(s.R.begin(), s.R.end());
  rep.tol = 1e-9 * rep.scale;
  rep.pass = rep.max_abs <= rep.tol;
  return rep;
}

nlohmann::json MonotoneReport::to_json() const {
  return {{"worst_margin", worst_margin},
          {"inequality_ok", inequality_ok},
          {"constant_lr", constant_lr},
          {"cumulative_max_rel_err", cumulative_max_rel_err},
          {"cumulative_ok", cumulative_ok},
          {"pass", pass}};
}

MonotoneReport check_monotone_growth(const NormSeries& s) {
  for (std::int64_t t = 0; t < s.steps(); ++t)
    if (s.wd(t) != 0.0) throw std::invalid_argument("check_monotone_growth needs lambda = 0");
  MonotoneReport rep;
  const double g = s.gamma;
  const double maxr = *std::max_element(s.R.begin(), s.R.end());
  const double r0diff = s.r(0) - s.r(-1);
  rep.worst_margin = std::numeric_limits<double>::infinity();
  double gp = g;  // gamma^{t+1}
  for (std::int64_t t = 0; t < s.steps(); ++t) {
    const double lower = gp * (s.lr(t) / s.lr(0)) * r0diff;
    rep.worst_margin = std::min(rep.worst_margin, (s.r(t + 1) - s.r(t) - lower) / maxr);
    gp *= g;
  }
  if (s.steps() == 0) rep.worst_margin = 0.0;
  rep.inequality_ok = rep.worst_margin >= -1e-12;

  rep.constant_lr = std::all_of(s.eta.begin(), s.eta.end(), [&](double e) { return e == s.eta.front(); });
  if (rep.constant_lr) {
    // R_{t+1} = R_0 + sum_i (1-g^{t-i+1})/(1-g) (D_i + g D_{i-1}) + g (1-g^{t+1})/(1-g) (R_0 - R_{-1}),
    // summed directly as an independent check of the recursion.
    for (std::int64_t t = 0; t < s.steps(); ++t) {
      double acc = s.r(0);
      for (std::int64_t i = 0; i <= t; ++i) {
        const double w = g == 0.0 ? 1.0 : (1.0 - std::pow(g, static_cast<double>(t - i + 1))) / (1.0 - g);
        acc += w * (s.d(i) + g * s.d(i - 1));
      }
      const double tail = g == 0.0 ? 0.0 : g * (1.0 - std::pow(g, static_cast<double>(t + 1))) / (1.0 - g);
      acc += tail * r0diff;
      rep.cumulative_max_rel_err = std::max(rep.cumulative_max_rel_err, std::abs(acc - s.r(t + 1)) / s.r(t + 1));
    }
    rep.cumulative_ok = rep.cumulative_max_rel_err <= 1e-9;
  }
  rep.pass = rep.inequality_ok && rep.cumulative_ok;
  return rep;
}

nlohmann::json EquilibriumReport::to_json() const {
  return {{"ratio", ratio}, {"theoretical", theoretical}, {"rel_err", rel_err}, {"burn_in", burn_in}, {"pass", pass}};
}

EquilibriumReport estimate_equilibrium(const NormSeries& s, std::int64_t burn_in) {
  const std::int64_t n = s.steps();
  if (burn_in < 0) burn_in = n / 5;
  // With the default 20% burn-in the run is 5 burn-ins long; require at least that.
  if (n < 10 || n < 5 * burn_in)
    throw InsufficientLength(fmt::format("{} steps is too short for burn-in {}", n, burn_in));
  const double eta = s.lr(0), lam = s.wd(0);
  for (std::int64_t t = 0; t < n; ++t)
    if (s.lr(t) != eta || s.wd(t) != lam) throw std::invalid_argument("estimate_equilibrium needs constant eta, lambda");
  EquilibriumReport rep;
  rep.burn_in = burn_in;
  double sd = 0.0, sr = 0.0;
  for (std::int64_t t = burn_in; t < n; ++t) {
    sd += s.d(t);
    sr += s.r(t);
  }
  rep.ratio = sd / sr;
  rep.theoretical = 2.0 * eta * lam / (1.0 + s.gamma);
  if (rep.theoretical == 0.0) {
    rep.rel_err = rep.ratio;
    rep.pass = false;  // no equilibrium to match; reported only
  } else {
    rep.rel_err = std::abs(rep.ratio - rep.theoretical) / rep.theoretical;
    rep.pass = rep.rel_err <= 0.25;
  }
  return rep;
}

ResidualReport check_pythagorean(const Trajectory& traj) {
  if (traj.gamma != 0.0) throw std::invalid_argument("check_pythagorean needs gamma = 0");
  ResidualReport rep;
  const auto n = traj.steps();
  for (std::int64_t t = 1; t <= n; ++t) {
    const auto& prev = traj.records[static_cast<std::size_t>(t - 1)];
    const auto& cur = traj.records[static_cast<std::size_t>(t)];
    const double eta = std::exp(prev.log_lr);
    const double shrink = 1.0 - prev.lambda * eta;
    const double rhs = shrink * shrink * std::exp(2.0 * prev.log_norm) + eta * eta * prev.grad_norm * prev.grad_norm;
    const double lhs = std::exp(2.0 * cur.log_norm);
    const double rel = std::abs(lhs - rhs) / lhs;
    rep.residual.push_back(rel);
    rep.max_abs = std::max(rep.max_abs, rel);
  }
  rep.scale = 1.0;
  rep.tol = 1e-10;
  rep.pass = rep.max_abs <= rep.tol;
  return rep;
}

nlohmann::json DecreaseAudit::to_json() const {
  return {{"late_start", late_start},
          {"fraction_holds", fraction_holds},
          {"late_fraction_fails", late_fraction_fails},
          {"late_log_norm_slope", late_log_norm_slope},
          {"collapsing", collapsing},
          {"consistent", consistent}};
}

DecreaseAudit sufficient_decrease_audit(const Trajectory& traj, double c) {
  const auto n = traj.steps();
  if (n < 4) throw InsufficientLength("sufficient_decrease_audit needs at least 4 steps");
  if (traj.gamma != 0.0) throw std::invalid_argument("sufficient_decrease_audit needs a momentum-free run");
  DecreaseAudit a;
  a.late_start = n / 2;
  std::int64_t holds = 0, late_fail = 0;
  for (std::int64_t t = 0; t < n; ++t) {
    const auto& r = traj.records[static_cast<std::size_t>(t)];
    const auto& nx = traj.records[static_cast<std::size_t>(t + 1)];
    const double eta = std::exp(r.log_lr);
    const bool ok = nx.loss - r.loss <= -c * eta * r.grad_norm * r.grad_norm;
    holds += ok;
    if (t >= a.late_start && !ok) ++late_fail;
  }
  a.fraction_holds = static_cast<double>(holds) / static_cast<double>(n);
  a.late_fraction_fails = static_cast<double>(late_fail) / static_cast<double>(n - a.late_start);

  // Least-squares slope of log|theta_t| over the late window.
  double st = 0, sy = 0, stt = 0, sty = 0, m = 0;
  double lam_eta = 0.0;
  for (std::int64_t t = a.late_start; t <= n; ++t) {
    const auto& r = traj.records[static_cast<std::size_t>(t)];
    const double x = static_cast<double>(t);
    st += x;
    sy += r.log_norm;
    stt += x * x;
    sty += x * r.log_norm;
    m += 1;
    if (t < n) lam_eta = std::max(lam_eta, r.lambda * std::exp(r.log_lr));
  }
  a.late_log_norm_slope = (m * sty - st * sy) / (m * stt - st * st);
  a.collapsing = a.late_log_norm_slope < -0.5 * lam_eta;
  a.consistent = a.collapsing || late_fail > 0;
  return a;
}

}  // namespace wdexp
