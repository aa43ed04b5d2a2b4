#include "wdexp/trainer.hpp"

#include <cmath>
#include <fmt/format.h>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>

#include "wdexp/errors.hpp"
#include "wdexp/format.hpp"

namespace wdexp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct StepPlan {
  double log_lr;  // true (unstabilized) LR of this step
  double rho;
  double lambda;
};

struct LoopHooks {
  std::function<StepPlan(std::int64_t)> plan;
  std::function<void(std::int64_t, TrainState&)> before_step;  // may be empty
  std::function<double(std::int64_t)> log_p;                   // may be empty
};

// The shared recursion. `st` holds stabilized coordinates: theta scaled by e^s, LRs by e^{2s}.
Trajectory run_loop(const RunConfig& cfg, TrainState st, double gamma, double log_lr_minus1, const LoopHooks& h) {
  const Objective& obj = *cfg.objective;
  Trajectory traj;
  traj.gamma = gamma;
  traj.log_lr_minus1 = log_lr_minus1;
  traj.log_norm_minus1 = std::log(st.theta_buf.norm());
  traj.records.resize(static_cast<std::size_t>(cfg.steps + 1));
  double s = 0.0;
  const double target = std::log(st.theta.norm());

  auto& r0 = traj.records[0];
  r0.update_norm = (st.theta - st.theta_buf).norm();
  r0.inner_prev = st.theta_buf.dot(st.theta - st.theta_buf);

  for (std::int64_t t = 0; t <= cfg.steps; ++t) {
    auto& rec = traj.records[static_cast<std::size_t>(t)];
    const Batch batch = obj.batch(t);
    const Vec g = obj.grad(st.theta, batch);
    const double norm = st.theta.norm();
    rec.t = t;
    rec.log_norm = std::log(norm) - s;
    if (cfg.record_directions) rec.direction = st.theta / norm;
    rec.loss = obj.loss(st.theta, batch);
    rec.grad_norm = std::exp(s) * g.norm();
    rec.log_p = h.log_p ? h.log_p(t) : 0.0;
    if (t == cfg.steps) {
      rec.log_lr = kNaN;
      rec.lambda = kNaN;
      break;
    }

    const StepPlan plan = h.plan(t);
    rec.log_lr = plan.log_lr;
    rec.lambda = plan.lambda;
    if (h.before_step) h.before_step(t, st);
    const double lr = std::exp(2.0 * s + plan.log_lr);
    Vec next = momentum_update(st, plan.rho, gamma, lr, g);
    if (!next.allFinite() || next.norm() == 0.0 || !std::isfinite(lr))
      throw NumericalBlowup(t, fmt::format("non-finite or zero parameters after step {}", t));

    auto& nrec = traj.records[static_cast<std::size_t>(t + 1)];
    const Vec delta = next - st.theta;
    nrec.update_norm = delta.norm() * std::exp(-s);
    nrec.inner_prev = st.theta.dot(delta) * std::exp(-2.0 * s);

    st.theta_buf = std::move(st.theta);
    st.theta = std::move(next);
    st.eta = lr;
    st.eta_buf = lr;

    if (cfg.stabilize_every > 0 && (t + 1) % cfg.stabilize_every == 0) {
      auto stab = stabilize(st, target);
      st = std::move(stab.state);
      s += stab.log_c;
    }
  }
  traj.log_scale = s;
  return traj;
}

Vec theta_minus1(const RunConfig& cfg, double eta_minus1) {
  if (cfg.init_v.size() == 0) return cfg.init_theta;
  return cfg.init_theta - cfg.init_v * eta_minus1;
}

}  // namespace

void RunConfig::validate(bool needs_schedule) const {
  if (!objective) throw ConfigError("run config has no objective");
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (init_theta.size() != objective->dim())
    throw DimensionMismatch(fmt::format("init_theta has dim {}, objective {}", init_theta.size(), objective->dim()));
  if (init_theta.norm() == 0.0) throw ConfigError("init_theta must be nonzero");
  if (init_v.size() != 0 && init_v.size() != init_theta.size()) throw DimensionMismatch("init_v dimension");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must be in [0,1)");
  if (stabilize_every < 0) throw ConfigError("stabilize_every must be >= 0");
  if (needs_schedule) {
    if (static_cast<std::int64_t>(eta.size()) < std::max<std::int64_t>(steps, 1) ||
        static_cast<std::int64_t>(lambda.size()) < steps)
      throw ConfigError("schedule shorter than the run");
  }
}

RunConfig make_run(ObjectivePtr obj, const ScheduleSpec& spec, Vec init_theta, std::int64_t steps) {
  RunConfig cfg;
  cfg.objective = std::move(obj);
  cfg.eta = spec.etas();
  cfg.lambda = spec.lambdas();
  cfg.gamma = spec.gamma;
  cfg.init_theta = std::move(init_theta);
  cfg.steps = steps;
  return cfg;
}

Trajectory run_sgd_wd(const RunConfig& cfg) {
  cfg.validate(true);
  const double eta_m1 = cfg.eta.front();  // eta_{-1} = eta_0
  TrainState st = TrainState::four(cfg.init_theta, eta_m1, theta_minus1(cfg, eta_m1), eta_m1);
  LoopHooks h;
  h.plan = [&](std::int64_t t) {
    const auto i = static_cast<std::size_t>(t);
    return StepPlan{std::log(cfg.eta[i]), 1.0 - cfg.eta[i] * cfg.lambda[i], cfg.lambda[i]};
  };
  return run_loop(cfg, std::move(st), cfg.gamma, std::log(eta_m1), h);
}

Trajectory run_sgd_exp(const RunConfig& cfg, const TranslatedSchedule& sched, const ExpOptions& opt) {
  cfg.validate(false);
  if (sched.size() < cfg.steps) throw ConfigError("translated schedule shorter than the run");
  if (sched.size() == 0) throw ConfigError("translated schedule is empty");
  // (theta~_0, theta~_{-1}, eta~_{-1}) = (P_0 theta_0, P_{-1} theta_{-1}, P_{-1} P_0 eta_{-1}).
  const double eta_m1 = sched.eta.front();
  const double log_eta_m1 = sched.log_eta_tilde(-1);
  TrainState st = TrainState::four(std::exp(sched.log_p(0)) * cfg.init_theta, std::exp(log_eta_m1),
                                   std::exp(sched.log_p(-1)) * theta_minus1(cfg, eta_m1), std::exp(log_eta_m1));
  LoopHooks h;
  h.plan = [&](std::int64_t t) {
    double l = sched.log_eta_tilde(t);
    for (const auto& [pt, factor] : opt.perturb)
      if (pt == t) l += std::log(factor);
    return StepPlan{l, 1.0, 0.0};
  };
  if (opt.apply_corrections && !sched.corrections.empty()) {
    h.before_step = [&](std::int64_t t, TrainState& s) {
      if (const auto* c = sched.correction_at(t)) s = build_Ht(c->alpha_t, c->alpha_next, c->eta_prev, c->eta_cur)(s);
    };
  }
  h.log_p = [&](std::int64_t t) { return sched.log_p(t); };
  auto traj = run_loop(cfg, std::move(st), sched.gamma, log_eta_m1, h);
  traj.exponential = true;
  return traj;
}

Stabilized stabilize(const TrainState& s, double target_lognorm) {
  const double log_c = target_lognorm - std::log(s.theta.norm());
  if (log_c == 0.0) return {s, 0.0};
  const double c = std::exp(log_c);
  return {s.has_buffer() ? equivalent_scaling(c)(s) : equivalent_scaling2(c)(s), log_c};
}

nlohmann::json EquivalenceReport::to_json(bool with_series) const {
  nlohmann::json j{{"max_one_minus_cos", max_one_minus_cos},
                   {"max_log_norm_dev", max_log_norm_dev},
                   {"worst_t", worst_t},
                   {"pass", pass},
                   {"steps", static_cast<std::int64_t>(one_minus_cos.size()) - 1}};
  if (with_series) {
    j["one_minus_cos"] = one_minus_cos;
    j["log_norm_dev"] = log_norm_dev;
  }
  return j;
}

EquivalenceReport verify_equivalence(const Trajectory& a, const Trajectory& b, const std::vector<double>& log_p,
                                     const EquivalenceTolerance& tol) {
  if (a.records.size() != b.records.size())
    throw LengthMismatch(fmt::format("trajectories have {} and {} records", a.records.size(), b.records.size()));
  if (!log_p.empty() && log_p.size() < a.records.size()) throw LengthMismatch("log P series shorter than trajectories");
  EquivalenceReport r;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const auto& ra = a.records[i];
    const auto& rb = b.records[i];
    if (ra.direction.size() == 0 || rb.direction.size() == 0)
      throw std::invalid_argument("verify_equivalence needs recorded directions");
    // 1 - cos = |u - v|^2 / 2 for unit vectors; avoids cancellation near 1.
    const double omc = 0.5 * (ra.direction - rb.direction).squaredNorm();
    const double lp = log_p.empty() ? rb.log_p : log_p[i];
    const double dev = std::abs(rb.log_norm - ra.log_norm - lp);
    r.one_minus_cos.push_back(omc);
    r.log_norm_dev.push_back(dev);
    const double grow = tol.grow_with_t ? 1.0 + static_cast<double>(ra.t) / 100.0 : 1.0;
    const bool ok = omc <= tol.direction * grow && dev <= tol.log_norm * grow;
    if (!ok && r.pass) {
      r.pass = false;
      r.worst_t = ra.t;
    }
    r.max_one_minus_cos = std::max(r.max_one_minus_cos, omc);
    r.max_log_norm_dev = std::max(r.max_log_norm_dev, dev);
  }
  return r;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj, const Trajectory* ref, const std::string& header) {
  std::istringstream in(header);
  for (std::string line; std::getline(in, line);) os << "# " << line << '\n';
  os << "t,log_norm,dir_cos_ref,loss,grad_norm,update_norm,lr_effective_log\n";
  for (std::size_t i = 0; i < traj.records.size(); ++i) {
    const auto& r = traj.records[i];
    double cosv = kNaN;
    const Vec* other = nullptr;
    if (ref && i < ref->records.size()) other = &ref->records[i].direction;
    else if (!traj.records.empty()) other = &traj.records[0].direction;
    if (other && other->size() == r.direction.size() && r.direction.size() > 0) cosv = r.direction.dot(*other);
    os << r.t << ',' << num(r.log_norm) << ',' << num(cosv) << ',' << num(r.loss) << ',' << num(r.grad_norm) << ','
       << num(r.update_norm) << ',' << num(r.log_lr - 2.0 * r.log_norm) << '\n';
  }
}

}  // namespace wdexp
