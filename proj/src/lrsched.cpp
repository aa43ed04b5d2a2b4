#include "wdexp/lrsched.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <stdexcept>

#include "wdexp/errors.hpp"

namespace wdexp {

NonPositiveAlpha::NonPositiveAlpha(std::int64_t t, double value)
    : Error(fmt::format("alpha_{} = {:.17g} is not positive", t, value)), t(t), value(value) {}

namespace {

void check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError(fmt::format("gamma {} not in [0,1)", gamma));
}

// log(a) for a close to 1.
double log_near_one(double a) { return std::log1p(a - 1.0); }

std::size_t at(std::int64_t t) { return static_cast<std::size_t>(t + 1); }

// eta_tilde from the stored logs; marks the first non-representable entry.
void fill_linear(TranslatedSchedule& s) {
  s.eta_tilde_v.resize(s.log_eta_tilde_v.size());
  for (std::size_t i = 0; i < s.log_eta_tilde_v.size(); ++i) s.eta_tilde_v[i] = std::exp(s.log_eta_tilde_v[i]);
}

void mark_overflow(TranslatedSchedule& s) {
  s.overflowed_at.reset();
  for (std::size_t i = 0; i < s.eta_tilde_v.size(); ++i) {
    if (!std::isfinite(s.eta_tilde_v[i]) || s.eta_tilde_v[i] == 0.0) {
      s.overflowed_at = static_cast<std::int64_t>(i) - 1;
      for (std::size_t j = i; j < s.eta_tilde_v.size(); ++j)
        s.eta_tilde_v[j] = std::numeric_limits<double>::infinity();
      return;
    }
  }
}

// log P from alpha(-1..n): log P_{-1} = -log alpha_{-1}, log P_t = log P_{t-1} - log alpha_t.
void fill_log_p(TranslatedSchedule& s) {
  s.log_p_v.resize(s.alpha_v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < s.alpha_v.size(); ++i) {
    acc -= log_near_one(s.alpha_v[i]);
    s.log_p_v[i] = acc;
  }
}

void fill_log_eta_tilde(TranslatedSchedule& s) {
  const std::int64_t n = s.size();
  s.log_eta_tilde_v.resize(static_cast<std::size_t>(n + 1));
  for (std::int64_t t = -1; t < n; ++t) {
    const double eta = s.eta[static_cast<std::size_t>(std::max<std::int64_t>(t, 0))];
    s.log_eta_tilde_v[at(t)] = s.log_p(t) + s.log_p(t + 1) + std::log(eta);
  }
}

}  // namespace

void HyperParams::validate() const {
  check_gamma(gamma);
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
  if (!(eta0 > 0.0) || !std::isfinite(eta0)) throw ConfigError("eta0 must be finite and > 0");
}

double HyperParams::feasibility_margin() const {
  const double s = 1.0 - std::sqrt(gamma);
  return lambda * eta0 / (s * s);
}

QuadRoots solve_quadratic(double gamma, double lambda, double eta) {
  if (!std::isfinite(gamma) || !std::isfinite(lambda) || !std::isfinite(eta))
    throw std::invalid_argument("solve_quadratic: non-finite input");
  check_gamma(gamma);
  const double x = lambda * eta;
  if (x < 0.0) throw std::invalid_argument("solve_quadratic: lambda*eta < 0");
  if (x == 0.0) return {1.0, gamma, (1.0 - gamma) * (1.0 - gamma)};

  const double s = std::sqrt(gamma);
  const double lo = (1.0 - s) * (1.0 - s);
  const double hi = (1.0 + s) * (1.0 + s);
  if (x > lo * (1.0 + 1e-12))
    throw InfeasibleRoots(fmt::format("lambda*eta = {:.6g} exceeds (1-sqrt(gamma))^2 = {:.6g}", x, lo));
  // (1+g-x)^2 - 4g factors as (lo - x)(hi - x); no cancellation against 4g.
  const double disc = std::max(0.0, (lo - x) * (hi - x));
  const double b = 1.0 + gamma - x;
  QuadRoots r;
  r.discriminant = disc;
  r.z1 = 0.5 * (b + std::sqrt(disc));
  r.z2 = r.z1 > 0.0 ? gamma / r.z1 : 0.0;
  return r;
}

const char* to_string(TranslationKind k) {
  switch (k) {
    case TranslationKind::exp_const: return "EXP_CONST";
    case TranslationKind::texp: return "TEXP";
    case TranslationKind::texp_minus: return "TEXP_MINUS";
    case TranslationKind::texppp: return "TEXPPP";
  }
  return "?";
}

const Correction* TranslatedSchedule::correction_at(std::int64_t t) const {
  for (const auto& c : corrections)
    if (c.t == t) return &c;
  return nullptr;
}

void ScheduleSpec::validate() const {
  check_gamma(gamma);
  auto check_lr = [](double v) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(fmt::format("learning rate {} must be > 0", v));
  };
  auto check_wd = [](double v) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(fmt::format("weight decay {} must be >= 0", v));
  };
  switch (kind) {
    case ScheduleKind::constant:
      check_lr(eta0);
      check_wd(lambda);
      if (T < 0) throw ConfigError("T must be >= 0");
      break;
    case ScheduleKind::step_decay:
      if (phases.empty()) throw ConfigError("step_decay needs at least one phase");
      if (phases.front().start != 0) throw ConfigError("first phase must start at 0");
      for (std::size_t i = 0; i < phases.size(); ++i) {
        check_lr(phases[i].lr);
        check_wd(phases[i].wd);
        if (i > 0 && phases[i].start <= phases[i - 1].start)
          throw ConfigError("phase starts must be strictly increasing");
      }
      if (T <= phases.back().start) throw ConfigError("T must exceed the last phase start");
      break;
    case ScheduleKind::cosine:
      check_lr(eta0);
      check_wd(lambda);
      if (T < 2) throw ConfigError("cosine schedule needs T >= 2");
      break;
    case ScheduleKind::explicit_seq:
      if (eta_seq.empty()) throw ConfigError("explicit schedule needs eta_seq");
      if (!lambda_seq.empty() && lambda_seq.size() != eta_seq.size())
        throw ConfigError("eta_seq and lambda_seq lengths differ");
      for (double v : eta_seq) check_lr(v);
      for (double v : lambda_seq) check_wd(v);
      break;
  }
}

std::int64_t ScheduleSpec::iterations() const {
  if (kind == ScheduleKind::explicit_seq) return static_cast<std::int64_t>(eta_seq.size());
  return T;
}

std::size_t ScheduleSpec::phase_of(std::int64_t t) const {
  std::size_t i = 0;
  while (i + 1 < phases.size() && phases[i + 1].start <= t) ++i;
  return i;
}

std::vector<double> ScheduleSpec::etas() const {
  const auto n = static_cast<std::size_t>(iterations());
  std::vector<double> out(n);
  switch (kind) {
    case ScheduleKind::constant: std::fill(out.begin(), out.end(), eta0); break;
    case ScheduleKind::step_decay: {
      std::size_t p = 0;
      for (std::size_t t = 0; t < n; ++t) {
        while (p + 1 < phases.size() && phases[p + 1].start <= static_cast<std::int64_t>(t)) ++p;
        out[t] = phases[p].lr;
      }
      break;
    }
    case ScheduleKind::cosine:
      for (std::size_t t = 0; t < n; ++t)
        out[t] = eta0 * (1.0 + std::cos(M_PI * static_cast<double>(t) / static_cast<double>(T))) / 2.0;
      break;
    case ScheduleKind::explicit_seq: out = eta_seq; break;
  }
  return out;
}

std::vector<double> ScheduleSpec::lambdas() const {
  const auto n = static_cast<std::size_t>(iterations());
  std::vector<double> out(n, lambda);
  if (kind == ScheduleKind::step_decay) {
    std::size_t p = 0;
    for (std::size_t t = 0; t < n; ++t) {
      while (p + 1 < phases.size() && phases[p + 1].start <= static_cast<std::int64_t>(t)) ++p;
      out[t] = phases[p].wd;
    }
  } else if (kind == ScheduleKind::explicit_seq) {
    out = lambda_seq.empty() ? std::vector<double>(n, 0.0) : lambda_seq;
  }
  return out;
}

TranslatedSchedule translate_constant(const HyperParams& hp, std::int64_t num_iters) {
  hp.validate();
  if (num_iters < 0) throw ConfigError("num_iters must be >= 0");
  const double a = solve_quadratic(hp.gamma, hp.lambda, hp.eta0).z1;
  const double la = log_near_one(a);

  TranslatedSchedule s;
  s.kind = TranslationKind::exp_const;
  s.gamma = hp.gamma;
  const auto n = static_cast<std::size_t>(num_iters);
  s.eta.assign(n, hp.eta0);
  s.lambda.assign(n, hp.lambda);
  s.phase_alpha = {a};
  // P_t = alpha^{-t}: P_{-1} = alpha, P_0 = 1, so theta~_0 = theta_0.
  s.alpha_v.assign(n + 2, a);
  s.alpha_v[0] = 1.0 / a;
  s.log_p_v.resize(n + 2);
  for (std::int64_t t = -1; t <= num_iters; ++t) s.log_p_v[at(t)] = -static_cast<double>(t) * la;
  s.log_eta_tilde_v.resize(n + 1);
  for (std::int64_t t = -1; t < num_iters; ++t)
    s.log_eta_tilde_v[at(t)] = std::log(hp.eta0) - static_cast<double>(2 * t + 1) * la;
  fill_linear(s);
  mark_overflow(s);
  return s;
}

TranslatedSchedule translate_step_decay_texp(const ScheduleSpec& spec) {
  if (spec.kind != ScheduleKind::step_decay) throw ConfigError("TEXP needs a step_decay schedule");
  spec.validate();
  const std::int64_t n = spec.T;
  const double g = spec.gamma;

  TranslatedSchedule s;
  s.kind = TranslationKind::texp;
  s.gamma = g;
  s.eta = spec.etas();
  s.lambda = spec.lambdas();
  for (std::size_t i = 0; i < spec.phases.size(); ++i) {
    try {
      s.phase_alpha.push_back(solve_quadratic(g, spec.phases[i].wd, spec.phases[i].lr).z1);
    } catch (const InfeasibleRoots& e) {
      throw InfeasibleRoots(fmt::format("phase {} (start {}): {}", i, spec.phases[i].start, e.what()),
                            static_cast<int>(i));
    }
  }

  // alpha_t for t >= 1 is the root of the phase containing t - 1.
  const double a0 = s.phase_alpha.front();
  s.alpha_v.resize(static_cast<std::size_t>(n + 2));
  s.alpha_v[at(-1)] = 1.0 / a0;
  s.alpha_v[at(0)] = a0;
  for (std::int64_t t = 1; t <= n; ++t) s.alpha_v[at(t)] = s.phase_alpha[spec.phase_of(t - 1)];
  s.log_p_v.resize(s.alpha_v.size());
  s.log_p_v[at(-1)] = std::log(a0);
  s.log_p_v[at(0)] = 0.0;
  for (std::int64_t t = 1; t <= n; ++t) s.log_p_v[at(t)] = s.log_p(t - 1) - log_near_one(s.alpha(t));
  fill_log_eta_tilde(s);

  // Linear values by the recurrence itself, so in-phase ratios are exactly alpha*^-2.
  s.eta_tilde_v.resize(static_cast<std::size_t>(n + 1));
  s.eta_tilde_v[at(-1)] = a0 * s.eta[0];
  if (n > 0) s.eta_tilde_v[at(0)] = s.eta[0] / a0;
  std::vector<double> inv_sq;
  for (double a : s.phase_alpha) inv_sq.push_back(1.0 / (a * a));
  for (std::int64_t t = 1; t < n; ++t) {
    const std::size_t p = spec.phase_of(t);
    const double prev = s.eta_tilde_v[at(t - 1)];
    if (p > 0 && spec.phases[p].start == t) {
      const double lr_ratio = spec.phases[p].lr / spec.phases[p - 1].lr;
      s.eta_tilde_v[at(t)] = prev * lr_ratio / (s.phase_alpha[p] * s.phase_alpha[p - 1]);
    } else {
      s.eta_tilde_v[at(t)] = prev * inv_sq[p];
    }
  }
  mark_overflow(s);

  for (std::size_t i = 1; i < spec.phases.size(); ++i) {
    const auto& prev = spec.phases[i - 1];
    const auto& cur = spec.phases[i];
    if (cur.lr == prev.lr && s.phase_alpha[i] == s.phase_alpha[i - 1]) continue;
    s.corrections.push_back({cur.start, s.alpha(cur.start), s.alpha(cur.start + 1), prev.lr, cur.lr});
  }
  return s;
}

TranslatedSchedule translate_texp_minus(const ScheduleSpec& spec) {
  if (spec.kind != ScheduleKind::step_decay) throw ConfigError("TEXP-- needs a step_decay schedule");
  spec.validate();
  // Same alpha*_I, no LR drop: constant LR eta*_0 with WD lambda*_I eta*_I / eta*_0.
  ScheduleSpec flat = spec;
  const double lr0 = spec.phases.front().lr;
  for (auto& p : flat.phases) {
    p.wd = p.wd * p.lr / lr0;
    p.lr = lr0;
  }
  TranslatedSchedule s = translate_step_decay_texp(flat);
  s.kind = TranslationKind::texp_minus;
  s.interpretation = fmt::format("constant LR {:.17g}; WD at phase I is lambda*_I * eta*_I / {:.17g}", lr0, lr0);
  return s;
}

TranslatedSchedule translate_texppp(const std::vector<double>& eta_seq, const std::vector<double>& lambda_seq,
                                    double gamma, double alpha0, double alpha_minus1) {
  check_gamma(gamma);
  if (eta_seq.size() < 2) throw ConfigError("TEXP++ needs at least two iterations");
  if (lambda_seq.size() != eta_seq.size()) throw ConfigError("eta and lambda sequences differ in length");
  if (!(alpha0 > 0.0) || !(alpha_minus1 > 0.0)) throw NonPositiveAlpha(alpha0 > 0.0 ? -1 : 0, std::min(alpha0, alpha_minus1));
  for (double v : eta_seq)
    if (!(v > 0.0)) throw ConfigError("TEXP++ needs strictly positive learning rates");

  TranslatedSchedule s;
  s.kind = TranslationKind::texppp;
  s.gamma = gamma;
  s.eta = eta_seq;
  s.lambda = lambda_seq;
  const auto n = static_cast<std::int64_t>(eta_seq.size());
  s.alpha_v.resize(static_cast<std::size_t>(n + 2));
  s.alpha_v[at(-1)] = alpha_minus1;
  s.alpha_v[at(0)] = alpha0;
  for (std::int64_t t = 1; t <= n; ++t) {
    const auto i = static_cast<std::size_t>(t - 1);
    const double ratio = t == 1 ? 1.0 : eta_seq[i] / eta_seq[i - 1];  // eta_{-1} = eta_0
    const double prev = s.alpha(t - 1);
    const double a = 1.0 - eta_seq[i] * lambda_seq[i] + ratio * gamma * ((prev - 1.0) / prev);
    if (!(a > 0.0)) throw NonPositiveAlpha(t, a);
    s.alpha_v[at(t)] = a;
  }
  fill_log_p(s);
  fill_log_eta_tilde(s);
  fill_linear(s);
  mark_overflow(s);
  return s;
}

TranslatedSchedule translate_cosine(double eta0, std::int64_t T, double lambda, double gamma) {
  ScheduleSpec spec;
  spec.kind = ScheduleKind::cosine;
  spec.eta0 = eta0;
  spec.T = T;
  spec.lambda = lambda;
  spec.gamma = gamma;
  spec.validate();
  return translate_texppp(spec.etas(), spec.lambdas(), gamma);
}

TranslatedSchedule translate(const ScheduleSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case ScheduleKind::constant: return translate_constant({spec.gamma, spec.lambda, spec.eta0}, spec.T);
    case ScheduleKind::step_decay: return translate_step_decay_texp(spec);
    case ScheduleKind::cosine: return translate_cosine(spec.eta0, spec.T, spec.lambda, spec.gamma);
    case ScheduleKind::explicit_seq: return translate_texppp(spec.etas(), spec.lambdas(), spec.gamma);
  }
  throw ConfigError("unknown schedule kind");
}

AlphaBoundsReport alpha_bounds_check(const TranslatedSchedule& schedule, double lambda_max, double eta_max,
                                     double gamma) {
  AlphaBoundsReport r;
  const auto roots = solve_quadratic(gamma, lambda_max, eta_max);
  r.z_min = roots.z1;
  r.alpha_min = std::numeric_limits<double>::infinity();
  r.alpha_max = -r.alpha_min;
  for (std::int64_t t = 0; t <= schedule.size(); ++t) {
    const double a = schedule.alpha(t);
    r.alpha_min = std::min(r.alpha_min, a);
    r.alpha_max = std::max(r.alpha_max, a);
    if (a < r.z_min * (1.0 - 1e-12) || a > 1.0 + 1e-12)
      throw BoundViolation(t, fmt::format("alpha_{} = {:.17g} outside [{:.17g}, 1]", t, a, r.z_min));
  }

  const double x = lambda_max * eta_max;
  r.tau = x / (1.0 - gamma);
  const double k = (1.0 + gamma) / (1.0 - gamma);
  const double root = std::sqrt(std::max(0.0, 1.0 - 2.0 * k * r.tau + r.tau * r.tau));
  const double closed = 2.0 * r.tau / (1.0 + r.tau + root);
  r.one_minus_z1 = 1.0 - r.z_min;
  r.identity_rel_err = closed == 0.0 ? std::abs(r.one_minus_z1) : std::abs(r.one_minus_z1 - closed) / closed;
  r.safe_bound_ok = r.one_minus_z1 <= 2.0 * r.tau * (1.0 + 1e-12);
  r.reciprocal_bound_ok = r.z_min >= 1.0 / (1.0 + r.tau);
  r.pass = r.identity_rel_err <= 1e-10 && r.safe_bound_ok;
  return r;
}

DeviationReport texp_texppp_deviation(const ScheduleSpec& spec) {
  const auto tilde = translate_step_decay_texp(spec);
  const auto hat = translate_texppp(tilde.eta, tilde.lambda, spec.gamma, 1.0, 1.0);

  double lam_max = 0.0, eta_max = 0.0;
  for (const auto& p : spec.phases) {
    lam_max = std::max(lam_max, p.wd);
    eta_max = std::max(eta_max, p.lr);
  }
  const double zmin = solve_quadratic(spec.gamma, lam_max, eta_max).z1;
  DeviationReport rep;
  rep.base = 3.0 * lam_max * eta_max / (1.0 - spec.gamma);
  rep.ratio = spec.gamma / (zmin * zmin);

  for (std::int64_t t = 1; t < tilde.size(); ++t) {
    DeviationPoint pt;
    pt.t = t;
    pt.phase = spec.phase_of(t);
    const std::int64_t start = spec.phases[pt.phase].start;
    pt.transition = pt.phase > 0 && start == t;
    // eta_{t-1}/eta_t cancels: both ratios are (eta_{t-1}/eta_t) alpha_t alpha_{t+1}.
    const double lhat = log_near_one(hat.alpha(t)) + log_near_one(hat.alpha(t + 1));
    const double ltil = log_near_one(tilde.alpha(t)) + log_near_one(tilde.alpha(t + 1));
    pt.deviation = std::abs(std::expm1(lhat - ltil));
    const double k = pt.transition ? 0.0 : static_cast<double>(t - start - 1);
    pt.envelope = rep.base * std::pow(rep.ratio, k);
    const std::int64_t lit_start = pt.transition ? spec.phases[pt.phase - 1].start : start;
    pt.literal_envelope = rep.base * std::pow(rep.ratio, static_cast<double>(t - lit_start - 1));
    pt.exceeds = pt.deviation > pt.envelope;
    if (pt.exceeds) {
      ++rep.exceedances;
      if (!pt.transition) ++rep.in_phase_exceedances;
    }
    if (pt.deviation > pt.literal_envelope) ++rep.literal_exceedances;
    rep.max_deviation = std::max(rep.max_deviation, pt.deviation);
    rep.points.push_back(pt);
  }
  return rep;
}

}  // namespace wdexp
