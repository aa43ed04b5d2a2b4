#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace wdexp {

struct HyperParams {
  double gamma = 0.0;
  double lambda = 0.0;
  double eta0 = 0.1;

  void validate() const;
  // lambda*eta0 / (1 - sqrt(gamma))^2; feasible iff <= 1.
  double feasibility_margin() const;
  bool feasible() const { return feasibility_margin() <= 1.0; }
};

struct QuadRoots {
  double z1 = 1.0;  // larger root
  double z2 = 0.0;
  double discriminant = 0.0;
};

// Roots of x^2 - (1 + gamma - lambda*eta) x + gamma = 0.
QuadRoots solve_quadratic(double gamma, double lambda, double eta);

enum class ScheduleKind { constant, step_decay, cosine, explicit_seq };

struct Phase {
  std::int64_t start = 0;
  double lr = 0.1;
  double wd = 0.0;
};

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::constant;
  double gamma = 0.0;
  std::vector<Phase> phases;  // step_decay
  std::int64_t T = 0;         // total iterations (cosine: period)
  double eta0 = 0.1;          // constant, cosine
  double lambda = 0.0;        // constant, cosine
  std::vector<double> eta_seq, lambda_seq;

  void validate() const;
  std::int64_t iterations() const;
  std::vector<double> etas() const;
  std::vector<double> lambdas() const;
  // Index of the phase containing iteration t (step_decay only).
  std::size_t phase_of(std::int64_t t) const;
};

enum class TranslationKind { exp_const, texp, texp_minus, texppp };
const char* to_string(TranslationKind k);

// Momentum correction H_t applied to the buffered coordinates before step t.
struct Correction {
  std::int64_t t = 0;
  double alpha_t = 1.0;
  double alpha_next = 1.0;
  double eta_prev = 1.0;
  double eta_cur = 1.0;
};

// Per-iteration quantities are stored from t = -1. Use the accessors for
// index arithmetic: alpha(t) and log_p(t) cover t = -1..n, eta_tilde(t)
// covers t = -1..n-1, where n = size().
struct TranslatedSchedule {
  TranslationKind kind = TranslationKind::exp_const;
  double gamma = 0.0;
  std::vector<double> eta;     // the WD schedule this is equivalent to, t = 0..n-1
  std::vector<double> lambda;  // same indexing
  std::vector<double> alpha_v;
  std::vector<double> log_p_v;
  std::vector<double> log_eta_tilde_v;
  std::vector<double> eta_tilde_v;  // +inf once past overflowed_at
  std::optional<std::int64_t> overflowed_at;
  std::vector<Correction> corrections;
  std::vector<double> phase_alpha;  // alpha*_I for step-decay kinds
  std::string interpretation;

  std::int64_t size() const { return static_cast<std::int64_t>(eta.size()); }
  double alpha(std::int64_t t) const { return alpha_v.at(static_cast<std::size_t>(t + 1)); }
  double log_p(std::int64_t t) const { return log_p_v.at(static_cast<std::size_t>(t + 1)); }
  double log_eta_tilde(std::int64_t t) const {
    return log_eta_tilde_v.at(static_cast<std::size_t>(t + 1));
  }
  double eta_tilde(std::int64_t t) const { return eta_tilde_v.at(static_cast<std::size_t>(t + 1)); }
  const Correction* correction_at(std::int64_t t) const;
};

TranslatedSchedule translate_constant(const HyperParams& hp, std::int64_t num_iters);
TranslatedSchedule translate_step_decay_texp(const ScheduleSpec& spec);
TranslatedSchedule translate_texp_minus(const ScheduleSpec& spec);
TranslatedSchedule translate_texppp(const std::vector<double>& eta_seq,
                                    const std::vector<double>& lambda_seq, double gamma,
                                    double alpha0 = 1.0, double alpha_minus1 = 1.0);
TranslatedSchedule translate_cosine(double eta0, std::int64_t T, double lambda, double gamma);

// Dispatch on spec.kind: constant -> exp_const, step_decay -> TEXP, cosine/explicit -> TEXP++.
TranslatedSchedule translate(const ScheduleSpec& spec);

struct AlphaBoundsReport {
  double z_min = 1.0;
  double alpha_min = 1.0, alpha_max = 1.0;
  double identity_rel_err = 0.0;  // exact closed form of 1 - z1 vs solver
  double one_minus_z1 = 0.0;
  double tau = 0.0;
  bool safe_bound_ok = true;        // 1 - z1 <= 2 tau
  bool reciprocal_bound_ok = true;  // z1 >= 1/(1 + tau); informative only
  bool pass = true;
};

// Throws BoundViolation(t) at the first alpha_t outside [z_min, 1].
AlphaBoundsReport alpha_bounds_check(const TranslatedSchedule& schedule, double lambda_max,
                                     double eta_max, double gamma);

struct DeviationPoint {
  std::int64_t t = 0;
  std::size_t phase = 0;
  bool transition = false;  // t == T_I for some I >= 1
  double deviation = 0.0;
  double envelope = 0.0;
  double literal_envelope = 0.0;  // exponent t - T_I - 1 with t in (T_I, T_{I+1}]
  bool exceeds = false;
};

struct DeviationReport {
  std::vector<DeviationPoint> points;
  double base = 0.0;   // 3 lambda_max eta_max / (1 - gamma)
  double ratio = 0.0;  // gamma / z_min^2
  std::size_t exceedances = 0;          // in-phase + transition, against `envelope`
  std::size_t in_phase_exceedances = 0;
  std::size_t literal_exceedances = 0;
  double max_deviation = 0.0;
  bool pass() const { return exceedances == 0; }
};

DeviationReport texp_texppp_deviation(const ScheduleSpec& spec);

}  // namespace wdexp
