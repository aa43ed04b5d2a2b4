#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "wdexp/scaleinv.hpp"

namespace wdexp {

// Last-layer fine-tuning model: x ~ N(0, I_m), y = sgn(x_1), logistic loss.
enum class Regime { wd_only, bn_only, bn_wd };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);

struct ToyConfig {
  int m = 20;
  int B = 64;
  double eta = 0.1;
  double lambda = 0.01;
  double eps = 0.01;   // angle threshold, radians
  double delta = 0.1;  // failure probability
  std::int64_t T0 = 0;
  double init_norm = 1.0;
  bool population = false;  // exact expected gradient instead of sampled batches
  std::vector<std::uint64_t> seeds{1};

  void validate() const;
  static ToyConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct ToyRecord {
  std::int64_t t = 0;
  double angle = 0.0;       // angle(e1, w_t)
  double norm = 0.0;        // |w_t|
  double error = 0.0;       // angle / pi
  double step_angle = 0.0;  // angle(w_t, w_{t+1}); 0 for the last record
  double orth_residual = 0.0;  // |(w_{t+1} - (1-lambda eta) w_t)' w_t| / (|update| |w_t|); rounding-level when normalized
  double pyth_residual = 0.0;  // relative error of |w_{t+1}|^2 = (1-lambda eta)^2 |w_t|^2 + |update|^2
};

struct ToyRun {
  Regime regime = Regime::bn_wd;
  std::vector<ToyRecord> records;  // t = 0..steps

  double max_orth_residual() const;
  double max_pyth_residual() const;
  // Least-squares slope of |w_t|^4 against t.
  double norm4_slope() const;
};

// The SGD iteration for one regime; batches come from rng_stream(seed, t).
class ToySim {
 public:
  ToySim(Regime regime, const ToyConfig& cfg, Vec w0, std::uint64_t seed);
  std::int64_t t() const { return t_; }
  const Vec& w() const { return w_; }
  // Advances one step and returns the record of the state it left (step_angle and residuals filled in).
  ToyRecord step();
  ToyRecord current() const;

 private:
  Vec gradient() const;

  Regime regime_;
  ToyConfig cfg_;
  Vec w_;
  std::uint64_t seed_;
  std::int64_t t_ = 0;
};

// Unit vector at angle `angle` from e1 in a seeded random direction, scaled to `norm`.
Vec toy_init(int m, double angle, double norm, std::uint64_t seed);

ToyRun run_case(Regime regime, const ToyConfig& cfg, const Vec& w0, std::int64_t steps, std::uint64_t seed);

double angle_to_e1(const Vec& w);

struct EscapeBudget {
  double T1 = 0.0;
  double T2 = 0.0;
  double total() const { return T1 + T2; }
};

// T1 = ln(64 |w|^2 eps sqrt(B) / (eta sqrt(m-2))) / (2(eta lambda - 2 eps^2)), 0 when the log argument is <= 1;
// T2 = 9 ln(1/delta).
EscapeBudget escape_budget(const ToyConfig& cfg, double norm_at_T0);

struct EscapeReport {
  int trials = 0;
  int escaped = 0;
  int wide_step = 0;  // trials with angle(w_t, w_{t+1}) > 2 eps inside the window
  double fraction = 0.0;
  double wide_step_fraction = 0.0;
  double required = 0.0;  // 1 - delta - 3 sqrt(delta(1-delta)/trials)
  double mean_budget = 0.0;
  std::vector<std::int64_t> first_exit;  // iterations after T0, -1 if none
  bool mechanism_active = true;           // false when lambda = 0
  bool pass = false;
  nlohmann::json to_json() const;
};

// One bn_wd run per seed, started at angle eps/2 inside the cone.
EscapeReport escape_experiment(const ToyConfig& cfg, int trials);

struct ChiSquareReport {
  int k = 0;
  double beta = 0.0;
  std::int64_t samples = 0;
  double estimate = 0.0;
  double sigma = 0.0;
  double bound = 0.0;  // (beta e^{1-beta})^{k/2}
  bool pass = false;
  nlohmann::json to_json() const;
};

ChiSquareReport chi_square_tail_check(int k, double beta, std::int64_t samples, std::uint64_t seed = 1);

void write_toy_csv(std::ostream& os, const ToyRun& run, const std::string& header = {});

}  // namespace wdexp
