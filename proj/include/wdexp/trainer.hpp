#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wdexp/lrsched.hpp"
#include "wdexp/scaleinv.hpp"
#include "wdexp/statealg.hpp"

namespace wdexp {

struct RunConfig {
  ObjectivePtr objective;
  // WD schedule, per iteration; at least `steps` entries. Ignored by run_sgd_exp.
  std::vector<double> eta, lambda;
  double gamma = 0.0;
  Vec init_theta;
  Vec init_v;  // empty means zero
  std::int64_t steps = 0;
  std::int64_t stabilize_every = 0;  // 0: never
  bool record_directions = true;

  void validate(bool needs_schedule) const;
};

RunConfig make_run(ObjectivePtr obj, const ScheduleSpec& spec, Vec init_theta, std::int64_t steps);

struct TrajectoryRecord {
  std::int64_t t = 0;
  Vec direction;             // unit vector, empty unless recorded
  double log_norm = 0.0;     // log |theta_t|, absolute (stabilization undone)
  double log_lr = 0.0;       // log of the LR applied at step t; NaN for the last record
  double lambda = 0.0;       // WD applied at step t
  double loss = 0.0;         // L_t(theta_t)
  double grad_norm = 0.0;    // |grad L_t(theta_t)|, absolute
  double update_norm = 0.0;  // |theta_t - theta_{t-1}|
  double inner_prev = 0.0;   // theta_{t-1}'(theta_t - theta_{t-1})
  double log_p = 0.0;        // log P_t for exponential runs, 0 otherwise
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;  // t = 0..steps
  double gamma = 0.0;
  double log_norm_minus1 = 0.0;  // log |theta_{-1}|
  double log_lr_minus1 = 0.0;    // log eta_{-1}
  double log_scale = 0.0;        // accumulated stabilization log-scale at the end
  bool exponential = false;
  std::int64_t steps() const { return static_cast<std::int64_t>(records.size()) - 1; }
};

Trajectory run_sgd_wd(const RunConfig& cfg);

struct ExpOptions {
  bool apply_corrections = true;
  // Multiplies eta~_t at these iterations; used to build deliberately wrong runs.
  std::vector<std::pair<std::int64_t, double>> perturb;
};

Trajectory run_sgd_exp(const RunConfig& cfg, const TranslatedSchedule& schedule, const ExpOptions& opt = {});

struct Stabilized {
  TrainState state;
  double log_c = 0.0;
};

// Equivalent scaling by c = exp(target - log|theta|).
Stabilized stabilize(const TrainState& s, double target_lognorm);

struct EquivalenceTolerance {
  double direction = 1e-8;  // on 1 - cos
  double log_norm = 1e-7;
  bool grow_with_t = true;  // multiply by (1 + t/100)
};

struct EquivalenceReport {
  std::vector<double> one_minus_cos;  // per t
  std::vector<double> log_norm_dev;
  double max_one_minus_cos = 0.0;
  double max_log_norm_dev = 0.0;
  std::int64_t worst_t = -1;
  bool pass = true;
  nlohmann::json to_json(bool with_series = true) const;
};

// logP[t] for t = 0..steps; pass an empty vector to use trajB's recorded log_p.
EquivalenceReport verify_equivalence(const Trajectory& a, const Trajectory& b, const std::vector<double>& log_p = {},
                                     const EquivalenceTolerance& tol = {});

// Columns: t, log_norm, dir_cos_ref, loss, grad_norm, update_norm, lr_effective_log.
// dir_cos_ref is the cosine to `ref` at the same t when given, else to the initial direction.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj, const Trajectory* ref = nullptr,
                          const std::string& header = {});

}  // namespace wdexp
