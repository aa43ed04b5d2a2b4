#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "wdexp/scaleinv.hpp"

namespace wdexp {

// (theta, eta, theta', eta'). A momentum-free state leaves theta_buf empty.
struct TrainState {
  Vec theta;
  double eta = 0.0;
  Vec theta_buf;
  double eta_buf = 0.0;

  bool has_buffer() const { return theta_buf.size() > 0; }
  static TrainState two(Vec theta, double eta) { return {std::move(theta), eta, Vec(), 0.0}; }
  static TrainState four(Vec theta, double eta, Vec theta_buf, double eta_buf) {
    return {std::move(theta), eta, std::move(theta_buf), eta_buf};
  }
};

class StateMap {
 public:
  enum class Kind { pi1, pi2, pi3, pi4, gd, canon, compose };

  static StateMap pi(int coord, double c);
  static StateMap pi1(double c) { return pi(1, c); }
  static StateMap pi2(double c) { return pi(2, c); }
  static StateMap pi3(double c) { return pi(3, c); }
  static StateMap pi4(double c) { return pi(4, c); }
  // GD^rho_t. Uses `batch` when given, otherwise obj->batch(t). gamma is ignored on 2-coordinate states.
  static StateMap gd(double rho, double gamma, ObjectivePtr obj, std::int64_t t,
                     std::shared_ptr<const Batch> batch = nullptr);
  static StateMap canon();
  // compose({F, G}) applies G first, then F.
  static StateMap compose(std::vector<StateMap> maps);

  Kind kind() const { return kind_; }
  double scale() const { return c_; }
  const std::vector<StateMap>& parts() const { return parts_; }
  std::string describe() const;

  TrainState operator()(const TrainState& s) const;

 private:
  Kind kind_ = Kind::canon;
  double c_ = 1.0;
  double rho_ = 1.0, gamma_ = 0.0;
  std::int64_t t_ = 0;
  ObjectivePtr obj_;
  std::shared_ptr<const Batch> batch_;
  std::vector<StateMap> parts_;
};

inline TrainState apply(const StateMap& m, const TrainState& s) { return m(s); }

// Pi1^c Pi2^{c^2} Pi3^c Pi4^{c^2}; the 2-coordinate version is Pi1^c Pi2^{c^2}.
StateMap equivalent_scaling(double c);
StateMap equivalent_scaling2(double c);

// H_t = Pi2^{a_t eta_{t-1}/eta_t} Pi3^{a_{t+1}} Pi4^{a_{t+1}} N Pi3^{1/a_t} Pi4^{1/a_t} Pi2^{1/a_t} Pi2^{eta_t/eta_{t-1}}.
StateMap build_Ht(double alpha_t, double alpha_t1, double eta_prev, double eta_cur);

// Single momentum step in difference-quotient form; shared by GD maps and the trainer.
// Returns rho theta + lr (gamma (theta - theta')/eta' - g).
Vec momentum_update(const TrainState& s, double rho, double gamma, double lr, const Vec& g);

// Normwise relative difference, max over the four fields.
double state_rel_err(const TrainState& a, const TrainState& b);
nlohmann::json state_to_json(const TrainState& s);

// ---- lemma harness ----

struct LemmaOptions {
  std::uint64_t seed = 1;
  Eigen::Index dim = 10;
  bool negative_control = false;  // use a plain (non-invariant) quadratic
  double tol = 1e-10;
  enum class Coordinates { both, two, four } coords = Coordinates::both;
};

struct LemmaCounterexample {
  int trial = 0;
  double rel_err = 0.0;
  std::string detail;
  nlohmann::json state;
};

struct LemmaReport {
  std::string lemma;
  int trials = 0;
  double max_rel_err = 0.0;
  std::vector<LemmaCounterexample> violations;
  bool ok() const { return violations.empty(); }
  nlohmann::json to_json() const;
};

LemmaReport verify_lemma_gdw(int trials, const LemmaOptions& opt = {});
LemmaReport verify_lemma_commute(int trials, const LemmaOptions& opt = {});
LemmaReport verify_lemma_gdw_momentum(int trials, const LemmaOptions& opt = {});
LemmaReport verify_canonicalization(int trials, const LemmaOptions& opt = {});

// Throws LemmaViolation describing the first counterexample.
void require_ok(const LemmaReport& r);

}  // namespace wdexp
