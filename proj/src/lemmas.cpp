#include <cmath>
#include <fmt/format.h>
#include <random>

#include "wdexp/errors.hpp"
#include "wdexp/lrsched.hpp"
#include "wdexp/statealg.hpp"

namespace wdexp {

namespace {

// Everything a single randomized trial needs, drawn from its own stream.
struct Trial {
  std::mt19937_64 rng;
  ObjectivePtr obj;
  std::shared_ptr<const Batch> batch;

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  double log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }

  // Components in [-1,1], norm rescaled into [0.5, 2].
  Vec vector(Eigen::Index dim) {
    Vec v(dim);
    for (auto& x : v) x = uniform(-1.0, 1.0);
    return v * (uniform(0.5, 2.0) / v.norm());
  }
  TrainState state2(Eigen::Index dim) { return TrainState::two(vector(dim), log_uniform(1e-3, 1.0)); }
  TrainState state4(Eigen::Index dim) {
    return TrainState::four(vector(dim), log_uniform(1e-3, 1.0), vector(dim), log_uniform(1e-3, 1.0));
  }
};

Trial make_trial(const LemmaOptions& opt, std::uint64_t salt, int index) {
  Trial tr{rng_stream(opt.seed ^ (salt * 0x9E3779B97F4A7C15ULL), static_cast<std::uint64_t>(index)), nullptr, nullptr};
  const auto obj_seed = static_cast<std::uint64_t>(tr.rng());
  const Eigen::Index d = opt.dim;
  if (opt.negative_control) {
    tr.obj = std::make_shared<PlainQuadratic>(d, obj_seed);
  } else {
    switch (index % 3) {
      case 0: tr.obj = std::make_shared<NormQuadratic>(d, obj_seed); break;
      case 1: tr.obj = std::make_shared<NormLogistic>(d, 32, obj_seed, NormLogistic::Mode::fixed); break;
      default:
        // d = h * d_in with h = 2 when possible
        if (d % 2 == 0) tr.obj = std::make_shared<TinyNormMlp>(d / 2, 2, 32, obj_seed);
        else tr.obj = std::make_shared<NormQuadratic>(d, obj_seed);
        break;
    }
  }
  tr.batch = std::make_shared<const Batch>(tr.obj->batch(index));
  return tr;
}

void record(LemmaReport& r, const LemmaOptions& opt, int trial, double err, const std::string& detail,
            const TrainState& s) {
  r.max_rel_err = std::max(r.max_rel_err, err);
  if (!(err <= opt.tol)) r.violations.push_back({trial, err, detail, state_to_json(s)});
}

StateMap gd(const Trial& tr, double rho, double gamma) { return StateMap::gd(rho, gamma, tr.obj, 0, tr.batch); }

}  // namespace

nlohmann::json LemmaReport::to_json() const {
  nlohmann::json j{{"lemma", lemma}, {"trials", trials}, {"max_rel_err", max_rel_err}};
  j["violations"] = nlohmann::json::array();
  for (const auto& v : violations)
    j["violations"].push_back({{"trial", v.trial}, {"rel_err", v.rel_err}, {"detail", v.detail}, {"state", v.state}});
  return j;
}

void require_ok(const LemmaReport& r) {
  if (r.ok()) return;
  const auto& v = r.violations.front();
  throw LemmaViolation(fmt::format("{}: trial {} rel err {:.3e} ({}); state {}", r.lemma, v.trial, v.rel_err, v.detail,
                                   v.state.dump()));
}

LemmaReport verify_lemma_gdw(int trials, const LemmaOptions& opt) {
  LemmaReport r{"gdw", trials, 0.0, {}};
  for (int i = 0; i < trials; ++i) {
    auto tr = make_trial(opt, 1, i);
    const double rho = i == 0 ? 1.0 : tr.uniform(0.99, 1.0);
    const auto s = tr.state2(opt.dim);
    const auto lhs = gd(tr, rho, 0.0)(s);
    const auto rhs = StateMap::compose({StateMap::pi2(rho), StateMap::pi1(rho), gd(tr, 1.0, 0.0),
                                        StateMap::pi2(1.0 / rho)})(s);
    record(r, opt, i, state_rel_err(lhs, rhs), fmt::format("rho={:.17g}", rho), s);
  }
  return r;
}

LemmaReport verify_lemma_commute(int trials, const LemmaOptions& opt) {
  using C = LemmaOptions::Coordinates;
  const char* name = opt.coords == C::two ? "commute" : opt.coords == C::four ? "commute_momentum" : "commute+commute_momentum";
  LemmaReport r{name, trials, 0.0, {}};
  for (int i = 0; i < trials; ++i) {
    auto tr = make_trial(opt, 2, i);
    const double c = i == 0 ? 1.0 : tr.log_uniform(0.1, 10.0);
    const double rho = tr.uniform(0.99, 1.0);
    const double gamma = tr.uniform(0.0, 0.95);
    if (opt.coords != C::four) {
      const auto s = tr.state2(opt.dim);
      const auto e = equivalent_scaling2(c);
      const auto lhs = gd(tr, rho, 0.0)(e(s));
      const auto rhs = e(gd(tr, rho, 0.0)(s));
      record(r, opt, i, state_rel_err(lhs, rhs), fmt::format("2-coord c={:.17g} rho={:.17g}", c, rho), s);
    }
    if (opt.coords != C::two) {
      const auto s = tr.state4(opt.dim);
      const auto e = equivalent_scaling(c);
      const auto lhs = gd(tr, rho, gamma)(e(s));
      const auto rhs = e(gd(tr, rho, gamma)(s));
      record(r, opt, i, state_rel_err(lhs, rhs),
             fmt::format("4-coord c={:.17g} rho={:.17g} gamma={:.17g}", c, rho, gamma), s);
    }
  }
  return r;
}

LemmaReport verify_lemma_gdw_momentum(int trials, const LemmaOptions& opt) {
  LemmaReport r{"gdw_momentum", trials, 0.0, {}};
  for (int i = 0; i < trials; ++i) {
    auto tr = make_trial(opt, 3, i);
    const double gamma = i % 2 == 0 ? 0.9 : tr.uniform(0.0, 0.95);
    // Real roots of a + gamma/a = rho + gamma need 1 - rho <= (1 - sqrt(gamma))^2.
    const double edge = (1.0 - std::sqrt(gamma)) * (1.0 - std::sqrt(gamma));
    const double rho = tr.uniform(1.0 - std::min(0.01, edge), 1.0);
    const auto roots = solve_quadratic(gamma, 1.0 - rho, 1.0);
    auto s = tr.state4(opt.dim);
    s.eta_buf = s.eta;  // the lemma assumes eta = eta'
    const auto lhs = gd(tr, rho, gamma)(s);
    for (double a : {roots.z1, roots.z2}) {
      if (!(a > 0.0)) continue;
      const auto core = StateMap::compose({gd(tr, 1.0, gamma), StateMap::pi2(1.0 / a), StateMap::pi3(a),
                                           StateMap::pi4(a)});
      const auto exact = StateMap::compose({StateMap::pi4(a), StateMap::pi2(a), StateMap::pi1(a), core})(s);
      const auto equiv = equivalent_scaling(a)(
          StateMap::compose({StateMap::pi3(1.0 / a), StateMap::pi4(1.0 / a), StateMap::pi2(1.0 / a), core})(s));
      const double err = std::max(state_rel_err(lhs, exact), state_rel_err(lhs, equiv));
      record(r, opt, i, err, fmt::format("alpha={:.17g} rho={:.17g} gamma={:.17g}", a, rho, gamma), s);
    }
  }
  return r;
}

LemmaReport verify_canonicalization(int trials, const LemmaOptions& opt) {
  LemmaReport r{"canonicalization", trials, 0.0, {}};
  for (int i = 0; i < trials; ++i) {
    auto tr = make_trial(opt, 4, i);
    const double rho = tr.uniform(0.99, 1.0);
    const double gamma = tr.uniform(0.0, 0.95);
    const double c = tr.log_uniform(0.1, 10.0);
    auto s = tr.state4(opt.dim);
    if (i == 0) s.eta_buf = s.eta;
    const auto n = StateMap::canon();
    const auto step = gd(tr, rho, gamma);
    const double e1 = state_rel_err(step(n(s)), step(s));
    const auto e = equivalent_scaling(c);
    const double e2 = state_rel_err(n(e(s)), e(n(s)));
    record(r, opt, i, std::max(e1, e2), fmt::format("c={:.17g} rho={:.17g} gamma={:.17g}", c, rho, gamma), s);
  }
  return r;
}

}  // namespace wdexp
