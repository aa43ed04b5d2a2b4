#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <random>
#include <sstream>

#include "wdexp/errors.hpp"
#include "wdexp/lrsched.hpp"
#include "wdexp/schedule_io.hpp"

using namespace wdexp;

namespace {

// Larger root of x^2 - (1 + g - le) x + g by bisection on [sqrt(g), 1] in long double.
long double z1_oracle(long double g, long double le) {
  auto f = [&](long double x) { return x * x - (1 + g - le) * x + g; };
  if (le == 0) return 1;
  boost::math::tools::eps_tolerance<long double> tol(60);
  auto [lo, hi] = boost::math::tools::bisect(f, std::sqrt(g), 1.0L, tol);
  return (lo + hi) / 2;
}

ScheduleSpec two_phase(double wd = 0.0005) {
  ScheduleSpec s;
  s.kind = ScheduleKind::step_decay;
  s.gamma = 0.9;
  s.T = 200;
  s.phases = {{0, 0.1, wd}, {100, 0.01, wd}};
  return s;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST_CASE("quadratic roots: closed cases") {
  auto r = solve_quadratic(0.0, 0.01, 1.0);
  CHECK(r.z1 == doctest::Approx(0.99).epsilon(1e-15));
  CHECK(r.z2 == 0.0);
  r = solve_quadratic(0.9, 0.0, 0.1);
  CHECK(r.z1 == 1.0);
  CHECK(r.z2 == doctest::Approx(0.9).epsilon(1e-15));
}

TEST_CASE("quadratic roots: standard hyperparameters against bisection") {
  const auto r = solve_quadratic(0.9, 0.0005, 0.1);
  const auto z = z1_oracle(0.9L, 0.00005L);
  CHECK(std::abs(r.z1 - static_cast<double>(z)) < 1e-14);
  CHECK(r.z1 == doctest::Approx(0.9994978).epsilon(1e-7));
}

TEST_CASE("quadratic roots: Vieta identities on random feasible inputs") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const double g = 0.999 * u(rng);
    const double cap = (1 - std::sqrt(g)) * (1 - std::sqrt(g));
    const double eta = 0.01 + u(rng);
    const double lam = u(rng) * cap / eta;
    const auto r = solve_quadratic(g, lam, eta);
    REQUIRE(r.z1 >= r.z2);
    CHECK(std::abs(r.z1 * r.z2 - g) <= 1e-12 * std::max(g, 1e-300) + 1e-300);
    CHECK(std::abs(r.z1 + r.z2 - (1 + g - lam * eta)) <= 1e-12 * (1 + g));
    CHECK(r.z2 >= g * (1 - 1e-12));
    CHECK(r.z1 <= 1.0);
  }
}

TEST_CASE("quadratic roots: monotone in lambda eta") {
  double z1 = 1.0, z2 = 0.0;
  const double cap = std::pow(1 - std::sqrt(0.81), 2);
  for (int k = 0; k <= 100; ++k) {
    const auto r = solve_quadratic(0.81, cap * k / 100.0, 1.0);
    CHECK(r.z1 <= z1);
    CHECK(r.z2 >= z2);
    z1 = r.z1;
    z2 = r.z2;
  }
  CHECK(z1 == doctest::Approx(0.9).epsilon(1e-6));  // double root sqrt(gamma)
}

TEST_CASE("quadratic roots: infeasible") {
  CHECK_THROWS_AS(solve_quadratic(0.9, 0.1, 0.1), InfeasibleRoots);
  HyperParams hp{0.9, 0.1, 0.1};
  CHECK_FALSE(hp.feasible());
  CHECK_THROWS_AS(translate_constant(hp, 10), InfeasibleRoots);
}

TEST_CASE("constant translation") {
  SUBCASE("no weight decay") {
    const auto s = translate_constant({0.0, 0.0, 0.1}, 5);
    for (int t = 0; t < 5; ++t) CHECK(s.eta_tilde(t) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(s.corrections.empty());
  }
  SUBCASE("standard hyperparameters") {
    const auto s = translate_constant({0.9, 0.0005, 0.1}, 400);
    const auto a = z1_oracle(0.9L, 0.00005L);
    CHECK(rel(s.eta_tilde(0), static_cast<double>(0.1L / a)) < 1e-13);
    CHECK(s.eta_tilde(0) == doctest::Approx(0.1000502).epsilon(1e-7));
    // P_0 = 1, so log P_t = -t log alpha and eta~_t = P_t P_{t+1} eta0
    CHECK(s.log_p(0) == 0.0);
    for (int t : {1, 17, 399}) CHECK(rel(s.log_p(t), static_cast<double>(-t * std::log(a))) < 1e-12);
    CHECK(rel(s.eta_tilde(17), static_cast<double>(0.1L * std::pow(a, -35.0L))) < 1e-12);
    const double growth = std::exp(s.log_eta_tilde(391) - s.log_eta_tilde(0));
    CHECK(std::abs(growth - 1.481) <= 0.001);
  }
}

TEST_CASE("TEXP step decay") {
  const auto spec = two_phase();
  const auto s = translate_step_decay_texp(spec);
  const auto a0 = z1_oracle(0.9L, 0.00005L), a1 = z1_oracle(0.9L, 0.000005L);
  CHECK(rel(s.eta_tilde(100) / s.eta_tilde(99), static_cast<double>(0.1L / (a0 * a1))) < 1e-12);
  // inside phase 1 the ratio is (alpha*_0)^-2, afterwards (alpha*_1)^-2
  CHECK(rel(s.eta_tilde(50) / s.eta_tilde(49), static_cast<double>(1 / (a0 * a0))) < 1e-12);
  CHECK(rel(s.eta_tilde(150) / s.eta_tilde(149), static_cast<double>(1 / (a1 * a1))) < 1e-12);
  REQUIRE(s.corrections.size() == 1);
  CHECK(s.corrections[0].t == 100);
  CHECK(s.correction_at(100) != nullptr);
  CHECK(s.correction_at(99) == nullptr);

  SUBCASE("single phase matches the constant translation") {
    ScheduleSpec one = spec;
    one.phases.resize(1);
    const auto a = translate_step_decay_texp(one);
    const auto c = translate_constant({0.9, 0.0005, 0.1}, 200);
    for (int t = 0; t < 200; ++t) CHECK(rel(a.eta_tilde(t), c.eta_tilde(t)) < 1e-12);
  }
  SUBCASE("no weight decay returns the raw schedule") {
    const auto z = translate_step_decay_texp(two_phase(0.0));
    for (int t = 0; t < 200; ++t) CHECK(z.eta_tilde(t) == doctest::Approx(t < 100 ? 0.1 : 0.01).epsilon(1e-14));
    for (double a : z.phase_alpha) CHECK(a == 1.0);
  }
  SUBCASE("equal consecutive rates are no transition") {
    ScheduleSpec same = spec;
    same.phases[1].lr = 0.1;
    CHECK(translate_step_decay_texp(same).corrections.empty());
  }
  SUBCASE("infeasible phase is named") {
    ScheduleSpec bad = spec;
    bad.phases[1].wd = 1.0;
    bad.phases[1].lr = 0.1;
    try {
      translate_step_decay_texp(bad);
      FAIL("expected InfeasibleRoots");
    } catch (const InfeasibleRoots& e) {
      CHECK(e.phase == 1);
    }
  }
}

TEST_CASE("TEXP-- skips the instant decay") {
  const auto spec = two_phase();
  const auto a = translate_step_decay_texp(spec);
  const auto b = translate_texp_minus(spec);
  CHECK(rel(a.eta_tilde(100) / b.eta_tilde(100), 0.1) < 1e-12);
  for (int t : {10, 60, 99}) CHECK(rel(a.eta_tilde(t), b.eta_tilde(t)) < 1e-12);
  for (int t : {50, 150}) CHECK(rel(b.eta_tilde(t) / b.eta_tilde(t - 1), a.eta_tilde(t) / a.eta_tilde(t - 1)) < 1e-12);
  CHECK_FALSE(b.interpretation.empty());
}

TEST_CASE("TEXP++ recursion") {
  SUBCASE("no weight decay") {
    const auto s = translate_texppp(std::vector<double>(50, 0.1), std::vector<double>(50, 0.0), 0.9);
    for (int t = 0; t <= 50; ++t) CHECK(s.alpha(t) == 1.0);
    for (int t = 0; t < 50; ++t) CHECK(s.eta_tilde(t) == doctest::Approx(0.1).epsilon(1e-15));
  }
  SUBCASE("hand evaluation of the first steps") {
    const auto s = translate_texppp(std::vector<double>(3000, 0.1), std::vector<double>(3000, 0.0005), 0.9);
    const long double a1 = 1 - 0.1L * 0.0005L;
    const long double a2 = 1 - 0.1L * 0.0005L + 0.9L * (1 - 1 / a1);
    CHECK(std::abs(s.alpha(1) - static_cast<double>(a1)) < 1e-15);
    CHECK(std::abs(s.alpha(2) - static_cast<double>(a2)) < 1e-15);
    CHECK(s.alpha(2) == doctest::Approx(0.9999050).epsilon(1e-7));
    // eta~_t = P_t P_{t+1} eta_t
    for (int t : {0, 1, 2, 500, 2999})
      CHECK(rel(s.eta_tilde(t), std::exp(s.log_p(t) + s.log_p(t + 1)) * 0.1) < 1e-12);
    // geometric approach to z1 at rate at most gamma / z1^2
    const double z = static_cast<double>(z1_oracle(0.9L, 0.00005L));
    CHECK(std::abs(s.alpha(3000) - z) < 1e-13);
    const double bound = 0.9 / (z * z) + 1e-9;
    // stop once |alpha - z1| is small enough that rounding dominates the ratio
    for (int t = 2; std::abs(s.alpha(t - 1) - z) > 1e-6; ++t)
      CHECK(std::abs(s.alpha(t) - z) <= bound * std::abs(s.alpha(t - 1) - z));
  }
  SUBCASE("non-positive alpha") {
    CHECK_THROWS_AS(translate_texppp({1.0, 1.0, 1.0}, {2.0, 2.0, 2.0}, 0.0), NonPositiveAlpha);
    CHECK_THROWS_AS(translate_texppp({0.1, 0.1}, {0.0, 0.0}, 0.9, 0.0, 1.0), NonPositiveAlpha);
  }
  SUBCASE("log domain survives overflow of the linear value") {
    const auto s = translate_texppp(std::vector<double>(20000, 0.1), std::vector<double>(20000, 0.5), 0.0);
    REQUIRE(s.overflowed_at.has_value());
    CHECK(std::isinf(s.eta_tilde(19999)));
    CHECK(std::isfinite(s.log_eta_tilde(19999)));
  }
}

TEST_CASE("cosine translation") {
  const auto s = translate_cosine(0.1, 100, 0.0005, 0.9);
  CHECK(s.eta[0] == 0.1);
  CHECK(s.eta[50] == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(s.size() == 100);
  for (int t = 0; t < s.size(); ++t) {
    CHECK(std::isfinite(s.eta_tilde(t)));
    CHECK(s.eta_tilde(t) > 0.0);
  }
  // extended-precision replay of the recursion
  const long double pi = 3.141592653589793238462643383279502884L;
  auto eta = [&](int t) { return 0.1L * (1 + std::cos(t * pi / 100)) / 2; };
  long double a_prev = 1, log_p = 0;  // log P_0 = -log alpha_{-1} - log alpha_0 = 0
  std::vector<long double> lp{0.0L};
  for (int t = 1; t <= 11; ++t) {
    const long double ratio = t == 1 ? 1 : eta(t - 1) / eta(t - 2);
    const long double a = 1 - eta(t - 1) * 0.0005L + ratio * 0.9L * (1 - 1 / a_prev);
    log_p -= std::log(a);
    lp.push_back(log_p);
    a_prev = a;
  }
  const long double spot = std::exp(lp[10] + lp[11]) * eta(10);
  CHECK(rel(s.eta_tilde(10), static_cast<double>(spot)) < 1e-12);
  CHECK_THROWS_AS(translate_cosine(0.1, 1, 0.0, 0.9), ConfigError);
}

TEST_CASE("alpha bounds") {
  SUBCASE("standard hyperparameters") {
    const auto s = translate_texppp(std::vector<double>(500, 0.1), std::vector<double>(500, 0.0005), 0.9);
    const auto r = alpha_bounds_check(s, 0.0005, 0.1, 0.9);
    CHECK(r.pass);
    CHECK(r.safe_bound_ok);
    CHECK(r.identity_rel_err < 1e-10);
    // the reciprocal bound z1 >= 1/(1+tau) misses by a hair here
    CHECK_FALSE(r.reciprocal_bound_ok);
    CHECK(r.z_min < 1.0 / (1.0 + r.tau));
    CHECK(1.0 / (1.0 + r.tau) - r.z_min < 3e-6);
  }
  SUBCASE("no weight decay") {
    const auto s = translate_texppp(std::vector<double>(20, 0.1), std::vector<double>(20, 0.0), 0.9);
    const auto r = alpha_bounds_check(s, 0.0, 0.1, 0.9);
    CHECK(r.z_min == 1.0);
    CHECK(r.alpha_min == 1.0);
    CHECK(r.alpha_max == 1.0);
  }
  SUBCASE("double root") {
    const double g = 0.81, le = std::pow(1 - std::sqrt(g), 2);
    const auto q = solve_quadratic(g, le, 1.0);
    CHECK(q.z1 == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(q.z2 == doctest::Approx(0.9).epsilon(1e-7));
    const auto s = translate_texppp(std::vector<double>(2000, 1.0), std::vector<double>(2000, le), g);
    CHECK(alpha_bounds_check(s, le, 1.0, g).safe_bound_ok);
  }
  SUBCASE("violation reported at the iteration") {
    const auto s = translate_texppp(std::vector<double>(20, 0.1), std::vector<double>(20, 0.0005), 0.9);
    try {
      alpha_bounds_check(s, 0.0001, 0.1, 0.9);  // z_min above the actual limit
      FAIL("expected BoundViolation");
    } catch (const BoundViolation& e) {
      CHECK(e.t > 0);
    }
  }
}

TEST_CASE("TEXP against TEXP++ deviation envelope") {
  const auto r = texp_texppp_deviation(two_phase());
  CHECK(r.base == doctest::Approx(0.0015).epsilon(1e-12));
  CHECK(r.ratio == doctest::Approx(0.9009).epsilon(1e-4));
  CHECK(r.in_phase_exceedances == 0);
  bool seen = false;
  for (const auto& p : r.points)
    if (p.t == 120) {
      seen = true;
      CHECK(p.deviation <= p.envelope);
    }
  CHECK(seen);
  const auto z = texp_texppp_deviation(two_phase(0.0));
  CHECK(z.max_deviation == 0.0);
}

TEST_CASE("schedule JSON and CSV") {
  const auto spec = two_phase();
  const auto back = schedule_from_json(schedule_to_json(spec));
  CHECK(back.phases.size() == 2);
  CHECK(back.phases[1].start == 100);
  CHECK(back.gamma == 0.9);
  CHECK_THROWS_AS(schedule_from_json(nlohmann::json{{"kind", "step_decay"}, {"gamma", 0.9},
                                                    {"phases", {{{"start", 5}, {"lr", 0.1}, {"wd", 0.0}}}}}),
                  ConfigError);
  std::ostringstream os;
  write_schedule_csv(os, translate(spec), "hello");
  std::istringstream is(os.str());
  std::string l1, l2;
  std::getline(is, l1);
  std::getline(is, l2);
  CHECK(l1 == "# hello");
  CHECK(l2 == "t,eta_tilde,log_eta_tilde,alpha_t,logP_t,correction_flag");
}
