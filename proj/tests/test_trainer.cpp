#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "wdexp/errors.hpp"
#include "wdexp/trainer.hpp"

using namespace wdexp;

namespace {

ScheduleSpec constant(double eta, double lambda, double gamma, std::int64_t T) {
  ScheduleSpec s;
  s.kind = ScheduleKind::constant;
  s.eta0 = eta;
  s.lambda = lambda;
  s.gamma = gamma;
  s.T = T;
  return s;
}

ScheduleSpec three_phase(std::int64_t T = 300) {
  ScheduleSpec s;
  s.kind = ScheduleKind::step_decay;
  s.gamma = 0.9;
  s.T = T;
  s.phases = {{0, 0.1, 0.0005}, {100, 0.01, 0.0005}, {200, 0.001, 0.0005}};
  return s;
}

double max_dir_err(const Trajectory& a, const Trajectory& b) {
  double e = 0.0;
  for (std::size_t t = 0; t < a.records.size(); ++t)
    e = std::max(e, 1.0 - a.records[t].direction.dot(b.records[t].direction));
  return e;
}

}  // namespace

TEST_CASE("stationary point gives a constant trajectory") {
  Mat a = Mat::Zero(3, 3);
  a.diagonal() << 1.0, 2.0, 3.0;
  auto obj = std::make_shared<NormQuadratic>(a);
  Vec e = Vec::Zero(3);
  e(1) = 1.0;
  const auto tr = run_sgd_wd(make_run(obj, constant(0.1, 0.0, 0.0, 10), e, 10));
  REQUIRE(tr.records.size() == 11);
  for (const auto& r : tr.records) {
    CHECK(r.log_norm == 0.0);
    CHECK(r.direction == e);
  }
}

TEST_CASE("one step by hand") {
  auto obj = std::make_shared<NormQuadratic>(6, 2);
  const Vec th = random_unit(6, 3) * 2.0;
  const auto tr = run_sgd_wd(make_run(obj, constant(0.1, 0.01, 0.0, 1), th, 1));
  const Vec expect = (1 - 0.001) * th - 0.1 * obj->grad(th, {});
  CHECK(tr.records[1].log_norm == doctest::Approx(std::log(expect.norm())).epsilon(1e-14));
  CHECK((tr.records[1].direction - expect.normalized()).norm() < 1e-14);
  CHECK(tr.records[1].update_norm == doctest::Approx((expect - th).norm()).epsilon(1e-12));
}

TEST_CASE("run matches a composition of GD maps") {
  auto obj = std::make_shared<NormLogistic>(8, 16, 4);
  const Vec th = random_unit(8, 5);
  const auto tr = run_sgd_wd(make_run(obj, constant(0.1, 0.01, 0.0, 2), th, 2));
  const auto m = StateMap::compose({StateMap::gd(0.999, 0.0, obj, 1), StateMap::gd(0.999, 0.0, obj, 0)});
  const auto s = m(TrainState::two(th, 0.1));
  CHECK(tr.records[2].log_norm == doctest::Approx(std::log(s.theta.norm())).epsilon(1e-14));
  CHECK((tr.records[2].direction - s.theta.normalized()).norm() < 1e-14);
}

TEST_CASE("exponential runs reproduce the WD run") {
  SUBCASE("no weight decay reproduces the run to rounding") {
    auto obj = std::make_shared<NormQuadratic>(10, 6);
    ScheduleSpec s = three_phase(150);
    for (auto& p : s.phases) p.wd = 0.0;
    s.phases.pop_back();
    const auto cfg = make_run(obj, s, random_unit(10, 7), 150);
    const auto a = run_sgd_wd(cfg);
    const auto b = run_sgd_exp(cfg, translate(s));
    // the exp run goes through the log-domain LR and the canonicalizing H_t at t = 100
    CHECK(max_dir_err(a, b) < 1e-15);
    for (std::size_t t = 0; t < a.records.size(); ++t)
      CHECK(std::abs(a.records[t].log_norm - b.records[t].log_norm) < 1e-14);
  }
  SUBCASE("single phase with momentum") {
    auto obj = std::make_shared<NormLogistic>(10, 32, 8);
    const auto s = constant(0.1, 0.0005, 0.9, 300);
    const auto cfg = make_run(obj, s, random_unit(10, 9), 300);
    const auto rep = verify_equivalence(run_sgd_wd(cfg), run_sgd_exp(cfg, translate(s)));
    CHECK(rep.pass);
    CHECK(rep.max_one_minus_cos < 1e-9);
  }
  SUBCASE("three phases with corrections") {
    auto obj = std::make_shared<TinyNormMlp>(4, 3, 32, 10);
    const auto s = three_phase();
    const auto cfg = make_run(obj, s, obj->init(11), 300);
    const auto rep = verify_equivalence(run_sgd_wd(cfg), run_sgd_exp(cfg, translate(s)));
    CHECK(rep.pass);
  }
  SUBCASE("cosine schedule") {
    auto obj = std::make_shared<NormQuadratic>(10, 12);
    ScheduleSpec s;
    s.kind = ScheduleKind::cosine;
    s.eta0 = 0.1;
    s.T = 200;
    s.lambda = 0.0005;
    s.gamma = 0.9;
    const auto cfg = make_run(obj, s, random_unit(10, 13), 199);
    CHECK(verify_equivalence(run_sgd_wd(cfg), run_sgd_exp(cfg, translate(s))).pass);
  }
  SUBCASE("a perturbed schedule is caught") {
    auto obj = std::make_shared<NormQuadratic>(10, 14);
    const auto s = constant(0.1, 0.0005, 0.9, 100);
    const auto cfg = make_run(obj, s, random_unit(10, 15), 100);
    ExpOptions opt;
    opt.perturb = {{40, 1.01}};
    CHECK_FALSE(verify_equivalence(run_sgd_wd(cfg), run_sgd_exp(cfg, translate(s), opt)).pass);
  }
}

TEST_CASE("stabilization") {
  SUBCASE("already at target") {
    const auto st = TrainState::four(random_unit(5, 1) * 3.0, 0.1, random_unit(5, 2), 0.1);
    const auto r = stabilize(st, std::log(3.0));
    CHECK(std::abs(r.log_c) < 1e-15);
  }
  SUBCASE("directions unchanged and absolute norms reconstructed") {
    auto obj = std::make_shared<NormQuadratic>(10, 16);
    const auto s = constant(0.1, 0.0005, 0.9, 200);
    auto cfg = make_run(obj, s, random_unit(10, 17), 200);
    const auto sched = translate(s);
    const auto plain = run_sgd_exp(cfg, sched);
    for (std::int64_t every : {1, 50}) {
      cfg.stabilize_every = every;
      const auto st = run_sgd_exp(cfg, sched);
      CHECK(max_dir_err(plain, st) < 1e-10);
      CHECK(std::abs(st.records.back().log_norm - plain.records.back().log_norm) < 1e-10);
      CHECK(st.log_scale != 0.0);
    }
  }
}

TEST_CASE("determinism") {
  auto obj = std::make_shared<NormLogistic>(10, 32, 18);
  const auto cfg = make_run(obj, constant(0.1, 0.01, 0.9, 50), random_unit(10, 19), 50);
  const auto a = run_sgd_wd(cfg), b = run_sgd_wd(cfg);
  for (std::size_t t = 0; t < a.records.size(); ++t) {
    CHECK(a.records[t].direction == b.records[t].direction);
    CHECK(a.records[t].log_norm == b.records[t].log_norm);
  }
}

TEST_CASE("verification edge cases") {
  auto obj = std::make_shared<NormQuadratic>(6, 20);
  const auto s = constant(0.1, 0.01, 0.0, 20);
  const auto a = run_sgd_wd(make_run(obj, s, random_unit(6, 21), 20));
  const auto self = verify_equivalence(a, a, std::vector<double>(21, 0.0));
  CHECK(self.max_one_minus_cos == 0.0);
  CHECK(self.max_log_norm_dev == 0.0);
  const auto b = run_sgd_wd(make_run(obj, s, random_unit(6, 21), 10));
  CHECK_THROWS_AS(verify_equivalence(a, b), LengthMismatch);
}

TEST_CASE("configuration errors") {
  auto obj = std::make_shared<NormQuadratic>(6, 22);
  const auto s = constant(0.1, 0.01, 0.0, 20);
  CHECK_THROWS_AS(run_sgd_wd(make_run(obj, s, Vec::Zero(6), 10)), ConfigError);
  CHECK_THROWS_AS(run_sgd_wd(make_run(obj, s, random_unit(6, 1), 0)), ConfigError);
  CHECK_THROWS_AS(run_sgd_wd(make_run(obj, s, random_unit(5, 1), 10)), DimensionMismatch);
}

TEST_CASE("trajectory CSV") {
  auto obj = std::make_shared<NormQuadratic>(6, 23);
  const auto a = run_sgd_wd(make_run(obj, constant(0.1, 0.01, 0.0, 5), random_unit(6, 24), 5));
  std::ostringstream os;
  write_trajectory_csv(os, a);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  CHECK(header == "t,log_norm,dir_cos_ref,loss,grad_norm,update_norm,lr_effective_log");
  int rows = 0;
  for (std::string l; std::getline(is, l);) ++rows;
  CHECK(rows == 6);
}
