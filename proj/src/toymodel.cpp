#include "wdexp/toymodel.hpp"

#include <cmath>
#include <fmt/format.h>
#include <ostream>
#include <sstream>

#include "wdexp/errors.hpp"
#include "wdexp/format.hpp"

namespace wdexp {

namespace {

constexpr double kPi = 3.14159265358979323846;

// 1 / (1 + e^u) without overflow.
double sigmoid_neg(double u) {
  if (u > 0) {
    const double e = std::exp(-u);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(u));
}

double angle_between(const Vec& u, const Vec& v) {
  const Vec a = u.normalized(), b = v.normalized();
  return 2.0 * std::atan2((a - b).norm(), (a + b).norm());
}

// Population moments for the last-layer model. With c = cos(angle(e1, w)), s = sin(...),
// ya = c r - s z and yb = s r + c z where r = |x_1| is half-normal and z ~ N(0,1) independent.
// Returns (E[sigma(-k ya) ya], E[sigma(-k ya) yb]) by tensor Simpson quadrature.
std::pair<double, double> population_moments(double c, double s, double k) {
  constexpr int nr = 180, nz = 360;
  constexpr double rmax = 9.0, zmax = 9.0;
  const double hr = rmax / nr, hz = 2.0 * zmax / nz;
  const double norm = 1.0 / std::sqrt(2.0 * kPi);
  auto simpson = [](int i, int n) { return i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0); };
  double m1 = 0.0, m2 = 0.0;
  for (int i = 0; i <= nr; ++i) {
    const double r = i * hr;
    const double wr = simpson(i, nr) * 2.0 * norm * std::exp(-0.5 * r * r);
    for (int j = 0; j <= nz; ++j) {
      const double z = -zmax + j * hz;
      const double w = wr * simpson(j, nz) * norm * std::exp(-0.5 * z * z);
      const double ya = c * r - s * z, yb = s * r + c * z;
      const double sg = sigmoid_neg(k * ya);
      m1 += w * sg * ya;
      m2 += w * sg * yb;
    }
  }
  const double scale = hr * hz / 9.0;
  return {m1 * scale, m2 * scale};
}

}  // namespace

std::string to_string(Regime r) {
  switch (r) {
    case Regime::wd_only: return "wd_only";
    case Regime::bn_only: return "bn_only";
    case Regime::bn_wd: return "bn_wd";
  }
  return "?";
}

Regime regime_from_string(const std::string& s) {
  if (s == "wd_only") return Regime::wd_only;
  if (s == "bn_only") return Regime::bn_only;
  if (s == "bn_wd") return Regime::bn_wd;
  throw ConfigError(fmt::format("unknown regime '{}'", s));
}

void ToyConfig::validate() const {
  if (m < 3) throw ConfigError("toy model needs m >= 3");
  if (B < 1) throw ConfigError("batch size must be >= 1");
  if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
  if (!(lambda >= 0.0) || lambda * eta >= 1.0) throw ConfigError("need 0 <= lambda and lambda eta < 1");
  if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("delta must be in (0, 1]");
  if (T0 < 0) throw ConfigError("T0 must be >= 0");
  if (!(init_norm > 0.0)) throw ConfigError("init_norm must be > 0");
  if (seeds.empty()) throw ConfigError("seeds must be non-empty");
}

ToyConfig ToyConfig::from_json(const nlohmann::json& j) {
  ToyConfig c;
  try {
    c.m = j.value("m", c.m);
    c.B = j.value("B", c.B);
    c.eta = j.value("eta", c.eta);
    c.lambda = j.value("lambda", c.lambda);
    c.eps = j.value("eps", c.eps);
    c.delta = j.value("delta", c.delta);
    c.T0 = j.value("T0", c.T0);
    c.init_norm = j.value("init_norm", c.init_norm);
    c.population = j.value("population", c.population);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    else if (j.contains("seed")) c.seeds = {j.at("seed").get<std::uint64_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("toy config: {}", e.what()));
  }
  c.validate();
  return c;
}

nlohmann::json ToyConfig::to_json() const {
  return {{"m", m},         {"B", B},         {"eta", eta}, {"lambda", lambda},         {"eps", eps},
          {"delta", delta}, {"T0", T0},       {"init_norm", init_norm}, {"population", population}, {"seeds", seeds}};
}

double angle_to_e1(const Vec& w) { return std::atan2(w.tail(w.size() - 1).norm(), w(0)); }

Vec toy_init(int m, double angle, double norm, std::uint64_t seed) {
  auto rng = rng_stream(seed, ~3ULL);
  std::normal_distribution<double> nd;
  Vec d(m);
  d(0) = 0.0;
  for (int i = 1; i < m; ++i) d(i) = nd(rng);
  d.normalize();
  Vec w = std::sin(angle) * d;
  w(0) = std::cos(angle);
  return norm * w;
}

ToySim::ToySim(Regime regime, const ToyConfig& cfg, Vec w0, std::uint64_t seed)
    : regime_(regime), cfg_(cfg), w_(std::move(w0)), seed_(seed) {
  cfg_.validate();
  if (w_.size() != cfg_.m) throw DimensionMismatch(fmt::format("w0 has dim {}, m = {}", w_.size(), cfg_.m));
  if (!(w_.norm() > 0.0)) throw ConfigError("w0 must be nonzero");
}

Vec ToySim::gradient() const {
  const double wn = w_.norm();
  const Vec wh = w_ / wn;
  const bool normalized = regime_ != Regime::wd_only;
  if (cfg_.population) {
    const double c = wh(0);
    Vec q = -c * wh;
    q(0) += 1.0;  // e1 - c w^
    const double s = q.norm();
    const auto [m1, m2] = population_moments(c, s, normalized ? 1.0 : wn);
    Vec g = Vec::Zero(w_.size());
    if (s > 0.0) g -= m2 * (q / s);
    if (normalized) return g / wn;
    return g - m1 * wh;
  }
  auto rng = rng_stream(seed_, static_cast<std::uint64_t>(t_));
  std::normal_distribution<double> nd;
  Mat x(cfg_.B, cfg_.m);
  for (Eigen::Index b = 0; b < x.rows(); ++b)
    for (Eigen::Index i = 0; i < x.cols(); ++i) x(b, i) = nd(rng);
  const Vec a = normalized ? Vec(x * wh) : Vec(x * w_);
  Vec coef(cfg_.B);
  for (Eigen::Index b = 0; b < coef.size(); ++b) {
    const double y = x(b, 0) >= 0.0 ? 1.0 : -1.0;
    coef(b) = sigmoid_neg(y * a(b)) * y;
  }
  Vec v = x.transpose() * coef / static_cast<double>(cfg_.B);
  if (!normalized) return -v;
  v -= wh.dot(v) * wh;
  return -v / wn;
}

ToyRecord ToySim::current() const {
  ToyRecord r;
  r.t = t_;
  r.angle = angle_to_e1(w_);
  r.norm = w_.norm();
  r.error = r.angle / kPi;
  return r;
}

ToyRecord ToySim::step() {
  ToyRecord r = current();
  const double rho = regime_ == Regime::bn_only ? 1.0 : 1.0 - cfg_.lambda * cfg_.eta;
  const Vec upd = -cfg_.eta * gradient();
  Vec next = rho * w_ + upd;
  if (!next.allFinite() || next.norm() == 0.0)
    throw NumericalBlowup(t_, fmt::format("toy iterate not finite at step {}", t_));
  const double un = upd.norm(), wn = w_.norm();
  r.step_angle = angle_between(w_, next);
  r.orth_residual = un > 0.0 ? std::abs(upd.dot(w_)) / (un * wn) : 0.0;
  const double n2 = next.squaredNorm();
  r.pyth_residual = std::abs(n2 - (rho * rho * wn * wn + un * un)) / n2;
  w_ = std::move(next);
  ++t_;
  return r;
}

ToyRun run_case(Regime regime, const ToyConfig& cfg, const Vec& w0, std::int64_t steps, std::uint64_t seed) {
  if (steps < 0) throw ConfigError("steps must be >= 0");
  ToySim sim(regime, cfg, w0, seed);
  ToyRun run;
  run.regime = regime;
  run.records.reserve(static_cast<std::size_t>(steps + 1));
  for (std::int64_t t = 0; t < steps; ++t) run.records.push_back(sim.step());
  run.records.push_back(sim.current());
  return run;
}

double ToyRun::max_orth_residual() const {
  double m = 0.0;
  for (const auto& r : records) m = std::max(m, r.orth_residual);
  return m;
}

double ToyRun::max_pyth_residual() const {
  double m = 0.0;
  for (const auto& r : records) m = std::max(m, r.pyth_residual);
  return m;
}

double ToyRun::norm4_slope() const {
  double st = 0, sy = 0, stt = 0, sty = 0;
  const double n = static_cast<double>(records.size());
  for (const auto& r : records) {
    const double x = static_cast<double>(r.t), y = std::pow(r.norm, 4);
    st += x;
    sy += y;
    stt += x * x;
    sty += x * y;
  }
  return (n * sty - st * sy) / (n * stt - st * st);
}

EscapeBudget escape_budget(const ToyConfig& cfg, double norm_at_T0) {
  const double gap = cfg.eta * cfg.lambda - 2.0 * cfg.eps * cfg.eps;
  if (!(gap > 0.0))
    throw InvalidBudget(fmt::format("eta lambda - 2 eps^2 = {:.6g} must be positive", gap));
  if (cfg.m < 3) throw InvalidBudget("escape budget needs m >= 3");
  if (!(norm_at_T0 > 0.0)) throw InvalidBudget("norm at T0 must be positive");
  if (!(cfg.delta > 0.0 && cfg.delta <= 1.0)) throw InvalidBudget("delta must be in (0, 1]");
  EscapeBudget b;
  const double arg = 64.0 * norm_at_T0 * norm_at_T0 * cfg.eps * std::sqrt(static_cast<double>(cfg.B)) /
                     (cfg.eta * std::sqrt(static_cast<double>(cfg.m - 2)));
  b.T1 = arg > 1.0 ? std::log(arg) / (2.0 * gap) : 0.0;
  b.T2 = 9.0 * std::log(1.0 / cfg.delta);
  return b;
}

nlohmann::json EscapeReport::to_json() const {
  return {{"trials", trials},
          {"escaped", escaped},
          {"fraction", fraction},
          {"required", required},
          {"wide_step", wide_step},
          {"wide_step_fraction", wide_step_fraction},
          {"mean_budget", mean_budget},
          {"mechanism_active", mechanism_active},
          {"first_exit", first_exit},
          {"pass", pass}};
}

EscapeReport escape_experiment(const ToyConfig& cfg, int trials) {
  cfg.validate();
  if (trials < 1) throw ConfigError("escape_experiment needs trials >= 1");
  EscapeReport rep;
  rep.trials = trials;
  rep.mechanism_active = cfg.lambda > 0.0;
  // With lambda = 0 there is no budget; the window is fixed and the outcome only reported.
  constexpr std::int64_t kInactiveWindow = 1000;
  double budget_sum = 0.0;
  for (int i = 0; i < trials; ++i) {
    const std::uint64_t seed = rng_stream(cfg.seeds.front(), static_cast<std::uint64_t>(i))();
    ToySim sim(Regime::bn_wd, cfg, toy_init(cfg.m, 0.5 * cfg.eps, cfg.init_norm, seed), seed);
    while (sim.t() < cfg.T0) sim.step();
    const double budget = rep.mechanism_active ? escape_budget(cfg, sim.w().norm()).total()
                                               : static_cast<double>(kInactiveWindow);
    budget_sum += budget;
    const auto window = static_cast<std::int64_t>(std::ceil(budget));
    std::int64_t exit = angle_to_e1(sim.w()) > cfg.eps ? 0 : -1;
    bool wide = false;
    for (std::int64_t j = 1; j <= window && (exit < 0 || !wide); ++j) {
      const auto r = sim.step();
      if (r.step_angle > 2.0 * cfg.eps) wide = true;
      if (exit < 0 && angle_to_e1(sim.w()) > cfg.eps) exit = j;
    }
    rep.first_exit.push_back(exit);
    rep.escaped += exit >= 0;
    rep.wide_step += wide;
  }
  rep.fraction = static_cast<double>(rep.escaped) / trials;
  rep.wide_step_fraction = static_cast<double>(rep.wide_step) / trials;
  rep.mean_budget = budget_sum / trials;
  rep.required = 1.0 - cfg.delta - 3.0 * std::sqrt(cfg.delta * (1.0 - cfg.delta) / trials);
  rep.pass = rep.mechanism_active ? rep.fraction >= rep.required : true;
  return rep;
}

nlohmann::json ChiSquareReport::to_json() const {
  return {{"k", k},         {"beta", beta},   {"samples", samples}, {"estimate", estimate},
          {"sigma", sigma}, {"bound", bound}, {"pass", pass}};
}

ChiSquareReport chi_square_tail_check(int k, double beta, std::int64_t samples, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("beta must be in (0, 1)");
  if (samples < 100000) throw std::invalid_argument("chi_square_tail_check needs at least 1e5 samples");
  auto rng = rng_stream(seed, static_cast<std::uint64_t>(k));
  std::normal_distribution<double> nd;
  const double thresh = k * beta;
  std::int64_t hits = 0;
  for (std::int64_t n = 0; n < samples; ++n) {
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
      const double x = nd(rng);
      sum += x * x;
    }
    hits += sum < thresh;
  }
  ChiSquareReport r;
  r.k = k;
  r.beta = beta;
  r.samples = samples;
  r.estimate = static_cast<double>(hits) / static_cast<double>(samples);
  r.sigma = std::sqrt(r.estimate * (1.0 - r.estimate) / static_cast<double>(samples));
  r.bound = std::pow(beta * std::exp(1.0 - beta), 0.5 * k);
  r.pass = r.estimate - 3.0 * r.sigma <= r.bound;
  return r;
}

void write_toy_csv(std::ostream& os, const ToyRun& run, const std::string& header) {
  std::istringstream in(header);
  for (std::string line; std::getline(in, line);) os << "# " << line << '\n';
  os << "t,angle,norm,error,step_angle\n";
  for (const auto& r : run.records)
    os << r.t << ',' << num(r.angle) << ',' << num(r.norm) << ',' << num(r.error) << ',' << num(r.step_angle) << '\n';
}

}  // namespace wdexp
