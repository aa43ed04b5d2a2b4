#include "wdexp/scaleinv.hpp"

#include <cmath>
#include <fmt/format.h>

#include "wdexp/errors.hpp"

namespace wdexp {

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}
double sgn(double v) { return v >= 0.0 ? 1.0 : -1.0; }

Mat gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = nd(rng);
  return m;
}

Mat random_spd(Eigen::Index dim, std::uint64_t seed) {
  if (dim < 1) throw ConfigError("objective dimension must be >= 1");
  auto rng = rng_stream(seed, ~0ULL);
  const Mat m = gaussian(dim, dim, rng);
  Mat a = m.transpose() * m / static_cast<double>(dim);
  a.diagonal().array() += 0.5;
  return a;
}

void check_dim(const Objective& obj, const Vec& theta) {
  if (theta.size() != obj.dim())
    throw DimensionMismatch(fmt::format("{} expects dim {}, got {}", obj.name(), obj.dim(), theta.size()));
}

}  // namespace

std::mt19937_64 rng_stream(std::uint64_t seed, std::uint64_t t) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(t >> 32)};
  return std::mt19937_64(seq);
}

Vec random_unit(Eigen::Index dim, std::uint64_t seed) {
  auto rng = rng_stream(seed, ~1ULL);
  Vec v = gaussian(dim, 1, rng).col(0);
  return v / v.norm();
}

// ---- norm_quadratic ----

NormQuadratic::NormQuadratic(Eigen::Index dim, std::uint64_t seed) : a_(random_spd(dim, seed)) {}
NormQuadratic::NormQuadratic(Mat a) : a_(std::move(a)) {}

double NormQuadratic::loss(const Vec& theta, const Batch&) const {
  check_dim(*this, theta);
  return theta.dot(a_ * theta) / theta.squaredNorm();
}

Vec NormQuadratic::grad(const Vec& theta, const Batch&) const {
  check_dim(*this, theta);
  const double n2 = theta.squaredNorm();
  const Vec at = a_ * theta;
  return 2.0 * (at * n2 - theta * theta.dot(at)) / (n2 * n2);
}

PlainQuadratic::PlainQuadratic(Eigen::Index dim, std::uint64_t seed) : a_(random_spd(dim, seed)) {}

double PlainQuadratic::loss(const Vec& theta, const Batch&) const {
  check_dim(*this, theta);
  return 0.5 * theta.dot(a_ * theta);
}

Vec PlainQuadratic::grad(const Vec& theta, const Batch&) const {
  check_dim(*this, theta);
  return a_ * theta;
}

// ---- norm_logistic ----

NormLogistic::NormLogistic(Eigen::Index m, Eigen::Index batch_size, std::uint64_t seed, Mode mode, Stats stats)
    : m_(m), b_(batch_size), seed_(seed), mode_(mode), stats_(stats) {
  if (m < 2) throw ConfigError("norm_logistic needs m >= 2");
  if (mode != Mode::population && batch_size < 1) throw ConfigError("norm_logistic needs batch >= 1");
  if (mode == Mode::population && stats == Stats::per_batch)
    throw ConfigError("population mode has no batch statistics");
  if (mode == Mode::fixed) fixed_ = sample(0);
}

Batch NormLogistic::sample(std::int64_t t) const {
  auto rng = rng_stream(seed_, static_cast<std::uint64_t>(t));
  Batch b;
  b.x = gaussian(b_, m_, rng);
  b.y = b.x.col(0).unaryExpr([](double v) { return sgn(v); });
  return b;
}

Batch NormLogistic::batch(std::int64_t t) const {
  switch (mode_) {
    case Mode::stochastic: return sample(t);
    case Mode::fixed: return fixed_;
    case Mode::population: return {};
  }
  return {};
}

double NormLogistic::loss(const Vec& w, const Batch& b) const {
  check_dim(*this, w);
  if (b.empty()) return population_loss(w);
  Vec z = b.x * w;
  if (stats_ == Stats::global) {
    z /= w.norm();
  } else {
    const double mu = z.mean();
    const double var = (z.array() - mu).square().mean();
    if (!(var > 1e-12)) throw DegenerateBatch("norm_logistic: batch variance too small");
    z = (z.array() - mu) / std::sqrt(var);
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) acc += softplus(-b.y(i) * z(i));
  return acc / static_cast<double>(z.size());
}

Vec NormLogistic::grad(const Vec& w, const Batch& b) const {
  check_dim(*this, w);
  if (b.empty()) return population_grad(w);
  const auto n = static_cast<double>(b.x.rows());
  if (stats_ == Stats::global) {
    const double r = w.norm();
    const Vec u = w / r;
    const Vec s = b.x * u;
    Vec c(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) c(i) = -b.y(i) * sigmoid(-b.y(i) * s(i)) / n;
    // sum_b c_b (x_b - (x_b'u) u) / |w|
    return (b.x.transpose() * c - c.dot(s) * u) / r;
  }
  const Vec z = b.x * w;
  const double mu = z.mean();
  const double var = (z.array() - mu).square().mean();
  if (!(var > 1e-12)) throw DegenerateBatch("norm_logistic: batch variance too small");
  const double sd = std::sqrt(var);
  const Vec zh = (z.array() - mu) / sd;
  Vec g(zh.size());
  for (Eigen::Index i = 0; i < zh.size(); ++i) g(i) = -b.y(i) * sigmoid(-b.y(i) * zh(i)) / n;
  const double gm = g.mean();
  const double gz = g.dot(zh) / n;
  const Vec dz = (g.array() - gm - zh.array() * gz) / sd;
  return b.x.transpose() * dz;
}

double NormLogistic::population_loss(const Vec& w) const {
  check_dim(*this, w);
  const double c = w(0) / w.norm();
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  // a = x'u ~ N(0,1); given |a|, y agrees with sgn(a) with probability Phi(|a| cot(phi)).
  auto integrand = [&](double a) {
    double p;
    if (a == 0.0) p = 0.5;
    else if (s == 0.0) p = c > 0.0 ? 1.0 : 0.0;
    else p = 0.5 * std::erfc(-a * c / s / std::sqrt(2.0));
    const double pdf = std::exp(-0.5 * a * a) / std::sqrt(2.0 * M_PI);
    return 2.0 * pdf * (p * softplus(-a) + (1.0 - p) * softplus(a));
  };
  // Composite Simpson on [0, 12]; the tail beyond 12 is below 1e-30.
  const int n = 4000;
  const double h = 12.0 / n;
  double acc = integrand(0.0) + integrand(12.0);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * integrand(i * h);
  return acc * h / 3.0;
}

Vec NormLogistic::population_grad(const Vec& w) const {
  check_dim(*this, w);
  const double r = w.norm();
  const Vec u = w / r;
  Vec e1 = Vec::Zero(m_);
  e1(0) = 1.0;
  return -(e1 - u(0) * u) / (std::sqrt(2.0 * M_PI) * r);
}

// ---- tiny_norm_mlp ----

struct TinyNormMlp::Forward {
  Mat zh;    // normalized pre-activations (B x h)
  Vec sd;    // per-unit std (h)
  Vec out;   // (B)
};

TinyNormMlp::TinyNormMlp(Eigen::Index d_in, Eigen::Index hidden, Eigen::Index batch_size, std::uint64_t seed,
                         bool normalize)
    : d_(d_in), h_(hidden), b_(batch_size), seed_(seed), normalize_(normalize) {
  if (d_in < 1 || hidden < 1 || batch_size < 2) throw ConfigError("tiny_norm_mlp needs d, h >= 1 and batch >= 2");
  auto rng = rng_stream(seed, ~2ULL);
  teacher_ = gaussian(d_, 1, rng).col(0);
  v_ = gaussian(h_, 1, rng).col(0) / std::sqrt(static_cast<double>(h_));
}

Batch TinyNormMlp::batch(std::int64_t t) const {
  auto rng = rng_stream(seed_, static_cast<std::uint64_t>(t));
  Batch b;
  b.x = gaussian(b_, d_, rng);
  b.y = (b.x * teacher_).unaryExpr([](double v) { return sgn(v); });
  return b;
}

Vec TinyNormMlp::init(std::uint64_t seed) const { return random_unit(dim(), seed); }

TinyNormMlp::Forward TinyNormMlp::forward(const Vec& theta, const Batch& b) const {
  check_dim(*this, theta);
  if (b.x.cols() != d_) throw DimensionMismatch("tiny_norm_mlp: batch width differs from d_in");
  const Eigen::Map<const Mat> w(theta.data(), h_, d_);  // column-major h x d
  Forward f;
  Mat z = b.x * w.transpose();
  f.sd = Vec::Ones(h_);
  if (normalize_) {
    for (Eigen::Index j = 0; j < h_; ++j) {
      const double mu = z.col(j).mean();
      const double var = (z.col(j).array() - mu).square().mean();
      if (!(var > 1e-12)) throw DegenerateBatch(fmt::format("tiny_norm_mlp: unit {} has batch variance {}", j, var));
      f.sd(j) = std::sqrt(var);
      z.col(j) = (z.col(j).array() - mu) / f.sd(j);
    }
  }
  f.zh = std::move(z);
  f.out = f.zh.cwiseMax(0.0) * v_;
  return f;
}

double TinyNormMlp::loss(const Vec& theta, const Batch& b) const {
  const auto f = forward(theta, b);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < f.out.size(); ++i) acc += softplus(-b.y(i) * f.out(i));
  return acc / static_cast<double>(f.out.size());
}

Vec TinyNormMlp::grad(const Vec& theta, const Batch& b) const {
  const auto f = forward(theta, b);
  const auto n = static_cast<double>(f.out.size());
  Vec dout(f.out.size());
  for (Eigen::Index i = 0; i < f.out.size(); ++i) dout(i) = -b.y(i) * sigmoid(-b.y(i) * f.out(i)) / n;
  Mat dz = (dout * v_.transpose()).array() * (f.zh.array() > 0.0).cast<double>();
  if (normalize_) {
    for (Eigen::Index j = 0; j < h_; ++j) {
      const double m1 = dz.col(j).mean();
      const double m2 = dz.col(j).dot(f.zh.col(j)) / n;
      dz.col(j) = (dz.col(j).array() - m1 - f.zh.col(j).array() * m2) / f.sd(j);
    }
  }
  Mat dw = dz.transpose() * b.x;  // h x d
  return Eigen::Map<const Vec>(dw.data(), dw.size());
}

// ---- factory ----

ObjectivePtr make_objective(const nlohmann::json& cfg) {
  try {
    const auto kind = cfg.at("objective").get<std::string>();
    const auto seed = cfg.value("seed", std::uint64_t{0});
    if (kind == "norm_quadratic") return std::make_shared<NormQuadratic>(cfg.value("dim", 20), seed);
    if (kind == "plain_quadratic") return std::make_shared<PlainQuadratic>(cfg.value("dim", 20), seed);
    if (kind == "norm_logistic") {
      const auto mode_s = cfg.value("mode", std::string("stochastic"));
      NormLogistic::Mode mode = NormLogistic::Mode::stochastic;
      if (mode_s == "fixed") mode = NormLogistic::Mode::fixed;
      else if (mode_s == "population") mode = NormLogistic::Mode::population;
      else if (mode_s != "stochastic") throw ConfigError("unknown norm_logistic mode '" + mode_s + "'");
      const auto stats = cfg.value("stats", std::string("global")) == "per_batch" ? NormLogistic::Stats::per_batch
                                                                                  : NormLogistic::Stats::global;
      return std::make_shared<NormLogistic>(cfg.value("m", cfg.value("dim", 20)), cfg.value("batch", 256), seed, mode,
                                            stats);
    }
    if (kind == "tiny_norm_mlp")
      return std::make_shared<TinyNormMlp>(cfg.value("dim", 8), cfg.value("hidden", 6), cfg.value("batch", 32), seed);
    throw ConfigError("unknown objective '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("objective config: ") + e.what());
  }
}

// ---- checkers ----

InvarianceReport check_scale_invariance(const Objective& obj, const Vec& theta, const std::vector<double>& scales,
                                        const Batch& batch) {
  if (theta.norm() == 0.0) throw std::invalid_argument("check_scale_invariance: theta = 0");
  InvarianceReport r;
  const double base = obj.loss(theta, batch);
  for (double c : scales) {
    if (!(c > 0.0)) throw NonPositiveScale("scales must be positive");
    const double dev = std::abs(obj.loss(c * theta, batch) - base) / (1.0 + std::abs(base));
    if (dev > r.max_dev) {
      r.max_dev = dev;
      r.worst_scale = c;
    }
  }
  r.pass = r.max_dev <= 1e-10;
  return r;
}

GradientReport check_gradient_properties(const Objective& obj, const Vec& theta, const Batch& batch,
                                         const std::vector<double>& scales) {
  if (theta.norm() == 0.0) throw std::invalid_argument("check_gradient_properties: theta = 0");
  GradientReport r;
  const Vec g = obj.grad(theta, batch);
  r.grad_norm = g.norm();
  const double tn = theta.norm();
  // Rounding floor so that a vanishing gradient (e.g. an eigenvector of A) is not judged relative to noise.
  const double floor = 1e-14 / tn;
  const double gn = std::max(r.grad_norm, floor);
  r.orthogonality = std::abs(g.dot(theta)) / (gn * tn);
  for (double c : scales) {
    if (!(c > 0.0)) throw NonPositiveScale("scales must be positive");
    const Vec gc = obj.grad(c * theta, batch);
    r.inverse_scaling = std::max(r.inverse_scaling, (c * gc - g).norm() / gn);
  }
  r.pass = r.orthogonality <= 1e-10 && r.inverse_scaling <= 1e-9;
  return r;
}

Vec finite_diff_grad(const Objective& obj, const Vec& theta, const Batch& batch, double h) {
  check_dim(obj, theta);
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
  Vec g(theta.size());
  Vec p = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    p(i) = theta(i) + h;
    const double fp = obj.loss(p, batch);
    p(i) = theta(i) - h;
    const double fm = obj.loss(p, batch);
    p(i) = theta(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace wdexp
