#include "wdexp/statealg.hpp"

#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "wdexp/errors.hpp"

namespace wdexp {

StateMap StateMap::pi(int coord, double c) {
  if (coord < 1 || coord > 4) throw std::invalid_argument("Pi index must be 1..4");
  if (!(c > 0.0) || !std::isfinite(c)) throw NonPositiveScale(fmt::format("Pi{} scale {} must be positive", coord, c));
  StateMap m;
  m.kind_ = static_cast<Kind>(coord - 1);
  m.c_ = c;
  return m;
}

StateMap StateMap::gd(double rho, double gamma, ObjectivePtr obj, std::int64_t t, std::shared_ptr<const Batch> batch) {
  if (!obj) throw std::invalid_argument("GD map needs an objective");
  StateMap m;
  m.kind_ = Kind::gd;
  m.rho_ = rho;
  m.gamma_ = gamma;
  m.t_ = t;
  m.obj_ = std::move(obj);
  m.batch_ = std::move(batch);
  return m;
}

StateMap StateMap::canon() {
  StateMap m;
  m.kind_ = Kind::canon;
  return m;
}

StateMap StateMap::compose(std::vector<StateMap> maps) {
  StateMap m;
  m.kind_ = Kind::compose;
  m.parts_ = std::move(maps);
  return m;
}

std::string StateMap::describe() const {
  switch (kind_) {
    case Kind::pi1:
    case Kind::pi2:
    case Kind::pi3:
    case Kind::pi4: return fmt::format("Pi{}^{:.6g}", static_cast<int>(kind_) + 1, c_);
    case Kind::gd: return fmt::format("GD^{:.6g}_{}", rho_, t_);
    case Kind::canon: return "N";
    case Kind::compose: {
      std::string s;
      for (std::size_t i = 0; i < parts_.size(); ++i) s += (i ? " o " : "") + parts_[i].describe();
      return "[" + s + "]";
    }
  }
  return "?";
}

Vec momentum_update(const TrainState& s, double rho, double gamma, double lr, const Vec& g) {
  if (!s.has_buffer() || gamma == 0.0) return rho * s.theta - lr * g;
  return rho * s.theta + lr * (gamma * (s.theta - s.theta_buf) / s.eta_buf - g);
}

TrainState StateMap::operator()(const TrainState& s) const {
  auto need_buffer = [&] {
    if (!s.has_buffer()) throw DimensionMismatch(describe() + " needs a 4-coordinate state");
  };
  TrainState r = s;
  switch (kind_) {
    case Kind::pi1: r.theta *= c_; break;
    case Kind::pi2: r.eta *= c_; break;
    case Kind::pi3: need_buffer(); r.theta_buf *= c_; break;
    case Kind::pi4: need_buffer(); r.eta_buf *= c_; break;
    case Kind::canon:
      need_buffer();
      r.theta_buf = s.theta - (s.eta / s.eta_buf) * (s.theta - s.theta_buf);
      r.eta_buf = s.eta;
      break;
    case Kind::gd: {
      if (s.theta.size() != obj_->dim())
        throw DimensionMismatch(fmt::format("GD map: objective dim {} vs state dim {}", obj_->dim(), s.theta.size()));
      const Vec g = batch_ ? obj_->grad(s.theta, *batch_) : obj_->grad(s.theta, obj_->batch(t_));
      r.theta = momentum_update(s, rho_, gamma_, s.eta, g);
      if (s.has_buffer()) {
        r.theta_buf = s.theta;
        r.eta_buf = s.eta;
      }
      break;
    }
    case Kind::compose:
      for (auto it = parts_.rbegin(); it != parts_.rend(); ++it) r = (*it)(r);
      break;
  }
  return r;
}

StateMap equivalent_scaling(double c) {
  return StateMap::compose({StateMap::pi1(c), StateMap::pi2(c * c), StateMap::pi3(c), StateMap::pi4(c * c)});
}

StateMap equivalent_scaling2(double c) { return StateMap::compose({StateMap::pi1(c), StateMap::pi2(c * c)}); }

StateMap build_Ht(double alpha_t, double alpha_t1, double eta_prev, double eta_cur) {
  for (double v : {alpha_t, alpha_t1, eta_prev, eta_cur})
    if (!(v > 0.0)) throw NonPositiveScale("build_Ht needs positive inputs");
  return StateMap::compose({StateMap::pi2(alpha_t * eta_prev / eta_cur), StateMap::pi3(alpha_t1),
                            StateMap::pi4(alpha_t1), StateMap::canon(), StateMap::pi3(1.0 / alpha_t),
                            StateMap::pi4(1.0 / alpha_t), StateMap::pi2(1.0 / alpha_t),
                            StateMap::pi2(eta_cur / eta_prev)});
}

double state_rel_err(const TrainState& a, const TrainState& b) {
  auto vec_err = [](const Vec& x, const Vec& y) {
    if (x.size() != y.size()) return std::numeric_limits<double>::infinity();
    if (x.size() == 0) return 0.0;
    const double ref = std::max(x.lpNorm<Eigen::Infinity>(), y.lpNorm<Eigen::Infinity>());
    return ref == 0.0 ? 0.0 : (x - y).lpNorm<Eigen::Infinity>() / ref;
  };
  auto scal_err = [](double x, double y) {
    const double ref = std::max(std::abs(x), std::abs(y));
    return ref == 0.0 ? 0.0 : std::abs(x - y) / ref;
  };
  double e = std::max(vec_err(a.theta, b.theta), scal_err(a.eta, b.eta));
  if (a.has_buffer() || b.has_buffer())
    e = std::max({e, vec_err(a.theta_buf, b.theta_buf), scal_err(a.eta_buf, b.eta_buf)});
  return e;
}

nlohmann::json state_to_json(const TrainState& s) {
  nlohmann::json j;
  j["theta"] = std::vector<double>(s.theta.data(), s.theta.data() + s.theta.size());
  j["eta"] = s.eta;
  if (s.has_buffer()) {
    j["theta_buf"] = std::vector<double>(s.theta_buf.data(), s.theta_buf.data() + s.theta_buf.size());
    j["eta_buf"] = s.eta_buf;
  }
  return j;
}

}  // namespace wdexp
