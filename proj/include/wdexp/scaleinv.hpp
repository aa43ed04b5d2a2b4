#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

namespace wdexp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Stream-splitting rule: the engine for (seed, t) is mt19937_64 seeded by
// seed_seq{lo32(seed), hi32(seed), lo32(t), hi32(t)}. Sample b of a batch is the
// b-th draw (row-major) from that engine, so batches are a pure function of (seed, t, b).
std::mt19937_64 rng_stream(std::uint64_t seed, std::uint64_t t);

// Rows are samples.
struct Batch {
  Mat x;
  Vec y;
  bool empty() const { return x.size() == 0; }
};

class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::string name() const = 0;
  virtual Eigen::Index dim() const = 0;
  virtual Batch batch(std::int64_t t) const = 0;
  virtual double loss(const Vec& theta, const Batch& b) const = 0;
  virtual Vec grad(const Vec& theta, const Batch& b) const = 0;
};

using ObjectivePtr = std::shared_ptr<const Objective>;

// (theta' A theta) / (theta' theta); A = M'M/dim + I/2 with M standard normal.
class NormQuadratic : public Objective {
 public:
  NormQuadratic(Eigen::Index dim, std::uint64_t seed);
  explicit NormQuadratic(Mat a);
  std::string name() const override { return "norm_quadratic"; }
  Eigen::Index dim() const override { return a_.rows(); }
  Batch batch(std::int64_t) const override { return {}; }
  double loss(const Vec& theta, const Batch&) const override;
  Vec grad(const Vec& theta, const Batch&) const override;
  const Mat& matrix() const { return a_; }

 private:
  Mat a_;
};

// theta' A theta / 2. Not scale-invariant; used as a negative control.
class PlainQuadratic : public Objective {
 public:
  PlainQuadratic(Eigen::Index dim, std::uint64_t seed);
  std::string name() const override { return "plain_quadratic"; }
  Eigen::Index dim() const override { return a_.rows(); }
  Batch batch(std::int64_t) const override { return {}; }
  double loss(const Vec& theta, const Batch&) const override;
  Vec grad(const Vec& theta, const Batch&) const override;

 private:
  Mat a_;
};

// ln(1 + exp(-y x'(w/|w|))) with x ~ N(0, I_m), y = sgn(x_1).
class NormLogistic : public Objective {
 public:
  enum class Mode { stochastic, fixed, population };
  // global: divide by |w| (covariance of x is I). per_batch: BN over the batch, eps = 0.
  enum class Stats { global, per_batch };

  NormLogistic(Eigen::Index m, Eigen::Index batch_size, std::uint64_t seed, Mode mode = Mode::stochastic,
               Stats stats = Stats::global);
  std::string name() const override { return "norm_logistic"; }
  Eigen::Index dim() const override { return m_; }
  Batch batch(std::int64_t t) const override;
  double loss(const Vec& w, const Batch& b) const override;
  Vec grad(const Vec& w, const Batch& b) const override;
  Mode mode() const { return mode_; }

  // Expected loss and gradient over x ~ N(0, I): the gradient has the closed form
  // -(e1 - u_1 u) / (sqrt(2 pi) |w|), u = w/|w|; the loss is a 1-d quadrature.
  double population_loss(const Vec& w) const;
  Vec population_grad(const Vec& w) const;

 private:
  Batch sample(std::int64_t t) const;
  Eigen::Index m_, b_;
  std::uint64_t seed_;
  Mode mode_;
  Stats stats_;
  Batch fixed_;
};

// Inputs x ~ N(0, I_d), labels y = sgn(teacher' x). Hidden pre-activations W x go
// through batch mean/variance normalization (eps = 0), ReLU, then a fixed output
// vector v. Only W is trained, so the loss is invariant to scaling W.
class TinyNormMlp : public Objective {
 public:
  TinyNormMlp(Eigen::Index d_in, Eigen::Index hidden, Eigen::Index batch_size, std::uint64_t seed,
              bool normalize = true);
  std::string name() const override { return normalize_ ? "tiny_norm_mlp" : "tiny_mlp"; }
  Eigen::Index dim() const override { return d_ * h_; }
  Batch batch(std::int64_t t) const override;
  double loss(const Vec& theta, const Batch& b) const override;
  Vec grad(const Vec& theta, const Batch& b) const override;
  // A random initial weight vector of unit norm.
  Vec init(std::uint64_t seed) const;

 private:
  struct Forward;
  Forward forward(const Vec& theta, const Batch& b) const;
  Eigen::Index d_, h_, b_;
  std::uint64_t seed_;
  bool normalize_;
  Vec teacher_, v_;
};

ObjectivePtr make_objective(const nlohmann::json& cfg);

struct InvarianceReport {
  double max_dev = 0.0;  // max over c of |L(c theta) - L(theta)| / (1 + |L(theta)|)
  double worst_scale = 1.0;
  bool pass = true;
};

InvarianceReport check_scale_invariance(const Objective& obj, const Vec& theta, const std::vector<double>& scales,
                                        const Batch& batch);

struct GradientReport {
  double orthogonality = 0.0;     // |<g, theta>| / (|g| |theta|)
  double inverse_scaling = 0.0;   // max over c of |c g(c theta) - g(theta)| / |g(theta)|
  double grad_norm = 0.0;
  bool pass = true;
};

GradientReport check_gradient_properties(const Objective& obj, const Vec& theta, const Batch& batch,
                                         const std::vector<double>& scales = {0.1, 3.7, 50.0});

Vec finite_diff_grad(const Objective& obj, const Vec& theta, const Batch& batch, double h = 1e-5);

// Unit-norm random direction; used for initial points.
Vec random_unit(Eigen::Index dim, std::uint64_t seed);

}  // namespace wdexp
