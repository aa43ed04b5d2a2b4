#include <fmt/format.h>

#include "wdexp/errors.hpp"
#include "wdexp/graphhom.hpp"

namespace wdexp {

GraphNetwork::GraphNetwork(CompGraph g, std::uint64_t seed, int width, int batch, int spatial)
    : g_(std::move(g)), width_(width), batch_(batch), spatial_(spatial) {
  g_.validate();
  if (width < 2 || width % 2 || batch < 2 || spatial < 2) throw ConfigError("graph network needs even width >= 2, batch and spatial >= 2");
  order_ = topo_order(g_);
  preds_ = g_.predecessors();
  offset_.assign(g_.nodes.size(), 0);
  for (std::size_t i = 0; i < g_.nodes.size(); ++i) {
    offset_[i] = dim_;
    switch (g_.nodes[i].kind) {
      case NodeKind::L: dim_ += width * width; break;
      case NodeKind::B: dim_ += width; break;
      case NodeKind::NA: dim_ += 2 * width; break;
      default: break;
    }
  }
  if (dim_ == 0) throw ConfigError("graph has no trainable parameters");
  auto rng = rng_stream(seed, ~5ULL);
  std::normal_distribution<double> nd;
  const Eigen::Index rows = static_cast<Eigen::Index>(batch) * spatial;
  input_ = Mat::NullaryExpr(rows, width, [&] { return nd(rng); });
  readout_ = Mat::NullaryExpr(rows, width, [&] { return nd(rng); });
}

Vec GraphNetwork::init(std::uint64_t seed) const {
  auto rng = rng_stream(seed, ~6ULL);
  std::normal_distribution<double> nd;
  return Vec::NullaryExpr(dim_, [&] { return nd(rng); });
}

// Rows are (sample, position) pairs, sample-major; columns are channels. eps = 0.
Mat GraphNetwork::normalize(const Mat& x, NormVariant v) const {
  Mat y(x.rows(), x.cols());
  auto block = [&](Eigen::Index r0, Eigen::Index nr, Eigen::Index c0, Eigen::Index nc) {
    const auto b = x.block(r0, c0, nr, nc);
    const double mean = b.mean();
    const double var = (b.array() - mean).square().mean();
    if (!(var > 1e-300)) throw DegenerateBatch("zero variance in a normalization group");
    y.block(r0, c0, nr, nc) = (b.array() - mean) / std::sqrt(var);
  };
  const Eigen::Index S = spatial_, W = width_;
  switch (v) {
    case NormVariant::none:
    case NormVariant::BN:
      for (Eigen::Index c = 0; c < W; ++c) block(0, x.rows(), c, 1);
      break;
    case NormVariant::IN:
      for (Eigen::Index s = 0; s < batch_; ++s)
        for (Eigen::Index c = 0; c < W; ++c) block(s * S, S, c, 1);
      break;
    case NormVariant::LN:
      for (Eigen::Index s = 0; s < batch_; ++s) block(s * S, S, 0, W);
      break;
    case NormVariant::GN:
      for (Eigen::Index s = 0; s < batch_; ++s)
        for (Eigen::Index c = 0; c < W; c += 2) block(s * S, S, c, 2);
      break;
  }
  return y;
}

double GraphNetwork::loss(const Vec& theta, const Batch&) const {
  if (theta.size() != dim_) throw DimensionMismatch(fmt::format("theta has dim {}, graph network {}", theta.size(), dim_));
  std::vector<Mat> act(g_.nodes.size());
  const Eigen::Index W = width_;
  double out = 0.0;
  for (auto i : order_) {
    const auto& n = g_.nodes[i];
    const auto& p = preds_[i];
    switch (n.kind) {
      case NodeKind::I: act[i] = input_; break;
      case NodeKind::L: {
        const Eigen::Map<const Mat> w(theta.data() + offset_[i], W, W);
        act[i] = act[p[0]] * w.transpose();
        break;
      }
      case NodeKind::B:
        act[i] = act[p[0]].rowwise() + theta.segment(offset_[i], W).transpose();
        break;
      case NodeKind::PLUS: act[i] = act[p[0]] + act[p[1]]; break;
      case NodeKind::N: act[i] = normalize(act[p[0]], n.variant); break;
      case NodeKind::NA: {
        const Vec scale = theta.segment(offset_[i], W), shift = theta.segment(offset_[i] + W, W);
        act[i] = (normalize(act[p[0]], n.variant) * scale.asDiagonal()).rowwise() + shift.transpose();
        break;
      }
      case NodeKind::PASS: act[i] = act[p[0]].cwiseMax(0.0); break;
      case NodeKind::OUT:
        act[i] = act[p[0]];
        out = act[i].cwiseProduct(readout_).sum();
        break;
    }
  }
  return out;
}

Vec GraphNetwork::grad(const Vec& theta, const Batch& b) const { return finite_diff_grad(*this, theta, b); }

}  // namespace wdexp
