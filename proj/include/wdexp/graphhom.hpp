#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "wdexp/scaleinv.hpp"

namespace wdexp {

// I input, L linear, B trainable bias, PLUS addition, N normalization, NA normalization with
// trainable affine, PASS degree-preserving map (ReLU, pooling, fixed linear), OUT output.
enum class NodeKind { I, L, B, PLUS, N, NA, PASS, OUT };
enum class NormVariant { none, BN, LN, GN, IN };

std::string to_string(NodeKind k);
std::string to_string(NormVariant v);
NodeKind node_kind_from_string(const std::string& s);
NormVariant norm_variant_from_string(const std::string& s);

struct Node {
  std::string id;
  NodeKind kind = NodeKind::PASS;
  NormVariant variant = NormVariant::none;  // N and NA only; none reads as BN
};

struct CompGraph {
  std::vector<Node> nodes;
  std::vector<std::pair<std::string, std::string>> edges;

  std::size_t index_of(const std::string& id) const;
  std::vector<std::vector<std::size_t>> predecessors() const;  // in edge order
  std::vector<std::vector<std::size_t>> successors() const;
  // Arity and OUT-count checks plus acyclicity. Throws InvalidArity, CycleDetected, ConfigError.
  void validate() const;

  static CompGraph from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct Degree {
  std::optional<int> value;  // empty: not homogeneous
  static Degree of(int k) { return {k}; }
  static Degree non() { return {}; }
  bool homogeneous() const { return value.has_value(); }
  bool operator==(const Degree& o) const { return value == o.value; }
  std::string str() const;
};

// Kahn's algorithm. Without a seed ties go to the lowest node index; with one, to a seeded random ready node.
std::vector<std::size_t> topo_order(const CompGraph& g, std::optional<std::uint64_t> tie_seed = std::nullopt);

std::map<std::string, Degree> propagate_degrees(const CompGraph& g,
                                                std::optional<std::uint64_t> tie_seed = std::nullopt);

struct Verdict {
  bool invariant = false;
  std::optional<std::string> failing_node;  // first non-homogeneous node, or OUT when its degree is not 0
  std::map<std::string, Degree> degrees;
  std::optional<int> out_degree;
  nlohmann::json to_json() const;
};

struct CheckOptions {
  std::optional<std::uint64_t> tie_seed;
  bool simplify = false;  // drop biases that feed BN or IN directly
};

Verdict is_scale_invariant(const CompGraph& g, const CheckOptions& opt = {});

// Removes each B node whose only successor is an N or NA of variant BN or IN, rewiring its input to that node.
CompGraph remove_bias_before_norm(const CompGraph& g);

// A concrete network for a graph: activations are (batch * spatial) x width with channels as columns, L is a
// per-position width x width map, B a per-channel bias, NA a per-channel scale and shift, PASS is ReLU, and OUT
// reads out a fixed random linear functional. The loss is that output, so it has the graph's degree.
class GraphNetwork : public Objective {
 public:
  GraphNetwork(CompGraph g, std::uint64_t seed, int width = 4, int batch = 8, int spatial = 3);
  std::string name() const override { return "graph_network"; }
  Eigen::Index dim() const override { return dim_; }
  Batch batch(std::int64_t) const override { return {}; }
  double loss(const Vec& theta, const Batch&) const override;
  Vec grad(const Vec& theta, const Batch& b) const override;
  Vec init(std::uint64_t seed) const;
  const CompGraph& graph() const { return g_; }

 private:
  Mat normalize(const Mat& x, NormVariant v) const;
  CompGraph g_;
  std::vector<std::size_t> order_;
  std::vector<std::vector<std::size_t>> preds_;
  std::vector<Eigen::Index> offset_;  // parameter offset per node
  Eigen::Index dim_ = 0;
  int width_, batch_, spatial_;
  Mat input_, readout_;
};

struct HomogeneityReport {
  int degree = 0;
  double max_dev = 0.0;  // max over c of |f(c theta) - c^k f(theta)| / ((1 + |f(theta)|) c^k)
  bool pass = true;
};

HomogeneityReport check_homogeneity(const Objective& f, const Vec& theta, int degree,
                                    const std::vector<double>& scales = {0.5, 2.0, 10.0});

struct CrosscheckReport {
  bool symbolic = false;
  bool numeric = false;
  double max_dev = 0.0;
  std::optional<std::string> failing_node;
  nlohmann::json to_json() const;
};

// Symbolic verdict against check_scale_invariance on the realization; throws RealizationMismatch on disagreement.
CrosscheckReport numeric_crosscheck(const CompGraph& g, const Objective& realization, const Vec& theta,
                                    const std::vector<double>& scales = {0.5, 2.0, 10.0},
                                    const CheckOptions& opt = {});

// Hand-encoded architectures.
CompGraph fixture_plain_chain();
// Residual block with a downsampling shortcut; the shortcut carries its own normalization when requested.
CompGraph fixture_resnet_block(bool shortcut_norm);
// NA -> ReLU -> L -> trainable bias -> norm of the given variant: the bias meets a degree-2 branch.
CompGraph fixture_affine_bias(NormVariant variant);

}  // namespace wdexp
