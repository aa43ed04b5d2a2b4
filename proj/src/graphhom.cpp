#include "wdexp/graphhom.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <random>
#include <set>

#include "wdexp/errors.hpp"

namespace wdexp {

namespace {

std::size_t expected_in_degree(NodeKind k) {
  switch (k) {
    case NodeKind::I: return 0;
    case NodeKind::PLUS: return 2;
    default: return 1;
  }
}

Degree rule(NodeKind k, const std::vector<Degree>& in) {
  auto all_hom = std::all_of(in.begin(), in.end(), [](const Degree& d) { return d.homogeneous(); });
  if (!all_hom) return Degree::non();
  switch (k) {
    case NodeKind::I: return Degree::of(0);
    case NodeKind::L: return Degree::of(*in[0].value + 1);
    case NodeKind::B: return *in[0].value == 1 ? Degree::of(1) : Degree::non();
    case NodeKind::PLUS: return in[0] == in[1] ? in[0] : Degree::non();
    case NodeKind::N: return Degree::of(0);
    case NodeKind::NA: return Degree::of(1);
    case NodeKind::PASS:
    case NodeKind::OUT: return in[0];
  }
  return Degree::non();
}

}  // namespace

std::string to_string(NodeKind k) {
  switch (k) {
    case NodeKind::I: return "I";
    case NodeKind::L: return "L";
    case NodeKind::B: return "B";
    case NodeKind::PLUS: return "PLUS";
    case NodeKind::N: return "N";
    case NodeKind::NA: return "NA";
    case NodeKind::PASS: return "PASS";
    case NodeKind::OUT: return "OUT";
  }
  return "?";
}

std::string to_string(NormVariant v) {
  switch (v) {
    case NormVariant::none: return "none";
    case NormVariant::BN: return "BN";
    case NormVariant::LN: return "LN";
    case NormVariant::GN: return "GN";
    case NormVariant::IN: return "IN";
  }
  return "?";
}

NodeKind node_kind_from_string(const std::string& s) {
  static const std::map<std::string, NodeKind> m{{"I", NodeKind::I},     {"L", NodeKind::L},       {"B", NodeKind::B},
                                                 {"PLUS", NodeKind::PLUS}, {"+", NodeKind::PLUS}, {"N", NodeKind::N},
                                                 {"NA", NodeKind::NA},   {"PASS", NodeKind::PASS}, {"OUT", NodeKind::OUT}};
  auto it = m.find(s);
  if (it == m.end()) throw ConfigError(fmt::format("unknown node kind '{}'", s));
  return it->second;
}

NormVariant norm_variant_from_string(const std::string& s) {
  if (s == "none" || s.empty()) return NormVariant::none;
  if (s == "BN") return NormVariant::BN;
  if (s == "LN") return NormVariant::LN;
  if (s == "GN") return NormVariant::GN;
  if (s == "IN") return NormVariant::IN;
  throw ConfigError(fmt::format("unknown normalization variant '{}'", s));
}

std::string Degree::str() const { return value ? std::to_string(*value) : "non-homogeneous"; }

std::size_t CompGraph::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return i;
  throw ConfigError(fmt::format("edge refers to unknown node '{}'", id));
}

std::vector<std::vector<std::size_t>> CompGraph::predecessors() const {
  std::vector<std::vector<std::size_t>> p(nodes.size());
  for (const auto& [a, b] : edges) p[index_of(b)].push_back(index_of(a));
  return p;
}

std::vector<std::vector<std::size_t>> CompGraph::successors() const {
  std::vector<std::vector<std::size_t>> s(nodes.size());
  for (const auto& [a, b] : edges) s[index_of(a)].push_back(index_of(b));
  return s;
}

void CompGraph::validate() const {
  std::set<std::string> ids;
  for (const auto& n : nodes)
    if (!ids.insert(n.id).second) throw ConfigError(fmt::format("duplicate node id '{}'", n.id));
  const auto preds = predecessors();
  int outs = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto want = expected_in_degree(nodes[i].kind);
    if (preds[i].size() != want)
      throw InvalidArity(fmt::format("node '{}' ({}) has in-degree {}, expected {}", nodes[i].id,
                                     to_string(nodes[i].kind), preds[i].size(), want));
    outs += nodes[i].kind == NodeKind::OUT;
  }
  if (outs != 1) throw InvalidArity(fmt::format("graph has {} OUT nodes, expected 1", outs));
  topo_order(*this);
}

CompGraph CompGraph::from_json(const nlohmann::json& j) {
  CompGraph g;
  try {
    for (const auto& n : j.at("nodes")) {
      Node node{n.at("id").get<std::string>(), node_kind_from_string(n.at("kind").get<std::string>()),
                norm_variant_from_string(n.value("variant", std::string{}))};
      g.nodes.push_back(node);
    }
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw ConfigError("edges must be [from, to] pairs");
      g.edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("graph json: {}", e.what()));
  }
  g.validate();
  return g;
}

nlohmann::json CompGraph::to_json() const {
  nlohmann::json j;
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : nodes) {
    nlohmann::json o{{"id", n.id}, {"kind", to_string(n.kind)}};
    if (n.variant != NormVariant::none) o["variant"] = to_string(n.variant);
    j["nodes"].push_back(o);
  }
  j["edges"] = nlohmann::json::array();
  for (const auto& [a, b] : edges) j["edges"].push_back({a, b});
  return j;
}

std::vector<std::size_t> topo_order(const CompGraph& g, std::optional<std::uint64_t> tie_seed) {
  const auto succ = g.successors();
  std::vector<std::size_t> indeg(g.nodes.size(), 0);
  for (const auto& s : succ)
    for (auto v : s) ++indeg[v];
  std::vector<std::size_t> ready;
  for (std::size_t i = 0; i < indeg.size(); ++i)
    if (indeg[i] == 0) ready.push_back(i);
  std::mt19937_64 rng = tie_seed ? rng_stream(*tie_seed, ~4ULL) : std::mt19937_64{};
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    std::size_t pick = 0;
    if (tie_seed) pick = std::uniform_int_distribution<std::size_t>(0, ready.size() - 1)(rng);
    else pick = static_cast<std::size_t>(std::min_element(ready.begin(), ready.end()) - ready.begin());
    const auto v = ready[pick];
    ready.erase(ready.begin() + static_cast<std::ptrdiff_t>(pick));
    order.push_back(v);
    for (auto w : succ[v])
      if (--indeg[w] == 0) ready.push_back(w);
  }
  if (order.size() != g.nodes.size()) {
    for (std::size_t i = 0; i < indeg.size(); ++i)
      if (indeg[i] > 0) throw CycleDetected(fmt::format("cycle through node '{}'", g.nodes[i].id));
  }
  return order;
}

std::map<std::string, Degree> propagate_degrees(const CompGraph& g, std::optional<std::uint64_t> tie_seed) {
  return is_scale_invariant(g, {tie_seed, false}).degrees;
}

Verdict is_scale_invariant(const CompGraph& input, const CheckOptions& opt) {
  const CompGraph g = opt.simplify ? remove_bias_before_norm(input) : input;
  g.validate();
  const auto preds = g.predecessors();
  std::vector<Degree> deg(g.nodes.size());
  Verdict v;
  for (auto i : topo_order(g, opt.tie_seed)) {
    std::vector<Degree> in;
    for (auto p : preds[i]) in.push_back(deg[p]);
    deg[i] = rule(g.nodes[i].kind, in);
    v.degrees[g.nodes[i].id] = deg[i];
    if (!deg[i].homogeneous() && !v.failing_node) v.failing_node = g.nodes[i].id;
    if (g.nodes[i].kind == NodeKind::OUT) v.out_degree = deg[i].value;
  }
  if (!v.failing_node && v.out_degree != 0) {
    for (const auto& n : g.nodes)
      if (n.kind == NodeKind::OUT) v.failing_node = n.id;
  }
  v.invariant = !v.failing_node;
  return v;
}

nlohmann::json Verdict::to_json() const {
  nlohmann::json j{{"invariant", invariant}};
  j["failing_node"] = failing_node ? nlohmann::json(*failing_node) : nlohmann::json(nullptr);
  j["out_degree"] = out_degree ? nlohmann::json(*out_degree) : nlohmann::json(nullptr);
  nlohmann::json d = nlohmann::json::object();
  for (const auto& [id, k] : degrees) d[id] = k.value ? nlohmann::json(*k.value) : nlohmann::json("non-homogeneous");
  j["degrees"] = d;
  return j;
}

CompGraph remove_bias_before_norm(const CompGraph& g) {
  const auto succ = g.successors();
  const auto preds = g.predecessors();
  std::set<std::size_t> drop;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (g.nodes[i].kind != NodeKind::B || succ[i].size() != 1 || preds[i].size() != 1) continue;
    const auto& n = g.nodes[succ[i][0]];
    const bool norm = n.kind == NodeKind::N || n.kind == NodeKind::NA;
    const bool removes_bias = n.variant == NormVariant::BN || n.variant == NormVariant::IN ||
                              n.variant == NormVariant::none;
    if (norm && removes_bias) drop.insert(i);
  }
  CompGraph out;
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    if (!drop.count(i)) out.nodes.push_back(g.nodes[i]);
  for (const auto& [a, b] : g.edges) {
    const auto ia = g.index_of(a), ib = g.index_of(b);
    if (drop.count(ib)) continue;
    if (drop.count(ia)) out.edges.emplace_back(g.nodes[preds[ia][0]].id, b);
    else out.edges.emplace_back(a, b);
  }
  return out;
}

HomogeneityReport check_homogeneity(const Objective& f, const Vec& theta, int degree,
                                    const std::vector<double>& scales) {
  HomogeneityReport r;
  r.degree = degree;
  const Batch b = f.batch(0);
  const double f0 = f.loss(theta, b);
  for (double c : scales) {
    const double ck = std::pow(c, degree);
    const double dev = std::abs(f.loss(c * theta, b) - ck * f0) / ((1.0 + std::abs(f0)) * ck);
    r.max_dev = std::max(r.max_dev, dev);
  }
  r.pass = r.max_dev <= 1e-9;
  return r;
}

nlohmann::json CrosscheckReport::to_json() const {
  nlohmann::json j{{"symbolic", symbolic}, {"numeric", numeric}, {"max_dev", max_dev}};
  j["failing_node"] = failing_node ? nlohmann::json(*failing_node) : nlohmann::json(nullptr);
  return j;
}

CrosscheckReport numeric_crosscheck(const CompGraph& g, const Objective& realization, const Vec& theta,
                                    const std::vector<double>& scales, const CheckOptions& opt) {
  const auto v = is_scale_invariant(g, opt);
  const auto inv = check_scale_invariance(realization, theta, scales, realization.batch(0));
  CrosscheckReport r{v.invariant, inv.pass, inv.max_dev, v.failing_node};
  if (r.symbolic != r.numeric)
    throw RealizationMismatch(fmt::format("symbolic verdict {} but {} realization {} (max deviation {:.3e})",
                                          r.symbolic ? "invariant" : "not invariant", realization.name(),
                                          r.numeric ? "is invariant" : "is not invariant", r.max_dev));
  return r;
}

namespace {

CompGraph make(std::vector<Node> nodes, std::vector<std::pair<std::string, std::string>> edges) {
  CompGraph g{std::move(nodes), std::move(edges)};
  g.validate();
  return g;
}

}  // namespace

CompGraph fixture_plain_chain() {
  using K = NodeKind;
  return make({{"in", K::I}, {"fc1", K::L}, {"bn1", K::N, NormVariant::BN}, {"relu1", K::PASS}, {"fc2", K::L},
               {"bn2", K::N, NormVariant::BN}, {"out", K::OUT}},
              {{"in", "fc1"}, {"fc1", "bn1"}, {"bn1", "relu1"}, {"relu1", "fc2"}, {"fc2", "bn2"}, {"bn2", "out"}});
}

CompGraph fixture_resnet_block(bool shortcut_norm) {
  using K = NodeKind;
  const auto bn = NormVariant::BN;
  std::vector<Node> nodes{{"in", K::I},          {"conv0", K::L},      {"bn0", K::N, bn},    {"relu0", K::PASS},
                          {"conv1", K::L},       {"bn1", K::N, bn},    {"relu1", K::PASS},   {"conv2", K::L},
                          {"bn2", K::N, bn},     {"down", K::L},       {"add", K::PLUS},     {"relu2", K::PASS},
                          {"out", K::OUT}};
  std::vector<std::pair<std::string, std::string>> edges{
      {"in", "conv0"},   {"conv0", "bn0"}, {"bn0", "relu0"}, {"relu0", "conv1"}, {"conv1", "bn1"},
      {"bn1", "relu1"},  {"relu1", "conv2"}, {"conv2", "bn2"}, {"bn2", "add"},     {"relu0", "down"},
      {"add", "relu2"},  {"relu2", "out"}};
  if (shortcut_norm) {
    nodes.push_back({"bn_down", K::N, bn});
    edges.emplace_back("down", "bn_down");
    edges.emplace_back("bn_down", "add");
  } else {
    edges.emplace_back("down", "add");
  }
  return make(std::move(nodes), std::move(edges));
}

CompGraph fixture_affine_bias(NormVariant variant) {
  using K = NodeKind;
  return make({{"in", K::I}, {"conv1", K::L}, {"na1", K::NA, variant}, {"relu1", K::PASS}, {"conv2", K::L},
               {"bias2", K::B}, {"norm2", K::N, variant}, {"out", K::OUT}},
              {{"in", "conv1"}, {"conv1", "na1"}, {"na1", "relu1"}, {"relu1", "conv2"}, {"conv2", "bias2"},
               {"bias2", "norm2"}, {"norm2", "out"}});
}

}  // namespace wdexp
