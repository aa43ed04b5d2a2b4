#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "wdexp/errors.hpp"
#include "wdexp/graphhom.hpp"

using namespace wdexp;

namespace {

// Linear chain of node kinds; ids are n0, n1, ...
CompGraph chain(const std::vector<NodeKind>& kinds, NormVariant v = NormVariant::BN) {
  CompGraph g;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    g.nodes.push_back({"n" + std::to_string(i), kinds[i], v});
    if (i) g.edges.emplace_back("n" + std::to_string(i - 1), "n" + std::to_string(i));
  }
  return g;
}

using K = NodeKind;

}  // namespace

TEST_CASE("degree rules on chains") {
  SUBCASE("I -> L -> N -> OUT") {
    const auto d = propagate_degrees(chain({K::I, K::L, K::N, K::OUT}));
    CHECK(d.at("n0") == Degree::of(0));
    CHECK(d.at("n1") == Degree::of(1));
    CHECK(d.at("n2") == Degree::of(0));
    CHECK(is_scale_invariant(chain({K::I, K::L, K::N, K::OUT})).invariant);
  }
  SUBCASE("bias on a degree-1 input") {
    const auto v = is_scale_invariant(chain({K::I, K::L, K::B, K::N, K::OUT}));
    CHECK(v.invariant);
    CHECK(v.degrees.at("n2") == Degree::of(1));
  }
  SUBCASE("bias on a degree-2 input") {
    const auto v = is_scale_invariant(chain({K::I, K::L, K::L, K::B, K::N, K::OUT}));
    CHECK_FALSE(v.invariant);
    CHECK(v.failing_node == "n3");
    CHECK_FALSE(v.degrees.at("n3").homogeneous());
  }
  SUBCASE("normalization directly after the input") {
    CHECK(is_scale_invariant(chain({K::I, K::N, K::OUT})).invariant);
  }
  SUBCASE("affine normalization and pass-through") {
    const auto v = is_scale_invariant(chain({K::I, K::L, K::NA, K::PASS, K::OUT}));
    CHECK_FALSE(v.invariant);
    CHECK(v.out_degree == 1);
    CHECK(v.failing_node == "n4");
  }
  SUBCASE("no normalization") {
    const auto v = is_scale_invariant(chain({K::I, K::L, K::PASS, K::L, K::OUT}));
    CHECK(v.out_degree == 2);
    CHECK_FALSE(v.invariant);
  }
}

TEST_CASE("addition rule") {
  CompGraph g;
  g.nodes = {{"in", K::I}, {"a", K::L}, {"b1", K::L}, {"b2", K::L}, {"bias", K::B}, {"add", K::PLUS}, {"out", K::OUT}};
  g.edges = {{"in", "a"}, {"in", "b1"}, {"b1", "b2"}, {"a", "bias"}, {"bias", "add"}, {"b2", "add"}, {"add", "out"}};
  auto v = is_scale_invariant(g);
  CHECK(v.degrees.at("bias") == Degree::of(1));
  CHECK_FALSE(v.degrees.at("add").homogeneous());
  CHECK(v.failing_node == "add");
  // both branches at degree 2 add cleanly
  g.nodes[4].kind = K::L;
  v = is_scale_invariant(g);
  CHECK(v.degrees.at("add") == Degree::of(2));
}

TEST_CASE("fixtures") {
  CHECK(is_scale_invariant(fixture_plain_chain()).invariant);
  CHECK(is_scale_invariant(fixture_resnet_block(true)).invariant);
  const auto broken = is_scale_invariant(fixture_resnet_block(false));
  CHECK_FALSE(broken.invariant);
  CHECK(broken.failing_node == "add");
  for (auto v : {NormVariant::BN, NormVariant::IN, NormVariant::GN, NormVariant::LN}) {
    const auto r = is_scale_invariant(fixture_affine_bias(v));
    CHECK_FALSE(r.invariant);
    CHECK(r.failing_node == "bias2");
  }
}

TEST_CASE("bias removal before BN or IN") {
  CheckOptions opt;
  opt.simplify = true;
  CHECK(is_scale_invariant(fixture_affine_bias(NormVariant::BN), opt).invariant);
  CHECK(is_scale_invariant(fixture_affine_bias(NormVariant::IN), opt).invariant);
  CHECK_FALSE(is_scale_invariant(fixture_affine_bias(NormVariant::GN), opt).invariant);
  CHECK_FALSE(is_scale_invariant(fixture_affine_bias(NormVariant::LN), opt).invariant);
  const auto g = remove_bias_before_norm(fixture_affine_bias(NormVariant::BN));
  CHECK(g.nodes.size() == fixture_affine_bias(NormVariant::BN).nodes.size() - 1);
  CHECK_NOTHROW(g.validate());
}

TEST_CASE("verdict does not depend on the topological order") {
  for (const auto& g : {fixture_plain_chain(), fixture_resnet_block(true), fixture_resnet_block(false),
                        fixture_affine_bias(NormVariant::GN)}) {
    const auto base = is_scale_invariant(g);
    for (std::uint64_t s = 1; s <= 10; ++s) {
      CheckOptions o;
      o.tie_seed = s;
      const auto v = is_scale_invariant(g, o);
      CHECK(v.invariant == base.invariant);
      CHECK(v.degrees == base.degrees);
      CHECK(topo_order(g, s).size() == g.nodes.size());
    }
  }
}

TEST_CASE("graph validation") {
  SUBCASE("cycle") {
    CompGraph g;
    g.nodes = {{"in", K::I}, {"p", K::PLUS}, {"l", K::L}, {"out", K::OUT}};
    g.edges = {{"in", "p"}, {"l", "p"}, {"p", "l"}, {"l", "out"}};
    CHECK_THROWS_AS(g.validate(), CycleDetected);
    CHECK_THROWS_AS(is_scale_invariant(g), CycleDetected);
  }
  SUBCASE("arity") {
    auto g = chain({K::I, K::PLUS, K::OUT});
    CHECK_THROWS_AS(g.validate(), InvalidArity);
    g = chain({K::I, K::L, K::OUT});
    g.nodes.push_back({"out2", K::OUT});
    g.edges.emplace_back("n1", "out2");
    CHECK_THROWS_AS(g.validate(), InvalidArity);
    g = chain({K::L, K::OUT});
    CHECK_THROWS_AS(g.validate(), InvalidArity);
  }
  SUBCASE("duplicate ids and unknown nodes") {
    auto g = chain({K::I, K::L, K::OUT});
    g.nodes[1].id = "n0";
    CHECK_THROWS_AS(g.validate(), ConfigError);
    CHECK_THROWS_AS(CompGraph::from_json({{"nodes", {{{"id", "a"}, {"kind", "Q"}}}}, {"edges", nlohmann::json::array()}}),
                    ConfigError);
  }
}

TEST_CASE("JSON round trip") {
  const auto g = fixture_resnet_block(true);
  const auto back = CompGraph::from_json(g.to_json());
  CHECK(back.nodes.size() == g.nodes.size());
  CHECK(back.edges == g.edges);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    CHECK(back.nodes[i].id == g.nodes[i].id);
    CHECK(back.nodes[i].kind == g.nodes[i].kind);
    CHECK(back.nodes[i].variant == g.nodes[i].variant);
  }
  const auto j = nlohmann::json::parse(R"({"nodes":[{"id":"x","kind":"I"},{"id":"p","kind":"+"},
    {"id":"l","kind":"L"},{"id":"o","kind":"OUT"}],"edges":[["x","p"],["x","l"],["l","p"],["p","o"]]})");
  const auto v = is_scale_invariant(CompGraph::from_json(j));
  CHECK(v.failing_node == "p");
  CHECK(v.to_json().at("invariant") == false);
}

TEST_CASE("numeric realization") {
  SUBCASE("homogeneity degree matches the symbolic OUT degree") {
    for (const auto& g : {chain({K::I, K::L, K::PASS, K::L, K::OUT}), chain({K::I, K::L, K::NA, K::L, K::OUT}),
                          fixture_plain_chain()}) {
      const auto v = is_scale_invariant(g);
      REQUIRE(v.out_degree.has_value());
      const GraphNetwork net(g, 3);
      const auto r = check_homogeneity(net, net.init(4), *v.out_degree);
      CHECK(r.pass);
      CHECK(r.max_dev < 1e-9);
      CHECK_FALSE(check_homogeneity(net, net.init(4), *v.out_degree + 1).pass);
    }
  }
  SUBCASE("crosscheck agrees on every fixture") {
    for (const auto& g : {fixture_plain_chain(), fixture_resnet_block(true), fixture_resnet_block(false),
                          fixture_affine_bias(NormVariant::GN), fixture_affine_bias(NormVariant::LN)}) {
      const GraphNetwork net(g, 7);
      const auto r = numeric_crosscheck(g, net, net.init(7));
      CHECK(r.symbolic == r.numeric);
    }
  }
  SUBCASE("simplified BN graph is numerically invariant") {
    const auto g = fixture_affine_bias(NormVariant::BN);
    CheckOptions o;
    o.simplify = true;
    const GraphNetwork net(g, 8);
    CHECK(numeric_crosscheck(g, net, net.init(8), {0.5, 2.0, 10.0}, o).numeric);
  }
  SUBCASE("mismatched realization") {
    const auto g = chain({K::I, K::L, K::N, K::OUT});
    const GraphNetwork wrong(chain({K::I, K::L, K::PASS, K::OUT}), 9);  // same parameter count, degree 1
    CHECK_THROWS_AS(numeric_crosscheck(g, wrong, wrong.init(9)), RealizationMismatch);
  }
  SUBCASE("gradient by differences is orthogonal on an invariant graph") {
    const GraphNetwork net(fixture_plain_chain(), 10);
    const Vec th = net.init(10);
    const Vec g = net.grad(th, {});
    CHECK(std::abs(g.dot(th)) < 1e-6 * g.norm() * th.norm());
  }
}
