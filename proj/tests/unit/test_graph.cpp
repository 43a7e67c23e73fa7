#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles/random_graphs.hpp"
#include "oracles/reference_ops.hpp"
#include "rtbev/graph/builder.hpp"
#include "rtbev/graph/cost.hpp"
#include "rtbev/graph/init.hpp"
#include "rtbev/graph/interpreter.hpp"
#include "rtbev/graph/text_format.hpp"
#include "rtbev/graph/validate.hpp"

using namespace rtbev;

namespace {

constexpr const char* kIdentityText = R"(# one affine layer
x input stream=img channels=1
id affine channels=1 inputs=x
y output inputs=id
)";

std::size_t count_kind(const std::vector<Violation>& vs, ViolationKind k) {
  return static_cast<std::size_t>(std::count_if(vs.begin(), vs.end(), [&](const Violation& v) { return v.kind == k; }));
}

}  // namespace

TEST(ParseGraph, IdentityGraph) {
  NetworkGraph g = parse_graph(kIdentityText);
  ASSERT_EQ(g.layers.size(), 3u);
  EXPECT_EQ(g.layers[1].kind, LayerKind::affine);
  EXPECT_EQ(g.layers[1].inputs, std::vector<std::string>{"x"});
  g.weights["id.weight"] = Tensor({1}, 1.0);
  g.weights["id.bias"] = Tensor({1}, 0.0);
  EXPECT_TRUE(validate_graph(g).empty());

  std::mt19937_64 rng(1);
  const Tensor in = oracle::random_tensor(rng, {1, 1, 3, 4});
  const auto res = execute(g, {{"img", in}});
  EXPECT_EQ(res.outputs.at("y"), in);
}

TEST(ParseGraph, UndefinedReferenceNamesTheId) {
  try {
    parse_graph("x input channels=1\nc conv2d cin=1 cout=1 kernel=1 stride=1 pad=0 groups=1 bias=0 inputs=ghost\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(ParseGraph, SyntaxErrorsCarryLineNumbers) {
  EXPECT_THROW(parse_graph("a input channels=1\nb bogus inputs=a\n"), ParseError);
  EXPECT_THROW(parse_graph("a input channels=x\n"), ParseError);
  EXPECT_THROW(parse_graph("a input channels=1\na input channels=1\n"), ParseError);
  EXPECT_THROW(parse_graph("a input kernel=3\n"), ParseError);
  try {
    parse_graph("\n\n# c\na relu\n");
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
}

TEST(ParseGraph, RoundTripOnRandomGraphsWithWeights) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    NetworkGraph g = oracle::random_graph(rng, {.max_layers = 12});
    g.metadata["name"] = "random" + std::to_string(trial);
    NetworkGraph back = parse_graph(serialize_graph(g));
    std::stringstream blob;
    write_weights(blob, g.weights);
    back.weights = read_weights(blob);
    EXPECT_EQ(back, g) << serialize_graph(g);
  }
}

TEST(ValidateGraph, ChannelMismatchIsOneViolation) {
  GraphBuilder b;
  b.input("x", 3);
  b.conv2d("a", "x", 3, 8, 3, 1, 1);
  b.conv2d("b", "a", 16, 4, 3, 1, 1);
  b.output("y", "b");
  NetworkGraph g = std::move(b).build();
  initialize_weights(g, 1);
  const auto vs = validate_graph(g);
  ASSERT_EQ(vs.size(), 1u);
  EXPECT_EQ(vs[0].kind, ViolationKind::channel_mismatch);
  EXPECT_EQ(vs[0].layer, "b");
}

TEST(ValidateGraph, SelfLoopIsOneCycleViolation) {
  GraphBuilder b;
  b.input("x", 2);
  b.conv2d("loop", "loop", 2, 2, 1);
  NetworkGraph g = std::move(b).build();
  initialize_weights(g, 1);
  const auto vs = validate_graph(g);
  ASSERT_EQ(vs.size(), 1u);
  EXPECT_EQ(vs[0].kind, ViolationKind::cycle);
}

TEST(ValidateGraph, ReportsEveryViolation) {
  GraphBuilder b;
  b.input("x", 3);
  b.conv2d("a", "x", 3, 4, 3, 1, 1);
  b.conv2d("c", "a", 5, 4, 3, 1, 1);   // mismatch
  b.affine("f", "c", 6);               // mismatch
  b.add("s", {"c"});                   // arity
  b.output("y", "f");
  NetworkGraph g = std::move(b).build();
  initialize_weights(g, 2);
  g.weights.erase("a.bias");
  g.weights["f.weight"] = Tensor({2});
  g.weights["zzz.weight"] = Tensor({1});
  const auto vs = validate_graph(g);
  EXPECT_EQ(count_kind(vs, ViolationKind::channel_mismatch), 2u);
  EXPECT_EQ(count_kind(vs, ViolationKind::arity), 1u);
  EXPECT_EQ(count_kind(vs, ViolationKind::missing_weight), 1u);
  EXPECT_EQ(count_kind(vs, ViolationKind::weight_shape), 1u);
  EXPECT_EQ(count_kind(vs, ViolationKind::orphan_weight), 1u);
}

TEST(ValidateGraph, TwoCyclesTwoViolations) {
  const NetworkGraph g = parse_graph(
      "x input channels=1\n"
      "a affine channels=1 inputs=b\n"
      "b affine channels=1 inputs=a\n"
      "c activation fn=relu inputs=c\n");
  EXPECT_EQ(count_kind(validate_graph(g, false), ViolationKind::cycle), 2u);
}

TEST(Execute, TwoConvChainEqualsComposition) {
  GraphBuilder b;
  b.input("x", 2);
  b.conv2d("c1", "x", 2, 3, 3, 1, 1);
  b.conv2d("c2", "c1", 3, 2, 3, 2, 1, 1, false);
  b.output("y", "c2");
  NetworkGraph g = std::move(b).build();
  initialize_weights(g, 7);
  std::mt19937_64 rng(3);
  const Tensor in = oracle::random_tensor(rng, {1, 2, 7, 7});
  const Tensor mid = conv2d(in, g.weights.at("c1.weight"), &g.weights.at("c1.bias"), {1, 1, 1});
  const Tensor expect = conv2d(mid, g.weights.at("c2.weight"), nullptr, {2, 1, 1});
  EXPECT_EQ(execute(g, {{"x", in}}).outputs.at("y"), expect);
}

TEST(Execute, ShapeErrorNamesLayer) {
  GraphBuilder b;
  b.input("x", 1);
  b.conv2d("down", "x", 1, 1, 3, 2, 1);
  b.output("y", "down");
  NetworkGraph g = std::move(b).build();
  initialize_weights(g, 1);
  try {
    execute(g, {{"x", Tensor({1, 1, 6, 6})}});
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("down"), std::string::npos);
  }
  EXPECT_THROW(execute(g, {}), ValidationError);
}

TEST(Execute, HalfModeRoundsEveryValue) {
  std::mt19937_64 rng(9);
  NetworkGraph g = oracle::random_graph(rng, {.max_layers = 8});
  const Tensor in = oracle::random_tensor(rng, {1, 2, 5, 5});
  const auto res = execute(g, {{"x", in}}, Precision::half);
  for (double v : res.outputs.at("y").data()) EXPECT_EQ(v, round_to_half(v));
}

TEST(Execute, DeterministicAcrossRuns) {
  std::mt19937_64 rng(10);
  NetworkGraph g = oracle::random_graph(rng, {.max_layers = 10});
  const Tensor in = oracle::random_tensor(rng, {1, 2, 5, 5});
  EXPECT_EQ(execute(g, {{"x", in}}).outputs.at("y"), execute(g, {{"x", in}}).outputs.at("y"));
}

TEST(AnalyticCost, ConvMatchesInstrumentedMultiplyCount) {
  GraphBuilder b;
  b.input("x", 3);
  b.conv2d("c", "x", 3, 8, 3, 1, 1, 1, false);
  b.output("y", "c");
  NetworkGraph g = std::move(b).build();
  const CostReport r = analytic_cost(g, {{"x", {1, 3, 16, 16}}});
  std::mt19937_64 rng(1);
  std::uint64_t mults = 0;
  oracle::conv2d(oracle::random_tensor(rng, {1, 3, 16, 16}), oracle::random_tensor(rng, {8, 3, 3, 3}), nullptr, 1, 1,
                 1, &mults);
  EXPECT_EQ(r.total_flops, 2 * mults);
  EXPECT_EQ(r.total_flops, 110592u);
  EXPECT_EQ(r.total_params, 216u);
  g.layers[1].bias = true;
  EXPECT_EQ(analytic_cost(g, {{"x", {1, 3, 16, 16}}}).total_params, 224u);
}

TEST(AnalyticCost, FreeLayersAndEmptyGraph) {
  GraphBuilder b;
  b.input("x", 3);
  b.activation("r", "x");
  b.output("y", "r");
  const CostReport r = analytic_cost(std::move(b).build(), {{"x", {1, 3, 4, 4}}});
  EXPECT_EQ(r.total_flops, 0u);

  GraphBuilder e;
  e.input("x", 3);
  e.output("y", "x");
  const CostReport empty = analytic_cost(std::move(e).build(), {{"x", {1, 3, 4, 4}}});
  EXPECT_EQ(empty.total_flops, 0u);
  EXPECT_EQ(empty.total_params, 0u);
}

TEST(AnalyticCost, TotalsEqualPerLayerSums) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    const NetworkGraph g = oracle::random_graph(rng, {.max_layers = 10});
    const CostReport r = analytic_cost(g, {{"x", {1, 2, 5, 5}}});
    std::uint64_t f = 0, p = 0;
    for (const auto& l : r.per_layer) {
      f += l.flops;
      p += l.params;
    }
    EXPECT_EQ(f, r.total_flops);
    EXPECT_EQ(p, r.total_params);
    std::uint64_t weights = 0;
    for (const auto& [_, w] : g.weights) weights += w.numel();
    EXPECT_EQ(weights, r.total_params);
  }
}

TEST(AnalyticCost, ExecutedFlopsEqualAnalyticOnRandomGraphs) {
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 20; ++t) {
    const NetworkGraph g = oracle::random_graph(rng, {.max_layers = 10});
    const Tensor in = oracle::random_tensor(rng, {1, 2, 5, 5});
    EXPECT_EQ(execute(g, {{"x", in}}).meter.total(), analytic_cost(g, {{"x", in.shape()}}).total_flops);
  }
}

TEST(AnalyticCost, ThreeDimensionalLayers) {
  GraphBuilder b;
  b.input("v", 4);
  b.conv3d("c", "v", 4, 6, 3, 1, 1);
  b.conv3d("d", "c", 6, 8, 4, 2, 1);
  b.deconv3d("u", "d", 8, 6);
  b.add("s", {"u", "c"});
  b.gate("g", "s", 6, 2);
  b.output("o", "g");
  NetworkGraph g = std::move(b).build();
  initialize_weights(g, 3);
  std::mt19937_64 rng(4);
  const Tensor in = oracle::random_tensor(rng, {1, 4, 4, 6, 2});
  const auto res = execute(g, {{"v", in}});
  EXPECT_EQ(res.outputs.at("o").shape(), (Shape{1, 6, 4, 6, 2}));
  EXPECT_EQ(res.meter.total(), analytic_cost(g, {{"v", in.shape()}}).total_flops);
  EXPECT_THROW(analytic_cost(g, {{"v", {1, 4, 3, 6, 2}}}), ValidationError);
}
