#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>

#include "oracles/reference_ops.hpp"
#include "rtbev/graph/cost.hpp"
#include "rtbev/graph/interpreter.hpp"
#include "rtbev/pipeline/attention.hpp"
#include "rtbev/pipeline/bundle.hpp"
#include "rtbev/pipeline/config.hpp"
#include "rtbev/pipeline/networks.hpp"
#include "rtbev/pipeline/predict.hpp"
#include "rtbev/pipeline/softargmax.hpp"
#include "rtbev/prune/pruner.hpp"

using namespace rtbev;

namespace {

std::size_t count_kind(const NetworkGraph& g, LayerKind k) {
  return static_cast<std::size_t>(
      std::count_if(g.layers.begin(), g.layers.end(), [&](const LayerSpec& l) { return l.kind == k; }));
}

// Parameter count of an inverted-residual backbone, written from the block
// recipe rather than from the built graph.
std::uint64_t backbone_params_by_formula(const BackboneConfig& c) {
  const std::uint64_t stem_k = c.stem_stride == 2 ? 4 : 3;
  std::uint64_t n = std::uint64_t(c.in_channels) * c.stem_channels * stem_k * stem_k + 2ull * c.stem_channels;
  std::uint64_t cin = c.stem_channels;
  for (const auto& s : c.stages)
    for (int b = 0; b < s.blocks; ++b) {
      const std::uint64_t stride = b == 0 ? s.stride : 1, k = stride == 2 ? 4 : 3;
      const std::uint64_t h = cin * s.expand_ratio, cout = s.channels;
      n += cin * h + 2 * h;                 // expand + its affine
      n += h * k * k + 2 * h;               // depthwise + affine
      if (s.use_se) {
        const std::uint64_t r = std::max<std::uint64_t>(1, cin / c.se_reduction);
        n += r * h + r + h * r + h;         // two dense layers
      }
      n += h * cout + 2 * cout;             // project + affine
      cin = cout;
    }
  return n;
}

Tensor random_image(std::mt19937_64& rng, std::size_t h = 64, std::size_t w = 96) {
  return oracle::random_tensor(rng, {1, 3, h, w}, 0.0, 1.0);
}

ElevationMap two_pass(const Tensor& scores, const std::vector<double>& bins) {
  const std::size_t ne = scores.dim(0), ny = scores.dim(1), nx = scores.dim(2);
  ElevationMap m;
  m.values.assign(ny * nx, 0.0);
  for (std::size_t cell = 0; cell < ny * nx; ++cell) {
    std::vector<double> s(ne);
    for (std::size_t k = 0; k < ne; ++k) s[k] = scores[k * ny * nx + cell];
    const auto p = oracle::softmax(s);
    long double e = 0;
    for (std::size_t k = 0; k < ne; ++k) e += static_cast<long double>(p[k]) * bins[k];
    m.values[cell] = static_cast<double>(e) * 100.0;
  }
  return m;
}

const ArtifactConfig kDefaults{};

const Model& shared_model() {
  static const Model m = make_model(kDefaults, kDefaults.head);
  return m;
}

}  // namespace

// ------------------------------------------------------------- backbone

TEST(Backbone, SingleEqualWidthBlockHasOneResidualAdd) {
  BackboneConfig c;
  c.stem_channels = 8;
  c.stem_stride = 2;
  c.stages = {{1, 8, 1, 2, false}};
  c.feat_stride = 2;
  const auto g = build_backbone(c);
  EXPECT_EQ(count_kind(g, LayerKind::add), 1u);
  EXPECT_EQ(count_kind(g, LayerKind::attention_gate), 0u);
  EXPECT_TRUE(validate_graph(g, false).empty());
}

TEST(Backbone, StrideMismatchIsConfigError) {
  BackboneConfig c = desk_backbone();
  c.feat_stride = 8;
  EXPECT_THROW(build_backbone(c), ConfigError);
  c.feat_stride = 4;
  c.stages[0].stride = 3;
  EXPECT_THROW(build_backbone(c), ConfigError);
}

TEST(Backbone, DefaultParamCountIsStable) {
  const auto c = desk_backbone();
  const auto a = build_backbone(c), b = build_backbone(c);
  const std::map<std::string, Shape> shapes{{"image", {1, 3, 64, 96}}};
  const auto ca = analytic_cost(a, shapes), cb = analytic_cost(b, shapes);
  EXPECT_EQ(ca.total_params, backbone_params_by_formula(c));
  EXPECT_EQ(ca.total_params, 151300u);  // golden value from the first build
  EXPECT_EQ(ca.total_params, cb.total_params);
  EXPECT_EQ(ca.total_flops, cb.total_flops);
  EXPECT_EQ(serialize_graph(a), serialize_graph(b));
}

TEST(Backbone, DefaultEmitsStride4With64Channels) {
  const auto c = desk_backbone();
  EXPECT_EQ(c.feat_stride, 4);
  EXPECT_EQ(c.out_channels(), 64);
  std::mt19937_64 rng(1);
  const auto f = extract_features(random_image(rng), shared_model().backbone, 4);
  EXPECT_EQ(f.shape(), (Shape{64, 16, 24}));
}

TEST(ExtractFeatures, SharedWeightsGiveIdenticalMaps) {
  std::mt19937_64 rng(2);
  const auto img = random_image(rng);
  const auto a = extract_features(img, shared_model().backbone, 4);
  const auto b = extract_features(img, shared_model().backbone, 4);
  EXPECT_EQ(a, b);
}

TEST(ExtractFeatures, ZeroImageZeroBiasGivesZero) {
  Model m = shared_model();
  for (auto& [name, t] : m.backbone.weights)
    if (name.ends_with(".bias"))
      for (auto& v : t.data()) v = 0.0;
  const auto f = extract_features(Tensor({1, 3, 64, 96}, 0.0), m.backbone, 4);
  for (double v : f.data()) ASSERT_EQ(v, 0.0);
}

TEST(ExtractFeatures, MatchesDirectExecution) {
  std::mt19937_64 rng(3);
  const auto img = random_image(rng);
  const auto f = extract_features(img, shared_model().backbone, 4);
  const auto direct = execute(shared_model().backbone, {{"image", img}}).outputs.at("features");
  EXPECT_EQ(f.values(), direct.values());
}

TEST(ExtractFeatures, IndivisibleImageIsShapeError) {
  EXPECT_THROW(extract_features(Tensor({1, 3, 62, 96}, 0.0), shared_model().backbone, 4), ShapeError);
  EXPECT_THROW(extract_features(Tensor({3, 64, 96}, 0.0), shared_model().backbone, 4), ShapeError);
}

// ----------------------------------------------------------------- head

TEST(Head, OneLevelHasOneSkipAdd) {
  HeadConfig c{8, 1, false, Precision::full, 4};
  const auto g = build_head(c, 4, 6);
  EXPECT_EQ(count_kind(g, LayerKind::add), 1u);
  EXPECT_EQ(count_kind(g, LayerKind::deconv3d), 1u);
  EXPECT_EQ(count_kind(g, LayerKind::attention_gate), 0u);
  auto h = g;
  initialize_weights(h, 1);
  std::mt19937_64 rng(4);
  const auto out = execute(h, {{"volume", oracle::random_tensor(rng, {1, 6, 4, 6, 8})}}).outputs.at("scores");
  EXPECT_EQ(out.shape(), (Shape{1, 1, 4, 6, 8}));
}

TEST(Head, OptimizedHasGateAtBottleneck) {
  const auto g = build_head(optimized_head(), 16, 128);
  EXPECT_EQ(count_kind(g, LayerKind::attention_gate), 1u);
  EXPECT_EQ(g.layer("h_gate").channels, 64);
  EXPECT_EQ(count_kind(g, LayerKind::add), 2u);
}

TEST(Head, OptimizedCostsAtMost55PercentOfBaseline) {
  const VoxelGrid grid;
  const int vc = 2 * desk_backbone().out_channels();
  const std::map<std::string, Shape> shapes{
      {"volume", {1, static_cast<std::size_t>(vc), std::size_t(grid.ne), std::size_t(grid.ny), std::size_t(grid.nx)}}};
  const auto base = analytic_cost(build_head(baseline_head(), grid.ne, vc), shapes);
  const auto opt = analytic_cost(build_head(optimized_head(), grid.ne, vc), shapes);
  EXPECT_LE(static_cast<double>(opt.total_flops), 0.55 * static_cast<double>(base.total_flops));
}

TEST(Head, BinsNotDivisibleByLevelsAreRejected) {
  EXPECT_THROW(build_head(optimized_head(), 41, 128), ConfigError);
  EXPECT_THROW(build_head(optimized_head(), 6, 128), ConfigError);
  EXPECT_NO_THROW(build_head(optimized_head(), 8, 128));
  HeadConfig bad = optimized_head();
  bad.hourglass_levels = 0;
  EXPECT_THROW(build_head(bad, 8, 128), ConfigError);
}

// -------------------------------------------------------- attention gate

TEST(AttentionGate, ZeroWeightsHalveTheInput) {
  std::mt19937_64 rng(5);
  const auto x = oracle::random_tensor(rng, {1, 4, 2, 3, 3});
  const Tensor w1({2, 4}, 0.0), b1({2}, 0.0), w2({4, 2}, 0.0), b2({4}, 0.0);
  const auto y = attention_gate(x, {w1, b1, w2, b2});
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], 0.5 * x[i]);
}

TEST(AttentionGate, ZeroInputStaysZero) {
  std::mt19937_64 rng(6);
  const auto w1 = oracle::random_tensor(rng, {2, 4}), b1 = oracle::random_tensor(rng, {2});
  const auto w2 = oracle::random_tensor(rng, {4, 2}), b2 = oracle::random_tensor(rng, {4});
  const auto y = attention_gate(Tensor({1, 4, 2, 2, 2}, 0.0), {w1, b1, w2, b2});
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(AttentionGate, MatchesPoolMlpSigmoidScale) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 2, c = 1 + rng() % 6, hid = 1 + rng() % 3;
    const auto x = oracle::random_tensor(rng, {n, c, 2, 3, 4});
    const auto w1 = oracle::random_tensor(rng, {hid, c}), b1 = oracle::random_tensor(rng, {hid});
    const auto w2 = oracle::random_tensor(rng, {c, hid}), b2 = oracle::random_tensor(rng, {c});
    CostMeter meter;
    const auto y = attention_gate(x, {w1, b1, w2, b2}, &meter);
    EXPECT_EQ(meter.total(), 4 * n * c * hid);
    const std::size_t inner = 24;
    for (std::size_t b = 0; b < n; ++b) {
      std::vector<long double> pooled(c, 0);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < inner; ++i) pooled[ch] += x[(b * c + ch) * inner + i];
      for (auto& p : pooled) p /= inner;
      std::vector<long double> h(hid);
      for (std::size_t j = 0; j < hid; ++j) {
        long double a = b1[j];
        for (std::size_t ch = 0; ch < c; ++ch) a += w1[j * c + ch] * pooled[ch];
        h[j] = std::max<long double>(0, a);
      }
      for (std::size_t ch = 0; ch < c; ++ch) {
        long double a = b2[ch];
        for (std::size_t j = 0; j < hid; ++j) a += w2[ch * hid + j] * h[j];
        const long double s = 1.0L / (1.0L + std::exp(-a));
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t idx = (b * c + ch) * inner + i;
          EXPECT_NEAR(y[idx], static_cast<double>(s * x[idx]), 1e-6);
        }
      }
    }
  }
}

// ----------------------------------------------------------- soft-argmax

TEST(SoftArgmax, DominantBinWins) {
  VoxelGrid g;
  const auto bins = elevation_bins(g);
  Tensor s({16, 1, 3}, 0.0);
  s[5 * 3 + 0] = 1e3;
  s[0 * 3 + 1] = 1e3;
  s[15 * 3 + 2] = 1e3;
  const auto m = fused_softargmax(s, bins);
  EXPECT_DOUBLE_EQ(m.values[0], bins[5] * 100);
  EXPECT_DOUBLE_EQ(m.values[1], bins[0] * 100);
  EXPECT_DOUBLE_EQ(m.values[2], bins[15] * 100);
}

TEST(SoftArgmax, FlatScoresGiveZeroOnSymmetricBins) {
  VoxelGrid g;
  const auto m = fused_softargmax(Tensor({16, 2, 2}, 0.3), elevation_bins(g));
  for (double v : m.values) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(SoftArgmax, MatchesTwoPassOracleAndStaysInBounds) {
  std::mt19937_64 rng(8);
  VoxelGrid g;
  g.ne = 16;
  const auto bins = elevation_bins(g);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double scale = std::pow(10.0, std::uniform_real_distribution<double>(-2, 2)(rng));
    const auto s = oracle::random_tensor(rng, {16, 3, 4}, -scale, scale);
    const auto m = fused_softargmax(s, bins);
    const auto o = two_pass(s, bins);
    for (std::size_t i = 0; i < m.values.size(); ++i) {
      worst = std::max(worst, std::abs(m.values[i] - o.values[i]));
      ASSERT_GE(m.values[i], bins.front() * 100);
      ASSERT_LE(m.values[i], bins.back() * 100);
    }
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(SoftArgmax, ShiftInvariant) {
  std::mt19937_64 rng(9);
  const auto bins = elevation_bins(VoxelGrid{});
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = oracle::random_tensor(rng, {16, 2, 2}, -5, 5);
    Tensor t = s;
    const double c = std::uniform_real_distribution<double>(-100, 100)(rng);
    for (auto& v : t.data()) v += c;
    const auto a = fused_softargmax(s, bins), b = fused_softargmax(t, bins);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-9);
  }
}

TEST(SoftArgmax, AcceptsBatchedHeadOutputAndChecksBins) {
  const auto bins = elevation_bins(VoxelGrid{});
  EXPECT_NO_THROW(fused_softargmax(Tensor({1, 1, 16, 2, 3}, 0.0), bins));
  EXPECT_THROW(fused_softargmax(Tensor({15, 2, 3}, 0.0), bins), ShapeError);
}

// ---------------------------------------------------------- end to end

TEST(Predict, BoundedDeterministicAndTimed) {
  std::mt19937_64 rng(10);
  const auto l = random_image(rng), r = random_image(rng);
  const auto a = predict_elevation(l, r, shared_model(), desk_rig(), kDefaults.grid, Precision::full);
  const auto b = predict_elevation(l, r, shared_model(), desk_rig(), kDefaults.grid, Precision::full);
  EXPECT_EQ(a.map.values, b.map.values);
  EXPECT_EQ(a.map.valid, b.map.valid);
  EXPECT_EQ(a.map.valid_count(), kDefaults.grid.cells());
  for (std::size_t i = 0; i < a.map.values.size(); ++i) {
    ASSERT_TRUE(std::isfinite(a.map.values[i]));
    ASSERT_GE(a.map.values[i], -5.0);
    ASSERT_LE(a.map.values[i], 5.0);
  }
  for (const char* s : kStages) EXPECT_TRUE(a.stage_ms.count(s)) << s;
  EXPECT_GT(a.meter.total(), 0u);
}

TEST(Predict, MixedPrecisionWithinConfiguredTolerance) {
  std::mt19937_64 rng(11);
  const auto l = random_image(rng), r = random_image(rng);
  const auto full = predict_elevation(l, r, shared_model(), desk_rig(), kDefaults.grid, Precision::full);
  const auto mixed = predict_elevation(l, r, shared_model(), desk_rig(), kDefaults.grid, Precision::half);
  double worst = 0;
  for (std::size_t i = 0; i < full.map.values.size(); ++i)
    worst = std::max(worst, std::abs(full.map.values[i] - mixed.map.values[i]));
  EXPECT_LE(worst, kDefaults.mixed_tolerance_cm);
  EXPECT_NE(full.map.values, mixed.map.values);  // the half path really ran
}

TEST(Predict, StageNameIsAttachedToErrors) {
  Model m = shared_model();
  m.head.weights.erase("h_score.weight");
  std::mt19937_64 rng(12);
  try {
    predict_elevation(random_image(rng), random_image(rng), m, desk_rig(), kDefaults.grid, Precision::full);
    FAIL() << "expected MissingWeights";
  } catch (const MissingWeights& e) {
    EXPECT_NE(std::string(e.what()).find("stage 'head'"), std::string::npos);
  }
}

// --------------------------------------------------------- config, bundle

TEST(Config, RoundTripAndErrors) {
  ArtifactConfig c;
  c.grid.nx = 8;
  c.head.precision = Precision::full;
  c.backbone.stages[1].use_se = false;
  EXPECT_EQ(parse_config(format_config(c)), c);
  EXPECT_EQ(parse_config("# empty\n\n"), ArtifactConfig{});
  EXPECT_THROW(parse_config("grid.nz=3\n"), ConfigError);
  EXPECT_THROW(parse_config("grid.nx=three\n"), ConfigError);
  EXPECT_THROW(parse_config("head.precision=quarter\n"), ConfigError);
  EXPECT_THROW(parse_config("backbone.feat_stride=8\n"), ConfigError);
}

TEST(Config, ShippedDefaultFileMatchesBuiltIns) {
  EXPECT_EQ(load_config(std::string(RTBEV_SOURCE_DIR) + "/configs/default.cfg"), ArtifactConfig{});
  EXPECT_EQ(format_config(ArtifactConfig{}).find("0.050000"), std::string::npos);
}

TEST(Config, EnvironmentVariableNamesDefaultFile) {
  const auto path = (std::filesystem::temp_directory_path() / "rtbev_env_test.cfg").string();
  write_text_file(path, "bench.repetitions=7\n");
  ::setenv(kConfigEnv, path.c_str(), 1);
  EXPECT_EQ(load_config().repetitions, 7);
  ::unsetenv(kConfigEnv);
  EXPECT_EQ(load_config().repetitions, 20);
  std::filesystem::remove(path);
}

TEST(Bundle, SaveLoadReproducesPredictions) {
  const auto dir = (std::filesystem::temp_directory_path() / "rtbev_bundle_test").string();
  Bundle b;
  b.model = shared_model();
  save_bundle(dir, b);
  const Bundle back = load_bundle(dir);
  EXPECT_EQ(back.config, b.config);
  EXPECT_EQ(back.rig, b.rig);
  EXPECT_EQ(back.model.backbone, b.model.backbone);
  EXPECT_EQ(back.model.head, b.model.head);
  EXPECT_EQ(back.model.feat_stride, 4);
  std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------- prune

TEST(PruneBackbone, HalfTheParametersWithinOneStep) {
  const auto& g = shared_model().backbone;
  const std::map<std::string, Shape> shapes{{"image", {1, 3, 64, 96}}};
  const auto r = prune_to_budget(g, 0.5, BudgetTarget::params, shapes);
  EXPECT_GE(r.param_reduction, 0.50);
  EXPECT_LE(r.param_reduction, 0.55);
  EXPECT_TRUE(validate_graph(r.pruned_graph).empty());
  std::mt19937_64 rng(13);
  const auto f = extract_features(random_image(rng), r.pruned_graph, 4);
  EXPECT_EQ(f.shape(), (Shape{64, 16, 24}));
}
