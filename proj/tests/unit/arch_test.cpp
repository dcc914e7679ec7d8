#include <gtest/gtest.h>

#include <random>

#include "denseed/arch/audit.hpp"

using namespace denseed;
using namespace denseed::arch;

namespace {

DenseEDSpec dense(int a, int b, int c, int growth = 16, int init = 48) {
  DenseEDSpec s;
  s.blocks = {a, b, c};
  s.growth_rate = growth;
  s.initial_features = init;
  return s;
}

// Closed-form parameter count of the reference DenseED layout, written from
// the layer recipe rather than from the graph.
std::int64_t denseed_params_oracle(const DenseEDSpec& s) {
  std::int64_t p = std::int64_t{s.in_channels} * s.initial_features * 49;
  std::int64_t c = s.initial_features;
  const auto block = [&](int layers) {
    for (int i = 0; i < layers; ++i) {
      p += 2 * c + 9 * c * s.growth_rate;
      c += s.growth_rate;
    }
  };
  const auto transition = [&](std::int64_t out) {
    const std::int64_t h = c / 2;
    p += 2 * c + c * h;
    p += 2 * h + 9 * h * out;
    c = out;
  };
  block(s.blocks[0]);
  transition(c / 2);
  block(s.blocks[1]);
  transition(c / 2);
  block(s.blocks[2]);
  transition(s.out_channels);
  return p;
}

// Re-derives the count from (kind, in, out, k, bias) of each layer.
std::int64_t brute_force_params(const NetworkGraph& g) {
  std::int64_t n = 0;
  for (const auto& l : g.layers) {
    if (l.kind == LayerKind::conv || l.kind == LayerKind::transposed_conv) {
      for (int o = 0; o < l.out_channels; ++o)
        for (int i = 0; i < l.in_channels; ++i)
          for (int k = 0; k < l.kernel * l.kernel; ++k) ++n;
      if (l.has_bias) n += l.out_channels;
    } else if (l.kind == LayerKind::batch_norm) {
      n += l.out_channels;  // scale
      n += l.out_channels;  // shift
    }
  }
  return n;
}

}  // namespace

TEST(BuildDenseED, ConvLayerCountsFollowBlockSizes) {
  EXPECT_EQ(count_conv_layers(build_denseed(dense(3, 6, 3))), 19);
  EXPECT_EQ(count_conv_layers(build_denseed(dense(1, 1, 1))), 10);
  EXPECT_EQ(count_conv_layers(build_denseed(dense(9, 18, 9))), 43);
  EXPECT_EQ(count_conv_layers(build_denseed(dense(2, 2, 2))), 13);
  EXPECT_EQ(count_conv_layers(build_denseed(dense(8, 8, 8))), 31);
}

TEST(BuildDenseED, ReferenceTableParameterCounts) {
  EXPECT_EQ(count_parameters(build_denseed(dense(1, 1, 1))), 36572);
  EXPECT_EQ(count_parameters(build_denseed(dense(2, 2, 2))), 80702);
  EXPECT_EQ(count_parameters(build_denseed(dense(3, 3, 3))), 143040);
  EXPECT_EQ(count_parameters(build_denseed(dense(4, 4, 4))), 223586);
  EXPECT_EQ(count_parameters(build_denseed(dense(6, 12, 6))), 788046);
  EXPECT_EQ(count_parameters(build_denseed(dense(8, 8, 8))), 727850);
  EXPECT_EQ(count_parameters(build_denseed(dense(9, 18, 9))), 1663176);
}

TEST(BuildDenseED, Config363DerivedCount) {
  // Frozen from denseed_params_oracle; the reference row repeats (4,4,4).
  EXPECT_EQ(denseed_params_oracle(dense(3, 6, 3)), 237204);
  EXPECT_EQ(count_parameters(build_denseed(dense(3, 6, 3))), 237204);
}

TEST(BuildDenseED, StemConvAlone) {
  const auto g = build_denseed(dense(1, 1, 1));
  ASSERT_EQ(g.layers.front().label, "stem.conv");
  EXPECT_EQ(layer_parameter_count(g.layers.front()), 1 * 48 * 7 * 7);
  EXPECT_EQ(layer_parameter_count(g.layers.front()), 2352);
}

TEST(BuildDenseED, MaxFeatureMaps) {
  EXPECT_EQ(trace_features(build_denseed(dense(3, 6, 3))).max_feature_maps, 144);
  EXPECT_EQ(trace_features(build_denseed(dense(9, 18, 9))).max_feature_maps, 384);
  EXPECT_EQ(trace_features(build_denseed(dense(8, 8, 8))).max_feature_maps, 236);
  EXPECT_EQ(trace_features(build_denseed(dense(1, 1, 1))).max_feature_maps, 64);
  EXPECT_EQ(trace_features(build_denseed(dense(2, 2, 2))).max_feature_maps, 80);
  EXPECT_EQ(trace_features(build_denseed(dense(4, 4, 4))).max_feature_maps, 124);
}

TEST(BuildDenseED, Block2OutputFor363) {
  const auto g = build_denseed(dense(3, 6, 3));
  const auto t = trace_features(g);
  ASSERT_EQ(g.dense_blocks.size(), 3u);
  const auto& b2 = g.dense_blocks[1];
  EXPECT_EQ(t.stages[b2.end - 1].channels, 48 + 6 * 16);
}

TEST(BuildDenseED, SpatialTraceFor128Input) {
  const auto g = build_denseed(dense(3, 6, 3));
  const auto t = trace_features(g);
  // Oracle: multiply the stride factors of the convolutions in order.
  std::vector<int> sides;
  double side = 128.0;
  for (const auto& l : g.layers) {
    if (l.kind == LayerKind::conv && l.stride == 2) side /= 2;
    if (l.kind == LayerKind::transposed_conv && l.stride == 2) side *= 2;
    if (l.is_conv() && l.stride == 2) sides.push_back(static_cast<int>(side));
  }
  EXPECT_EQ(sides, (std::vector<int>{64, 32, 64, 128}));

  std::vector<int> traced;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    if (g.layers[i].is_conv() && g.layers[i].stride == 2) {
      traced.push_back(static_cast<int>(128 * t.stages[i].scale.value()));
    }
  }
  EXPECT_EQ(traced, sides);
  EXPECT_EQ(t.stages.back().scale, SpatialScale::identity());
}

TEST(BuildDenseED, InvalidSpecs) {
  try {
    build_denseed(dense(0, 1, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_spec);
  }
  EXPECT_THROW(build_denseed(dense(1, 1, 1, 0)), Error);
  EXPECT_THROW(build_denseed(dense(1, 1, 1, 16, 47)), Error);
}

TEST(BuildDenseED, OddChannelsHalveByFloor) {
  const auto g = build_denseed(dense(1, 1, 1, 3, 48));  // 48 + 3 = 51 enters the encoder
  const auto& reduce = g.layers[g.dense_blocks[0].end + 2];
  EXPECT_EQ(reduce.in_channels, 51);
  EXPECT_EQ(reduce.out_channels, 25);
}

TEST(BuildDnCNN, ReferenceCounts) {
  const auto g = build_dncnn(DnCNNSpec{17, 64});
  EXPECT_EQ(count_parameters(g), 556096);
  EXPECT_EQ(count_parameters(g), 640 + 15 * (36864 + 128) + 576);
  EXPECT_EQ(count_conv_layers(g), 17);
  EXPECT_EQ(trace_features(g).max_feature_maps, 64);
  EXPECT_TRUE(g.layers.front().has_bias);
  for (std::size_t i = 1; i < g.layers.size(); ++i) EXPECT_FALSE(g.layers[i].has_bias);
}

TEST(BuildDnCNN, DepthTooSmall) {
  try {
    build_dncnn(DnCNNSpec{2, 64});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_spec);
  }
}

TEST(BuildUNet, FiveLevels) {
  const auto g = build_unet(UNetSpec{});
  EXPECT_EQ(count_conv_layers(g), 18);
  EXPECT_EQ(trace_features(g).max_feature_maps, 96);
  EXPECT_EQ(required_divisor(g), 32);
}

TEST(Graph, MismatchedSkipShapesRejected) {
  auto g = build_unet(UNetSpec{2, 8});
  // Point the first decoder concat at a skip from the wrong resolution.
  for (auto& l : g.layers) {
    if (l.label == "up1.concat") l.inputs[1] = 1;  // full-resolution input.relu
  }
  try {
    validate(g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::inconsistent_graph);
  }
}

TEST(Graph, ChannelChainingViolation) {
  auto g = build_denseed(dense(1, 1, 1));
  g.layers[3].in_channels += 1;
  EXPECT_THROW(trace_features(g), Error);
}

TEST(Audit, BuiltinTable) {
  const auto report = audit_table(reference_specs());
  ASSERT_EQ(report.rows.size(), 10u);
  int exact_param_matches = 0;
  for (const auto& r : report.rows) {
    if (r.expected_params && *r.expected_params == r.parameters) ++exact_param_matches;
  }
  EXPECT_EQ(exact_param_matches, 8);
  EXPECT_TRUE(report.hard_matches());
  EXPECT_EQ(report.rows[4].name, "DenseED-(3,6,3)");
  EXPECT_EQ(report.rows[4].status, MatchStatus::flagged);
  EXPECT_EQ(report.rows[4].parameters, 237204);
  EXPECT_EQ(report.rows[1].status, MatchStatus::flagged);
  EXPECT_NE(report.rows[1].detail.find("max_fm(table 72)"), std::string::npos);
  EXPECT_EQ(report.rows[1].max_feature_maps, 48 + 2 * 16);
  EXPECT_EQ(report.rows[8].status, MatchStatus::informative);
  EXPECT_EQ(report.rows[9].status, MatchStatus::ok);
}

TEST(Audit, EmptyAndUnknown) {
  EXPECT_TRUE(audit_table({}).rows.empty());
  EXPECT_EQ(audit_table({}).to_csv(), "name,conv_layers,parameters,max_feature_maps,table3_expected_params,match\n");
  const auto r = audit_table({ArchSpec{dense(2, 2, 2, 8, 16)}});
  EXPECT_EQ(r.rows[0].status, MatchStatus::no_reference);
  EXPECT_NE(r.to_csv().find(",,-\n"), std::string::npos);
}

TEST(ArchSpecText, RoundTrip) {
  const ArchSpec a = parse_arch("blocks=2,2,2");
  EXPECT_EQ(std::get<DenseEDSpec>(a).blocks, (std::array<int, 3>{2, 2, 2}));
  for (const ArchSpec& s : {ArchSpec{dense(3, 6, 3, 8, 16)}, ArchSpec{DnCNNSpec{5, 8}}, ArchSpec{UNetSpec{2, 4}},
                            ArchSpec{LinearSpec{3, 1, 1, true}}}) {
    EXPECT_EQ(parse_arch(format_arch(s)), s);
  }
  EXPECT_THROW(parse_arch("blocks=0,1,1"), Error);
  EXPECT_THROW(parse_arch("blocks=1,1"), Error);
  EXPECT_THROW(parse_arch("arch=resnet"), Error);
  EXPECT_THROW(parse_arch("blocks=1,1,1;colour=red"), Error);
}

// Property checks over random valid specs.
TEST(DenseEDProperties, RandomSpecs) {
  std::mt19937 rng(20240611);
  std::uniform_int_distribution<int> layers(1, 12);
  std::uniform_int_distribution<int> growth(1, 32);
  std::uniform_int_distribution<int> half_init(1, 40);
  for (int trial = 0; trial < 50; ++trial) {
    const DenseEDSpec s = dense(layers(rng), layers(rng), layers(rng), growth(rng), 2 * half_init(rng));
    const NetworkGraph g = build_denseed(s);
    const FeatureTrace t = trace_features(g);

    EXPECT_EQ(t.conv_layer_count, 7 + s.blocks[0] + s.blocks[1] + s.blocks[2]);
    EXPECT_EQ(count_parameters(g), brute_force_params(g));
    EXPECT_EQ(count_parameters(g), denseed_params_oracle(s));
    EXPECT_EQ(t.stages.back().scale, SpatialScale::identity());

    for (std::size_t b = 0; b < 3; ++b) {
      const auto& range = g.dense_blocks[b];
      const int before = g.layers[range.begin].in_channels;
      const int after = g.layers[range.end - 1].out_channels;
      EXPECT_EQ(after, before + s.blocks[b] * s.growth_rate);
      // The 1x1 reduce right after the block halves channels.
      const auto& reduce = g.layers[range.end + 2];
      ASSERT_EQ(reduce.kernel, 1);
      EXPECT_EQ(reduce.out_channels, after / 2);
    }
  }
}
