#include <gtest/gtest.h>

#include "llpf/graph.hpp"

using namespace llpf;

TEST(ModelGraph, Mlp2Layout) {
  const auto g = make_model("mlp2", {20, 1, 1}, 3);
  const auto& layout = *g.param_layout();
  EXPECT_EQ(layout.size(), 20u * 32 + 32 + 32u * 3 + 3);
  EXPECT_EQ(g.num_classes(), 3);
  EXPECT_EQ(g.trainable_layers(), (std::vector<std::string>{"fc1", "fc2"}));
  EXPECT_EQ(layout.at("fc1.weight").length, 640u);
  EXPECT_EQ(g.buffer_size(), 0u);
}

TEST(ModelGraph, LenetShapes) {
  const auto g = make_model("lenet-micro", {1, 28, 28}, 10);
  EXPECT_EQ(g.out_shape(g.index_of("conv1")), (Shape{4, 24, 24}));
  EXPECT_EQ(g.out_shape(g.index_of("pool2")), (Shape{8, 5, 5}));
  EXPECT_EQ(g.param_layout()->at("fc1.weight").length, 200u * 32);
}

TEST(ModelGraph, ResnetHasBuffersAndNormSlices) {
  const auto g = make_model("resnet-micro", {1, 8, 8}, 10);
  std::size_t bn = 0;
  for (const auto& l : g.layers()) bn += l.kind == LayerKind::batch_norm;
  EXPECT_EQ(bn, 6u);
  EXPECT_GT(g.buffer_size(), 0u);
  const auto& s = g.param_layout()->at("stem.bn.norm_scale");
  EXPECT_EQ(s.kind, ParamKind::norm_scale);
  EXPECT_EQ(g.out_shape(g.index_of("block2.add")), (Shape{16, 4, 4}));
  EXPECT_EQ(g.out_shape(g.output_index()), (Shape{10, 1, 1}));
}

TEST(ModelGraph, DigestTracksStructure) {
  const auto a = make_model("mlp2", {20, 1, 1}, 3);
  const auto b = make_model("mlp2", {20, 1, 1}, 3);
  const auto c = make_model("mlp2", {20, 1, 1}, 4);
  EXPECT_EQ(a.digest(), b.digest());
  EXPECT_NE(a.digest(), c.digest());
}

TEST(ModelGraph, Validation) {
  EXPECT_THROW(make_model("nope", {1, 1, 1}, 3), ValidationError);
  EXPECT_THROW(ModelGraph("x", {4, 1, 1}, {dense("a", "missing", 2)}), ValidationError);
  EXPECT_THROW(ModelGraph("x", {4, 1, 1}, {dense("a", "", 2), dense("a", "a", 2)}),
               ValidationError);
  EXPECT_THROW(ModelGraph("x", {4, 1, 1}, {dense("a", "", 2), dense("b", "", 2)}),
               ValidationError);
  EXPECT_THROW(ModelGraph("x", {4, 1, 1}, {dense("a", "b", 2), dense("b", "a", 2)}),
               ValidationError);
  EXPECT_THROW(ModelGraph("x", {4, 1, 1}, {relu("r", "")}), ValidationError);
}
