#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "llpf/engine.hpp"

using namespace llpf;

namespace {

Batch random_batch(const ModelGraph& g, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Batch b;
  b.shape = g.input_shape();
  b.size = n;
  b.inputs.resize(n * b.shape.size());
  for (auto& x : b.inputs) x = static_cast<float>(standard_normal(rng));
  for (std::size_t i = 0; i < n; ++i) {
    b.labels.push_back(static_cast<std::int32_t>(uniform_index(rng, g.num_classes())));
  }
  return b;
}

double train_mode_loss(Executor<double>& ex, const ParamVectorF64& p, const Batch& b) {
  ex.forward(p, b, RunMode::train);
  return ex.loss(b.labels);
}

// Central differences on a seeded sample of coordinates.
void check_gradient(const ModelGraph& g, std::size_t batch, std::size_t coords) {
  auto p = init_params<double>(g, 3);
  Rng rng(4);
  // Nonzero biases and shifts so every term of the backward pass matters.
  for (auto& x : p.data()) x += 0.05 * standard_normal(rng);
  const auto b = random_batch(g, batch, 9);
  const auto lg = loss_and_grad<double>(g, p, b);
  Executor<double> ex(g);
  EXPECT_NEAR(lg.loss, train_mode_loss(ex, p, b), 1e-12);

  const double h = 1e-6;
  std::size_t bad = 0;
  for (std::size_t k = 0; k < coords; ++k) {
    const std::size_t i = k < p.size() && p.size() <= coords ? k : uniform_index(rng, p.size());
    const double orig = p.data()[i];
    p.data()[i] = orig + h;
    const double up = train_mode_loss(ex, p, b);
    p.data()[i] = orig - h;
    const double down = train_mode_loss(ex, p, b);
    p.data()[i] = orig;
    const double fd = (up - down) / (2 * h);
    const double an = lg.grad.data()[i];
    const double err = std::abs(an - fd);
    // Absolute floor for coordinates whose true gradient is zero, e.g. a
    // bias feeding straight into batch norm.
    if (err > 1e-9 && err / std::max(std::abs(an), std::abs(fd)) > 1e-5) {
      ++bad;
      ADD_FAILURE() << g.name() << " coord " << i << ": analytic " << an << " vs fd " << fd;
    }
    if (bad > 5) break;
  }
}

}  // namespace

TEST(GradCheck, Mlp2) { check_gradient(make_model("mlp2", {6, 1, 1}, 3), 8, 10000); }

TEST(GradCheck, LenetMicro) { check_gradient(make_model("lenet-micro", {1, 14, 14}, 4), 4, 400); }

TEST(GradCheck, ResnetMicro) {
  check_gradient(make_model("resnet-micro", {1, 6, 6}, 3), 6, 600);
}

TEST(GradCheck, AvgPoolWindowed) {
  const ModelGraph g("pool", {2, 4, 4},
                     {conv2d("c", "", 3, 3, 1, 1), avg_pool("p", "c", 2), flatten("f", "p"),
                      dense("d", "f", 3)});
  check_gradient(g, 5, 10000);
}

TEST(Init, KaimingUniformVariance) {
  // U(-b, b) with b = sqrt(6 / fan_in) has variance 2 / fan_in.
  const auto g = make_model("mlp2", {200, 1, 1}, 3);
  const auto p = init_params<double>(g, 1);
  const auto s = layer_stats<double>(p.slice("fc1.weight"));
  EXPECT_NEAR(s.variance, 2.0 / 200, 0.03 * 2.0 / 200);
  for (double v : p.slice("fc1.bias")) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(init_params<double>(g, 1), p);
  EXPECT_NE(init_params<double>(g, 2), p);
}

TEST(Init, NormAndBuffers) {
  const auto g = make_model("resnet-micro", {1, 6, 6}, 3);
  const auto p = init_params<float>(g, 1);
  for (float v : p.slice("stem.bn.norm_scale")) EXPECT_EQ(v, 1.0f);
  for (float v : p.slice("stem.bn.norm_shift")) EXPECT_EQ(v, 0.0f);
  const auto buf = init_buffers<float>(g);
  const std::size_t off = g.buffer_offset(g.index_of("stem.bn"));
  EXPECT_EQ(buf[off], 0.0f);
  EXPECT_EQ(buf[off + 8], 1.0f);
}

TEST(Loss, UniformLogitsGiveLogC) {
  const auto g = make_model("mlp2", {4, 1, 1}, 5);
  ParamVectorF64 zero(g.param_layout());
  const auto b = random_batch(g, 7, 1);
  const auto lg = loss_and_grad<double>(g, zero, b);
  EXPECT_NEAR(lg.loss, std::log(5.0), 1e-12);
}

TEST(Sgd, HandExamples) {
  auto layout = std::make_shared<const ParamLayout>(std::vector<SliceInfo>{
      {"a", ParamKind::weight, 0, 1}, {"b", ParamKind::weight, 0, 1}});
  ParamVectorF64 p(layout, {1.0, 2.0});
  ParamVectorF64 g(layout, {0.5, -1.0});
  SgdState<double> st;
  TrainerConfig cfg{0.1, 0.9, 0.0, 1};
  sgd_step(p, g, cfg, st);
  EXPECT_DOUBLE_EQ(p.data()[0], 1.0 - 0.05);
  EXPECT_DOUBLE_EQ(p.data()[1], 2.0 + 0.1);
  sgd_step(p, g, cfg, st);
  EXPECT_DOUBLE_EQ(p.data()[0], 0.95 - 0.1 * (0.9 * 0.5 + 0.5));

  ParamVectorF64 q(layout, {1.0, 2.0});
  SgdState<double> st2;
  TrainerConfig wd{0.1, 0.0, 0.5, 1};
  sgd_step(q, g, wd, st2);
  EXPECT_DOUBLE_EQ(q.data()[0], 1.0 - 0.1 * (0.5 + 0.5));

  ParamVectorF64 r(layout, {1.0, 2.0});
  SgdState<double> st3;
  const std::vector<double> lr = {0.0, 0.2};
  sgd_step(r, g, cfg, st3, lr);
  EXPECT_EQ(r.data()[0], 1.0);
  EXPECT_DOUBLE_EQ(r.data()[1], 2.2);
}

TEST(Train, ReachesThresholdOnBlobs) {
  const auto data = gen_blobs(3, 10, 1200, 2);
  const auto g = make_model("mlp2", {10, 1, 1}, 3);
  const auto res = train_mode<float>(g, 1, data.train, {0.05, 0, 0, 64}, {0.01, 5000, 10});
  EXPECT_FALSE(res.capped);
  EXPECT_LT(res.rolling_loss, 0.01);
  EXPECT_GE(res.rounds, 10u);
  EXPECT_GT(evaluate<float>(g, res.state, data.test).accuracy, 0.95);

  const auto again = train_mode<float>(g, 1, data.train, {0.05, 0, 0, 64}, {0.01, 5000, 10});
  EXPECT_EQ(again.state, res.state);
  EXPECT_EQ(again.rounds, res.rounds);
}

TEST(Train, FixedRoundsAndCap) {
  const auto data = gen_blobs(3, 10, 600, 2);
  const auto g = make_model("mlp2", {10, 1, 1}, 3);
  auto fixed = train_mode<float>(g, 1, data.train, {0.01, 0, 0, 32}, {0.0, 7, 10});
  EXPECT_EQ(fixed.rounds, 7u);
  EXPECT_FALSE(fixed.capped);
  auto capped = train_mode<float>(g, 1, data.train, {0.001, 0, 0, 32}, {1e-6, 12, 10});
  EXPECT_EQ(capped.rounds, 12u);
  EXPECT_TRUE(capped.capped);
}

TEST(Train, ZeroRateSlicesStayBitIdentical) {
  const auto data = gen_blobs(3, 10, 600, 2);
  const auto g = make_model("mlp2", {10, 1, 1}, 3);
  const auto s0 = init_state<float>(g, 4);
  TrainOptions opt;
  opt.slice_lr = {0.0, 0.0, 0.05, 0.05};
  Rng rng(1);
  const auto res = train_until<float>(g, s0, data.train, {0.05, 0.9, 1e-3, 32}, {0.0, 50, 10},
                                      rng, opt);
  EXPECT_TRUE(std::ranges::equal(res.state.params.slice("fc1.weight"),
                                 s0.params.slice("fc1.weight")));
  EXPECT_FALSE(std::ranges::equal(res.state.params.slice("fc2.weight"),
                                  s0.params.slice("fc2.weight")));
}

TEST(BatchNorm, RunningStatsUpdate) {
  const auto g = make_model("resnet-micro", {1, 6, 6}, 3);
  auto s = init_state<double>(g, 1);
  const auto b = random_batch(g, 8, 2);
  Executor<double> ex(g);
  const auto before = s.buffers;
  ex.forward(s.params, b, RunMode::train, s.buffers);
  EXPECT_NE(s.buffers, before);
  // Eval mode reads buffers and leaves them unchanged.
  const auto mid = s.buffers;
  ex.forward(s.params, b, RunMode::eval, s.buffers);
  EXPECT_EQ(s.buffers, mid);
}

TEST(Evaluate, MatchesManualLoss) {
  const auto data = gen_blobs(3, 6, 1500, 3);
  const auto g = make_model("mlp2", {6, 1, 1}, 3);
  const auto p = init_params<double>(g, 1);
  const auto r = evaluate<double>(g, p, data.train);
  Executor<double> ex(g);
  const auto b = full_batch(data.train);
  ex.forward(p, b, RunMode::eval);
  EXPECT_NEAR(r.loss, ex.loss(b.labels), 1e-12);
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(ex.correct(b.labels)) / b.size);
}
