#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "llpf/analysis.hpp"

using namespace llpf;

TEST(RollingAverage, HandValues) {
  const std::vector<double> s = {1, 2, 3, 4, 5};
  EXPECT_EQ(rolling_average(s, 2), (std::vector<double>{1, 1.5, 2.5, 3.5, 4.5}));
  EXPECT_EQ(rolling_average(s, 1), s);
  EXPECT_EQ(rolling_average(s, 10), (std::vector<double>{1, 1.5, 2, 2.5, 3}));
  EXPECT_THROW(rolling_average(s, 0), ValidationError);
  EXPECT_TRUE(rolling_average(std::vector<double>{}, 3).empty());
}

TEST(RollingAverage, BoundedByWindowExtremesAndMatchesNaive) {
  Rng rng(1);
  std::vector<double> s(500);
  for (auto& x : s) x = uniform(rng, 0, 10);
  for (std::size_t w : {1u, 3u, 10u, 77u}) {
    const auto r = rolling_average(s, w);
    for (std::size_t i = 0; i < s.size(); ++i) {
      const std::size_t lo = i + 1 >= w ? i + 1 - w : 0;
      double sum = 0, mn = 1e300, mx = -1e300;
      for (std::size_t k = lo; k <= i; ++k) {
        sum += s[k];
        mn = std::min(mn, s[k]);
        mx = std::max(mx, s[k]);
      }
      EXPECT_NEAR(r[i], sum / (i + 1 - lo), 1e-9);
      EXPECT_GE(r[i], mn - 1e-12);
      EXPECT_LE(r[i], mx + 1e-12);
    }
  }
}

namespace {

struct Fixture {
  DatasetPair data = gen_blobs(3, 6, 600, 3);
  ModelGraph graph = make_model("mlp2", {6, 1, 1}, 3);
};

}  // namespace

TEST(Continuity, IdenticalPointsGiveFlatLoss) {
  Fixture f;
  const auto s = init_state<double>(f.graph, 1);
  const std::vector<StoredPoint<double>> pts = {{0, s}, {5, s}, {9, s}};
  ContinuityOptions opt;
  opt.samples = 7;
  opt.eval_samples = 0;
  const auto rep = interpolation_continuity<double>(f.graph, pts, f.data.train, opt);
  ASSERT_EQ(rep.segments.size(), 2u);
  const double l = evaluate<double>(f.graph, s, f.data.train).loss;
  for (const auto& seg : rep.segments) {
    ASSERT_EQ(seg.losses.size(), 7u);
    for (double x : seg.losses) EXPECT_NEAR(x, l, 1e-12);
  }
  EXPECT_EQ(rep.segments[1].from_iteration, 5u);
  EXPECT_NEAR(rep.global_max_loss, l, 1e-12);
}

TEST(Continuity, EndpointsMatchDirectEvaluationAndJobsAgree) {
  Fixture f;
  const std::vector<StoredPoint<double>> pts = {{0, init_state<double>(f.graph, 1)},
                                                {1, init_state<double>(f.graph, 2)}};
  ContinuityOptions opt;
  opt.samples = 11;
  opt.full_train = true;
  const auto rep = interpolation_continuity<double>(f.graph, pts, f.data.train, opt);
  const auto& seg = rep.segments.at(0);
  EXPECT_NEAR(seg.losses.front(), evaluate<double>(f.graph, pts[0].state, f.data.train).loss, 1e-12);
  EXPECT_NEAR(seg.losses.back(), evaluate<double>(f.graph, pts[1].state, f.data.train).loss, 1e-12);
  EXPECT_GE(rep.global_max_loss, rep.pointwise_max_loss);

  // Midpoint against an explicit interpolation.
  auto mid = pts[0].state;
  for (std::size_t i = 0; i < mid.params.size(); ++i) {
    mid.params.data()[i] = 0.5 * pts[0].state.params.data()[i] + 0.5 * pts[1].state.params.data()[i];
  }
  EXPECT_NEAR(seg.losses[5], evaluate<double>(f.graph, mid, f.data.train).loss, 1e-9);

  opt.jobs = 4;
  const auto par = interpolation_continuity<double>(f.graph, pts, f.data.train, opt);
  EXPECT_EQ(par.segments[0].losses, seg.losses);
}

TEST(SeedStudy, UntrainedVarianceFollowsInit) {
  Fixture f;
  const auto g = make_model("mlp2", {200, 1, 1}, 3);
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  SeedStudyOptions opt;
  opt.train = false;
  const auto data = gen_blobs(3, 200, 100, 1);
  const auto study = seed_variance_study(g, seeds, data.train, opt);
  ASSERT_EQ(study.seeds.size(), 5u);
  const auto it = std::ranges::find(study.summary, std::string("fc1.weight"), &SliceSummary::key);
  ASSERT_NE(it, study.summary.end());
  EXPECT_NEAR(it->mean_variance, 2.0 / 200, 0.03 * 2.0 / 200);
  EXPECT_LT(it->variance_cov, 0.05);
  const auto table = seed_study_table(study);
  EXPECT_EQ(table.rows.size(), 5u * g.param_layout()->slice_count());
}

TEST(Aggregate, MeanAndStd) {
  const std::vector<std::vector<std::pair<std::size_t, double>>> runs = {
      {{0, 1.0}, {1, 2.0}}, {{0, 3.0}}};
  const auto rows = aggregate_by_iteration(runs);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].mean, 2.0);
  EXPECT_EQ(rows[0].std, 1.0);
  EXPECT_EQ(rows[0].count, 2u);
  EXPECT_EQ(rows[1].count, 1u);
  EXPECT_EQ(rows[1].std, 0.0);
}
