#include <gtest/gtest.h>

#include <random>

#include "cotforge/scaling.hpp"
#include "support.hpp"

namespace cotforge {
namespace {

using namespace cotforge::testing;

std::pair<int, int> ck(const ScalingPlan& p) { return {p.chains, p.images_per_chain}; }

TEST(ExpandPlan, DefaultShapes) {
  EXPECT_EQ(ck(expand_plan(Strategy::single_chain, 8)), std::pair(1, 8));
  EXPECT_EQ(ck(expand_plan(Strategy::vanilla, 8)), std::pair(1, 8));
  EXPECT_EQ(ck(expand_plan(Strategy::multi_chain, 8)), std::pair(8, 1));
  EXPECT_EQ(ck(expand_plan(Strategy::hybrid, 2)), std::pair(1, 2));
  EXPECT_EQ(ck(expand_plan(Strategy::hybrid, 4)), std::pair(2, 2));
  EXPECT_EQ(ck(expand_plan(Strategy::hybrid, 8)), std::pair(2, 4));
  EXPECT_EQ(ck(expand_plan(Strategy::hybrid, 16)), std::pair(4, 4));
}

TEST(ExpandPlan, HybridOverrides) {
  EXPECT_EQ(ck(expand_plan(Strategy::hybrid, 8, {4, 2})), std::pair(4, 2));
  EXPECT_EQ(ck(expand_plan(Strategy::hybrid, 8, {4, std::nullopt})), std::pair(4, 2));
  EXPECT_EQ(ck(expand_plan(Strategy::hybrid, 2, {2, 1})), std::pair(2, 1));
  EXPECT_EQ(error_kind_of([] { expand_plan(Strategy::hybrid, 8, {3, std::nullopt}); }), ErrorKind::invalid_plan);
  EXPECT_EQ(error_kind_of([] { expand_plan(Strategy::hybrid, 8, {3, 3}); }), ErrorKind::invalid_plan);
  EXPECT_EQ(error_kind_of([] { expand_plan(Strategy::hybrid, 16, {2, 8}); }), ErrorKind::invalid_plan);
  EXPECT_EQ(error_kind_of([] { expand_plan(Strategy::single_chain, 8, {2, 4}); }), ErrorKind::invalid_plan);
  EXPECT_EQ(error_kind_of([] { expand_plan(Strategy::multi_chain, 8, {4, 2}); }), ErrorKind::invalid_plan);
  EXPECT_EQ(error_kind_of([] { expand_plan(Strategy::hybrid, 0); }), ErrorKind::invalid_plan);
  EXPECT_EQ(error_kind_of([] { strategy_from_string("bogus"); }), ErrorKind::invalid_plan);
}

TEST(ExpandPlan, ProductIsAlwaysN) {
  std::mt19937 rng(11);
  const Strategy all[] = {Strategy::single_chain, Strategy::multi_chain, Strategy::hybrid, Strategy::vanilla};
  for (int t = 0; t < 400; ++t) {
    const int n = 1 + static_cast<int>(rng() % 64);
    const auto s = all[rng() % 4];
    auto p = expand_plan(s, n);
    EXPECT_EQ(p.total(), n);
    if (s == Strategy::hybrid) {
      for (auto [c, k] : hybrid_configurations(n)) {
        EXPECT_EQ(c * k, n);
        EXPECT_EQ(expand_plan(s, n, {c, k}).total(), n);
      }
    }
  }
}

struct ScalingFixture : ::testing::Test {
  TempDir dir;
  Harness h{dir.path()};
  MultimodalContext ctx = make_context(dir.path(), "s0");
};

TEST_F(ScalingFixture, HybridFourByFourCallCounts) {
  auto out = execute_plan(*h.backends, ctx, expand_plan(Strategy::hybrid, 16));
  EXPECT_EQ(h.backends->telemetry().reasoner, 4);
  EXPECT_EQ(h.backends->telemetry().t2i, 16);
  ASSERT_EQ(out.jobs.size(), 16u);
  ASSERT_EQ(out.chains.size(), 4u);
  for (std::size_t j = 0; j < 16; ++j) {
    EXPECT_EQ(out.jobs[j].chain_index, static_cast<int>(j / 4));
    EXPECT_EQ(out.jobs[j].seed, static_cast<std::int64_t>(j % 4));
    EXPECT_TRUE(out.jobs[j].ok());
  }
  std::set<std::string> texts;
  for (auto& c : out.chains) texts.insert(c.text);
  EXPECT_EQ(texts.size(), 4u);
}

TEST_F(ScalingFixture, VanillaSkipsTheReasoner) {
  auto out = execute_plan(*h.backends, ctx, expand_plan(Strategy::vanilla, 16));
  EXPECT_EQ(h.backends->telemetry().reasoner, 0);
  EXPECT_EQ(h.backends->telemetry().t2i, 16);
  std::set<std::string> hashes;
  for (auto& j : out.jobs) hashes.insert(to_hex(j.image->content_hash));
  EXPECT_EQ(hashes.size(), 16u);
}

TEST_F(ScalingFixture, SingleChainSharesOneChain) {
  auto out = execute_plan(*h.backends, ctx, expand_plan(Strategy::single_chain, 4));
  EXPECT_EQ(h.backends->telemetry().reasoner, 1);
  EXPECT_EQ(h.backends->telemetry().t2i, 4);
  for (auto& j : out.jobs) EXPECT_EQ(j.chain_index, 0);
}

TEST_F(ScalingFixture, OneByTwoChainIndexes) {
  auto out = execute_plan(*h.backends, ctx, expand_plan(Strategy::hybrid, 2, {1, 2}));
  ASSERT_EQ(out.jobs.size(), 2u);
  EXPECT_EQ(out.jobs[0].chain_index, 0);
  EXPECT_EQ(out.jobs[1].chain_index, 0);
  EXPECT_EQ(out.jobs[0].seed, 0);
  EXPECT_EQ(out.jobs[1].seed, 1);
}

TEST_F(ScalingFixture, GreedyMultiChainCollapses) {
  SamplingParams greedy;
  greedy.temperature = 0.0;
  auto out = execute_plan(*h.backends, ctx, expand_plan(Strategy::multi_chain, 3, {}, greedy));
  ASSERT_EQ(out.chains.size(), 3u);
  EXPECT_EQ(out.chains[0].text, out.chains[1].text);
  EXPECT_EQ(out.chains[1].text, out.chains[2].text);
}

TEST_F(ScalingFixture, PartialFailureIsRecorded) {
  h.mock->set_fault_policy([](const MockRequest& r) -> std::optional<int> {
    if (r.endpoint == MockRequest::Endpoint::images && r.seed == 1) return 400;
    return std::nullopt;
  });
  auto out = execute_plan(*h.backends, ctx, expand_plan(Strategy::single_chain, 3));
  EXPECT_TRUE(out.jobs[0].ok());
  EXPECT_FALSE(out.jobs[1].ok());
  EXPECT_FALSE(out.jobs[1].error.empty());
  EXPECT_TRUE(out.jobs[2].ok());
}

TEST_F(ScalingFixture, KeywordVerifier) {
  auto out = execute_plan(*h.backends, ctx, expand_plan(Strategy::single_chain, 2));
  TaskSpec task{ctx, std::nullopt};
  task.verifier_target = "MOCK";
  auto scores = verify_outcome(out, task, keyword_verifier);
  EXPECT_EQ(scores, (std::vector<double>{1.0, 1.0}));
  task.verifier_target = "mock zebra";
  EXPECT_EQ(verify_outcome(out, task, keyword_verifier), (std::vector<double>{0.0, 0.0}));
}

TEST(BestOfN, Examples) {
  ScaledOutcome o;
  std::vector<double> a{0.2, 0.9, 0.4, 0.9};
  auto r = best_of_n(o, a, 0.5);
  EXPECT_EQ(r.best_index, 1);
  EXPECT_TRUE(r.passed);
  std::vector<double> b{0.1, 0.3};
  r = best_of_n(o, b, 0.5);
  EXPECT_EQ(r.best_index, 1);
  EXPECT_FALSE(r.passed);
  std::vector<double> c{0.5};
  EXPECT_TRUE(best_of_n(o, c, 0.5).passed);
  EXPECT_EQ(error_kind_of([&] { best_of_n(o, std::vector<double>{}, 0.5); }), ErrorKind::invalid_input);
}

TEST(PassCurve, ExamplesAndMonotone) {
  std::vector<std::vector<double>> lists{{0, 0, 1, 0}, {1, 0, 0, 0}, {0, 0, 0, 0}};
  auto c = pass_curve(lists, {1.0}, {1, 2, 3, 4});
  EXPECT_EQ(c.rates[0], (std::vector<double>{1.0 / 3, 1.0 / 3, 2.0 / 3, 2.0 / 3}));
  EXPECT_EQ(error_kind_of([&] { pass_curve(lists, {1.0}, {5}); }), ErrorKind::invalid_input);

  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::vector<double>> random(20, std::vector<double>(16));
  for (auto& l : random)
    for (auto& s : l) s = u(rng);
  auto curve = pass_curve(random, {0.5, 0.9, 0.99}, {1, 2, 4, 8, 16});
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t i = 1; i < 5; ++i) EXPECT_GE(curve.rates[t][i], curve.rates[t][i - 1]);
    if (t > 0)
      for (std::size_t i = 0; i < 5; ++i) EXPECT_LE(curve.rates[t][i], curve.rates[t - 1][i]);
  }
}

TEST(PlanJson, Fields) {
  auto j = json(expand_plan(Strategy::hybrid, 8));
  EXPECT_EQ(j["strategy"], "hybrid");
  EXPECT_EQ(j["chains"], 2);
  EXPECT_EQ(j["images_per_chain"], 4);
  EXPECT_EQ(j["total"], 8);
}

}  // namespace
}  // namespace cotforge
