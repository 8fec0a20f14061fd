#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "ns4ar/sampler.hpp"
#include "oracles.hpp"

namespace ns4ar {
namespace {

// One user (id 0) who clicked item 0; six items with regions 1,1,2,2,3,3.
struct Fixture {
  InteractionGraph g{1, 6, {{0, 0}}, {{0, 3, 2}, {0, 4, 1}}};
  RegionPartition p{3, 100, 6, {UserRegions{0, {1, 1, 2, 2, 3, 3}}}};
  // |w(0,2)| = 2 and |w(0,3)| = 1, so normalized squares are 1 and 0.25.
  WeightMatrix w{{{{0, 2}, {1, 1, 2.0, 0}}, {{0, 3}, {1, 1, 1.0, 0}}}};
};

TEST(BuildSets, MassesFollowRegions) {
  Fixture f;
  auto sets = build_sets(f.g, f.p, f.w, {});
  const auto& pools = sets.user(0);
  EXPECT_EQ(pools.find(0), nullptr);  // clicked
  ASSERT_NE(pools.find(1), nullptr);
  EXPECT_EQ(pools.find(1)->positive_mass, 1.0);
  EXPECT_EQ(pools.find(1)->negative_mass, 0.0);
  EXPECT_EQ(pools.find(2)->positive_mass, 1.0);
  EXPECT_EQ(pools.find(2)->negative_mass, 0.0);
  EXPECT_DOUBLE_EQ(pools.find(3)->positive_mass, 0.25);
  EXPECT_DOUBLE_EQ(pools.find(3)->negative_mass, 0.75);
  EXPECT_EQ(pools.find(4)->negative_mass, 1.0);
  EXPECT_EQ(pools.find(5)->positive_mass, 0.0);
  EXPECT_EQ(pools.negatives, (std::vector<ItemId>{3, 4, 5}));
  EXPECT_EQ(pools.cumulative, (std::vector<double>{0.75, 1.75, 2.75}));
}

TEST(BuildSets, CoreNegativesGetFullMass) {
  Fixture f;
  auto sets = build_sets(f.g, f.p, f.w, {{3, 0}});
  const auto& pools = sets.user(0);
  EXPECT_EQ(pools.core, (std::vector<ItemId>{3}));  // the click is dropped
  EXPECT_EQ(pools.find(3)->negative_mass, 1.0);
}

TEST(BuildSets, RegionFilter) {
  Fixture f;
  const std::vector<int> only{2};
  auto sets = build_sets(f.g, f.p, f.w, {{3}}, only);
  const auto& pools = sets.user(0);
  EXPECT_EQ(pools.negatives, (std::vector<ItemId>{2, 3}));
  EXPECT_TRUE(pools.core.empty());
  EXPECT_THROW(sets.user(1), std::out_of_range);
}

TEST(BuildSets, SingleRegionIsTreatedAsLast) {
  InteractionGraph g(1, 3, {{0, 0}}, {});
  RegionPartition p(1, 100, 3, {UserRegions{0, {1, 1, 1}}});
  auto sets = build_sets(g, p, WeightMatrix{}, {});
  EXPECT_EQ(sets.user(0).negatives, (std::vector<ItemId>{1, 2}));
}

TEST(BuildSets, InvariantsOnRandomGraphs) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    auto g = oracle::random_graph(rng, 30, 40, 0.08, 0.1);
    auto w = build_weight_matrix(g);
    for (int n : {2, 3, 5}) {
      auto p = partition_users(g, 100, n);
      auto sets = build_sets(g, p, w, {});
      for (UserId u = 0; u < 30; ++u) {
        const auto& pools = sets.user(u);
        double prev = 0;
        for (std::size_t t = 0; t < pools.negatives.size(); ++t) {
          ASSERT_GT(pools.cumulative[t], prev);
          prev = pools.cumulative[t];
        }
        for (const auto& it : pools.items) {
          ASSERT_FALSE(g.has_click(u, it.item));
          ASSERT_GE(it.positive_mass, 0.0);
          ASSERT_LE(it.positive_mass, 1.0);
          ASSERT_GE(it.negative_mass, 0.0);
          ASSERT_LE(it.negative_mass, 1.0);
          if (it.region == 1) ASSERT_EQ(it.negative_mass, 0.0);
          if (it.region == n) ASSERT_EQ(it.negative_mass, 1.0);
          if (it.region > 1 && it.region < n) {
            ASSERT_NEAR(it.positive_mass + it.negative_mass, 1.0, 1e-12);
          }
        }
      }
    }
  }
}

TEST(SampleNegatives, ForcedAndReplacementDraws) {
  Fixture f;
  auto sets = build_sets(f.g, f.p, f.w, {});
  Rng rng(1);
  auto d = sample_negatives(sets, 0, 3, rng, 0);
  EXPECT_FALSE(d.with_replacement);
  EXPECT_EQ(std::set<ItemId>(d.items.begin(), d.items.end()), (std::set<ItemId>{3, 4, 5}));
  d = sample_negatives(sets, 0, 8, rng, 0);
  EXPECT_TRUE(d.with_replacement);
  EXPECT_EQ(d.items.size(), 8u);
  for (ItemId i : d.items) EXPECT_TRUE(i >= 3 && i <= 5);
}

TEST(SampleNegatives, EmptyPoolThrows) {
  InteractionGraph g(1, 2, {{0, 0}}, {});
  RegionPartition p(2, 100, 2, {UserRegions{0, {1, 1}}});
  auto sets = build_sets(g, p, WeightMatrix{}, {});
  Rng rng(1);
  EXPECT_THROW(sample_negatives(sets, 0, 1, rng), std::runtime_error);
}

TEST(SampleNegatives, FrequenciesFollowMass) {
  Fixture f;
  auto sets = build_sets(f.g, f.p, f.w, {});
  Rng rng(77);
  const int draws = 100000;
  std::map<ItemId, int> count;
  for (int t = 0; t < draws; ++t) ++count[sample_negatives(sets, 0, 1, rng, 0).items[0]];
  EXPECT_EQ(count.size(), 3u);  // zero-mass items never appear
  const std::map<ItemId, double> mass{{3, 0.75}, {4, 1.0}, {5, 1.0}};
  for (const auto& [item, m] : mass) {
    const double p = m / 2.75;
    const double sigma = std::sqrt(draws * p * (1 - p));
    EXPECT_NEAR(count[item], draws * p, 3 * sigma) << "item " << item;
  }
}

TEST(SampleNegatives, CoreQuota) {
  Fixture f;
  auto sets = build_sets(f.g, f.p, f.w, {{5}});
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    auto d = sample_negatives(sets, 0, 2, rng, 0.5);
    ASSERT_EQ(d.items.front(), 5u);
    ASSERT_EQ(d.items.size(), 2u);
    ASSERT_NE(d.items[0], d.items[1]);
  }
  // A quota below one slot draws the core only through its mass.
  std::set<ItemId> firsts;
  for (int t = 0; t < 200; ++t) firsts.insert(sample_negatives(sets, 0, 1, rng, 0.5).items[0]);
  EXPECT_GT(firsts.size(), 1u);
}

EmbeddingModel scored_model(std::size_t users, const std::vector<double>& item_scores) {
  EmbeddingModel m(users, item_scores.size(), 1, 0);
  Matrix f(users + item_scores.size(), 1);
  for (std::size_t u = 0; u < users; ++u) f(u, 0) = 1;
  for (std::size_t i = 0; i < item_scores.size(); ++i) f(users + i, 0) = item_scores[i];
  m.set_fused(f);
  return m;
}

TEST(ExposureArgmax, PicksHighestWeightedScore) {
  Fixture f;
  auto sets = build_sets(f.g, f.p, f.w, {});
  // Item 3 is exposed twice and has negative mass, so its score is doubled.
  // Item 5 scores highest but was never exposed.
  auto m = scored_model(1, {0, 0, 0, 0.6, 1.3, 5.0});
  EXPECT_EQ(exposure_argmax(f.g, 0, sets, m), 4u);
  // Raw 0.6 < 1.1, but the exposure count lifts item 3 to 1.2.
  m = scored_model(1, {0, 0, 0, 0.6, 1.1, 5.0});
  EXPECT_EQ(exposure_argmax(f.g, 0, sets, m), 3u);
  m = scored_model(1, {0, 0, 0, 0.7, 1.3, 5.0});
  EXPECT_EQ(exposure_argmax(f.g, 0, sets, m), 3u);
  // Scaling every score by a positive constant keeps the choice.
  m = scored_model(1, {0, 0, 0, 7.0, 13.0, 50.0});
  EXPECT_EQ(exposure_argmax(f.g, 0, sets, m), 3u);
}

TEST(ExposureArgmax, SingletonAndMissing) {
  InteractionGraph g(2, 3, {{0, 0}, {1, 0}}, {{0, 2, 1}});
  RegionPartition p(2, 100, 3, {UserRegions{0, {1, 2, 2}}, UserRegions{1, {1, 2, 2}}});
  auto sets = build_sets(g, p, WeightMatrix{}, {});
  auto m = scored_model(2, {0, 9, -3});
  EXPECT_EQ(exposure_argmax(g, 0, sets, m), 2u);
  EXPECT_THROW(exposure_argmax(g, 1, sets, m), std::runtime_error);
}

TEST(Uniform, MarginalIsUniformOverUnclicked) {
  InteractionGraph g(1, 6, {{0, 1}, {0, 4}}, {});
  Rng rng(5);
  const int draws = 100000;
  std::map<ItemId, int> count;
  for (int t = 0; t < draws; ++t) ++count[baseline_uniform(g, 0, 1, rng).items[0]];
  EXPECT_EQ(count.count(1), 0u);
  EXPECT_EQ(count.count(4), 0u);
  const double p = 0.25, sigma = std::sqrt(draws * p * (1 - p));
  for (ItemId i : {0u, 2u, 3u, 5u}) EXPECT_NEAR(count[i], draws * p, 3 * sigma);
  auto d = baseline_uniform(g, 0, 4, rng);
  EXPECT_FALSE(d.with_replacement);
  EXPECT_EQ(std::set<ItemId>(d.items.begin(), d.items.end()).size(), 4u);
  EXPECT_TRUE(baseline_uniform(g, 0, 5, rng).with_replacement);
}

TEST(Dns, PoolOfKEqualsUniform) {
  std::mt19937_64 gen(2);
  auto g = oracle::random_graph(gen, 5, 30, 0.2);
  std::vector<double> scores(30);
  for (double& s : scores) s = std::uniform_real_distribution<double>(-1, 1)(gen);
  auto m = scored_model(5, scores);
  for (UserId u = 0; u < 5; ++u) {
    Rng a(u + 10), b(u + 10);
    EXPECT_EQ(baseline_dns(g, u, 4, 4, m, a).items, baseline_uniform(g, u, 4, b).items);
  }
}

TEST(Dns, FullPoolReturnsTopScored) {
  InteractionGraph g(1, 6, {{0, 0}}, {});
  auto m = scored_model(1, {9, 0.1, 0.5, 3.0, -1, 2.0});
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    auto d = baseline_dns(g, 0, 2, 5, m, rng);
    ASSERT_EQ(std::set<ItemId>(d.items.begin(), d.items.end()), (std::set<ItemId>{3, 5}));
  }
  // A dominant item is kept whenever it enters the candidate pool.
  m = scored_model(1, {0, 0, 0, 100, 0, 0});
  int with_dominant = 0;
  for (int t = 0; t < 500; ++t) {
    auto d = baseline_dns(g, 0, 1, 3, m, rng);
    with_dominant += d.items[0] == 3;
  }
  // The pool of 3 out of 5 contains item 3 with probability 3/5.
  EXPECT_NEAR(with_dominant, 300, 3 * std::sqrt(500 * 0.6 * 0.4));
}

TEST(NegativeSampler, NeverReturnsTrainingClicks) {
  std::mt19937_64 gen(9);
  auto g = oracle::random_graph(gen, 20, 30, 0.15, 0.15);
  auto w = build_weight_matrix(g);
  auto p = partition_users(g, 100, 4);
  auto sets = build_sets(g, p, w, {});
  EmbeddingModel m(20, 30, 4, 1);
  m.initialize(1);
  m.refresh(NormalizedAdjacency(g));
  for (auto kind : {SamplerKind::kNs4ar, SamplerKind::kUniform, SamplerKind::kDnsHard,
                    SamplerKind::kExposureArgmax}) {
    SamplerConfig c;
    c.kind = kind;
    c.k = 3;
    NegativeSampler s(c, g, sets);
    Rng rng(2);
    for (UserId u = 0; u < 20; ++u) {
      if (!s.can_sample(u)) continue;
      for (int t = 0; t < 20; ++t) {
        auto d = s.draw(u, m, rng);
        ASSERT_EQ(d.items.size(), 3u) << to_string(kind);
        for (ItemId i : d.items) ASSERT_FALSE(g.has_click(u, i)) << to_string(kind);
      }
    }
  }
}

TEST(SamplerConfig, Validation) {
  SamplerConfig c;
  c.k = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.k = 2;
  c.core_quota = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(parse_sampler_kind("uniform_rns"), SamplerKind::kUniform);
  EXPECT_THROW(parse_sampler_kind("bogus"), std::invalid_argument);
  EXPECT_EQ(to_string(SamplerKind::kExposureArgmax), "exposure_argmax");
}

TEST(RngStream, DistinctWorkersDiffer) {
  auto a = rng_stream(1, 0), b = rng_stream(1, 1), c = rng_stream(1, 0);
  EXPECT_NE(a(), b());
  a = rng_stream(1, 0);
  EXPECT_EQ(a(), c());
}

}  // namespace
}  // namespace ns4ar
