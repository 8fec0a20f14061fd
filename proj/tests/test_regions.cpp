#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "ns4ar/regions.hpp"
#include "oracles.hpp"

namespace ns4ar {
namespace {

using Shells = std::vector<std::vector<ItemId>>;

TEST(BfsLayer, StarAndPath) {
  // User 0 clicked items 0..3: a star centered on the user.
  InteractionGraph star(1, 4, {{0, 0}, {0, 1}, {0, 2}, {0, 3}}, {});
  VisitedSet visited(star.num_nodes());
  visited.insert(0);
  std::vector<NodeId> q{0};
  auto leaves = bfs_layer(star, q, visited);
  EXPECT_EQ(leaves, (std::vector<NodeId>{1, 2, 3, 4}));
  EXPECT_TRUE(bfs_layer(star, leaves, visited).empty());

  // u0 - i0 - u1 - i1
  InteractionGraph path(2, 2, {{0, 0}, {1, 0}, {1, 1}}, {});
  VisitedSet v2(path.num_nodes());
  v2.insert(0);
  std::vector<NodeId> start{0};
  EXPECT_EQ(bfs_layer(path, start, v2), (std::vector<NodeId>{path.item_node(0)}));
}

TEST(Blfs, ChainAndDepthOne) {
  InteractionGraph chain(2, 2, {{0, 0}, {1, 0}, {1, 1}}, {});
  EXPECT_EQ(blfs(chain, 0, 4).shells, (Shells{{0}, {1}}));
  EXPECT_EQ(blfs(chain, 0, 1).shells, (Shells{{0}}));
  // Two clicks, nobody else: a single shell.
  InteractionGraph alone(1, 3, {{0, 0}, {0, 2}}, {});
  EXPECT_EQ(blfs(alone, 0, 10).shells, (Shells{{0, 2}}));
}

TEST(Blfs, UserWithoutClicks) {
  InteractionGraph g(2, 2, {{1, 0}}, {{0, 1, 1}});
  auto s = blfs(g, 0, 5);
  EXPECT_EQ(s.nonempty_count(), 0u);
  for (const auto& shell : s.shells) EXPECT_TRUE(shell.empty());
}

TEST(Blfs, RejectsBadArguments) {
  InteractionGraph g(1, 1, {{0, 0}}, {});
  EXPECT_THROW(blfs(g, 0, 0), std::invalid_argument);
  EXPECT_THROW(blfs(g, 3, 2), std::invalid_argument);
}

TEST(Blfs, MatchesBfsDistanceOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t users = 5 + rng() % 60;
    const std::size_t items = 5 + rng() % 80;
    auto g = oracle::random_graph(rng, users, items, 0.03 + 0.05 * (trial % 3));
    for (UserId u = 0; u < users; ++u) {
      const auto dist = oracle::item_distances(g, u);
      const auto s = blfs(g, u, 1000);
      std::vector<int> seen(items, -1);
      for (std::size_t d = 0; d < s.shells.size(); ++d) {
        for (ItemId i : s.shells[d]) {
          ASSERT_EQ(seen[i], -1) << "item in two shells";
          seen[i] = static_cast<int>(2 * d + 1);
        }
      }
      ASSERT_EQ(seen, dist) << "trial " << trial << " user " << u;
    }
  }
}

TEST(Blfs, EarlyTerminationIgnoresExtraDepth) {
  std::mt19937_64 rng(5);
  auto g = oracle::random_graph(rng, 30, 40, 0.08);
  for (UserId u = 0; u < 30; ++u) {
    EXPECT_EQ(blfs(g, u, 200).shells, blfs(g, u, 500).shells);
  }
}

ShellArray shells_of(Shells s) {
  ShellArray a;
  a.shells = std::move(s);
  return a;
}

TEST(AssignRegions, SpecExamples) {
  // Four shells over three regions.
  auto r = assign_regions(shells_of({{0}, {1}, {2}, {3}}), 3, 5);
  EXPECT_EQ(r.region_of, (std::vector<Region>{1, 1, 2, 2, 3}));
  // n = 1.
  r = assign_regions(shells_of({{0}, {1}}), 1, 3);
  EXPECT_EQ(r.region_of, (std::vector<Region>{1, 1, 1}));
  // Two shells, n = 5: regions 3 and 4 stay empty.
  r = assign_regions(shells_of({{0}, {1}}), 5, 3);
  EXPECT_EQ(r.region_of, (std::vector<Region>{1, 2, 5}));
  EXPECT_THROW(assign_regions(shells_of({}), 0, 1), std::invalid_argument);
}

TEST(AssignRegions, NearEqualGroups) {
  // Five shells over three grouping regions: sizes 1, 2, 2.
  auto r = assign_regions(shells_of({{0}, {1}, {2}, {3}, {4}}), 4, 6);
  EXPECT_EQ(r.region_of, (std::vector<Region>{1, 2, 2, 3, 3, 4}));
  // Empty shells are skipped, not counted.
  r = assign_regions(shells_of({{0}, {}, {1}}), 3, 2);
  EXPECT_EQ(r.region_of, (std::vector<Region>{1, 2}));
}

TEST(AssignRegions, MonotoneInDistance) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = oracle::random_graph(rng, 40, 60, 0.04);
    for (int n : {2, 3, 5, 9}) {
      for (UserId u = 0; u < 40; ++u) {
        const auto dist = oracle::item_distances(g, u);
        const auto r = assign_regions(blfs(g, u, 100), n, 60);
        for (ItemId i = 0; i < 60; ++i) {
          ASSERT_GE(r.region_of[i], 1);
          ASSERT_LE(r.region_of[i], n);
          if (dist[i] < 0) ASSERT_EQ(r.region_of[i], n);
          for (ItemId j = 0; j < 60; ++j) {
            if (dist[i] >= 0 && (dist[j] < 0 || dist[i] < dist[j])) {
              ASSERT_LE(r.region_of[i], r.region_of[j]);
            }
          }
        }
      }
    }
  }
}

TEST(Partition, ResolveRegionCount) {
  InteractionGraph chain(3, 3, {{0, 0}, {1, 0}, {1, 1}, {2, 1}, {2, 2}}, {});
  EXPECT_EQ(max_shell_count(chain, 100), 3u);
  EXPECT_EQ(resolve_region_count(chain, 100, 0), 4);
  EXPECT_EQ(resolve_region_count(chain, 2, 0), 2);
  EXPECT_EQ(resolve_region_count(chain, 100, 7), 7);
}

TEST(Partition, SaveLoadAndLookup) {
  std::mt19937_64 rng(9);
  auto g = oracle::random_graph(rng, 12, 20, 0.15);
  auto p = partition_users(g, 100, 4);
  EXPECT_EQ(p.n(), 4);
  const auto path = std::filesystem::temp_directory_path() / "ns4ar_partition.tsv";
  p.save(path);
  EXPECT_EQ(RegionPartition::load(path), p);
  std::filesystem::remove(path);

  RegionPartition partial(3, 10, 2, {UserRegions{1, {1, 3}}});
  EXPECT_TRUE(partial.has_user(1));
  EXPECT_FALSE(partial.has_user(0));
  EXPECT_EQ(partial.region_of(1, 1), 3);
  try {
    partial.regions_of(0);
    FAIL();
  } catch (const std::out_of_range& e) {
    EXPECT_NE(std::string(e.what()).find("user 0"), std::string::npos);
  }
}

}  // namespace
}  // namespace ns4ar
