#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "ns4ar/selection.hpp"
#include "oracles.hpp"

namespace ns4ar {
namespace {

TEST(Bic, Examples) {
  EXPECT_DOUBLE_EQ(bic_score(10, 10, 0), 0.0);
  EXPECT_NEAR(bic_score(10, 10, 1), std::log(10.0), 1e-12);
  EXPECT_NEAR(bic_score(2, 4, 2), 4 * std::log(0.5) + 2 * std::log(4.0), 1e-12);
  const double eps = std::numeric_limits<double>::epsilon();
  EXPECT_NEAR(bic_score(0, 4, 0), 4 * std::log(eps / 4), 1e-9);
  EXPECT_THROW(bic_score(1, 0, 0), std::invalid_argument);
  EXPECT_THROW(bic_score(-1, 3, 0), std::invalid_argument);
}

TEST(Fisher, MatchesExactEnumeration) {
  for (unsigned a = 0; a <= 15; ++a) {
    for (unsigned b = 0; a + b <= 15; ++b) {
      for (unsigned c = 0; a + b + c <= 15; ++c) {
        for (unsigned d = 0; a + b + c + d <= 15; ++d) {
          if (a + b + c + d == 0) continue;
          const double want = oracle::fisher(a, b, c, d);
          const double got = fisher_exact({{{a, b}, {c, d}}});
          ASSERT_NEAR(got, want, 1e-9 * std::max(1.0, want))
              << a << ' ' << b << ' ' << c << ' ' << d;
        }
      }
    }
  }
}

TEST(Fisher, Examples) {
  EXPECT_NEAR(fisher_exact({{{10, 0}, {0, 10}}}), 2.0 / 184756.0, 1e-12);
  EXPECT_DOUBLE_EQ(fisher_exact({{{3, 1}, {2, 7}}}), fisher_exact({{{3, 2}, {1, 7}}}));
  EXPECT_DOUBLE_EQ(fisher_exact({{{0, 0}, {4, 5}}}), 1.0);
  EXPECT_DOUBLE_EQ(fisher_exact({{{5, 5}, {5, 5}}}), 1.0);
  EXPECT_THROW(fisher_exact({{{0, 0}, {0, 0}}}), std::invalid_argument);
}

CandidateTable table_from(const std::vector<std::array<double, kNumFeatures>>& x,
                          const std::vector<double>& y) {
  CandidateTable t;
  for (std::size_t r = 0; r < x.size(); ++r) {
    t.items.push_back(static_cast<ItemId>(r));
    t.regions.push_back(2);
    t.features.push_back(x[r]);
    t.target.push_back(y[r]);
  }
  return t;
}

TEST(Stagewise, ExactFitInOneStep) {
  auto t = table_from({{1, 0, 0, 0}, {0, 0, 0, 0}, {1, 0, 0, 0}, {0, 0, 0, 0}},
                      {1, 0, 1, 0});
  StagewiseOptions o;
  o.step = 1;
  o.m = 2;
  auto r = stagewise_select(t, o);
  ASSERT_EQ(r.trace.size(), 1u);
  EXPECT_EQ(r.trace[0].feature, 0u);
  EXPECT_DOUBLE_EQ(r.trace[0].residual_norm, 0.0);
  EXPECT_DOUBLE_EQ(r.coefficients[0], 1.0);
  EXPECT_EQ(r.selected, (std::vector<ItemId>{0, 2}));
}

TEST(Stagewise, OrthogonalFeaturesSelectNothing) {
  // Target is orthogonal to every feature column.
  auto t = table_from({{1, 1, 0, 0}, {1, -1, 0, 0}, {-1, 1, 0, 0}, {-1, -1, 0, 0}},
                      {1, -1, -1, 1});
  auto r = stagewise_select(t, {});
  EXPECT_TRUE(r.trace.empty());
  EXPECT_TRUE(r.selected.empty());
  EXPECT_FALSE(r.significant);
}

TEST(Stagewise, EmptyTable) {
  auto r = stagewise_select(CandidateTable{}, {});
  EXPECT_TRUE(r.selected.empty());
  StagewiseOptions bad;
  bad.step = 0;
  EXPECT_THROW(stagewise_select(CandidateTable{}, bad), std::invalid_argument);
}

std::pair<CandidateTable, std::vector<double>> noisy_linear(std::mt19937_64& rng,
                                                            std::size_t n,
                                                            double b0, double b1) {
  std::normal_distribution<double> noise(0, 0.1);
  std::uniform_real_distribution<double> u(0, 3);
  std::vector<std::array<double, kNumFeatures>> x;
  std::vector<double> y;
  for (std::size_t r = 0; r < n; ++r) {
    const double a = u(rng), b = u(rng) + 0.3 * a;
    x.push_back({a, b, 0, 0});
    y.push_back(b0 * a + b1 * b + noise(rng));
  }
  return {table_from(x, y), y};
}

TEST(Stagewise, ResidualNeverIncreases) {
  std::mt19937_64 rng(2);
  auto [t, y] = noisy_linear(rng, 200, 0.8, -0.4);
  StagewiseOptions o;
  o.step = 0.05;
  auto r = stagewise_select(t, o);
  ASSERT_FALSE(r.trace.empty());
  double prev = std::sqrt(std::inner_product(y.begin(), y.end(), y.begin(), 0.0));
  for (const auto& s : r.trace) {
    EXPECT_LE(s.residual_norm, prev + 1e-12);
    prev = s.residual_norm;
  }
}

TEST(Stagewise, SingleFeatureApproachesLeastSquares) {
  std::mt19937_64 rng(5);
  std::vector<std::array<double, kNumFeatures>> x;
  std::vector<double> y;
  std::uniform_real_distribution<double> u(0, 4);
  std::normal_distribution<double> noise(0, 0.2);
  double sxy = 0, sxx = 0;
  for (int r = 0; r < 300; ++r) {
    const double a = u(rng);
    const double v = 1.7 * a + noise(rng);
    x.push_back({0, 0, a, 0});
    y.push_back(v);
    sxy += a * v;
    sxx += a * a;
  }
  StagewiseOptions o;
  o.step = 1e-3;
  o.max_iterations = 100000;
  auto r = stagewise_select(table_from(x, y), o);
  EXPECT_NEAR(r.coefficients[2], sxy / sxx, 0.05 * sxy / sxx);
}

TEST(Stagewise, TwoFeaturesApproachClosedForm) {
  std::mt19937_64 rng(17);
  auto [t, y] = noisy_linear(rng, 400, 0.9, 0.5);
  // Normal equations for two columns without intercept.
  double s11 = 0, s12 = 0, s22 = 0, s1y = 0, s2y = 0;
  for (std::size_t r = 0; r < t.size(); ++r) {
    const double a = t.features[r][0], b = t.features[r][1];
    s11 += a * a;
    s12 += a * b;
    s22 += b * b;
    s1y += a * y[r];
    s2y += b * y[r];
  }
  const double det = s11 * s22 - s12 * s12;
  const double b0 = (s22 * s1y - s12 * s2y) / det;
  const double b1 = (s11 * s2y - s12 * s1y) / det;
  StagewiseOptions o;
  o.step = 1e-3;
  o.max_iterations = 200000;
  auto r = stagewise_select(t, o);
  EXPECT_NEAR(r.coefficients[0], b0, 0.05 * std::abs(b0));
  EXPECT_NEAR(r.coefficients[1], b1, 0.05 * std::abs(b1));
}

TEST(Stagewise, TopMByScoreWithIdTies) {
  auto t = table_from({{2, 0, 0, 0}, {1, 0, 0, 0}, {2, 0, 0, 0}, {0, 0, 0, 0}, {1, 0, 0, 0}},
                      {1, 0, 1, 0, 0});
  StagewiseOptions o;
  o.m = 3;
  auto r = stagewise_select(t, o);
  EXPECT_EQ(r.selected, (std::vector<ItemId>{0, 2, 1}));
  for (std::size_t k = 1; k < r.scores.size(); ++k) EXPECT_GE(r.scores[k - 1], r.scores[k]);
  std::ostringstream out;
  r.dump(out);
  EXPECT_NE(out.str().find("# trace"), std::string::npos);
}

TEST(SelectCore, EmptyIntermediateRegions) {
  InteractionGraph g(2, 3, {{0, 0}, {1, 0}, {1, 1}}, {{0, 2, 1}});
  auto w = build_weight_matrix(g);
  auto p = partition_users(g, 100, 2);
  auto r = select_core_negatives(g, p, w, 0, {});
  EXPECT_TRUE(r.selected.empty());
}

InteractionGraph layered_graph(std::mt19937_64& rng) {
  // Users click within blocks of items; exposures fall on neighboring blocks.
  std::vector<Edge> clicks;
  std::vector<Exposure> exposures;
  std::uniform_real_distribution<double> unit(0, 1);
  for (UserId u = 0; u < 40; ++u) {
    const ItemId block = (u % 8) * 5;
    for (ItemId i = 0; i < 40; ++i) {
      const ItemId d = (i >= block ? i - block : block - i);
      if (d < 5 && unit(rng) < 0.6) {
        clicks.push_back({u, i});
      } else if (d < 15 && unit(rng) < 0.3) {
        exposures.push_back({u, i, 1});
      }
    }
  }
  return InteractionGraph(40, 40, clicks, exposures);
}

TEST(SelectCore, SaturatesAtCandidateCountAndIsDeterministic) {
  std::mt19937_64 rng(3);
  auto g = layered_graph(rng);
  auto w = build_weight_matrix(g);
  auto p = partition_users(g, 100, 4);
  StagewiseOptions big;
  big.m = 1000;
  for (UserId u = 0; u < 40; ++u) {
    const auto table = build_candidate_table(g, p, w, u);
    for (std::size_t r = 0; r < table.size(); ++r) {
      ASSERT_GE(table.regions[r], 2);
      ASSERT_LE(table.regions[r], 3);
      ASSERT_FALSE(g.has_click(u, table.items[r]));
    }
    auto a = select_core_negatives(g, p, w, u, big);
    if (!a.trace.empty()) EXPECT_EQ(a.selected.size(), table.size());
    auto b = select_core_negatives(g, p, w, u, big);
    EXPECT_EQ(a.selected, b.selected);
    EXPECT_EQ(a.fisher_p, b.fisher_p);
  }
}

}  // namespace
}  // namespace ns4ar
