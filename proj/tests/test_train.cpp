#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <utility>

#include "ns4ar/train.hpp"
#include "oracles.hpp"

namespace ns4ar {
namespace {

struct Instance {
  InteractionGraph g;
  WeightMatrix w;
  RegionPartition p;
  SampleSets sets;

  explicit Instance(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    g = oracle::random_graph(rng, 25, 30, 0.12, 0.1);
    w = build_weight_matrix(g);
    p = partition_users(g, 100, 3);
    sets = build_sets(g, p, w, {});
  }
};

TrainConfig small_config() {
  TrainConfig c;
  c.dim = 8;
  c.layers = 2;
  c.epochs = 5;
  c.batch_size = 16;
  c.lr = 0.5;
  c.sampler.k = 2;
  return c;
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  Instance s(1);
  auto c = small_config();
  c.lr = 0;
  NegativeSampler sampler(c.sampler, s.g, s.sets);
  auto r = train_model(s.g, sampler, c);
  EmbeddingModel init(s.g.num_users(), s.g.num_items(), c.dim, c.layers);
  init.initialize(c.seed);
  EXPECT_EQ(std::as_const(r.model).base().data, std::as_const(init).base().data);
  ASSERT_EQ(r.stats.epoch_loss.size(), 5u);
  EXPECT_GT(r.stats.epoch_loss.front(), 0.0);
}

TEST(Train, LossDecreasesOnSmallInstance) {
  Instance s(2);
  auto c = small_config();
  c.epochs = 40;
  for (auto kind : {SamplerKind::kNs4ar, SamplerKind::kUniform}) {
    c.sampler.kind = kind;
    NegativeSampler sampler(c.sampler, s.g, s.sets);
    auto r = train_model(s.g, sampler, c);
    const auto& l = r.stats.epoch_loss;
    EXPECT_LT(l.back(), 0.8 * l.front()) << to_string(kind);
    EXPECT_EQ(r.stats.examples, s.g.click_edges().size());
    EXPECT_FALSE(r.model.stale());
  }
}

TEST(Train, DeterministicGivenSeed) {
  Instance s(3);
  auto c = small_config();
  NegativeSampler sampler(c.sampler, s.g, s.sets);
  auto a = train_model(s.g, sampler, c);
  auto b = train_model(s.g, sampler, c);
  EXPECT_EQ(a.model.fused().data, b.model.fused().data);
  EXPECT_EQ(a.stats.epoch_loss, b.stats.epoch_loss);
  c.seed = 2;
  auto d = train_model(s.g, sampler, c);
  EXPECT_NE(a.model.fused().data, d.model.fused().data);
}

TEST(Train, PerEpochRefreshAlsoLearns) {
  Instance s(4);
  auto c = small_config();
  c.epochs = 40;
  c.refresh = RefreshPolicy::kPerEpoch;
  NegativeSampler sampler(c.sampler, s.g, s.sets);
  auto r = train_model(s.g, sampler, c);
  EXPECT_LT(r.stats.epoch_loss.back(), r.stats.epoch_loss.front());
}

TEST(Train, DivergenceIsReported) {
  Instance s(5);
  auto c = small_config();
  c.lr = std::numeric_limits<double>::infinity();
  NegativeSampler sampler(c.sampler, s.g, s.sets);
  EXPECT_THROW(train_model(s.g, sampler, c), TrainingDiverged);
}

TEST(Train, ConfigValidation) {
  TrainConfig c;
  c.gamma = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.lr = -0.1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Train, LossCurveFile) {
  TrainStats st;
  st.epoch_loss = {0.5, 0.25};
  const auto path = std::filesystem::temp_directory_path() / "ns4ar_loss.csv";
  save_loss_curve(st, path);
  std::ifstream in(path);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "epoch,mean_loss");
  EXPECT_EQ(first.substr(0, 2), "1,");
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace ns4ar
