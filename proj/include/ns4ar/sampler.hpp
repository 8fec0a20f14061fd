#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ns4ar/graph.hpp"
#include "ns4ar/model.hpp"
#include "ns4ar/regions.hpp"
#include "ns4ar/similarity.hpp"

namespace ns4ar {

using Rng = std::mt19937_64;

/// Independent generator for one worker; seed and worker id select the stream.
Rng rng_stream(std::uint64_t seed, std::uint64_t worker);

enum class SamplerKind { kNs4ar, kUniform, kDnsHard, kExposureArgmax };

SamplerKind parse_sampler_kind(const std::string& name);
std::string to_string(SamplerKind kind);

struct SamplerConfig {
  SamplerKind kind = SamplerKind::kNs4ar;
  std::size_t k = 4;           // negatives per positive interaction
  std::size_t dns_pool = 16;   // candidates scored by the hard-negative sampler
  double core_quota = 0.5;     // fraction of k reserved for core negatives
  // When nonempty, negatives come uniformly from these regions only.
  std::vector<int> regions;

  void validate() const;
};

struct PoolItem {
  ItemId item = 0;
  Region region = 0;
  double positive_mass = 0;
  double negative_mass = 0;
};

/// Positive-assistive and negative sampling pools of one user.
struct UserPools {
  std::vector<PoolItem> items;       // every non-clicked item with any mass
  std::vector<ItemId> negatives;     // items with negative_mass > 0
  std::vector<double> cumulative;    // running sum of negative masses
  std::vector<ItemId> core;          // core negatives, selection order
  bool present = false;

  const PoolItem* find(ItemId i) const;
};

class SampleSets {
 public:
  SampleSets() = default;
  explicit SampleSets(std::vector<UserPools> users) : users_(std::move(users)) {}

  const UserPools& user(UserId u) const;
  std::size_t num_users() const { return users_.size(); }

 private:
  std::vector<UserPools> users_;
};

/// Region 1: positive side only. Region n: negative mass 1 (with n = 1 the
/// single region is treated as region n). Intermediate regions: positive mass
/// w and negative mass 1 - w, where w is the item's largest normalized squared
/// weight to any of the user's clicked items; core negatives get negative
/// mass 1. The user's training clicks never enter either pool.
///
/// `core` is indexed by user (missing users have no core negatives). With a
/// nonempty `region_filter` every non-clicked item in those regions gets
/// negative mass 1 and everything else 0.
SampleSets build_sets(const InteractionGraph& train,
                      const RegionPartition& partition,
                      const WeightMatrix& weights,
                      const std::vector<std::vector<ItemId>>& core,
                      std::span<const int> region_filter = {});

struct Draw {
  std::vector<ItemId> items;
  bool with_replacement = false;
};

/// k items by negative mass without replacement; core negatives take
/// min(floor(k * core_quota), |core|) slots first. Falls back to sampling
/// with replacement (flagged) when the pool is smaller than k. Throws
/// std::runtime_error on an empty pool.
Draw sample_negatives(const SampleSets& sets, UserId u, std::size_t k, Rng& rng,
                      double core_quota = 0.5);

/// argmax over the user's exposed-not-clicked items of
/// sigmoid(c(v) * score(u, v)), where c(v) is the exposure count of v if v has
/// negative mass in the user's pools and 1 otherwise. Ties go to the smaller
/// item id. Throws std::runtime_error when the user has no exposures.
ItemId exposure_argmax(const InteractionGraph& train, UserId u,
                       const SampleSets& sets, const EmbeddingModel& model);

/// k distinct items uniformly among those not clicked by u in `train`.
Draw baseline_uniform(const InteractionGraph& train, UserId u, std::size_t k,
                      Rng& rng);

/// Draws dns_pool uniform candidates and keeps the k highest-scoring ones, in
/// draw order.
Draw baseline_dns(const InteractionGraph& train, UserId u, std::size_t k,
                  std::size_t dns_pool, const EmbeddingModel& model, Rng& rng);

/// Dispatches on SamplerConfig::kind for the training loop.
class NegativeSampler {
 public:
  NegativeSampler(SamplerConfig config, const InteractionGraph& train,
                  const SampleSets& sets);

  /// False when this user has nothing to draw from (region-restricted runs).
  bool can_sample(UserId u) const;
  Draw draw(UserId u, const EmbeddingModel& model, Rng& rng) const;
  const SamplerConfig& config() const { return config_; }

 private:
  SamplerConfig config_;
  const InteractionGraph& train_;
  const SampleSets& sets_;
};

}  // namespace ns4ar
