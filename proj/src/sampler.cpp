#include "ns4ar/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace ns4ar {

Rng rng_stream(std::uint64_t seed, std::uint64_t worker) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(worker),
                    static_cast<std::uint32_t>(worker >> 32)};
  return Rng(seq);
}

SamplerKind parse_sampler_kind(const std::string& name) {
  if (name == "ns4ar") return SamplerKind::kNs4ar;
  if (name == "uniform_rns" || name == "uniform") return SamplerKind::kUniform;
  if (name == "dns_hard" || name == "dns") return SamplerKind::kDnsHard;
  if (name == "exposure_argmax") return SamplerKind::kExposureArgmax;
  throw std::invalid_argument("unknown sampler '" + name + "'");
}

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kNs4ar: return "ns4ar";
    case SamplerKind::kUniform: return "uniform_rns";
    case SamplerKind::kDnsHard: return "dns_hard";
    case SamplerKind::kExposureArgmax: return "exposure_argmax";
  }
  return "?";
}

void SamplerConfig::validate() const {
  if (k < 1) throw std::invalid_argument("sampler: k must be >= 1");
  if (kind == SamplerKind::kDnsHard && dns_pool < 2) {
    throw std::invalid_argument("sampler: dns_pool must be >= 2");
  }
  if (core_quota < 0 || core_quota > 1) {
    throw std::invalid_argument("sampler: core_quota must be in [0, 1]");
  }
  for (int r : regions) {
    if (r < 1) throw std::invalid_argument("sampler: regions are 1-based");
  }
}

const PoolItem* UserPools::find(ItemId i) const {
  auto it = std::lower_bound(
      items.begin(), items.end(), i,
      [](const PoolItem& p, ItemId v) { return p.item < v; });
  return it != items.end() && it->item == i ? &*it : nullptr;
}

const UserPools& SampleSets::user(UserId u) const {
  if (u >= users_.size() || !users_[u].present) {
    throw std::out_of_range("user " + std::to_string(u) +
                            " absent from sample sets");
  }
  return users_[u];
}

SampleSets build_sets(const InteractionGraph& train,
                      const RegionPartition& partition,
                      const WeightMatrix& weights,
                      const std::vector<std::vector<ItemId>>& core,
                      std::span<const int> region_filter) {
  if (partition.num_items() != train.num_items()) {
    throw std::invalid_argument("build_sets: partition/graph item mismatch");
  }
  const int n = partition.n();
  std::vector<UserPools> users(train.num_users());
  std::vector<char> is_core(train.num_items(), 0);
  for (UserId u = 0; u < train.num_users(); ++u) {
    if (!partition.has_user(u)) continue;
    const auto& region_of = partition.regions_of(u);
    auto clicks = train.clicked_items(u);
    UserPools& pools = users[u];
    pools.present = true;
    if (region_filter.empty() && u < core.size()) {
      for (ItemId i : core[u]) {
        if (!train.has_click(u, i)) {
          pools.core.push_back(i);
          is_core[i] = 1;
        }
      }
    }
    for (ItemId i = 0; i < train.num_items(); ++i) {
      if (std::binary_search(clicks.begin(), clicks.end(), i)) continue;
      const int r = region_of[i];
      PoolItem p{i, static_cast<Region>(r), 0, 0};
      if (!region_filter.empty()) {
        bool allowed = std::find(region_filter.begin(), region_filter.end(),
                                 r) != region_filter.end();
        p.negative_mass = allowed ? 1.0 : 0.0;
        p.positive_mass = r == 1 && n > 1 ? 1.0 : 0.0;
      } else if (r == n) {
        p.negative_mass = 1.0;
      } else if (r == 1) {
        p.positive_mass = 1.0;
      } else {
        double w = 0;
        for (ItemId c : clicks) w = std::max(w, weights.normalized_sq(i, c));
        p.positive_mass = w;
        p.negative_mass = is_core[i] ? 1.0 : 1.0 - w;
      }
      if (p.positive_mass > 0 || p.negative_mass > 0) pools.items.push_back(p);
    }
    double acc = 0;
    for (const auto& p : pools.items) {
      if (p.negative_mass <= 0) continue;
      acc += p.negative_mass;
      pools.negatives.push_back(p.item);
      pools.cumulative.push_back(acc);
    }
    for (ItemId i : pools.core) is_core[i] = 0;
  }
  return SampleSets(std::move(users));
}

namespace {

bool contains(const std::vector<ItemId>& v, ItemId i) {
  return std::find(v.begin(), v.end(), i) != v.end();
}

ItemId draw_by_mass(const UserPools& pools, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, pools.cumulative.back());
  const double x = unit(rng);
  auto it = std::upper_bound(pools.cumulative.begin(), pools.cumulative.end(), x);
  if (it == pools.cumulative.end()) --it;
  return pools.negatives[static_cast<std::size_t>(it - pools.cumulative.begin())];
}

}  // namespace

Draw sample_negatives(const SampleSets& sets, UserId u, std::size_t k, Rng& rng,
                      double core_quota) {
  const UserPools& pools = sets.user(u);
  if (pools.negatives.empty()) {
    throw std::runtime_error("empty negative pool for user " + std::to_string(u));
  }
  Draw out;
  out.items.reserve(k);

  const auto quota = static_cast<std::size_t>(static_cast<double>(k) * core_quota);
  const std::size_t from_core = std::min(quota, pools.core.size());
  if (from_core > 0) {
    std::vector<ItemId> core = pools.core;
    for (std::size_t t = 0; t < from_core; ++t) {
      std::uniform_int_distribution<std::size_t> pick(t, core.size() - 1);
      std::swap(core[t], core[pick(rng)]);
      out.items.push_back(core[t]);
    }
  }

  const std::size_t remaining = k - from_core;
  std::size_t available = pools.negatives.size();
  for (ItemId i : out.items) {
    if (std::binary_search(pools.negatives.begin(), pools.negatives.end(), i))
      --available;
  }
  if (available < remaining) {
    out.with_replacement = true;
    for (std::size_t t = 0; t < remaining; ++t) {
      out.items.push_back(draw_by_mass(pools, rng));
    }
    return out;
  }

  std::size_t attempts = 0;
  const std::size_t max_attempts = 64 * (remaining + 1);
  std::size_t target = out.items.size() + remaining;
  while (out.items.size() < target && attempts < max_attempts) {
    ++attempts;
    ItemId i = draw_by_mass(pools, rng);
    if (!contains(out.items, i)) out.items.push_back(i);
  }
  if (out.items.size() < target) {
    // Mass concentrated on already-drawn items: sample the rest exactly.
    std::vector<ItemId> rest;
    std::vector<double> mass;
    double prev = 0;
    for (std::size_t t = 0; t < pools.negatives.size(); ++t) {
      double m = pools.cumulative[t] - prev;
      prev = pools.cumulative[t];
      if (!contains(out.items, pools.negatives[t])) {
        rest.push_back(pools.negatives[t]);
        mass.push_back(m);
      }
    }
    while (out.items.size() < target) {
      std::discrete_distribution<std::size_t> dist(mass.begin(), mass.end());
      std::size_t pick = dist(rng);
      out.items.push_back(rest[pick]);
      mass[pick] = 0;
    }
  }
  return out;
}

ItemId exposure_argmax(const InteractionGraph& train, UserId u,
                       const SampleSets& sets, const EmbeddingModel& model) {
  auto exposed = train.exposed_items(u);
  if (exposed.empty()) {
    throw std::runtime_error("user " + std::to_string(u) +
                             " has no exposed-not-clicked items");
  }
  const UserPools& pools = sets.user(u);
  ItemId best = exposed.front();
  double best_beta = 0;
  bool first = true;
  for (ItemId v : exposed) {
    const PoolItem* p = pools.find(v);
    const bool in_negative_set = p && p->negative_mass > 0;
    const double c = in_negative_set ? train.exposure_count(u, v) : 1.0;
    const double beta = c * model.score(u, v);
    // sigmoid is increasing, so comparing beta is equivalent.
    if (first || beta > best_beta) {
      best = v;
      best_beta = beta;
      first = false;
    }
  }
  return best;
}

Draw baseline_uniform(const InteractionGraph& train, UserId u, std::size_t k,
                      Rng& rng) {
  const std::size_t items = train.num_items();
  auto clicks = train.clicked_items(u);
  const std::size_t available = items - clicks.size();
  if (available == 0) {
    throw std::runtime_error("no unclicked items for user " + std::to_string(u));
  }
  Draw out;
  out.items.reserve(k);
  std::uniform_int_distribution<ItemId> pick(0, static_cast<ItemId>(items - 1));
  auto allowed = [&](ItemId i) {
    return !std::binary_search(clicks.begin(), clicks.end(), i);
  };
  if (available < k) {
    out.with_replacement = true;
    while (out.items.size() < k) {
      ItemId i = pick(rng);
      if (allowed(i)) out.items.push_back(i);
    }
    return out;
  }
  while (out.items.size() < k) {
    ItemId i = pick(rng);
    if (allowed(i) && !contains(out.items, i)) out.items.push_back(i);
  }
  return out;
}

Draw baseline_dns(const InteractionGraph& train, UserId u, std::size_t k,
                  std::size_t dns_pool, const EmbeddingModel& model, Rng& rng) {
  Draw pool = baseline_uniform(train, u, std::max(dns_pool, k), rng);
  std::vector<std::size_t> order(pool.items.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> scores(pool.items.size());
  for (std::size_t t = 0; t < pool.items.size(); ++t) {
    scores[t] = model.score(u, pool.items[t]);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  std::vector<char> keep(pool.items.size(), 0);
  for (std::size_t t = 0; t < k && t < order.size(); ++t) keep[order[t]] = 1;
  Draw out;
  out.with_replacement = pool.with_replacement;
  for (std::size_t t = 0; t < pool.items.size(); ++t) {
    if (keep[t]) out.items.push_back(pool.items[t]);
  }
  return out;
}

NegativeSampler::NegativeSampler(SamplerConfig config,
                                 const InteractionGraph& train,
                                 const SampleSets& sets)
    : config_(std::move(config)), train_(train), sets_(sets) {
  config_.validate();
}

bool NegativeSampler::can_sample(UserId u) const {
  switch (config_.kind) {
    case SamplerKind::kNs4ar:
    case SamplerKind::kExposureArgmax:
      return !sets_.user(u).negatives.empty();
    case SamplerKind::kUniform:
    case SamplerKind::kDnsHard:
      return train_.user_degree(u) < train_.num_items();
  }
  return false;
}

Draw NegativeSampler::draw(UserId u, const EmbeddingModel& model, Rng& rng) const {
  const std::size_t k = config_.k;
  switch (config_.kind) {
    case SamplerKind::kNs4ar:
      return sample_negatives(sets_, u, k, rng, config_.core_quota);
    case SamplerKind::kUniform:
      return baseline_uniform(train_, u, k, rng);
    case SamplerKind::kDnsHard:
      return baseline_dns(train_, u, k, config_.dns_pool, model, rng);
    case SamplerKind::kExposureArgmax: {
      if (train_.exposed_items(u).empty()) {
        return sample_negatives(sets_, u, k, rng, config_.core_quota);
      }
      Draw out;
      out.items.push_back(exposure_argmax(train_, u, sets_, model));
      if (k > 1) {
        Draw rest = sample_negatives(sets_, u, k - 1, rng, config_.core_quota);
        out.with_replacement = rest.with_replacement;
        out.items.insert(out.items.end(), rest.items.begin(), rest.items.end());
      }
      return out;
    }
  }
  throw std::logic_error("unhandled sampler kind");
}

}  // namespace ns4ar
