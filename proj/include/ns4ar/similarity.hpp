#pragma once

#include <filesystem>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ns4ar/graph.hpp"

namespace ns4ar {

/// Sum over common click-neighbors u of 1 / ln(degree(u)). Adamic-Adar on the
/// item co-click projection.
double rate(const InteractionGraph& g, ItemId i, ItemId j);

/// `rate` evaluated on the click-only subgraph of `g`.
double ratio(const InteractionGraph& g, ItemId i, ItemId j);

/// rate * ln(ratio) + ratio * ln(rate), and 0 when either input is 0.
/// Throws std::invalid_argument on negative input.
double combine_weight(double rate, double ratio);

struct PairWeight {
  double rate = 0;
  double ratio = 0;
  double weight = 0;
  double normalized_sq = 0;
};

using ItemPair = std::pair<ItemId, ItemId>;

/// Sparse symmetric item-item weights. Stored once per unordered pair.
class WeightMatrix {
 public:
  WeightMatrix() = default;

  /// Takes entries keyed by (min, max) pairs and fills normalized_sq.
  explicit WeightMatrix(std::vector<std::pair<ItemPair, PairWeight>> entries);

  const PairWeight* find(ItemId i, ItemId j) const;
  double normalized_sq(ItemId i, ItemId j) const {
    const auto* e = find(i, j);
    return e ? e->normalized_sq : 0.0;
  }

  double max_abs_weight() const { return max_abs_weight_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// Entries sorted by (i, j) with i < j.
  const std::vector<std::pair<ItemPair, PairWeight>>& entries() const {
    return entries_;
  }

  /// Tab-separated "i j rate ratio weight normalized_sq", full precision.
  void save(const std::filesystem::path& path) const;
  static WeightMatrix load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<ItemPair, PairWeight>> entries_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
  double max_abs_weight_ = 0;
};

/// Unordered item pairs sharing at least one neighbor through click or
/// exposure edges, enumerated from per-user cliques. Sorted, i < j.
std::vector<ItemPair> candidate_pairs(const InteractionGraph& g);

WeightMatrix build_weight_matrix(const InteractionGraph& g,
                                 const std::vector<ItemPair>& pairs);
WeightMatrix build_weight_matrix(const InteractionGraph& g);

}  // namespace ns4ar
