#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ns4ar/graph.hpp"
#include "ns4ar/regions.hpp"
#include "ns4ar/similarity.hpp"

namespace ns4ar {

/// n_obs * ln(rss / n_obs) + n_params * ln(n_obs); lower is better. rss is
/// floored at machine epsilon.
double bic_score(double rss, std::size_t n_obs, std::size_t n_params);

/// 2x2 contingency table {{a, b}, {c, d}}.
using Table2x2 = std::array<std::array<std::uint64_t, 2>, 2>;

/// Two-sided Fisher exact test: sum of hypergeometric probabilities of all
/// tables with the observed margins that are no more likely than the observed
/// table.
double fisher_exact(const Table2x2& table);

inline constexpr std::size_t kNumFeatures = 4;
inline constexpr std::array<const char*, kNumFeatures> kFeatureNames = {
    "region", "weight_mass", "click_degree", "exposure_count"};

struct CandidateTable {
  std::vector<ItemId> items;
  std::vector<Region> regions;
  std::vector<std::array<double, kNumFeatures>> features;
  std::vector<double> target;  // 1 if exposed-not-clicked for the user

  std::size_t size() const { return items.size(); }
};

struct StagewiseOptions {
  double step = 0.01;
  // Negative selects the default 1e-3 * sqrt(n_obs).
  double residual_threshold = -1;
  int max_iterations = 10000;
  std::size_t m = 20;
  double significance = 0.05;
};

struct StagewiseStep {
  std::size_t feature = 0;
  double bic = 0;
  double residual_norm = 0;
};

struct SelectionResult {
  std::vector<ItemId> selected;
  std::vector<double> scores;  // fitted score per selected item
  std::vector<Region> regions;
  std::array<double, kNumFeatures> coefficients{};
  std::vector<StagewiseStep> trace;
  double fisher_p = 1.0;
  bool significant = false;

  /// "item<TAB>score<TAB>region" rows, then "# trace" and
  /// "iteration<TAB>feature<TAB>bic<TAB>residual_norm" rows.
  void dump(std::ostream& out) const;
};

/// Forward stagewise fit of the target on max-abs-scaled features. Each
/// iteration moves the coefficient of the feature with the lowest one-
/// parameter BIC by `step` toward the residual, and stops at the residual
/// threshold, at max_iterations, or when no step reduces the residual.
/// Candidates are ranked by fitted score (ties by ascending item id), the top
/// m are returned, and a Fisher test of selected-vs-target sets the
/// significance flag.
SelectionResult stagewise_select(const CandidateTable& table,
                                 const StagewiseOptions& opts);

/// Candidates are the user's items in regions 2..n-1.
CandidateTable build_candidate_table(const InteractionGraph& train,
                                     const RegionPartition& partition,
                                     const WeightMatrix& weights, UserId u);

SelectionResult select_core_negatives(const InteractionGraph& train,
                                      const RegionPartition& partition,
                                      const WeightMatrix& weights, UserId u,
                                      const StagewiseOptions& opts);

}  // namespace ns4ar
