#pragma once

#include <span>
#include <string>
#include <vector>

#include "ns4ar/graph.hpp"
#include "ns4ar/model.hpp"

namespace ns4ar {

// Single-user metrics as fractions in [0, 1]. `ranked` must be deduplicated;
// `relevant` must be sorted and nonempty. Throw std::invalid_argument when
// k == 0.
double recall_at_k(std::span<const ItemId> ranked,
                   std::span<const ItemId> relevant, std::size_t k);
double ndcg_at_k(std::span<const ItemId> ranked,
                 std::span<const ItemId> relevant, std::size_t k);
double hr_at_k(std::span<const ItemId> ranked, std::span<const ItemId> relevant,
               std::size_t k);

/// Percentages averaged over evaluated users.
struct Metrics {
  double recall = 0;
  double ndcg = 0;
  double hr = 0;
  std::size_t users = 0;
  std::size_t k = 0;
};

/// Ranks all items except each user's training clicks and scores the held-out
/// edges. Users without held-out edges are skipped. Throws
/// std::invalid_argument when `heldout` is empty.
Metrics evaluate(const EmbeddingModel& model, const InteractionGraph& train,
                 std::span<const Edge> heldout, std::size_t k);

struct Summary {
  double mean = 0;
  double sd = 0;  // sample standard deviation; 0 for a single value
};
Summary summarize(std::span<const double> values);

/// One configuration's metrics over a seed grid.
struct MetricsReport {
  std::string label;
  std::size_t k = 20;
  std::vector<std::uint64_t> seeds;
  std::vector<Metrics> runs;
  bool skipped = false;
  std::string note;

  Summary recall() const;
  Summary ndcg() const;
  Summary hr() const;
};

/// CSV with one row per report:
/// label,k,seeds,recall_mean,recall_sd,ndcg_mean,ndcg_sd,hr_mean,hr_sd,note
void write_reports_csv(std::ostream& out, std::span<const MetricsReport> reports);

/// Fixed-width text table of the same columns.
void write_reports_table(std::ostream& out, std::span<const MetricsReport> reports);

}  // namespace ns4ar
