#include "ns4ar/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace ns4ar {

double bic_score(double rss, std::size_t n_obs, std::size_t n_params) {
  if (n_obs == 0) throw std::invalid_argument("bic_score: n_obs must be >= 1");
  if (rss < 0) throw std::invalid_argument("bic_score: rss must be >= 0");
  const double n = static_cast<double>(n_obs);
  rss = std::max(rss, std::numeric_limits<double>::epsilon());
  return n * std::log(rss / n) + static_cast<double>(n_params) * std::log(n);
}

namespace {

long double log_choose(std::uint64_t n, std::uint64_t k) {
  return std::lgamma(static_cast<long double>(n) + 1) -
         std::lgamma(static_cast<long double>(k) + 1) -
         std::lgamma(static_cast<long double>(n - k) + 1);
}

}  // namespace

double fisher_exact(const Table2x2& t) {
  const std::uint64_t r1 = t[0][0] + t[0][1];
  const std::uint64_t r2 = t[1][0] + t[1][1];
  const std::uint64_t c1 = t[0][0] + t[1][0];
  const std::uint64_t n = r1 + r2;
  if (n == 0) throw std::invalid_argument("fisher_exact: empty table");

  const std::uint64_t lo = c1 > r2 ? c1 - r2 : 0;
  const std::uint64_t hi = std::min(r1, c1);
  if (lo == hi) return 1.0;

  const long double log_denom = log_choose(n, c1);
  auto log_p = [&](std::uint64_t x) {
    return log_choose(r1, x) + log_choose(r2, c1 - x) - log_denom;
  };
  const long double observed = log_p(t[0][0]);
  // Relative slack for probabilities equal to the observed one.
  const long double slack = 1e-9L;
  long double p = 0;
  for (std::uint64_t x = lo; x <= hi; ++x) {
    long double lp = log_p(x);
    if (lp <= observed + slack) p += std::exp(lp);
  }
  return static_cast<double>(std::min(p, 1.0L));
}

void SelectionResult::dump(std::ostream& out) const {
  for (std::size_t k = 0; k < selected.size(); ++k) {
    out << selected[k] << '\t' << scores[k] << '\t' << regions[k] << '\n';
  }
  out << "# trace\n";
  for (std::size_t k = 0; k < trace.size(); ++k) {
    out << k << '\t' << kFeatureNames[trace[k].feature] << '\t' << trace[k].bic
        << '\t' << trace[k].residual_norm << '\n';
  }
}

SelectionResult stagewise_select(const CandidateTable& table,
                                 const StagewiseOptions& opts) {
  if (!(opts.step > 0)) throw std::invalid_argument("stagewise: step must be > 0");
  if (opts.m < 1) throw std::invalid_argument("stagewise: m must be >= 1");
  SelectionResult result;
  const std::size_t n_obs = table.size();
  if (n_obs == 0) return result;

  // Column scaling by max |value|; all-zero columns stay inactive.
  std::array<double, kNumFeatures> scale{};
  std::array<double, kNumFeatures> sq_norm{};
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    for (const auto& row : table.features) {
      if (!std::isfinite(row[j])) {
        throw std::invalid_argument("stagewise: non-finite feature");
      }
      scale[j] = std::max(scale[j], std::abs(row[j]));
    }
    for (const auto& row : table.features) {
      if (scale[j] > 0) sq_norm[j] += (row[j] / scale[j]) * (row[j] / scale[j]);
    }
  }
  auto x = [&](std::size_t r, std::size_t j) {
    return scale[j] > 0 ? table.features[r][j] / scale[j] : 0.0;
  };

  const double threshold = opts.residual_threshold >= 0
                               ? opts.residual_threshold
                               : 1e-3 * std::sqrt(static_cast<double>(n_obs));
  std::vector<double> residual(table.target);
  std::array<double, kNumFeatures> beta{};
  double rss = std::inner_product(residual.begin(), residual.end(),
                                  residual.begin(), 0.0);

  for (int it = 0; it < opts.max_iterations; ++it) {
    if (std::sqrt(rss) <= threshold) break;
    std::size_t best = kNumFeatures;
    double best_bic = std::numeric_limits<double>::infinity();
    double best_corr = 0;
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
      if (sq_norm[j] == 0) continue;
      double corr = 0;
      for (std::size_t r = 0; r < n_obs; ++r) corr += x(r, j) * residual[r];
      double fit_rss = std::max(0.0, rss - corr * corr / sq_norm[j]);
      double bic = bic_score(fit_rss, n_obs, 1);
      if (bic < best_bic) {
        best_bic = bic;
        best = j;
        best_corr = corr;
      }
    }
    // A step of size s along x_j lowers the rss only while s*|x_j|^2 < 2|corr|.
    if (best == kNumFeatures ||
        opts.step * sq_norm[best] >= 2 * std::abs(best_corr)) {
      break;
    }
    const double delta = best_corr > 0 ? opts.step : -opts.step;
    beta[best] += delta;
    rss = 0;
    for (std::size_t r = 0; r < n_obs; ++r) {
      residual[r] -= delta * x(r, best);
      rss += residual[r] * residual[r];
    }
    result.trace.push_back({best, best_bic, std::sqrt(rss)});
  }

  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    result.coefficients[j] = scale[j] > 0 ? beta[j] / scale[j] : 0.0;
  }

  std::vector<double> fitted(n_obs, 0.0);
  for (std::size_t r = 0; r < n_obs; ++r) {
    for (std::size_t j = 0; j < kNumFeatures; ++j) fitted[r] += beta[j] * x(r, j);
  }
  // No coefficient moved: the features carry no ranking information.
  if (result.trace.empty()) return result;

  std::vector<std::size_t> order(n_obs);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (fitted[a] != fitted[b]) return fitted[a] > fitted[b];
    return table.items[a] < table.items[b];
  });
  const std::size_t take = std::min(opts.m, n_obs);
  std::vector<bool> chosen(n_obs, false);
  for (std::size_t k = 0; k < take; ++k) {
    std::size_t r = order[k];
    chosen[r] = true;
    result.selected.push_back(table.items[r]);
    result.scores.push_back(fitted[r]);
    result.regions.push_back(table.regions.empty() ? 0 : table.regions[r]);
  }

  Table2x2 ct{};
  for (std::size_t r = 0; r < n_obs; ++r) {
    bool positive = table.target[r] > 0.5;
    ++ct[chosen[r] ? 0 : 1][positive ? 0 : 1];
  }
  result.fisher_p = fisher_exact(ct);
  result.significant = result.fisher_p < opts.significance;
  return result;
}

CandidateTable build_candidate_table(const InteractionGraph& train,
                                     const RegionPartition& partition,
                                     const WeightMatrix& weights, UserId u) {
  CandidateTable table;
  const auto& region_of = partition.regions_of(u);
  const int n = partition.n();
  auto clicks = train.clicked_items(u);
  for (ItemId i = 0; i < region_of.size(); ++i) {
    const int r = region_of[i];
    if (r < 2 || r > n - 1) continue;
    if (train.has_click(u, i)) continue;
    double mass = 0;
    for (ItemId c : clicks) mass += weights.normalized_sq(i, c);
    table.items.push_back(i);
    table.regions.push_back(region_of[i]);
    table.features.push_back({static_cast<double>(r), mass,
                              static_cast<double>(train.item_degree(i)),
                              static_cast<double>(train.exposure_count(u, i))});
    table.target.push_back(train.has_exposure(u, i) ? 1.0 : 0.0);
  }
  return table;
}

SelectionResult select_core_negatives(const InteractionGraph& train,
                                      const RegionPartition& partition,
                                      const WeightMatrix& weights, UserId u,
                                      const StagewiseOptions& opts) {
  return stagewise_select(build_candidate_table(train, partition, weights, u),
                          opts);
}

}  // namespace ns4ar
