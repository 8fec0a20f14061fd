#include "ns4ar/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ns4ar {

namespace {

std::uint64_t pair_key(ItemId i, ItemId j) {
  if (i > j) std::swap(i, j);
  return (static_cast<std::uint64_t>(i) << 32) | j;
}

double adamic_adar(const InteractionGraph& g, ItemId i, ItemId j) {
  if (i == j) throw std::invalid_argument("similarity of an item with itself");
  double sum = 0;
  for (UserId u : common_neighbors(g, i, j)) {
    sum += 1.0 / std::log(static_cast<double>(g.user_degree(u)));
  }
  return sum;
}

}  // namespace

double rate(const InteractionGraph& g, ItemId i, ItemId j) {
  return adamic_adar(g, i, j);
}

double ratio(const InteractionGraph& g, ItemId i, ItemId j) {
  // Restricting to clicks leaves click adjacency and click degrees intact.
  if (g.exposure_edges().empty()) return adamic_adar(g, i, j);
  return adamic_adar(click_subgraph(g), i, j);
}

double combine_weight(double rate, double ratio) {
  if (rate < 0 || ratio < 0 || std::isnan(rate) || std::isnan(ratio)) {
    throw std::invalid_argument("weight: inputs must be nonnegative");
  }
  if (rate == 0 || ratio == 0) return 0.0;
  return rate * std::log(ratio) + ratio * std::log(rate);
}

WeightMatrix::WeightMatrix(
    std::vector<std::pair<ItemPair, PairWeight>> entries) {
  for (auto& [p, w] : entries) {
    if (p.first > p.second) std::swap(p.first, p.second);
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  entries_ = std::move(entries);
  for (const auto& [p, w] : entries_) {
    max_abs_weight_ = std::max(max_abs_weight_, std::abs(w.weight));
  }
  index_.reserve(entries_.size());
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    auto& [p, w] = entries_[k];
    if (p.first == p.second) {
      throw std::invalid_argument("WeightMatrix: self pair");
    }
    if (!index_.emplace(pair_key(p.first, p.second), k).second) {
      throw std::invalid_argument("WeightMatrix: duplicate pair");
    }
    if (max_abs_weight_ > 0) {
      double x = w.weight / max_abs_weight_;
      w.normalized_sq = x * x;
    } else {
      w.normalized_sq = 0;
    }
  }
}

const PairWeight* WeightMatrix::find(ItemId i, ItemId j) const {
  if (i == j) return nullptr;
  auto it = index_.find(pair_key(i, j));
  return it == index_.end() ? nullptr : &entries_[it->second].second;
}

void WeightMatrix::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# i\tj\trate\tratio\tweight\tnormalized_sq\n";
  char buf[256];
  for (const auto& [p, w] : entries_) {
    std::snprintf(buf, sizeof buf, "%u\t%u\t%.17g\t%.17g\t%.17g\t%.17g\n",
                  p.first, p.second, w.rate, w.ratio, w.weight,
                  w.normalized_sq);
    out << buf;
  }
}

WeightMatrix WeightMatrix::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::pair<ItemPair, PairWeight>> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    std::istringstream ss(line);
    ItemPair p;
    PairWeight w;
    if (!(ss >> p.first >> p.second >> w.rate >> w.ratio >> w.weight)) {
      throw ParseError(lineno, "bad weight record");
    }
    entries.emplace_back(p, w);
  }
  return WeightMatrix(std::move(entries));
}

std::vector<ItemPair> candidate_pairs(const InteractionGraph& g) {
  std::vector<ItemPair> pairs;
  std::vector<ItemId> items;
  for (UserId u = 0; u < g.num_users(); ++u) {
    auto clicks = g.clicked_items(u);
    auto exposed = g.exposed_items(u);
    items.clear();
    std::merge(clicks.begin(), clicks.end(), exposed.begin(), exposed.end(),
               std::back_inserter(items));
    for (std::size_t a = 0; a < items.size(); ++a) {
      for (std::size_t b = a + 1; b < items.size(); ++b) {
        pairs.emplace_back(items[a], items[b]);
      }
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

WeightMatrix build_weight_matrix(const InteractionGraph& g,
                                 const std::vector<ItemPair>& pairs) {
  const InteractionGraph clicks_only = click_subgraph(g);
  std::vector<std::pair<ItemPair, PairWeight>> entries;
  entries.reserve(pairs.size());
  for (auto [i, j] : pairs) {
    if (i == j) continue;
    PairWeight w;
    w.rate = adamic_adar(g, i, j);
    w.ratio = adamic_adar(clicks_only, i, j);
    w.weight = combine_weight(w.rate, w.ratio);
    entries.emplace_back(ItemPair{std::min(i, j), std::max(i, j)}, w);
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  entries.erase(std::unique(entries.begin(), entries.end(),
                            [](const auto& a, const auto& b) {
                              return a.first == b.first;
                            }),
                entries.end());
  return WeightMatrix(std::move(entries));
}

WeightMatrix build_weight_matrix(const InteractionGraph& g) {
  return build_weight_matrix(g, candidate_pairs(g));
}

}  // namespace ns4ar
