#include "ns4ar/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace ns4ar {

namespace {

void check_k(std::size_t k) {
  if (k == 0) throw std::invalid_argument("metric cutoff K must be > 0");
}

bool is_relevant(std::span<const ItemId> relevant, ItemId i) {
  return std::binary_search(relevant.begin(), relevant.end(), i);
}

std::size_t hits(std::span<const ItemId> ranked, std::span<const ItemId> relevant,
                 std::size_t k) {
  std::size_t h = 0;
  for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) {
    if (is_relevant(relevant, ranked[r])) ++h;
  }
  return h;
}

}  // namespace

double recall_at_k(std::span<const ItemId> ranked,
                   std::span<const ItemId> relevant, std::size_t k) {
  check_k(k);
  if (relevant.empty()) throw std::invalid_argument("recall: no relevant items");
  return static_cast<double>(hits(ranked, relevant, k)) /
         static_cast<double>(relevant.size());
}

double hr_at_k(std::span<const ItemId> ranked, std::span<const ItemId> relevant,
               std::size_t k) {
  check_k(k);
  if (relevant.empty()) throw std::invalid_argument("hr: no relevant items");
  return hits(ranked, relevant, k) > 0 ? 1.0 : 0.0;
}

double ndcg_at_k(std::span<const ItemId> ranked,
                 std::span<const ItemId> relevant, std::size_t k) {
  check_k(k);
  if (relevant.empty()) throw std::invalid_argument("ndcg: no relevant items");
  double dcg = 0;
  for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) {
    if (is_relevant(relevant, ranked[r])) {
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0;
  for (std::size_t r = 0; r < std::min(k, relevant.size()); ++r) {
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg / idcg;
}

Metrics evaluate(const EmbeddingModel& model, const InteractionGraph& train,
                 std::span<const Edge> heldout, std::size_t k) {
  check_k(k);
  if (heldout.empty()) throw std::invalid_argument("evaluate: empty test set");
  std::vector<std::vector<ItemId>> relevant(train.num_users());
  for (const Edge& e : heldout) relevant.at(e.user).push_back(e.item);

  Metrics m;
  m.k = k;
  for (UserId u = 0; u < relevant.size(); ++u) {
    auto& rel = relevant[u];
    if (rel.empty()) continue;
    std::sort(rel.begin(), rel.end());
    rel.erase(std::unique(rel.begin(), rel.end()), rel.end());
    auto exclude = train.clicked_items(u);
    auto ranked = recommend_topk(model, u, k, exclude);
    for (ItemId i : ranked) {
      if (std::binary_search(exclude.begin(), exclude.end(), i)) {
        throw std::logic_error("evaluate ranked a training item");
      }
    }
    m.recall += recall_at_k(ranked, rel, k);
    m.ndcg += ndcg_at_k(ranked, rel, k);
    m.hr += hr_at_k(ranked, rel, k);
    ++m.users;
  }
  if (m.users > 0) {
    const double scale = 100.0 / static_cast<double>(m.users);
    m.recall *= scale;
    m.ndcg *= scale;
    m.hr *= scale;
  }
  return m;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

namespace {

template <class F>
Summary summarize_field(const std::vector<Metrics>& runs, F field) {
  std::vector<double> v;
  v.reserve(runs.size());
  for (const auto& m : runs) v.push_back(field(m));
  return summarize(v);
}

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t t = 0; t < seeds.size(); ++t) {
    if (t) s += ' ';
    s += std::to_string(seeds[t]);
  }
  return s;
}

}  // namespace

Summary MetricsReport::recall() const {
  return summarize_field(runs, [](const Metrics& m) { return m.recall; });
}
Summary MetricsReport::ndcg() const {
  return summarize_field(runs, [](const Metrics& m) { return m.ndcg; });
}
Summary MetricsReport::hr() const {
  return summarize_field(runs, [](const Metrics& m) { return m.hr; });
}

void write_reports_csv(std::ostream& out, std::span<const MetricsReport> reports) {
  out << "label,k,seeds,recall_mean,recall_sd,ndcg_mean,ndcg_sd,hr_mean,hr_sd,"
         "note\n";
  char buf[512];
  for (const auto& r : reports) {
    auto rc = r.recall();
    auto nd = r.ndcg();
    auto hr = r.hr();
    std::snprintf(buf, sizeof buf,
                  "%s,%zu,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%s\n",
                  r.label.c_str(), r.k, join_seeds(r.seeds).c_str(), rc.mean,
                  rc.sd, nd.mean, nd.sd, hr.mean, hr.sd,
                  r.skipped ? ("skipped: " + r.note).c_str() : r.note.c_str());
    out << buf;
  }
}

void write_reports_table(std::ostream& out,
                         std::span<const MetricsReport> reports) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-24s %16s %16s %16s\n", "config", "Recall@K",
                "NDCG@K", "HR@K");
  out << buf;
  for (const auto& r : reports) {
    if (r.skipped) {
      std::snprintf(buf, sizeof buf, "%-24s %s\n", r.label.c_str(),
                    ("skipped: " + r.note).c_str());
      out << buf;
      continue;
    }
    auto rc = r.recall();
    auto nd = r.ndcg();
    auto hr = r.hr();
    std::snprintf(buf, sizeof buf,
                  "%-24s %8.2f +- %5.2f %8.2f +- %5.2f %8.2f +- %5.2f\n",
                  r.label.c_str(), rc.mean, rc.sd, nd.mean, nd.sd, hr.mean,
                  hr.sd);
    out << buf;
  }
}

}  // namespace ns4ar
