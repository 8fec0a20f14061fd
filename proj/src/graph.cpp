#include "ns4ar/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace ns4ar {

UserId IdMap::intern_user(const std::string& name) {
  auto [it, inserted] =
      user_index_.try_emplace(name, static_cast<UserId>(users_.size()));
  if (inserted) users_.push_back(name);
  return it->second;
}

ItemId IdMap::intern_item(const std::string& name) {
  auto [it, inserted] =
      item_index_.try_emplace(name, static_cast<ItemId>(items_.size()));
  if (inserted) items_.push_back(name);
  return it->second;
}

IdMap IdMap::identity(std::size_t num_users, std::size_t num_items) {
  IdMap m;
  for (std::size_t u = 0; u < num_users; ++u) m.intern_user(std::to_string(u));
  for (std::size_t i = 0; i < num_items; ++i) m.intern_item(std::to_string(i));
  return m;
}

namespace {

void save_column(const std::vector<std::string>& names,
                 const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  for (std::size_t k = 0; k < names.size(); ++k) {
    out << k << '\t' << names[k] << '\n';
  }
}

std::vector<std::string> load_column(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::vector<std::string> names;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(lineno, "expected 2 columns");
    std::size_t idx = std::stoul(line.substr(0, tab));
    if (idx != names.size()) throw ParseError(lineno, "non-sequential index");
    names.push_back(line.substr(tab + 1));
  }
  return names;
}

}  // namespace

void IdMap::save(const std::filesystem::path& users_file,
                 const std::filesystem::path& items_file) const {
  save_column(users_, users_file);
  save_column(items_, items_file);
}

IdMap IdMap::load(const std::filesystem::path& users_file,
                  const std::filesystem::path& items_file) {
  IdMap m;
  for (const auto& n : load_column(users_file)) m.intern_user(n);
  for (const auto& n : load_column(items_file)) m.intern_item(n);
  return m;
}

InteractionGraph::Csr InteractionGraph::build_csr(
    std::size_t rows,
    const std::vector<std::pair<std::uint32_t, std::uint32_t>>& pairs) {
  Csr csr;
  csr.offsets.assign(rows + 1, 0);
  for (const auto& [r, c] : pairs) ++csr.offsets[r + 1];
  for (std::size_t r = 0; r < rows; ++r) csr.offsets[r + 1] += csr.offsets[r];
  csr.targets.resize(pairs.size());
  std::vector<std::size_t> cursor(csr.offsets.begin(), csr.offsets.end() - 1);
  for (const auto& [r, c] : pairs) csr.targets[cursor[r]++] = c;
  for (std::size_t r = 0; r < rows; ++r) {
    std::sort(csr.targets.begin() + static_cast<std::ptrdiff_t>(csr.offsets[r]),
              csr.targets.begin() +
                  static_cast<std::ptrdiff_t>(csr.offsets[r + 1]));
  }
  return csr;
}

InteractionGraph::InteractionGraph(std::size_t num_users, std::size_t num_items,
                                   std::vector<Edge> clicks,
                                   std::vector<Exposure> exposures, IdMap ids)
    : num_users_(num_users), num_items_(num_items), ids_(std::move(ids)) {
  auto check = [&](UserId u, ItemId i) {
    if (u >= num_users || i >= num_items) {
      throw std::invalid_argument("edge endpoint out of range: (" +
                                  std::to_string(u) + ", " + std::to_string(i) +
                                  ")");
    }
  };
  for (const auto& e : clicks) check(e.user, e.item);
  for (const auto& e : exposures) check(e.user, e.item);

  std::sort(clicks.begin(), clicks.end());
  clicks.erase(std::unique(clicks.begin(), clicks.end()), clicks.end());
  clicks_ = std::move(clicks);

  std::sort(exposures.begin(), exposures.end(),
            [](const Exposure& a, const Exposure& b) {
              return std::tie(a.user, a.item) < std::tie(b.user, b.item);
            });
  for (const auto& e : exposures) {
    if (std::binary_search(clicks_.begin(), clicks_.end(), Edge{e.user, e.item}))
      continue;
    if (!exposures_.empty() && exposures_.back().user == e.user &&
        exposures_.back().item == e.item) {
      exposures_.back().count += e.count;
    } else {
      exposures_.push_back(e);
    }
  }

  std::vector<std::pair<std::uint32_t, std::uint32_t>> ui, iu;
  ui.reserve(clicks_.size());
  iu.reserve(clicks_.size());
  for (const auto& e : clicks_) {
    ui.emplace_back(e.user, e.item);
    iu.emplace_back(e.item, e.user);
  }
  user_clicks_ = build_csr(num_users_, ui);
  item_clicks_ = build_csr(num_items_, iu);

  ui.clear();
  iu.clear();
  for (const auto& e : exposures_) {
    ui.emplace_back(e.user, e.item);
    iu.emplace_back(e.item, e.user);
  }
  user_exposures_ = build_csr(num_users_, ui);
  item_exposures_ = build_csr(num_items_, iu);
}

std::span<const ItemId> InteractionGraph::clicked_items(UserId u) const {
  return user_clicks_.row(u);
}
std::span<const UserId> InteractionGraph::clickers(ItemId i) const {
  return item_clicks_.row(i);
}
std::span<const ItemId> InteractionGraph::exposed_items(UserId u) const {
  return user_exposures_.row(u);
}
std::span<const UserId> InteractionGraph::exposed_users(ItemId i) const {
  return item_exposures_.row(i);
}

std::size_t InteractionGraph::degree(NodeId n) const {
  return is_user_node(n) ? user_degree(n) : item_degree(node_item(n));
}

bool InteractionGraph::has_click(UserId u, ItemId i) const {
  auto row = clicked_items(u);
  return std::binary_search(row.begin(), row.end(), i);
}

bool InteractionGraph::has_exposure(UserId u, ItemId i) const {
  auto row = exposed_items(u);
  return std::binary_search(row.begin(), row.end(), i);
}

std::uint32_t InteractionGraph::exposure_count(UserId u, ItemId i) const {
  auto it = std::lower_bound(exposures_.begin(), exposures_.end(), Edge{u, i},
                             [](const Exposure& a, const Edge& b) {
                               return std::tie(a.user, a.item) <
                                      std::tie(b.user, b.item);
                             });
  if (it == exposures_.end() || it->user != u || it->item != i) return 0;
  return it->count;
}

namespace {

std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, delim)) out.push_back(field);
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

InteractionGraph parse_interactions(std::istream& in, const LoadOptions& opts) {
  IdMap ids;
  std::vector<Edge> clicks;
  std::vector<Exposure> exposures;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    auto fields = split_fields(line, opts.delimiter);
    if (fields.size() < 3 || fields.size() > 4) {
      throw ParseError(lineno, "expected 3 or 4 fields, got " +
                                   std::to_string(fields.size()));
    }
    std::string user = trim(fields[0]);
    std::string item = trim(fields[1]);
    std::string label = trim(fields[2]);
    if (user.empty() || item.empty()) throw ParseError(lineno, "empty id");
    bool click;
    if (label == "1" || label == "click") {
      click = true;
    } else if (label == "0" || label == "exposure") {
      click = false;
    } else {
      throw ParseError(lineno, "invalid label '" + label + "'");
    }
    UserId u = ids.intern_user(user);
    ItemId i = ids.intern_item(item);
    if (click) {
      clicks.push_back({u, i});
    } else {
      exposures.push_back({u, i, 1});
    }
  }
  if (clicks.empty() && exposures.empty()) {
    throw EmptyGraphError("no interaction records");
  }
  std::size_t nu = ids.num_users();
  std::size_t ni = ids.num_items();
  return InteractionGraph(nu, ni, std::move(clicks), std::move(exposures),
                          std::move(ids));
}

InteractionGraph load_interactions(const std::filesystem::path& path,
                                   const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_interactions(in, opts);
}

void save_interactions(const InteractionGraph& g,
                       const std::filesystem::path& path,
                       const LoadOptions& opts) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const IdMap& ids = g.ids();
  bool named = ids.num_users() == g.num_users() && ids.num_items() == g.num_items();
  auto uname = [&](UserId u) { return named ? ids.user_name(u) : std::to_string(u); };
  auto iname = [&](ItemId i) { return named ? ids.item_name(i) : std::to_string(i); };
  const char d = opts.delimiter;
  for (const auto& e : g.click_edges()) {
    out << uname(e.user) << d << iname(e.item) << d << "1\n";
  }
  for (const auto& e : g.exposure_edges()) {
    for (std::uint32_t c = 0; c < e.count; ++c) {
      out << uname(e.user) << d << iname(e.item) << d << "0\n";
    }
  }
}

DatasetSplit split_dataset(const InteractionGraph& g, const SplitRatios& ratios,
                           std::uint64_t seed) {
  if (ratios.train <= 0 || ratios.valid <= 0 || ratios.test <= 0 ||
      std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must be positive and sum to 1");
  }
  DatasetSplit split;
  split.seed = seed;
  split.ratios = ratios;
  std::mt19937_64 rng(seed);
  std::vector<ItemId> items;
  for (UserId u = 0; u < g.num_users(); ++u) {
    auto row = g.clicked_items(u);
    if (row.empty()) continue;
    items.assign(row.begin(), row.end());
    std::shuffle(items.begin(), items.end(), rng);
    const auto c = static_cast<long>(items.size());
    long n_test = std::lround(static_cast<double>(c) * ratios.test);
    long n_valid = std::lround(static_cast<double>(c) * ratios.valid);
    while (c - n_test - n_valid < 1) {
      if (n_valid >= n_test && n_valid > 0) {
        --n_valid;
      } else {
        --n_test;
      }
    }
    long k = 0;
    for (ItemId i : items) {
      Edge e{u, i};
      if (k < n_test) {
        split.test.push_back(e);
      } else if (k < n_test + n_valid) {
        split.valid.push_back(e);
      } else {
        split.train.push_back(e);
      }
      ++k;
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.valid.begin(), split.valid.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

InteractionGraph with_clicks(const InteractionGraph& g,
                             const std::vector<Edge>& clicks) {
  return InteractionGraph(g.num_users(), g.num_items(), clicks,
                          g.exposure_edges(), g.ids());
}

InteractionGraph click_subgraph(const InteractionGraph& g) {
  return InteractionGraph(g.num_users(), g.num_items(), g.click_edges(), {},
                          g.ids());
}

std::vector<UserId> common_neighbors(const InteractionGraph& g, ItemId i,
                                     ItemId j) {
  if (i == j) throw std::invalid_argument("common_neighbors: i == j");
  if (i >= g.num_items() || j >= g.num_items()) {
    throw std::invalid_argument("common_neighbors: item out of range");
  }
  auto a = g.clickers(i);
  auto b = g.clickers(j);
  std::vector<UserId> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(out));
  return out;
}

}  // namespace ns4ar
