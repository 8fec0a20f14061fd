#include "ns4ar/regions.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ns4ar {

std::size_t ShellArray::nonempty_count() const {
  return static_cast<std::size_t>(std::count_if(
      shells.begin(), shells.end(), [](const auto& s) { return !s.empty(); }));
}

std::vector<NodeId> bfs_layer(const InteractionGraph& g,
                              std::span<const NodeId> queue,
                              VisitedSet& visited) {
  std::vector<NodeId> next;
  for (NodeId n : queue) {
    g.for_each_neighbor(n, [&](NodeId m) {
      if (visited.insert(m)) next.push_back(m);
    });
  }
  std::sort(next.begin(), next.end());
  return next;
}

ShellArray blfs(const InteractionGraph& g, UserId u, int khop) {
  if (khop < 1) throw std::invalid_argument("blfs: khop must be >= 1");
  if (u >= g.num_users()) throw std::invalid_argument("blfs: unknown user");
  ShellArray out;
  out.user = u;
  out.khop = khop;
  VisitedSet visited(g.num_nodes());
  std::vector<NodeId> queue{g.user_node(u)};
  visited.insert(queue.front());
  for (int hop = 1; hop <= khop; ++hop) {
    queue = bfs_layer(g, queue, visited);
    // Odd hops reach items, even hops reach users.
    if (hop % 2 == 1 && (!queue.empty() || out.shells.empty())) {
      std::vector<ItemId> shell;
      shell.reserve(queue.size());
      for (NodeId n : queue) shell.push_back(g.node_item(n));
      out.shells.push_back(std::move(shell));
    }
    if (queue.empty()) break;
  }
  return out;
}

UserRegions assign_regions(const ShellArray& shells, int n,
                           std::size_t num_items) {
  if (n < 1) throw std::invalid_argument("assign_regions: n must be >= 1");
  UserRegions out;
  out.user = shells.user;
  out.region_of.assign(num_items, static_cast<Region>(n));
  if (n == 1) return out;

  std::vector<const std::vector<ItemId>*> nonempty;
  for (const auto& s : shells.shells) {
    if (!s.empty()) nonempty.push_back(&s);
  }
  const std::size_t s = nonempty.size();
  const std::size_t groups = static_cast<std::size_t>(n - 1);
  // Contiguous groups; when s > groups the last (s % groups) regions take one
  // extra shell each.
  std::size_t base = s <= groups ? 1 : s / groups;
  std::size_t extra = s <= groups ? 0 : s % groups;
  std::size_t shell = 0;
  for (std::size_t r = 0; r < groups && shell < s; ++r) {
    std::size_t size = base + (r >= groups - extra ? 1 : 0);
    for (std::size_t t = 0; t < size && shell < s; ++t, ++shell) {
      for (ItemId i : *nonempty[shell]) {
        out.region_of[i] = static_cast<Region>(r + 1);
      }
    }
  }
  return out;
}

RegionPartition::RegionPartition(int n, int khop, std::size_t num_items,
                                 std::vector<UserRegions> users)
    : n_(n), khop_(khop), num_items_(num_items) {
  UserId max_user = 0;
  for (const auto& r : users) max_user = std::max(max_user, r.user);
  users_.resize(users.empty() ? 0 : max_user + 1);
  for (auto& r : users) {
    if (r.region_of.size() != num_items) {
      throw std::invalid_argument("RegionPartition: region map size mismatch");
    }
    UserId u = r.user;
    users_[u] = std::move(r);
  }
}

const std::vector<Region>& RegionPartition::regions_of(UserId u) const {
  if (!has_user(u)) {
    throw std::out_of_range("user " + std::to_string(u) +
                            " absent from region partition");
  }
  return users_[u].region_of;
}

void RegionPartition::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# n=" << n_ << " khop=" << khop_ << " items=" << num_items_ << '\n';
  for (const auto& r : users_) {
    if (r.region_of.empty()) continue;
    for (std::size_t i = 0; i < r.region_of.size(); ++i) {
      out << r.user << '\t' << i << '\t' << r.region_of[i] << '\n';
    }
  }
}

RegionPartition RegionPartition::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string header;
  std::getline(in, header);
  int n = 0, khop = 0;
  std::size_t items = 0;
  if (std::sscanf(header.c_str(), "# n=%d khop=%d items=%zu", &n, &khop,
                  &items) != 3) {
    throw ParseError(1, "bad partition header");
  }
  std::vector<UserRegions> users;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    UserId u;
    std::size_t i;
    unsigned region;
    if (!(ss >> u >> i >> region) || i >= items) {
      throw ParseError(lineno, "bad partition record");
    }
    if (users.empty() || users.back().user != u) {
      users.push_back({u, std::vector<Region>(items, 0)});
    }
    users.back().region_of[i] = static_cast<Region>(region);
  }
  return RegionPartition(n, khop, items, std::move(users));
}

bool operator==(const RegionPartition& a, const RegionPartition& b) {
  if (a.n_ != b.n_ || a.khop_ != b.khop_ || a.num_items_ != b.num_items_)
    return false;
  std::size_t m = std::max(a.users_.size(), b.users_.size());
  for (std::size_t u = 0; u < m; ++u) {
    const auto* ra = u < a.users_.size() ? &a.users_[u].region_of : nullptr;
    const auto* rb = u < b.users_.size() ? &b.users_[u].region_of : nullptr;
    bool ea = !ra || ra->empty();
    bool eb = !rb || rb->empty();
    if (ea != eb) return false;
    if (!ea && *ra != *rb) return false;
  }
  return true;
}

std::size_t max_shell_count(const InteractionGraph& g, int khop) {
  std::size_t best = 0;
  for (UserId u = 0; u < g.num_users(); ++u) {
    best = std::max(best, blfs(g, u, khop).nonempty_count());
  }
  return best;
}

int resolve_region_count(const InteractionGraph& g, int khop, int n) {
  if (n > 0) return n;
  auto shells = static_cast<int>(max_shell_count(g, khop));
  return std::max(1, std::min(khop, shells + 1));
}

RegionPartition partition_users(const InteractionGraph& g, int khop, int n) {
  if (n < 1) throw std::invalid_argument("partition_users: n must be >= 1");
  std::vector<UserRegions> users;
  users.reserve(g.num_users());
  for (UserId u = 0; u < g.num_users(); ++u) {
    users.push_back(assign_regions(blfs(g, u, khop), n, g.num_items()));
  }
  return RegionPartition(n, khop, g.num_items(), std::move(users));
}

}  // namespace ns4ar
