#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ns4ar/graph.hpp"

namespace ns4ar {

using Region = std::uint16_t;

/// Item shells of one user from a layered BFS over click edges.
/// shells[d] holds the items first reached at hop 2d+1, ascending.
struct ShellArray {
  UserId user = 0;
  int khop = 0;
  std::vector<std::vector<ItemId>> shells;

  std::size_t nonempty_count() const;
};

/// Tracks visited nodes for a layered traversal.
class VisitedSet {
 public:
  explicit VisitedSet(std::size_t num_nodes) : seen_(num_nodes, 0) {}
  bool contains(NodeId n) const { return seen_[n] != 0; }
  bool insert(NodeId n) {
    if (seen_[n]) return false;
    seen_[n] = 1;
    return true;
  }

 private:
  std::vector<std::uint8_t> seen_;
};

/// Expands one BFS layer: every unvisited click neighbor of the queue nodes,
/// deduplicated and ascending. Marks returned nodes visited.
std::vector<NodeId> bfs_layer(const InteractionGraph& g,
                              std::span<const NodeId> queue,
                              VisitedSet& visited);

/// Layered BFS from `u` for up to `khop` layers, collecting item frontiers.
/// Stops early when the frontier empties.
ShellArray blfs(const InteractionGraph& g, UserId u, int khop);

/// Region assignment of every item for one user. Regions are 1-based; region
/// n holds items no shell reached.
struct UserRegions {
  UserId user = 0;
  std::vector<Region> region_of;  // indexed by item
};

UserRegions assign_regions(const ShellArray& shells, int n,
                           std::size_t num_items);

class RegionPartition {
 public:
  RegionPartition() = default;
  RegionPartition(int n, int khop, std::size_t num_items,
                  std::vector<UserRegions> users);

  int n() const { return n_; }
  int khop() const { return khop_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t num_users() const { return users_.size(); }

  bool has_user(UserId u) const {
    return u < users_.size() && !users_[u].region_of.empty();
  }
  const std::vector<Region>& regions_of(UserId u) const;
  Region region_of(UserId u, ItemId i) const { return regions_of(u)[i]; }

  /// Text dump: one "user_id<TAB>item_id<TAB>region" line per pair, preceded
  /// by a "# n=<n> khop=<khop> items=<count>" header.
  void save(const std::filesystem::path& path) const;
  static RegionPartition load(const std::filesystem::path& path);

  friend bool operator==(const RegionPartition& a, const RegionPartition& b);

 private:
  int n_ = 0;
  int khop_ = 0;
  std::size_t num_items_ = 0;
  std::vector<UserRegions> users_;  // indexed by user; empty if absent
};

/// Largest number of nonempty shells over all users, for khop layers.
std::size_t max_shell_count(const InteractionGraph& g, int khop);

/// Resolves the region count: explicit n when n > 0, otherwise
/// min(khop, max shell count + 1).
int resolve_region_count(const InteractionGraph& g, int khop, int n);

/// Partitions every user of `g`.
RegionPartition partition_users(const InteractionGraph& g, int khop, int n);

}  // namespace ns4ar
