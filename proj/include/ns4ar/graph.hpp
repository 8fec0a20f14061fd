#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ns4ar {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;
// Users occupy [0, num_users), items occupy [num_users, num_users + num_items).
using NodeId = std::uint32_t;

struct Edge {
  UserId user = 0;
  ItemId item = 0;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct Exposure {
  UserId user = 0;
  ItemId item = 0;
  // Number of raw exposure records collapsed into this edge.
  std::uint32_t count = 1;

  friend bool operator==(const Exposure&, const Exposure&) = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EmptyGraphError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense index <-> original id token, for users and items separately.
class IdMap {
 public:
  UserId intern_user(const std::string& name);
  ItemId intern_item(const std::string& name);

  const std::string& user_name(UserId u) const { return users_.at(u); }
  const std::string& item_name(ItemId i) const { return items_.at(i); }
  std::size_t num_users() const { return users_.size(); }
  std::size_t num_items() const { return items_.size(); }

  // Identity map over dense indices; used by generated graphs.
  static IdMap identity(std::size_t num_users, std::size_t num_items);

  void save(const std::filesystem::path& users_file,
            const std::filesystem::path& items_file) const;
  static IdMap load(const std::filesystem::path& users_file,
                    const std::filesystem::path& items_file);

  friend bool operator==(const IdMap& a, const IdMap& b) {
    return a.users_ == b.users_ && a.items_ == b.items_;
  }

 private:
  std::vector<std::string> users_;
  std::vector<std::string> items_;
  std::unordered_map<std::string, UserId> user_index_;
  std::unordered_map<std::string, ItemId> item_index_;
};

/// Bipartite user/item graph with click edges (the positive set) and
/// exposure-only edges. Immutable after construction.
///
/// Click and exposure edge sets are disjoint; adjacency lists are sorted by
/// id. Degrees count click edges only.
class InteractionGraph {
 public:
  InteractionGraph() = default;

  /// Builds a graph from raw edge lists. Duplicate clicks collapse, duplicate
  /// exposures accumulate into Exposure::count, and a (user, item) pair that
  /// appears as both click and exposure is kept as a click only.
  InteractionGraph(std::size_t num_users, std::size_t num_items,
                   std::vector<Edge> clicks, std::vector<Exposure> exposures,
                   IdMap ids = {});

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t num_nodes() const { return num_users_ + num_items_; }

  NodeId user_node(UserId u) const { return u; }
  NodeId item_node(ItemId i) const {
    return static_cast<NodeId>(num_users_ + i);
  }
  bool is_user_node(NodeId n) const { return n < num_users_; }
  ItemId node_item(NodeId n) const {
    return static_cast<ItemId>(n - num_users_);
  }

  const std::vector<Edge>& click_edges() const { return clicks_; }
  const std::vector<Exposure>& exposure_edges() const { return exposures_; }

  std::span<const ItemId> clicked_items(UserId u) const;
  std::span<const UserId> clickers(ItemId i) const;
  std::span<const ItemId> exposed_items(UserId u) const;
  std::span<const UserId> exposed_users(ItemId i) const;

  std::size_t user_degree(UserId u) const { return clicked_items(u).size(); }
  std::size_t item_degree(ItemId i) const { return clickers(i).size(); }
  std::size_t degree(NodeId n) const;

  bool has_click(UserId u, ItemId i) const;
  bool has_exposure(UserId u, ItemId i) const;
  std::uint32_t exposure_count(UserId u, ItemId i) const;

  // Click neighbors of a node in the combined node space, ascending.
  template <class F>
  void for_each_neighbor(NodeId n, F&& f) const {
    if (is_user_node(n)) {
      for (ItemId i : clicked_items(n)) f(item_node(i));
    } else {
      for (UserId u : clickers(node_item(n))) f(user_node(u));
    }
  }

  const IdMap& ids() const { return ids_; }

  friend bool operator==(const InteractionGraph& a, const InteractionGraph& b) {
    return a.num_users_ == b.num_users_ && a.num_items_ == b.num_items_ &&
           a.clicks_ == b.clicks_ && a.exposures_ == b.exposures_;
  }

 private:
  struct Csr {
    std::vector<std::size_t> offsets;
    std::vector<std::uint32_t> targets;
    std::span<const std::uint32_t> row(std::size_t r) const {
      return {targets.data() + offsets[r], offsets[r + 1] - offsets[r]};
    }
  };
  static Csr build_csr(std::size_t rows,
                       const std::vector<std::pair<std::uint32_t,
                                                   std::uint32_t>>& pairs);

  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::vector<Edge> clicks_;
  std::vector<Exposure> exposures_;
  Csr user_clicks_;
  Csr item_clicks_;
  Csr user_exposures_;
  Csr item_exposures_;
  IdMap ids_;
};

struct LoadOptions {
  char delimiter = '\t';
};

/// Reads (user_id, item_id, label[, timestamp]) records. Labels: 1 or
/// "click", 0 or "exposure". Blank lines and lines starting with '#' are
/// skipped.
InteractionGraph load_interactions(const std::filesystem::path& path,
                                   const LoadOptions& opts = {});
InteractionGraph parse_interactions(std::istream& in,
                                    const LoadOptions& opts = {});

/// Writes the graph in the same schema using original ids. Exposure edges
/// with count > 1 are written as repeated records.
void save_interactions(const InteractionGraph& g,
                       const std::filesystem::path& path,
                       const LoadOptions& opts = {});

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<Edge> train;
  std::vector<Edge> valid;
  std::vector<Edge> test;
  std::uint64_t seed = 0;
  SplitRatios ratios;
};

/// Per-user random partition of click edges. For a user with c clicks, the
/// test and valid parts get round(c * ratio) edges each, reduced as needed so
/// that at least one edge stays in train.
DatasetSplit split_dataset(const InteractionGraph& g, const SplitRatios& ratios,
                           std::uint64_t seed);

/// Same node set and exposures, clicks restricted to `clicks`.
InteractionGraph with_clicks(const InteractionGraph& g,
                             const std::vector<Edge>& clicks);

/// Restriction to click edges; exposures dropped, node set retained.
InteractionGraph click_subgraph(const InteractionGraph& g);

/// Users adjacent through click edges to both items. Throws
/// std::invalid_argument when i == j or either item is out of range.
std::vector<UserId> common_neighbors(const InteractionGraph& g, ItemId i,
                                     ItemId j);

}  // namespace ns4ar
