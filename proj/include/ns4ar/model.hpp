#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "ns4ar/graph.hpp"

namespace ns4ar {

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
};

double dot(std::span<const double> a, std::span<const double> b);

/// Symmetric-normalized click adjacency over the combined user/item node space:
/// entry (x, y) = 1 / sqrt(deg(x) * deg(y)) for every click edge.
class NormalizedAdjacency {
 public:
  explicit NormalizedAdjacency(const InteractionGraph& g);

  std::size_t num_nodes() const { return offsets_.size() - 1; }
  /// out = A * in
  void multiply(const Matrix& in, Matrix& out) const;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<NodeId> targets_;
  std::vector<double> values_;
};

/// h^0 = base, h^{l+1} = A h^l.
std::vector<Matrix> propagate(const NormalizedAdjacency& adj, const Matrix& base,
                              int layers);

/// Mean over the given layers.
Matrix fuse(const std::vector<Matrix>& layers);

class StaleModelError : public std::logic_error {
  using std::logic_error::logic_error;
};

/// Per-node base embeddings plus the fused cache e*. Nodes are laid out as in
/// InteractionGraph: users first, then items.
class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  EmbeddingModel(std::size_t num_users, std::size_t num_items, std::size_t dim,
                 int layers);

  /// i.i.d. uniform in [-1/sqrt(d), 1/sqrt(d)].
  void initialize(std::uint64_t seed);

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t dim() const { return dim_; }
  int layers() const { return layers_; }

  Matrix& base() {
    stale_ = true;
    return base_;
  }
  const Matrix& base() const { return base_; }
  const Matrix& fused() const { return fused_; }
  bool stale() const { return stale_; }

  /// Recomputes e* from the base embeddings over `adj`.
  void refresh(const NormalizedAdjacency& adj);
  /// Installs a precomputed fused matrix (e.g. a checkpoint).
  void set_fused(Matrix fused);

  /// base -= lr * grad. With keep_cache the fused cache stays usable (it then
  /// lags the base embeddings until the next refresh).
  void apply_gradient(const Matrix& grad, double lr, bool keep_cache = false);

  std::span<const double> user_vector(UserId u) const;
  std::span<const double> item_vector(ItemId i) const;

  /// Inner product of fused vectors. Throws std::out_of_range for unknown ids
  /// and StaleModelError when the cache is out of date.
  double score(UserId u, ItemId i) const;

  /// Text checkpoint: header line, then base rows, then fused rows.
  void save(const std::filesystem::path& path) const;
  static EmbeddingModel load(const std::filesystem::path& path);

 private:
  void check_fresh() const;

  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::size_t dim_ = 0;
  int layers_ = 0;
  Matrix base_;
  Matrix fused_;
  bool stale_ = true;
};

double sigmoid(double x);

/// One positive interaction with its sampled negatives.
struct TrainingExample {
  UserId user = 0;
  ItemId positive = 0;
  std::vector<ItemId> negatives;
};

/// (1/k) * sum over examples of
///   [ sigmoid(sum_i r(u, neg_i)) - sigmoid(k * r(u, pos)) + margin ]_+
/// where k is the number of negatives per example (all examples must agree).
double hinge_loss(const EmbeddingModel& model,
                  std::span<const TrainingExample> batch, double margin);

/// Loss and its gradient with respect to the fused vectors (same layout as
/// EmbeddingModel::fused()). The subgradient at the hinge kink is 0.
double hinge_loss_fused_gradient(const EmbeddingModel& model,
                                 std::span<const TrainingExample> batch,
                                 double margin, Matrix& grad_fused);

/// Chains a fused-space gradient back to the base embeddings:
/// (1 / (L + 1)) * sum_l A^l G, using the symmetry of A.
Matrix backpropagate(const NormalizedAdjacency& adj, const Matrix& grad_fused,
                     int layers);

/// Top-K items by fused score for `u`, skipping `exclude` (sorted ascending).
/// Ties go to the smaller item id.
std::vector<ItemId> recommend_topk(const EmbeddingModel& model, UserId u,
                                   std::size_t k,
                                   std::span<const ItemId> exclude);

}  // namespace ns4ar
