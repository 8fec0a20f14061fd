#include "ns4ar/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

namespace ns4ar {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

NormalizedAdjacency::NormalizedAdjacency(const InteractionGraph& g) {
  const std::size_t n = g.num_nodes();
  offsets_.assign(n + 1, 0);
  for (NodeId x = 0; x < n; ++x) offsets_[x + 1] = offsets_[x] + g.degree(x);
  targets_.reserve(offsets_[n]);
  values_.reserve(offsets_[n]);
  for (NodeId x = 0; x < n; ++x) {
    const double dx = static_cast<double>(g.degree(x));
    g.for_each_neighbor(x, [&](NodeId y) {
      targets_.push_back(y);
      values_.push_back(1.0 / std::sqrt(dx * static_cast<double>(g.degree(y))));
    });
  }
}

void NormalizedAdjacency::multiply(const Matrix& in, Matrix& out) const {
  out = Matrix(in.rows, in.cols);
  for (std::size_t x = 0; x + 1 < offsets_.size(); ++x) {
    auto dst = out.row(x);
    for (std::size_t e = offsets_[x]; e < offsets_[x + 1]; ++e) {
      auto src = in.row(targets_[e]);
      const double w = values_[e];
      for (std::size_t c = 0; c < in.cols; ++c) dst[c] += w * src[c];
    }
  }
}

std::vector<Matrix> propagate(const NormalizedAdjacency& adj, const Matrix& base,
                              int layers) {
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(layers) + 1);
  out.push_back(base);
  for (int l = 0; l < layers; ++l) {
    Matrix next;
    adj.multiply(out.back(), next);
    out.push_back(std::move(next));
  }
  return out;
}

Matrix fuse(const std::vector<Matrix>& layers) {
  if (layers.empty()) throw std::invalid_argument("fuse: no layers");
  Matrix out(layers.front().rows, layers.front().cols);
  for (const auto& h : layers) {
    for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] += h.data[k];
  }
  const double inv = 1.0 / static_cast<double>(layers.size());
  for (double& v : out.data) v *= inv;
  return out;
}

EmbeddingModel::EmbeddingModel(std::size_t num_users, std::size_t num_items,
                               std::size_t dim, int layers)
    : num_users_(num_users),
      num_items_(num_items),
      dim_(dim),
      layers_(layers),
      base_(num_users + num_items, dim) {
  if (dim == 0) throw std::invalid_argument("embedding dim must be >= 1");
  if (layers < 0) throw std::invalid_argument("layers must be >= 0");
}

void EmbeddingModel::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim_));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : base_.data) v = dist(rng);
  stale_ = true;
}

void EmbeddingModel::refresh(const NormalizedAdjacency& adj) {
  if (adj.num_nodes() != base_.rows) {
    throw std::invalid_argument("adjacency does not match model node count");
  }
  fused_ = fuse(propagate(adj, base_, layers_));
  stale_ = false;
}

void EmbeddingModel::set_fused(Matrix fused) {
  if (fused.rows != base_.rows || fused.cols != base_.cols) {
    throw std::invalid_argument("fused matrix shape mismatch");
  }
  fused_ = std::move(fused);
  stale_ = false;
}

void EmbeddingModel::apply_gradient(const Matrix& grad, double lr,
                                    bool keep_cache) {
  if (grad.rows != base_.rows || grad.cols != base_.cols) {
    throw std::invalid_argument("gradient shape mismatch");
  }
  for (std::size_t k = 0; k < base_.data.size(); ++k) {
    base_.data[k] -= lr * grad.data[k];
  }
  if (!keep_cache) stale_ = true;
}

void EmbeddingModel::check_fresh() const {
  if (stale_) throw StaleModelError("fused embeddings are stale; call refresh");
}

std::span<const double> EmbeddingModel::user_vector(UserId u) const {
  check_fresh();
  if (u >= num_users_) {
    throw std::out_of_range("unknown user " + std::to_string(u));
  }
  return fused_.row(u);
}

std::span<const double> EmbeddingModel::item_vector(ItemId i) const {
  check_fresh();
  if (i >= num_items_) {
    throw std::out_of_range("unknown item " + std::to_string(i));
  }
  return fused_.row(num_users_ + i);
}

double EmbeddingModel::score(UserId u, ItemId i) const {
  return dot(user_vector(u), item_vector(i));
}

void EmbeddingModel::save(const std::filesystem::path& path) const {
  check_fresh();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# ns4ar-model users=" << num_users_ << " items=" << num_items_
      << " dim=" << dim_ << " layers=" << layers_ << '\n';
  char buf[32];
  for (const Matrix* m : {&base_, &fused_}) {
    for (std::size_t r = 0; r < m->rows; ++r) {
      auto row = m->row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", row[c]);
        out << (c ? "\t" : "") << buf;
      }
      out << '\n';
    }
  }
}

EmbeddingModel EmbeddingModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::string header;
  std::getline(in, header);
  std::size_t users = 0, items = 0, dim = 0;
  int layers = 0;
  if (std::sscanf(header.c_str(), "# ns4ar-model users=%zu items=%zu dim=%zu layers=%d",
                  &users, &items, &dim, &layers) != 4) {
    throw ParseError(1, "bad checkpoint header in " + path.string());
  }
  EmbeddingModel model(users, items, dim, layers);
  Matrix fused(users + items, dim);
  for (Matrix* m : {&model.base_, &fused}) {
    for (double& v : m->data) {
      if (!(in >> v)) throw std::runtime_error("truncated checkpoint " + path.string());
    }
  }
  model.set_fused(std::move(fused));
  return model;
}

namespace {

std::size_t negatives_per_example(std::span<const TrainingExample> batch) {
  if (batch.empty()) return 0;
  const std::size_t k = batch.front().negatives.size();
  if (k == 0) throw std::invalid_argument("hinge_loss: k must be >= 1");
  for (const auto& ex : batch) {
    if (ex.negatives.size() != k) {
      throw std::invalid_argument("hinge_loss: ragged negatives");
    }
  }
  return k;
}

}  // namespace

double hinge_loss(const EmbeddingModel& model,
                  std::span<const TrainingExample> batch, double margin) {
  const std::size_t k = negatives_per_example(batch);
  if (k == 0) return 0.0;
  const double kd = static_cast<double>(k);
  double total = 0;
  for (const auto& ex : batch) {
    double neg_sum = 0;
    for (ItemId v : ex.negatives) neg_sum += model.score(ex.user, v);
    const double pos = model.score(ex.user, ex.positive);
    total += std::max(0.0, sigmoid(neg_sum) - sigmoid(kd * pos) + margin);
  }
  return total / kd;
}

double hinge_loss_fused_gradient(const EmbeddingModel& model,
                                 std::span<const TrainingExample> batch,
                                 double margin, Matrix& grad) {
  const std::size_t k = negatives_per_example(batch);
  grad = Matrix(model.fused().rows, model.dim());
  if (k == 0) return 0.0;
  const double kd = static_cast<double>(k);
  const std::size_t d = model.dim();
  const std::size_t off = model.num_users();
  double total = 0;
  for (const auto& ex : batch) {
    auto eu = model.user_vector(ex.user);
    auto ep = model.item_vector(ex.positive);
    double neg_sum = 0;
    for (ItemId v : ex.negatives) neg_sum += dot(eu, model.item_vector(v));
    const double pos = dot(eu, ep);
    const double s_neg = sigmoid(neg_sum);
    const double s_pos = sigmoid(kd * pos);
    const double z = s_neg - s_pos + margin;
    if (z <= 0) continue;
    total += z;
    // d/d(neg_sum) and d/d(pos), including the 1/k prefactor.
    const double g_neg = s_neg * (1 - s_neg) / kd;
    const double g_pos = -s_pos * (1 - s_pos);
    auto gu = grad.row(ex.user);
    auto gp = grad.row(off + ex.positive);
    for (std::size_t c = 0; c < d; ++c) {
      gu[c] += g_pos * ep[c];
      gp[c] += g_pos * eu[c];
    }
    for (ItemId v : ex.negatives) {
      auto en = model.item_vector(v);
      auto gn = grad.row(off + v);
      for (std::size_t c = 0; c < d; ++c) {
        gu[c] += g_neg * en[c];
        gn[c] += g_neg * eu[c];
      }
    }
  }
  return total / kd;
}

Matrix backpropagate(const NormalizedAdjacency& adj, const Matrix& grad_fused,
                     int layers) {
  Matrix acc = grad_fused;
  Matrix power = grad_fused;
  Matrix next;
  for (int l = 0; l < layers; ++l) {
    adj.multiply(power, next);
    std::swap(power, next);
    for (std::size_t k = 0; k < acc.data.size(); ++k) acc.data[k] += power.data[k];
  }
  const double inv = 1.0 / static_cast<double>(layers + 1);
  for (double& v : acc.data) v *= inv;
  return acc;
}

std::vector<ItemId> recommend_topk(const EmbeddingModel& model, UserId u,
                                   std::size_t k,
                                   std::span<const ItemId> exclude) {
  auto eu = model.user_vector(u);
  std::vector<std::pair<double, ItemId>> scored;
  scored.reserve(model.num_items());
  for (ItemId i = 0; i < model.num_items(); ++i) {
    if (std::binary_search(exclude.begin(), exclude.end(), i)) continue;
    scored.emplace_back(dot(eu, model.item_vector(i)), i);
  }
  auto better = [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  };
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(),
                    scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), better);
  std::vector<ItemId> out;
  out.reserve(take);
  for (std::size_t r = 0; r < take; ++r) out.push_back(scored[r].second);
  return out;
}

}  // namespace ns4ar
