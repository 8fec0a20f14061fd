#include "ns4ar/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace ns4ar {

void TrainConfig::validate() const {
  if (gamma < 0) throw std::invalid_argument("train: gamma must be >= 0");
  if (lr < 0) throw std::invalid_argument("train: lr must be >= 0");
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (dim < 1) throw std::invalid_argument("train: dim must be >= 1");
  if (layers < 0) throw std::invalid_argument("train: layers must be >= 0");
  sampler.validate();
}

TrainResult train_model(const InteractionGraph& train,
                        const NegativeSampler& sampler,
                        const TrainConfig& config) {
  config.validate();
  TrainResult result;
  result.model = EmbeddingModel(train.num_users(), train.num_items(), config.dim,
                                config.layers);
  result.model.initialize(config.seed);
  result.stats = train_model(train, sampler, config, result.model);
  return result;
}

TrainStats train_model(const InteractionGraph& train,
                       const NegativeSampler& sampler, const TrainConfig& config,
                       EmbeddingModel& model) {
  config.validate();
  const NormalizedAdjacency adj(train);
  Rng rng = rng_stream(config.seed, 0);
  TrainStats stats;

  std::vector<Edge> positives;
  for (const Edge& e : train.click_edges()) {
    if (sampler.can_sample(e.user)) {
      positives.push_back(e);
    } else {
      ++stats.skipped;
    }
  }
  stats.examples = positives.size();

  model.refresh(adj);
  std::vector<TrainingExample> batch;
  Matrix grad_fused;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.refresh == RefreshPolicy::kPerEpoch) model.refresh(adj);
    std::shuffle(positives.begin(), positives.end(), rng);
    double epoch_total = 0;
    for (std::size_t start = 0; start < positives.size();
         start += config.batch_size) {
      if (config.refresh == RefreshPolicy::kPerBatch && model.stale()) {
        model.refresh(adj);
      }
      const std::size_t end = std::min(positives.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t t = start; t < end; ++t) {
        Draw d = sampler.draw(positives[t].user, model, rng);
        if (d.with_replacement) ++stats.replacement_draws;
        batch.push_back({positives[t].user, positives[t].item, std::move(d.items)});
      }
      const double loss =
          hinge_loss_fused_gradient(model, batch, config.gamma, grad_fused);
      if (!std::isfinite(loss)) {
        throw TrainingDiverged("non-finite loss at epoch " +
                               std::to_string(epoch + 1));
      }
      epoch_total += loss;
      if (config.lr == 0) continue;
      model.apply_gradient(backpropagate(adj, grad_fused, model.layers()),
                           config.lr,
                           config.refresh == RefreshPolicy::kPerEpoch);
    }
    const double mean =
        positives.empty() ? 0.0 : epoch_total / static_cast<double>(positives.size());
    stats.epoch_loss.push_back(mean);
  }
  model.refresh(adj);
  return stats;
}

void save_loss_curve(const TrainStats& stats, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,mean_loss\n";
  char buf[64];
  for (std::size_t e = 0; e < stats.epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e + 1, stats.epoch_loss[e]);
    out << buf;
  }
}

}  // namespace ns4ar
