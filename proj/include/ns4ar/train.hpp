#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "ns4ar/graph.hpp"
#include "ns4ar/model.hpp"
#include "ns4ar/sampler.hpp"

namespace ns4ar {

enum class RefreshPolicy { kPerBatch, kPerEpoch };

struct TrainConfig {
  std::size_t dim = 64;
  int layers = 2;
  double gamma = 0.1;
  double lr = 0.05;
  int epochs = 30;
  std::size_t batch_size = 256;
  std::uint64_t seed = 1;
  RefreshPolicy refresh = RefreshPolicy::kPerBatch;
  SamplerConfig sampler;

  void validate() const;
};

class TrainingDiverged : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainStats {
  std::vector<double> epoch_loss;  // mean per-interaction loss
  std::size_t examples = 0;        // interactions trained per epoch
  std::size_t skipped = 0;         // interactions without a negative pool
  std::size_t replacement_draws = 0;
};

struct TrainResult {
  EmbeddingModel model;
  TrainStats stats;
};

/// Minibatch SGD on the hinge loss. `train` holds the training clicks (plus
/// exposures); negatives come from `sampler`. Deterministic given the seed.
TrainResult train_model(const InteractionGraph& train,
                        const NegativeSampler& sampler,
                        const TrainConfig& config);

/// Same, continuing from an initialized model.
TrainStats train_model(const InteractionGraph& train,
                       const NegativeSampler& sampler,
                       const TrainConfig& config, EmbeddingModel& model);

/// "epoch,mean_loss" rows with a header.
void save_loss_curve(const TrainStats& stats, const std::filesystem::path& path);

}  // namespace ns4ar
