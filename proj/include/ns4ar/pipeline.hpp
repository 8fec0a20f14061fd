#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ns4ar/graph.hpp"
#include "ns4ar/metrics.hpp"
#include "ns4ar/regions.hpp"
#include "ns4ar/selection.hpp"
#include "ns4ar/similarity.hpp"
#include "ns4ar/train.hpp"

namespace ns4ar {

using Json = nlohmann::json;

/// Planted-community generator. User u and item i belong to communities
/// u % communities and i % communities. Clicks: p_intra inside a community,
/// p_cross between ring-adjacent communities, never further apart.
/// Exposures fall on unclicked items: exposure_rate inside the community,
/// exposure_rate / 4 on ring-adjacent ones.
///
/// Each community is further split into two tastes, (id / communities) % 2.
/// Inside a community the click probability is p_intra * (1 + taste_contrast)
/// for matching tastes and p_intra * (1 - taste_contrast) otherwise, so
/// exposed-not-clicked items lean toward the other taste. taste_contrast = 0
/// makes all items of a community exchangeable.
struct SyntheticSpec {
  std::size_t users = 200;
  std::size_t items = 500;
  std::size_t communities = 20;
  double p_intra = 0.3;
  double p_cross = 0.02;
  double exposure_rate = 0.3;
  double taste_contrast = 0.0;
  // Unset: follow the experiment seed.
  std::optional<std::uint64_t> seed;

  void validate() const;
};

InteractionGraph generate_synthetic(const SyntheticSpec& spec,
                                    std::uint64_t seed);

/// Ring distance between the communities of u and i.
std::size_t community_distance(const SyntheticSpec& spec, UserId u, ItemId i);

class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A pipeline stage failed; what() starts with the stage name.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

class MissingArtifactError : public std::runtime_error {
 public:
  MissingArtifactError(std::filesystem::path path, const std::string& hint)
      : std::runtime_error("missing artifact " + path.string() + " (" + hint + ")"),
        path_(std::move(path)) {}
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

struct ExperimentConfig {
  std::filesystem::path dataset;
  char delimiter = '\t';
  std::optional<SyntheticSpec> synthetic;

  SplitRatios split;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  int khop = 100;
  int n = 0;  // 0: derived from the shell counts
  StagewiseOptions selection;
  TrainConfig train;  // train.seed is replaced by the run seed
  std::size_t eval_k = 20;

  std::vector<std::string> samplers{"ns4ar", "uniform_rns", "dns_hard",
                                    "exposure_argmax"};
  std::vector<int> sweep_n{1, 10, 100, 1000};
  int ablate_n = 5;

  std::filesystem::path out = "ns4ar-out";

  void validate() const;
};

/// Parses and validates a config document. Unknown keys are rejected with
/// their dotted path. A manifest is accepted too (its "config" member is used).
ExperimentConfig parse_config(const Json& doc);

/// Canonical JSON form of the config, without the output directory.
Json to_json(const ExperimentConfig& config);

Json read_json_file(const std::filesystem::path& path);

/// Applies "a.b.c=value" to a config document. The value is parsed as JSON
/// when possible and taken as a string otherwise.
void apply_override(Json& doc, const std::string& assignment);

/// SHA-1 of "blob <size>\0<content>", as printed by `git hash-object`.
std::string git_blob_sha1(std::string_view content);
std::string git_blob_sha1_file(const std::filesystem::path& path);

/// For a manifest backed by a dataset file, checks that the file still has
/// the recorded hash.
void check_manifest_inputs(const Json& doc, const ExperimentConfig& config);

struct RunOutcome {
  std::uint64_t seed = 0;
  std::optional<Metrics> valid;
  Metrics test;
  TrainStats stats;
  bool skipped = false;
  std::string note;
};

/// Runs pipeline stages for one config, caching every stage result in memory
/// and on disk under <out>/cache, keyed by a hash of the stage's inputs.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig config, std::ostream* log = nullptr);
  ~Experiment();

  const ExperimentConfig& config() const { return config_; }

  const InteractionGraph& graph(std::uint64_t seed);
  const DatasetSplit& split(std::uint64_t seed);
  const InteractionGraph& train_graph(std::uint64_t seed);
  const RegionPartition& partition(std::uint64_t seed, int n);
  const WeightMatrix& weights(std::uint64_t seed);
  /// Core negatives per user (indexed by user id).
  const std::vector<std::vector<ItemId>>& core(std::uint64_t seed, int n);

  /// Trains (or loads from cache) and evaluates one configuration.
  RunOutcome train_and_evaluate(std::uint64_t seed, int n,
                                const SamplerConfig& sampler);

  /// Stage subcommands; each writes its artifacts and manifest.json into
  /// the output directory.
  void write_partition();
  void write_weights();
  void write_core();
  void train();
  /// Needs <out>/model.ckpt from train().
  Metrics evaluate();
  /// train() then evaluate().
  Metrics run();

  std::vector<MetricsReport> compare_samplers();
  std::vector<MetricsReport> sweep_n(const std::vector<int>& n_values);
  /// Single-region runs for r = 1..n plus the pair {n-1, n}.
  std::vector<MetricsReport> region_ablation(int n);

  /// Stage results loaded from <out>/cache instead of recomputed.
  int disk_hits(const std::string& stage) const;

 private:
  struct Cache;

  std::uint64_t data_seed(std::uint64_t seed) const;
  std::optional<EmbeddingModel> trained_model(std::uint64_t seed, int n,
                                              const SamplerConfig& sampler,
                                              RunOutcome& out,
                                              std::string* key_out);
  MetricsReport grid(const std::string& label, int n,
                     const SamplerConfig& sampler);
  void write_common();
  void train_stage();
  Metrics evaluate_stage();
  void record(const std::string& artifact);
  template <class F>
  void command(const std::string& name, F&& f);
  std::string data_key(std::uint64_t seed);
  std::string split_key(std::uint64_t seed);
  std::string partition_key(std::uint64_t seed, int n);
  std::string model_key(std::uint64_t seed, int n, const SamplerConfig& sampler);
  std::filesystem::path cache_path(const std::string& stage,
                                   const std::string& key) const;
  void log(const std::string& line);
  void write_manifest(const std::string& command);
  void write_reports(const std::string& stem,
                     const std::vector<MetricsReport>& reports);
  template <class F>
  auto stage(const std::string& name, F&& f) -> decltype(f());

  ExperimentConfig config_;
  std::ostream* log_;
  std::unique_ptr<Cache> cache_;
  std::map<std::string, std::string> artifacts_;
};

}  // namespace ns4ar
