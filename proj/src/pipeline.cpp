#include "ns4ar/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <type_traits>

#include "ns4ar/sampler.hpp"

namespace fs = std::filesystem;

namespace ns4ar {

// ---------------------------------------------------------------------------
// Synthetic data

void SyntheticSpec::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ConfigError(std::string("data.synthetic.") + name +
                        " must be in [0, 1]");
    }
  };
  prob(p_intra, "p_intra");
  prob(p_cross, "p_cross");
  prob(exposure_rate, "exposure_rate");
  prob(taste_contrast, "taste_contrast");
  if (p_intra * (1 + taste_contrast) > 1.0) {
    throw ConfigError(
        "data.synthetic: p_intra * (1 + taste_contrast) must be <= 1");
  }
  if (communities < 1) {
    throw ConfigError("data.synthetic.communities must be >= 1");
  }
  if (users < 1 || items < 1) {
    throw ConfigError("data.synthetic needs at least one user and one item");
  }
}

std::size_t community_distance(const SyntheticSpec& spec, UserId u, ItemId i) {
  const std::size_t c = spec.communities;
  const std::size_t a = u % c;
  const std::size_t b = i % c;
  const std::size_t d = a > b ? a - b : b - a;
  return std::min(d, c - d);
}

InteractionGraph generate_synthetic(const SyntheticSpec& spec,
                                    std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t c = spec.communities;
  auto click_p = [&](UserId u, ItemId i) {
    const std::size_t d = community_distance(spec, u, i);
    if (d == 1) return spec.p_cross;
    if (d > 1) return 0.0;
    const bool match = (u / c) % 2 == (i / c) % 2;
    return spec.p_intra * (match ? 1 + spec.taste_contrast : 1 - spec.taste_contrast);
  };
  auto expose_p = [&](std::size_t d) {
    return d == 0 ? spec.exposure_rate : d == 1 ? spec.exposure_rate / 4 : 0.0;
  };

  std::vector<Edge> clicks;
  std::vector<char> clicked(spec.items);
  std::vector<Exposure> exposures;
  for (UserId u = 0; u < spec.users; ++u) {
    std::fill(clicked.begin(), clicked.end(), 0);
    for (ItemId i = 0; i < spec.items; ++i) {
      const double p = click_p(u, i);
      if (p > 0 && unit(rng) < p) {
        clicks.push_back({u, i});
        clicked[i] = 1;
      }
    }
    for (ItemId i = 0; i < spec.items; ++i) {
      if (clicked[i]) continue;
      const double q = expose_p(community_distance(spec, u, i));
      if (q > 0 && unit(rng) < q) exposures.push_back({u, i, 1});
    }
  }
  return InteractionGraph(spec.users, spec.items, std::move(clicks),
                          std::move(exposures),
                          IdMap::identity(spec.users, spec.items));
}

// ---------------------------------------------------------------------------
// Config

namespace {

std::string refresh_name(RefreshPolicy p) {
  return p == RefreshPolicy::kPerBatch ? "batch" : "epoch";
}

RefreshPolicy parse_refresh(const std::string& s) {
  if (s == "batch") return RefreshPolicy::kPerBatch;
  if (s == "epoch") return RefreshPolicy::kPerEpoch;
  throw ConfigError("train.refresh must be \"batch\" or \"epoch\", got \"" + s +
                    "\"");
}

// Reads typed members of one JSON object and remembers which keys were used.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw ConfigError((path_.empty() ? "config" : path_) +
                        " must be an object");
    }
  }

  template <class T>
  void get(const std::string& key, T& out) {
    const Json* v = take(key);
    if (!v) return;
    check_type<T>(*v, key);
    try {
      out = v->get<T>();
    } catch (const Json::exception& e) {
      throw ConfigError(name(key) + ": " + e.what());
    }
  }

  std::optional<Section> child(const std::string& key) {
    const Json* v = take(key);
    if (!v) return std::nullopt;
    return Section(*v, name(key));
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!used_.count(item.key())) {
        throw ConfigError("unknown config key " + name(item.key()));
      }
    }
  }

 private:
  const Json* take(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  std::string name(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  template <class T>
  void check_type(const Json& v, const std::string& key) const {
    bool ok = true;
    if constexpr (std::is_same_v<T, bool>) {
      ok = v.is_boolean();
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
      ok = v.is_number_unsigned();
    } else if constexpr (std::is_integral_v<T>) {
      ok = v.is_number_integer();
    } else if constexpr (std::is_floating_point_v<T>) {
      ok = v.is_number();
    } else if constexpr (std::is_same_v<T, std::string>) {
      ok = v.is_string();
    } else {
      ok = v.is_array();
    }
    if (!ok) throw ConfigError(name(key) + " has the wrong type: " + v.dump());
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> used_;
};

Json synthetic_json(const SyntheticSpec& s) {
  Json j = {{"users", s.users},
            {"items", s.items},
            {"communities", s.communities},
            {"p_intra", s.p_intra},
            {"p_cross", s.p_cross},
            {"exposure_rate", s.exposure_rate},
            {"taste_contrast", s.taste_contrast}};
  if (s.seed) j["seed"] = *s.seed;
  return j;
}

Json sampler_json(const SamplerConfig& s) {
  return {{"name", to_string(s.kind)},
          {"k", s.k},
          {"dns_pool", s.dns_pool},
          {"core_quota", s.core_quota},
          {"regions", s.regions}};
}

Json selection_json(const StagewiseOptions& s) {
  return {{"step", s.step},
          {"residual_threshold", s.residual_threshold},
          {"max_iterations", s.max_iterations},
          {"m", s.m},
          {"significance", s.significance}};
}

Json train_json(const TrainConfig& t) {
  return {{"dim", t.dim},         {"layers", t.layers},
          {"gamma", t.gamma},     {"lr", t.lr},
          {"epochs", t.epochs},   {"batch_size", t.batch_size},
          {"refresh", refresh_name(t.refresh)}};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.empty() && !synthetic) {
    throw ConfigError("data: set data.path or data.synthetic");
  }
  if (!dataset.empty() && synthetic) {
    throw ConfigError("data: data.path and data.synthetic are exclusive");
  }
  if (synthetic) synthetic->validate();
  if (!(split.train > 0 && split.valid > 0 && split.test > 0) ||
      std::abs(split.train + split.valid + split.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be positive and sum to 1");
  }
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (khop < 1) throw ConfigError("partition.khop must be >= 1");
  if (n < 0) throw ConfigError("partition.n must be >= 0");
  if (!(selection.step > 0)) throw ConfigError("selection.step must be > 0");
  if (selection.m < 1) throw ConfigError("selection.m must be >= 1");
  if (selection.max_iterations < 1) {
    throw ConfigError("selection.max_iterations must be >= 1");
  }
  if (eval_k < 1) throw ConfigError("eval.k must be >= 1");
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  for (const auto& s : samplers) {
    try {
      parse_sampler_kind(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("experiments.samplers: ") + e.what());
    }
  }
  for (int v : sweep_n) {
    if (v < 1) throw ConfigError("experiments.sweep_n values must be >= 1");
  }
  if (ablate_n < 2) throw ConfigError("experiments.ablate_n must be >= 2");
}

ExperimentConfig parse_config(const Json& doc) {
  const Json& root = doc.contains("config") && doc.contains("manifest_version")
                         ? doc.at("config")
                         : doc;
  ExperimentConfig c;
  Section top(root, "");
  top.get("seed", c.seed);
  top.get("seeds", c.seeds);
  std::string out;
  top.get("out", out);
  if (!out.empty()) c.out = out;

  if (auto data = top.child("data")) {
    std::string path;
    data->get("path", path);
    c.dataset = path;
    std::string delim;
    data->get("delimiter", delim);
    if (!delim.empty()) {
      if (delim.size() != 1) {
        throw ConfigError("data.delimiter must be a single character");
      }
      c.delimiter = delim[0];
    }
    if (auto syn = data->child("synthetic")) {
      SyntheticSpec s;
      syn->get("users", s.users);
      syn->get("items", s.items);
      syn->get("communities", s.communities);
      syn->get("p_intra", s.p_intra);
      syn->get("p_cross", s.p_cross);
      syn->get("exposure_rate", s.exposure_rate);
      syn->get("taste_contrast", s.taste_contrast);
      std::uint64_t seed = 0;
      Json probe = root.at("data").at("synthetic");
      if (probe.contains("seed") && !probe.at("seed").is_null()) {
        syn->get("seed", seed);
        s.seed = seed;
      }
      syn->finish();
      c.synthetic = s;
    }
    data->finish();
  }
  if (auto split = top.child("split")) {
    split->get("train", c.split.train);
    split->get("valid", c.split.valid);
    split->get("test", c.split.test);
    split->finish();
  }
  if (auto part = top.child("partition")) {
    part->get("khop", c.khop);
    part->get("n", c.n);
    part->finish();
  }
  bool m_given = false;
  if (auto sel = top.child("selection")) {
    m_given = root.at("selection").contains("m") &&
              !root.at("selection").at("m").is_null();
    sel->get("step", c.selection.step);
    sel->get("residual_threshold", c.selection.residual_threshold);
    sel->get("max_iterations", c.selection.max_iterations);
    sel->get("m", c.selection.m);
    sel->get("significance", c.selection.significance);
    sel->finish();
  }
  if (auto smp = top.child("sampler")) {
    std::string name;
    smp->get("name", name);
    if (!name.empty()) {
      try {
        c.train.sampler.kind = parse_sampler_kind(name);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("sampler.name: ") + e.what());
      }
    }
    smp->get("k", c.train.sampler.k);
    smp->get("dns_pool", c.train.sampler.dns_pool);
    smp->get("core_quota", c.train.sampler.core_quota);
    smp->get("regions", c.train.sampler.regions);
    smp->finish();
  }
  if (auto tr = top.child("train")) {
    tr->get("dim", c.train.dim);
    tr->get("layers", c.train.layers);
    tr->get("gamma", c.train.gamma);
    tr->get("lr", c.train.lr);
    tr->get("epochs", c.train.epochs);
    tr->get("batch_size", c.train.batch_size);
    std::string refresh;
    tr->get("refresh", refresh);
    if (!refresh.empty()) c.train.refresh = parse_refresh(refresh);
    tr->finish();
  }
  if (auto ev = top.child("eval")) {
    ev->get("k", c.eval_k);
    ev->finish();
  }
  if (auto ex = top.child("experiments")) {
    ex->get("samplers", c.samplers);
    ex->get("sweep_n", c.sweep_n);
    ex->get("ablate_n", c.ablate_n);
    ex->finish();
  }
  top.finish();
  // The core pool defaults to five negatives' worth per user.
  if (!m_given) c.selection.m = 5 * c.train.sampler.k;
  c.validate();
  return c;
}

Json to_json(const ExperimentConfig& c) {
  Json data = Json::object();
  if (!c.dataset.empty()) {
    data["path"] = c.dataset.string();
    data["delimiter"] = std::string(1, c.delimiter);
  }
  if (c.synthetic) data["synthetic"] = synthetic_json(*c.synthetic);
  return {{"seed", c.seed},
          {"seeds", c.seeds},
          {"data", data},
          {"split",
           {{"train", c.split.train},
            {"valid", c.split.valid},
            {"test", c.split.test}}},
          {"partition", {{"khop", c.khop}, {"n", c.n}}},
          {"selection", selection_json(c.selection)},
          {"sampler", sampler_json(c.train.sampler)},
          {"train", train_json(c.train)},
          {"eval", {{"k", c.eval_k}}},
          {"experiments",
           {{"samplers", c.samplers},
            {"sweep_n", c.sweep_n},
            {"ablate_n", c.ablate_n}}}};
}

Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void apply_override(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like section.key=value: " +
                      assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;
  }
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("bad override key: " + path);
    if (!node->is_object()) throw ConfigError("override path is not an object: " + path);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

// ---------------------------------------------------------------------------
// Hashing

std::string git_blob_sha1(std::string_view content) {
  std::string header = "blob " + std::to_string(content.size());
  header.push_back('\0');
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), content.data(), content.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw std::runtime_error("sha1 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out.push_back(hex[digest[k] >> 4]);
    out.push_back(hex[digest[k] & 15]);
  }
  return out;
}

std::string git_blob_sha1_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return git_blob_sha1(buf.str());
}

// ---------------------------------------------------------------------------
// Experiment

namespace {

void save_split(const DatasetSplit& s, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# part\tuser\titem\n";
  auto rows = [&](const char* part, const std::vector<Edge>& edges) {
    for (const Edge& e : edges) out << part << '\t' << e.user << '\t' << e.item << '\n';
  };
  rows("train", s.train);
  rows("valid", s.valid);
  rows("test", s.test);
}

using CoreSets = std::vector<std::vector<ItemId>>;

void save_core(const CoreSets& core, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# user\tcore items\n";
  for (UserId u = 0; u < core.size(); ++u) {
    out << u << '\t';
    for (std::size_t t = 0; t < core[u].size(); ++t) {
      out << (t ? "," : "") << core[u][t];
    }
    out << '\n';
  }
}

CoreSets load_core(const fs::path& path, std::size_t num_users) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  CoreSets core(num_users);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    const auto u = static_cast<UserId>(std::stoul(line.substr(0, tab)));
    std::istringstream items(line.substr(tab + 1));
    std::string tok;
    while (std::getline(items, tok, ',')) {
      core.at(u).push_back(static_cast<ItemId>(std::stoul(tok)));
    }
  }
  return core;
}

std::string hash_json(const Json& j) { return git_blob_sha1(j.dump()); }

}  // namespace

struct Experiment::Cache {
  std::map<std::uint64_t, InteractionGraph> graphs;
  std::map<std::uint64_t, std::string> data_keys;
  std::map<std::uint64_t, DatasetSplit> splits;
  std::map<std::uint64_t, InteractionGraph> train_graphs;
  std::map<std::string, RegionPartition> partitions;
  std::map<std::uint64_t, WeightMatrix> weights;
  std::map<std::string, CoreSets> cores;
  std::map<std::string, int> disk_hits;
};

Experiment::Experiment(ExperimentConfig config, std::ostream* log)
    : config_(std::move(config)), log_(log), cache_(std::make_unique<Cache>()) {
  config_.validate();
  fs::create_directories(config_.out / "cache");
}

Experiment::~Experiment() = default;

int Experiment::disk_hits(const std::string& stage) const {
  auto it = cache_->disk_hits.find(stage);
  return it == cache_->disk_hits.end() ? 0 : it->second;
}

void Experiment::log(const std::string& line) {
  if (log_) *log_ << line << '\n';
}

template <class F>
auto Experiment::stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const MissingArtifactError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

fs::path Experiment::cache_path(const std::string& stage,
                                const std::string& key) const {
  return config_.out / "cache" / (stage + "-" + key.substr(0, 16));
}

std::uint64_t Experiment::data_seed(std::uint64_t seed) const {
  return config_.synthetic && config_.synthetic->seed ? *config_.synthetic->seed
                                                      : seed;
}

std::string Experiment::data_key(std::uint64_t seed) {
  auto it = cache_->data_keys.find(seed);
  if (it != cache_->data_keys.end()) return it->second;
  std::string key;
  if (config_.synthetic) {
    key = hash_json({{"generator", 1},
                     {"spec", synthetic_json(*config_.synthetic)},
                     {"seed", data_seed(seed)}});
  } else {
    key = stage("load", [&] { return git_blob_sha1_file(config_.dataset); });
  }
  cache_->data_keys[seed] = key;
  return key;
}

std::string Experiment::split_key(std::uint64_t seed) {
  return hash_json({{"data", data_key(seed)},
                    {"ratios", {config_.split.train, config_.split.valid,
                                config_.split.test}},
                    {"seed", seed}});
}

std::string Experiment::partition_key(std::uint64_t seed, int n) {
  return hash_json({{"split", split_key(seed)}, {"khop", config_.khop}, {"n", n}});
}

std::string Experiment::model_key(std::uint64_t seed, int n,
                                  const SamplerConfig& sampler) {
  Json j = {{"split", split_key(seed)},
            {"train", train_json(config_.train)},
            {"sampler", sampler_json(sampler)},
            {"seed", seed}};
  if (sampler.kind == SamplerKind::kNs4ar ||
      sampler.kind == SamplerKind::kExposureArgmax) {
    j["partition"] = partition_key(seed, n);
    if (sampler.regions.empty()) j["selection"] = selection_json(config_.selection);
  }
  return hash_json(j);
}

const InteractionGraph& Experiment::graph(std::uint64_t seed) {
  auto it = cache_->graphs.find(seed);
  if (it != cache_->graphs.end()) return it->second;
  InteractionGraph g = stage("load", [&] {
    if (config_.synthetic) return generate_synthetic(*config_.synthetic, data_seed(seed));
    return load_interactions(config_.dataset, LoadOptions{config_.delimiter});
  });
  log("[seed " + std::to_string(seed) + "] data: " +
      std::to_string(g.num_users()) + " users, " + std::to_string(g.num_items()) +
      " items, " + std::to_string(g.click_edges().size()) + " clicks, " +
      std::to_string(g.exposure_edges().size()) + " exposures");
  return cache_->graphs.emplace(seed, std::move(g)).first->second;
}

const DatasetSplit& Experiment::split(std::uint64_t seed) {
  auto it = cache_->splits.find(seed);
  if (it != cache_->splits.end()) return it->second;
  const auto& g = graph(seed);
  DatasetSplit s = stage("split", [&] { return split_dataset(g, config_.split, seed); });
  return cache_->splits.emplace(seed, std::move(s)).first->second;
}

const InteractionGraph& Experiment::train_graph(std::uint64_t seed) {
  auto it = cache_->train_graphs.find(seed);
  if (it != cache_->train_graphs.end()) return it->second;
  const auto& s = split(seed);
  InteractionGraph tg = stage("split", [&] { return with_clicks(graph(seed), s.train); });
  return cache_->train_graphs.emplace(seed, std::move(tg)).first->second;
}

const RegionPartition& Experiment::partition(std::uint64_t seed, int n) {
  const std::string key = partition_key(seed, n);
  auto it = cache_->partitions.find(key);
  if (it != cache_->partitions.end()) return it->second;
  const fs::path path = cache_path("partition", key);
  const auto& tg = train_graph(seed);
  RegionPartition p = stage("partition", [&] {
    if (fs::exists(path)) {
      ++cache_->disk_hits["partition"];
      return RegionPartition::load(path);
    }
    RegionPartition fresh = partition_users(
        tg, config_.khop, resolve_region_count(tg, config_.khop, n));
    fresh.save(path);
    return fresh;
  });
  log("[seed " + std::to_string(seed) + "] partition: n=" + std::to_string(p.n()) +
      " khop=" + std::to_string(p.khop()));
  return cache_->partitions.emplace(key, std::move(p)).first->second;
}

const WeightMatrix& Experiment::weights(std::uint64_t seed) {
  auto it = cache_->weights.find(seed);
  if (it != cache_->weights.end()) return it->second;
  const fs::path path = cache_path("weights", split_key(seed));
  const auto& tg = train_graph(seed);
  WeightMatrix w = stage("weights", [&] {
    if (fs::exists(path)) {
      ++cache_->disk_hits["weights"];
      return WeightMatrix::load(path);
    }
    WeightMatrix fresh = build_weight_matrix(tg);
    fresh.save(path);
    return fresh;
  });
  log("[seed " + std::to_string(seed) + "] weights: " + std::to_string(w.size()) +
      " pairs");
  return cache_->weights.emplace(seed, std::move(w)).first->second;
}

const CoreSets& Experiment::core(std::uint64_t seed, int n) {
  const std::string key = hash_json({{"partition", partition_key(seed, n)},
                                     {"selection", selection_json(config_.selection)}});
  auto it = cache_->cores.find(key);
  if (it != cache_->cores.end()) return it->second;
  const fs::path path = cache_path("core", key);
  const auto& tg = train_graph(seed);
  const auto& part = partition(seed, n);
  const auto& w = weights(seed);
  CoreSets core = stage("select", [&] {
    if (fs::exists(path)) {
      ++cache_->disk_hits["select"];
      return load_core(path, tg.num_users());
    }
    CoreSets fresh(tg.num_users());
    std::size_t significant = 0;
    for (UserId u = 0; u < tg.num_users(); ++u) {
      auto sel = select_core_negatives(tg, part, w, u, config_.selection);
      if (sel.significant) ++significant;
      fresh[u] = std::move(sel.selected);
    }
    log("[seed " + std::to_string(seed) + "] select: " +
        std::to_string(significant) + "/" + std::to_string(tg.num_users()) +
        " users with a significant core");
    save_core(fresh, path);
    return fresh;
  });
  return cache_->cores.emplace(key, std::move(core)).first->second;
}

std::optional<EmbeddingModel> Experiment::trained_model(
    std::uint64_t seed, int n, const SamplerConfig& sampler, RunOutcome& out,
    std::string* key_out) {
  out.seed = seed;
  const auto& tg = train_graph(seed);
  SampleSets sets;
  const bool needs_sets = sampler.kind == SamplerKind::kNs4ar ||
                          sampler.kind == SamplerKind::kExposureArgmax;
  if (needs_sets) {
    const auto& part = partition(seed, n);
    const auto& w = weights(seed);
    static const CoreSets kNoCore;
    const CoreSets& c = sampler.regions.empty() ? core(seed, n) : kNoCore;
    sets = stage("sets", [&] { return build_sets(tg, part, w, c, sampler.regions); });
  }
  const NegativeSampler ns(sampler, tg, sets);
  bool any = false;
  for (UserId u = 0; u < tg.num_users() && !any; ++u) {
    any = tg.user_degree(u) > 0 && ns.can_sample(u);
  }
  if (!any) {
    out.skipped = true;
    out.note = "empty negative pool";
    return std::nullopt;
  }

  TrainConfig tc = config_.train;
  tc.seed = seed;
  tc.sampler = sampler;
  const std::string key = model_key(seed, n, sampler);
  if (key_out) *key_out = key;
  const fs::path dir = cache_path("model", key);
  if (fs::exists(dir / "model.ckpt") && fs::exists(dir / "stats.json")) {
    ++cache_->disk_hits["train"];
    return stage("train", [&] {
      const Json st = read_json_file(dir / "stats.json");
      out.stats.epoch_loss = st.at("epoch_loss").get<std::vector<double>>();
      out.stats.examples = st.at("examples").get<std::size_t>();
      out.stats.skipped = st.at("skipped").get<std::size_t>();
      out.stats.replacement_draws = st.at("replacement_draws").get<std::size_t>();
      return EmbeddingModel::load(dir / "model.ckpt");
    });
  }
  TrainResult r = stage("train", [&] { return train_model(tg, ns, tc); });
  out.stats = r.stats;
  fs::create_directories(dir);
  r.model.save(dir / "model.ckpt");
  std::ofstream(dir / "stats.json")
      << Json{{"epoch_loss", r.stats.epoch_loss},
              {"examples", r.stats.examples},
              {"skipped", r.stats.skipped},
              {"replacement_draws", r.stats.replacement_draws}}
             .dump(1)
      << '\n';
  if (!r.stats.epoch_loss.empty()) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "[seed %llu] train %s: loss %.4f -> %.4f, %zu examples, %zu "
                  "skipped",
                  static_cast<unsigned long long>(seed),
                  to_string(sampler.kind).c_str(), r.stats.epoch_loss.front(),
                  r.stats.epoch_loss.back(), r.stats.examples, r.stats.skipped);
    log(buf);
  }
  return std::move(r.model);
}

RunOutcome Experiment::train_and_evaluate(std::uint64_t seed, int n,
                                          const SamplerConfig& sampler) {
  RunOutcome out;
  auto model = trained_model(seed, n, sampler, out, nullptr);
  if (!model) return out;
  const auto& s = split(seed);
  const auto& tg = train_graph(seed);
  stage("eval", [&] {
    out.test = ns4ar::evaluate(*model, tg, s.test, config_.eval_k);
    if (!s.valid.empty()) out.valid = ns4ar::evaluate(*model, tg, s.valid, config_.eval_k);
  });
  return out;
}

// Stage subcommands ----------------------------------------------------------

void Experiment::record(const std::string& name) {
  artifacts_[name] = git_blob_sha1_file(config_.out / name);
}

void Experiment::write_common() {
  const std::uint64_t seed = config_.seed;
  const auto& g = graph(seed);
  if (config_.synthetic) {
    save_interactions(g, config_.out / "dataset.tsv");
    record("dataset.tsv");
  }
  g.ids().save(config_.out / "users.tsv", config_.out / "items.tsv");
  save_split(split(seed), config_.out / "split.tsv");
  record("split.tsv");
}

void Experiment::write_partition() {
  command("partition", [&] {
    write_common();
    partition(config_.seed, config_.n).save(config_.out / "partition.tsv");
    record("partition.tsv");
  });
}

void Experiment::write_weights() {
  command("weights", [&] {
    write_common();
    weights(config_.seed).save(config_.out / "weights.tsv");
    record("weights.tsv");
  });
}

void Experiment::write_core() {
  command("select", [&] {
    write_common();
    save_core(core(config_.seed, config_.n), config_.out / "core.tsv");
    record("core.tsv");
  });
}

void Experiment::train_stage() {
  write_common();
  const auto& sampler = config_.train.sampler;
  if (sampler.kind == SamplerKind::kNs4ar ||
      sampler.kind == SamplerKind::kExposureArgmax) {
    partition(config_.seed, config_.n).save(config_.out / "partition.tsv");
    record("partition.tsv");
    weights(config_.seed).save(config_.out / "weights.tsv");
    record("weights.tsv");
    if (sampler.regions.empty()) {
      save_core(core(config_.seed, config_.n), config_.out / "core.tsv");
      record("core.tsv");
    }
  }
  RunOutcome out;
  std::string key;
  auto model = trained_model(config_.seed, config_.n, sampler, out, &key);
  if (!model) throw StageError("train", "no user has a negative pool");
  model->save(config_.out / "model.ckpt");
  std::ofstream(config_.out / "model.key") << key << '\n';
  save_loss_curve(out.stats, config_.out / "loss.csv");
  record("model.ckpt");
  record("loss.csv");
}

void Experiment::train() {
  command("train", [&] { train_stage(); });
}

Metrics Experiment::evaluate_stage() {
  const fs::path ckpt = config_.out / "model.ckpt";
  if (!fs::exists(ckpt)) {
    throw MissingArtifactError(ckpt, "run the train subcommand first");
  }
  const std::string expected =
      model_key(config_.seed, config_.n, config_.train.sampler);
  std::string stored;
  std::ifstream(config_.out / "model.key") >> stored;
  if (stored != expected) {
    throw StageError("eval", "checkpoint " + ckpt.string() +
                                 " was trained with a different configuration");
  }
  EmbeddingModel model =
      stage("eval", [&] { return EmbeddingModel::load(ckpt); });
  const auto& s = split(config_.seed);
  const auto& tg = train_graph(config_.seed);
  std::vector<MetricsReport> reports(2);
  reports[0].label = "valid";
  reports[1].label = "test";
  Metrics test;
  stage("eval", [&] {
    if (!s.valid.empty()) {
      reports[0].runs.push_back(ns4ar::evaluate(model, tg, s.valid, config_.eval_k));
    } else {
      reports[0].skipped = true;
      reports[0].note = "empty validation set";
    }
    test = ns4ar::evaluate(model, tg, s.test, config_.eval_k);
    reports[1].runs.push_back(test);
  });
  for (auto& r : reports) {
    r.k = config_.eval_k;
    r.seeds = {config_.seed};
  }
  std::ofstream out(config_.out / "metrics.csv");
  write_reports_csv(out, reports);
  out.close();
  record("metrics.csv");
  if (log_) write_reports_table(*log_, reports);
  return test;
}

Metrics Experiment::evaluate() {
  Metrics m;
  command("eval", [&] { m = evaluate_stage(); });
  return m;
}

Metrics Experiment::run() {
  Metrics m;
  command("run", [&] {
    train_stage();
    m = evaluate_stage();
  });
  return m;
}

// Seed-grid experiments ------------------------------------------------------

MetricsReport Experiment::grid(const std::string& label, int n,
                               const SamplerConfig& sampler) {
  MetricsReport report;
  report.label = label;
  report.k = config_.eval_k;
  std::vector<std::string> skipped;
  for (std::uint64_t seed : config_.seeds) {
    RunOutcome o = train_and_evaluate(seed, n, sampler);
    if (o.skipped) {
      skipped.push_back(std::to_string(seed));
      continue;
    }
    report.seeds.push_back(seed);
    report.runs.push_back(o.test);
  }
  if (report.runs.empty()) {
    report.skipped = true;
    report.note = "empty negative pool for every seed";
  } else if (!skipped.empty()) {
    std::string s;
    for (const auto& t : skipped) s += (s.empty() ? "" : " ") + t;
    report.note = "empty pool for seeds " + s;
  }
  return report;
}

void Experiment::write_reports(const std::string& stem,
                               const std::vector<MetricsReport>& reports) {
  {
    std::ofstream csv(config_.out / (stem + ".csv"));
    write_reports_csv(csv, reports);
  }
  {
    std::ofstream txt(config_.out / (stem + ".txt"));
    write_reports_table(txt, reports);
  }
  record(stem + ".csv");
  if (log_) write_reports_table(*log_, reports);
}

std::vector<MetricsReport> Experiment::compare_samplers() {
  std::vector<MetricsReport> reports;
  command("compare", [&] {
    for (const auto& name : config_.samplers) {
      SamplerConfig s = config_.train.sampler;
      s.kind = parse_sampler_kind(name);
      s.regions.clear();
      reports.push_back(grid(to_string(s.kind), config_.n, s));
    }
    write_reports("compare", reports);
  });
  return reports;
}

std::vector<MetricsReport> Experiment::sweep_n(const std::vector<int>& n_values) {
  std::vector<MetricsReport> reports;
  command("sweep-n", [&] {
    if (n_values.empty()) throw ConfigError("sweep-n needs at least one n");
    std::vector<int> sorted = n_values;
    std::sort(sorted.begin(), sorted.end());
    SamplerConfig s = config_.train.sampler;
    s.kind = SamplerKind::kNs4ar;
    s.regions.clear();
    for (int n : sorted) {
      if (n < 1) throw ConfigError("sweep-n values must be >= 1");
      reports.push_back(grid("n=" + std::to_string(n), n, s));
    }
    write_reports("sweep_n", reports);
  });
  return reports;
}

std::vector<MetricsReport> Experiment::region_ablation(int n) {
  std::vector<MetricsReport> reports;
  command("ablate", [&] {
    if (n < 2) throw ConfigError("ablation needs n >= 2");
    SamplerConfig s = config_.train.sampler;
    s.kind = SamplerKind::kNs4ar;
    for (int r = 1; r <= n; ++r) {
      s.regions = {r};
      reports.push_back(grid("region " + std::to_string(r), n, s));
    }
    s.regions = {n - 1, n};
    reports.push_back(grid("regions " + std::to_string(n - 1) + "+" +
                               std::to_string(n),
                           n, s));
    write_reports("ablation", reports);
  });
  return reports;
}

// Bookkeeping ----------------------------------------------------------------

template <class F>
void Experiment::command(const std::string& name, F&& f) {
  const fs::path failed = config_.out / "FAILED";
  fs::remove(failed);
  artifacts_.clear();
  try {
    f();
  } catch (const std::exception& e) {
    std::ofstream(failed) << name << ": " << e.what()
                          << "\nartifacts in this directory may be partial\n";
    throw;
  }
  write_manifest(name);
}

void Experiment::write_manifest(const std::string& command) {
  Json inputs;
  if (config_.synthetic) {
    inputs["dataset"] = {{"source", "synthetic"}};
    if (artifacts_.count("dataset.tsv")) {
      inputs["dataset"]["sha1"] = artifacts_.at("dataset.tsv");
    }
  } else {
    inputs["dataset"] = {{"source", config_.dataset.string()},
                         {"sha1", git_blob_sha1_file(config_.dataset)}};
  }
  Json manifest = {{"manifest_version", 1},
                   {"command", command},
                   {"config", to_json(config_)},
                   {"inputs", inputs},
                   {"artifacts", artifacts_}};
  std::ofstream(config_.out / "manifest.json") << manifest.dump(2) << '\n';
}

void check_manifest_inputs(const Json& doc, const ExperimentConfig& config) {
  if (!doc.contains("manifest_version") || config.synthetic) return;
  const auto& ds = doc.at("inputs").at("dataset");
  if (!ds.contains("sha1")) return;
  const std::string now = git_blob_sha1_file(config.dataset);
  if (now != ds.at("sha1").get<std::string>()) {
    throw ConfigError("dataset " + config.dataset.string() +
                      " differs from the manifest (sha1 " +
                      ds.at("sha1").get<std::string>() + ", now " + now + ")");
  }
}

}  // namespace ns4ar
