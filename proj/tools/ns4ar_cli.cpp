// Command-line driver for the ns4ar pipeline.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ns4ar/pipeline.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> n;
  std::optional<int> khop;
  std::optional<std::size_t> k;
  std::optional<double> gamma;
  std::optional<std::string> sampler;
  std::optional<std::string> out;
  std::string seeds;
  std::vector<std::string> set;
  bool quiet = false;
};

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream in(text);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (tok.empty()) continue;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(tok, &used);
      if (used != tok.size() || v < 0) throw std::invalid_argument(tok);
      out.push_back(static_cast<T>(v));
    } catch (const std::exception&) {
      throw ns4ar::ConfigError(std::string("bad ") + what + " value '" + tok + "'");
    }
  }
  return out;
}

ns4ar::Json resolve_config(const Flags& f, ns4ar::Json& doc) {
  doc = f.config.empty() ? ns4ar::Json::object() : ns4ar::read_json_file(f.config);
  ns4ar::Json cfg = doc.contains("manifest_version") ? doc.at("config") : doc;
  for (const auto& s : f.set) ns4ar::apply_override(cfg, s);
  if (f.seed) ns4ar::apply_override(cfg, "seed=" + std::to_string(*f.seed));
  if (f.n) ns4ar::apply_override(cfg, "partition.n=" + std::to_string(*f.n));
  if (f.khop) ns4ar::apply_override(cfg, "partition.khop=" + std::to_string(*f.khop));
  if (f.k) ns4ar::apply_override(cfg, "sampler.k=" + std::to_string(*f.k));
  if (f.gamma) {
    std::ostringstream v;
    v.precision(17);
    v << *f.gamma;
    ns4ar::apply_override(cfg, "train.gamma=" + v.str());
  }
  if (f.sampler) cfg["sampler"]["name"] = *f.sampler;
  if (f.out) cfg["out"] = *f.out;
  if (!f.seeds.empty()) {
    cfg["seeds"] = parse_list<std::uint64_t>(f.seeds, "--seeds");
  }
  return cfg;
}

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON config or manifest.json");
  app->add_option("--seed", f.seed, "seed for data generation, split and training");
  app->add_option("--n", f.n, "region count (0 = automatic)");
  app->add_option("--khop", f.khop, "BFS depth in item shells");
  app->add_option("--k", f.k, "negatives per positive");
  app->add_option("--gamma", f.gamma, "hinge margin");
  app->add_option("--sampler", f.sampler,
                  "ns4ar | uniform_rns | dns_hard | exposure_argmax");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--seeds", f.seeds, "comma-separated seed grid");
  app->add_option("--set", f.set, "override any config key: section.key=value");
  app->add_flag("-q,--quiet", f.quiet, "no progress output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ns4ar: region-partitioned negative sampling for graph recommenders"};
  app.require_subcommand(1);
  Flags f;
  std::string sweep_values;

  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"generate", "write the synthetic dataset"},
      {"partition", "BFS shells and region assignment"},
      {"weights", "pairwise item similarity weights"},
      {"select", "stagewise core-negative selection"},
      {"train", "train the recommender"},
      {"eval", "evaluate the trained checkpoint"},
      {"run", "train then evaluate"},
      {"compare", "sampler comparison over the seed grid"},
      {"ablate", "single-region sampling ablation over the seed grid"},
      {"sweep-n", "region-count sweep over the seed grid"},
  };
  std::vector<CLI::App*> apps;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, f);
    apps.push_back(sub);
  }
  apps.back()->add_option("values", sweep_values, "comma-separated n values");

  CLI11_PARSE(app, argc, argv);

  try {
    ns4ar::Json doc;
    const ns4ar::Json cfg_json = resolve_config(f, doc);
    ns4ar::ExperimentConfig cfg = ns4ar::parse_config(cfg_json);
    ns4ar::check_manifest_inputs(doc, cfg);
    std::ostream* log = f.quiet ? nullptr : &std::cerr;
    const std::string cmd = app.get_subcommands().front()->get_name();

    if (cmd == "generate") {
      if (!cfg.synthetic) throw ns4ar::ConfigError("generate needs data.synthetic");
      std::filesystem::create_directories(cfg.out);
      const std::uint64_t seed = cfg.synthetic->seed.value_or(cfg.seed);
      const auto g = ns4ar::generate_synthetic(*cfg.synthetic, seed);
      ns4ar::save_interactions(g, cfg.out / "dataset.tsv");
      std::cout << (cfg.out / "dataset.tsv").string() << '\n';
      return 0;
    }

    ns4ar::Experiment exp(cfg, log);
    if (cmd == "partition") {
      exp.write_partition();
    } else if (cmd == "weights") {
      exp.write_weights();
    } else if (cmd == "select") {
      exp.write_core();
    } else if (cmd == "train") {
      exp.train();
    } else if (cmd == "eval") {
      exp.evaluate();
    } else if (cmd == "run") {
      exp.run();
    } else if (cmd == "compare") {
      exp.compare_samplers();
    } else if (cmd == "ablate") {
      exp.region_ablation(f.n && *f.n > 0 ? *f.n : cfg.ablate_n);
    } else if (cmd == "sweep-n") {
      std::vector<int> values = sweep_values.empty()
                                    ? cfg.sweep_n
                                    : parse_list<int>(sweep_values, "sweep-n");
      exp.sweep_n(values);
    }
    return 0;
  } catch (const ns4ar::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
