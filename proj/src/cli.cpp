#include "dhan/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dhan/checkpoint.hpp"
#include "dhan/errors.hpp"
#include "dhan/rng.hpp"

namespace dhan {

RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
  if (const char* env = std::getenv("DHAN_SEED"); env != nullptr && *env != '\0') {
    set_config_value(c, "seed", env);
  }
  for (const std::string& o : overrides) apply_override(c, o);
  validate(c);
  return c;
}

void cmd_gen_synthetic(const SyntheticConfig& config, const std::string& out_dir, std::ostream& out) {
  const SyntheticCorpus corpus = gen_synthetic(config);
  write_synthetic(corpus, out_dir);
  out << "wrote " << corpus.interactions.size() << " interactions and " << corpus.news.size() << " news to "
      << out_dir << '\n';
}

TrainResult cmd_train(const RunConfig& config, std::ostream& out) {
  validate(config);
  const Dataset ds = load_dataset(config);
  out << "users " << ds.user_ids.size() << ", news " << ds.news.size() << ", train " << ds.train.size()
      << ", test " << ds.test.size() << '\n';
  TrainOptions opts;
  opts.on_epoch = [&](const EpochRecord& r) {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "epoch %3zu  loss %.6f  HR@10 %.4f  NDCG@10 %.4f", r.epoch, r.loss, r.test.hr10,
                  r.test.ndcg10);
    out << buf;
    if (r.dns_draws > 0) {
      std::snprintf(buf, sizeof(buf), "  dns %.4f / uniform %.4f", r.dns_score_mean, r.uniform_score_mean);
      out << buf;
    }
    out << '\n' << std::flush;
  };
  TrainResult result = train(config, ds, opts);
  out << "best epoch " << result.best_epoch << " by " << config.best_by << '\n' << format_metrics(result.best);
  out << "checkpoint " << result.checkpoint_path << '\n';
  return result;
}

namespace {

struct LoadedRun {
  RunConfig config;
  Dataset dataset;
  std::unique_ptr<DhanModel> model;
};

LoadedRun load_run(const std::string& checkpoint, const std::vector<std::string>& overrides) {
  Checkpoint ckpt = load_checkpoint(checkpoint);
  LoadedRun run;
  run.config = ckpt.config;
  for (const std::string& o : overrides) apply_override(run.config, o);
  run.dataset = load_dataset(run.config);
  run.model = std::make_unique<DhanModel>(model_config(run.config, run.dataset), run.config.seed);
  try {
    run.model->params().assign_values(ckpt.params);
  } catch (const ShapeError& e) {
    throw DataError(std::string("checkpoint does not match the dataset or config: ") + e.what());
  }
  return run;
}

const std::vector<Instance>& split_of(const Dataset& ds, const std::string& split) {
  if (split == "test") return ds.test;
  if (split == "train") return ds.train;
  throw ConfigError("split must be test or train, got '" + split + "'");
}

}  // namespace

MetricsTable cmd_evaluate(const EvaluateRequest& request, std::ostream& out) {
  LoadedRun run = load_run(request.checkpoint, request.overrides);
  EvalOptions eo;
  eo.n_negatives = run.config.eval_negatives;
  eo.seed = run.config.eval_seed;
  const MetricsTable m = evaluate(*run.model, split_of(run.dataset, request.split), run.dataset, eo);
  out << metrics_json(m).dump() << '\n' << format_metrics(m);
  return m;
}

std::string AblationVariant::name() const {
  return time_mode_name(time_mode) + ":" + layers_name(layers) + ":" + (dns ? "dns" : "uniform");
}

AblationVariant parse_variant(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ':')) parts.push_back(part);
  if (parts.size() != 3) throw ConfigError("variant must be time_mode:layers:dns|uniform, got '" + text + "'");
  AblationVariant v;
  v.time_mode = parse_time_mode(parts[0]);
  v.layers = parse_layers(parts[1]);
  if (parts[2] != "dns" && parts[2] != "uniform") throw ConfigError("variant sampler must be dns or uniform");
  v.dns = parts[2] == "dns";
  return v;
}

std::vector<AblationVariant> preset_grid(const std::string& name) {
  const LayerSet all;
  if (name == "time") {
    return {{TimeMode::kBoth, all, true},
            {TimeMode::kRelative, all, true},
            {TimeMode::kAbsolute, all, true},
            {TimeMode::kNone, all, true}};
  }
  if (name == "layers") {
    return {{TimeMode::kBoth, parse_layers("S"), true},
            {TimeMode::kBoth, parse_layers("E"), true},
            {TimeMode::kBoth, parse_layers("N"), true},
            {TimeMode::kBoth, all, true}};
  }
  if (name == "dns") return {{TimeMode::kBoth, all, true}, {TimeMode::kBoth, all, false}};
  throw ConfigError("unknown grid '" + name + "' (expected time, layers or dns)");
}

std::vector<AblationRow> cmd_ablate(const RunConfig& base, const std::vector<AblationVariant>& grid,
                                    std::ostream& out) {
  if (grid.empty()) throw ConfigError("empty ablation grid");
  validate(base);
  const Dataset ds = load_dataset(base);
  std::vector<AblationRow> rows;
  for (const AblationVariant& v : grid) {
    RunConfig c = base;
    c.time_mode = v.time_mode;
    c.layers = v.layers;
    c.dns_enabled = v.dns;
    std::string dir = v.name();
    for (char& ch : dir) {
      if (ch == ':' || ch == '+') ch = '_';
    }
    c.out_dir = (std::filesystem::path(base.out_dir) / dir).string();
    out << "== " << v.name() << '\n' << std::flush;
    TrainResult r = train(c, ds);
    rows.push_back({v, r.best_epoch, r.best, r.history.back().test});
  }
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-28s %5s %8s %8s %8s %8s %8s %8s\n", "variant", "best", "HR@1", "HR@5", "HR@10",
                "NDCG@1", "NDCG@5", "NDCG@10");
  out << buf;
  nlohmann::json table = nlohmann::json::array();
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-28s %5zu %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f\n", r.variant.name().c_str(),
                  r.best_epoch, r.best.hr1, r.best.hr5, r.best.hr10, r.best.ndcg1, r.best.ndcg5, r.best.ndcg10);
    out << buf;
    table.push_back({{"variant", r.variant.name()},
                     {"best_epoch", r.best_epoch},
                     {"best", metrics_json(r.best)},
                     {"final", metrics_json(r.final)}});
  }
  std::filesystem::create_directories(base.out_dir);
  std::ofstream f(std::filesystem::path(base.out_dir) / "ablation.json", std::ios::trunc);
  f << table.dump(2) << '\n';
  return rows;
}

std::size_t select_instance(const std::string& selector, std::size_t count) {
  if (count == 0) throw DataError("no instances to select from");
  const std::string range = "valid range is 0.." + std::to_string(count - 1) + " or random:<seed>";
  if (selector.rfind("random:", 0) == 0) {
    const std::string seed_text = selector.substr(7);
    std::uint64_t seed = 0;
    try {
      std::size_t used = 0;
      seed = std::stoull(seed_text, &used);
      if (used != seed_text.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("bad instance selector '" + selector + "'; " + range);
    }
    Rng rng(mix_seed(seed));
    return rng.below(count);
  }
  std::size_t index = 0;
  try {
    std::size_t used = 0;
    if (selector.empty() || selector[0] == '-') throw std::invalid_argument("negative");
    index = std::stoull(selector, &used);
    if (used != selector.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ConfigError("bad instance selector '" + selector + "'; " + range);
  }
  if (index >= count) throw ConfigError("instance " + selector + " out of range; " + range);
  return index;
}

std::vector<std::string> cmd_export_attention(const ExportRequest& request, std::ostream& out) {
  LoadedRun run = load_run(request.checkpoint, request.overrides);
  const std::vector<Instance>& instances = split_of(run.dataset, request.split);
  const std::size_t idx = select_instance(request.selector, instances.size());
  const std::vector<std::string> files = export_attention(*run.model, instances[idx], run.dataset, request.out_dir);
  out << "instance " << idx << " (" << request.split << "), user " << run.dataset.user_ids[instances[idx].user]
      << '\n';
  for (const std::string& f : files) out << "  " << f << '\n';
  return files;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Dynamic hierarchical attention news recommender"};
  app.require_subcommand(1);

  SyntheticConfig syn;
  std::string syn_out = "data/synthetic";
  CLI::App* gen = app.add_subcommand("gen-synthetic", "Write a synthetic corpus");
  gen->add_option("--out", syn_out, "Output directory");
  gen->add_option("--users", syn.users);
  gen->add_option("--news", syn.news);
  gen->add_option("--per-user", syn.interactions_per_user, "Interactions per user");
  gen->add_option("--vocab", syn.vocab);
  gen->add_option("--topics", syn.topics);
  gen->add_option("--alpha", syn.temporal_signal, "Temporal signal strength in [0, 1]");
  gen->add_option("--seed", syn.seed);

  std::string config_path;
  std::vector<std::string> overrides;
  CLI::App* tr = app.add_subcommand("train", "Train and keep the best checkpoint");
  tr->add_option("--config", config_path, "key = value config file");
  tr->add_option("--set", overrides, "key=value override (repeatable)");

  EvaluateRequest ev;
  CLI::App* evc = app.add_subcommand("evaluate", "Evaluate a checkpoint");
  evc->add_option("--checkpoint", ev.checkpoint)->required();
  evc->add_option("--split", ev.split, "test or train");
  evc->add_option("--set", ev.overrides, "key=value override (repeatable)");

  std::vector<std::string> variants;
  std::string grid_name;
  CLI::App* ab = app.add_subcommand("ablate", "Train one model per variant");
  ab->add_option("--config", config_path, "key = value config file");
  ab->add_option("--set", overrides, "key=value override (repeatable)");
  ab->add_option("--grid", grid_name, "Preset grid: time, layers, dns");
  ab->add_option("--variant", variants, "time_mode:layers:dns|uniform (repeatable)");

  ExportRequest ex;
  CLI::App* exc = app.add_subcommand("export-attention", "Write attention matrices as CSV");
  exc->add_option("--checkpoint", ex.checkpoint)->required();
  exc->add_option("--instance", ex.selector, "Index or random:<seed>");
  exc->add_option("--out", ex.out_dir, "Output directory");
  exc->add_option("--split", ex.split, "test or train");
  exc->add_option("--set", ex.overrides, "key=value override (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (gen->parsed()) {
      cmd_gen_synthetic(syn, syn_out, std::cout);
    } else if (tr->parsed()) {
      cmd_train(resolve_config(config_path, overrides), std::cout);
    } else if (evc->parsed()) {
      cmd_evaluate(ev, std::cout);
    } else if (ab->parsed()) {
      std::vector<AblationVariant> grid;
      if (!grid_name.empty()) grid = preset_grid(grid_name);
      for (const std::string& v : variants) grid.push_back(parse_variant(v));
      cmd_ablate(resolve_config(config_path, overrides), grid, std::cout);
    } else if (exc->parsed()) {
      cmd_export_attention(ex, std::cout);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace dhan
