#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "dhan/checkpoint.hpp"
#include "dhan/cli.hpp"
#include "dhan/config.hpp"
#include "dhan/errors.hpp"
#include "dhan/eval.hpp"
#include "dhan/trainer.hpp"
#include "fixtures.hpp"

namespace dhan {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("dhan_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig tiny_run(const fs::path& out) {
  RunConfig c;
  c.d = 8;
  c.d_prime = 16;
  c.L = 3;
  c.K = 4;
  c.batch_size = 16;
  c.micro_batch = 8;
  c.epochs = 2;
  c.dns_pool_size = 8;
  c.dns_k = 2;
  c.eval_negatives = 20;
  c.out_dir = out.string();
  return c;
}

// ---- metrics

TEST(MetricsTest, Examples) {
  EXPECT_EQ(hr_at_n(1, 1), 1);
  EXPECT_EQ(hr_at_n(2, 1), 0);
  EXPECT_EQ(hr_at_n(10, 10), 1);
  EXPECT_DOUBLE_EQ(ndcg_at_n(1, 10), 1.0);
  EXPECT_DOUBLE_EQ(ndcg_at_n(3, 5), 0.5);
  EXPECT_DOUBLE_EQ(ndcg_at_n(6, 5), 0.0);
  EXPECT_THROW(hr_at_n(0, 1), std::invalid_argument);
  EXPECT_THROW(ndcg_at_n(1, 0), std::invalid_argument);
}

TEST(MetricsTest, RankTiesGoToLowerIndex) {
  std::vector<double> s{0.5, 0.9, 0.5, 0.5};
  EXPECT_EQ(rank_of_positive(s, 1), 1u);
  EXPECT_EQ(rank_of_positive(s, 0), 2u);
  EXPECT_EQ(rank_of_positive(s, 3), 4u);
}

TEST(MetricsTest, MatchesSortOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(100);
    for (double& v : s) v = static_cast<double>(rng.below(30));
    const std::size_t pos = rng.below(100);
    std::vector<std::size_t> order(100);
    for (std::size_t i = 0; i < 100; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    const std::size_t rank = std::find(order.begin(), order.end(), pos) - order.begin() + 1;
    EXPECT_EQ(rank_of_positive(s, pos), rank);
  }
}

TEST(MetricsTest, AccumulatorIdentities) {
  MetricsAccumulator acc;
  for (std::size_t r : {1, 3, 7, 20, 1, 5}) acc.add(r);
  MetricsTable m = acc.table();
  EXPECT_EQ(m.instances, 6u);
  EXPECT_DOUBLE_EQ(m.hr1, 2.0 / 6);
  EXPECT_EQ(m.hr1, m.ndcg1);
  EXPECT_DOUBLE_EQ(m.hr5, 4.0 / 6);
  EXPECT_DOUBLE_EQ(m.hr10, 5.0 / 6);
  EXPECT_NEAR(m.ndcg5, (2 + 0.5 + 1 / std::log2(6.0)) / 6, 1e-15);
  EXPECT_EQ(m.get("hr@5"), m.hr5);
  EXPECT_EQ(m.get("ndcg@10"), m.ndcg10);
  EXPECT_ANY_THROW(m.get("mrr"));
  EXPECT_EQ(metrics_from_json(metrics_json(m)), m);
}

// ---- evaluation

TEST(EvaluateTest, EvalListExcludesClicks) {
  Dataset ds = testing::tiny_dataset();
  const Instance& inst = ds.test[0];
  EvalList a = make_eval_list(inst, ds, 20, 5);
  EXPECT_EQ(a.candidates.size(), 21u);
  EXPECT_EQ(a.candidates[a.positive], inst.candidate);
  const auto& clicked = ds.user_clicks[inst.user];
  for (std::size_t i = 0; i < a.candidates.size(); ++i) {
    if (i == a.positive) continue;
    EXPECT_FALSE(std::binary_search(clicked.begin(), clicked.end(), a.candidates[i]));
    EXPECT_NE(a.candidates[i], inst.candidate);
  }
  EvalList b = make_eval_list(inst, ds, 20, 5);
  EXPECT_EQ(a.candidates, b.candidates);
  EXPECT_EQ(a.positive, b.positive);
  EXPECT_THROW(make_eval_list(inst, ds, 99, 5), DataError);
}

TEST(EvaluateTest, OracleAndAdversary) {
  Dataset ds = testing::tiny_dataset();
  auto by_truth = [&](double hit) {
    return [&ds, hit](const std::vector<ScoreGroup>& groups) {
      std::vector<double> out;
      for (const ScoreGroup& g : groups) {
        for (std::size_t c : g.candidates) out.push_back(c == g.instance->candidate ? hit : 0.0);
      }
      return out;
    };
  };
  EvalOptions opts;
  opts.n_negatives = 20;
  MetricsTable best = evaluate(by_truth(1e300), ds.test, ds, opts);
  EXPECT_EQ(best.hr1, 1.0);
  EXPECT_EQ(best.ndcg10, 1.0);
  MetricsTable worst = evaluate(by_truth(-1e300), ds.test, ds, opts);
  EXPECT_EQ(worst.hr10, 0.0);
  EXPECT_EQ(worst.ndcg10, 0.0);
  EXPECT_EQ(best.instances, ds.test.size());
}

TEST(EvaluateTest, ModelEvaluationIsDeterministic) {
  Dataset ds = testing::tiny_dataset();
  DhanModel model(testing::config_for(ds, 8, 4), 1);
  EvalOptions opts;
  opts.n_negatives = 20;
  opts.seed = 3;
  MetricsTable a = evaluate(model, ds.test, ds, opts);
  MetricsTable b = evaluate(model, ds.test, ds, opts);
  EXPECT_EQ(a, b);
  EXPECT_LE(a.hr1, a.hr5);
  EXPECT_LE(a.hr5, a.hr10);
  EXPECT_EQ(a.hr1, a.ndcg1);
  opts.batch = 4;
  MetricsTable c = evaluate(model, ds.test, ds, opts);
  EXPECT_NEAR(c.ndcg10, a.ndcg10, 1e-12);
}

TEST(ExportTest, FilesHeadersRowsAndDeterminism) {
  Dataset ds = testing::tiny_dataset();
  DhanModel model(testing::config_for(ds, 8, 4), 2);
  const fs::path a = fresh_dir("export_a");
  const fs::path b = fresh_dir("export_b");
  std::vector<std::string> files = export_attention(model, ds.test[0], ds, a.string());
  export_attention(model, ds.test[0], ds, b.string());
  ASSERT_EQ(files.size(), 4u);
  for (const std::string& f : files) {
    const fs::path name = fs::path(f).filename();
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
    std::istringstream in(slurp(a / name));
    std::string line;
    std::getline(in, line);
    if (name == "element.csv") {
      EXPECT_EQ(line, "time,person,organization,location,keywords");
    }
    if (name == "sentence.csv") {
      EXPECT_EQ(line, "u,s1,s2,s3,s4,candidate");
    }
    if (name == "sequence.csv") {
      EXPECT_EQ(line, "h1,h2,h3");
    }
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      double total = 0;
      std::stringstream cells(line);
      std::string cell;
      while (std::getline(cells, cell, ',')) total += std::stod(cell);
      EXPECT_NEAR(total, 1.0, 1e-6) << name << " row " << rows;
      ++rows;
    }
    EXPECT_GT(rows, 0u);
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

// ---- config

TEST(ConfigTest, DefaultsAndRoundTrip) {
  RunConfig c;
  EXPECT_EQ(c.d, 64u);
  EXPECT_EQ(c.d_prime, 256u);
  EXPECT_EQ(c.L, 10u);
  EXPECT_EQ(c.K, 20u);
  EXPECT_EQ(c.batch_size, 256u);
  EXPECT_EQ(c.dns_pool_size, 128u);
  EXPECT_EQ(c.dns_k, 4u);
  EXPECT_EQ(parse_config(to_text(c)), c);

  c.lr = 0.1 + 0.2;
  c.time_mode = TimeMode::kRelative;
  c.heads = 4;
  c.dns_enabled = false;
  c.out_dir = "somewhere else";
  EXPECT_EQ(parse_config(to_text(c)), c);
}

TEST(ConfigTest, ErrorsAndOverrides) {
  try {
    parse_config("d = 8\n# fine\nbogus = 1\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos) << e.what();
  }
  RunConfig c;
  EXPECT_THROW(apply_override(c, "nokey"), ConfigError);
  EXPECT_THROW(apply_override(c, "d=abc"), ConfigError);
  apply_override(c, "time_mode=none");
  EXPECT_EQ(c.time_mode, TimeMode::kNone);
  c.heads = 3;
  EXPECT_THROW(validate(c), ConfigError);
  c.heads = 8;
  validate(c);
  c.best_by = "mrr";
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(ConfigTest, SeedFromEnvironmentThenOverrides) {
  setenv("DHAN_SEED", "77", 1);
  EXPECT_EQ(resolve_config("", {}).seed, 77u);
  EXPECT_EQ(resolve_config("", {"seed=5"}).seed, 5u);
  unsetenv("DHAN_SEED");
  EXPECT_EQ(resolve_config("", {}).seed, 1u);
}

// ---- checkpoint

TEST(CheckpointTest, BitwiseRoundTrip) {
  Dataset ds = testing::tiny_dataset();
  DhanModel model(testing::config_for(ds, 8, 4), 4);
  Checkpoint ck;
  ck.config = tiny_run("/tmp/x");
  ck.epoch = 3;
  EpochRecord r;
  r.epoch = 3;
  r.loss = 0.1 + 0.2;
  r.test.hr10 = 1.0 / 3;
  r.dns_draws = 9;
  ck.history = {EpochRecord{}, r};
  ck.params = snapshot(model.params());
  const std::string bytes = serialize_checkpoint(ck);
  Checkpoint back = deserialize_checkpoint(bytes);
  EXPECT_EQ(back.config, ck.config);
  EXPECT_EQ(back.epoch, 3u);
  EXPECT_EQ(back.history, ck.history);
  EXPECT_EQ(serialize_checkpoint(back), bytes);

  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), DataError);
  EXPECT_THROW(deserialize_checkpoint("garbage"), DataError);
  EXPECT_THROW(load_checkpoint("/nonexistent/best.ckpt"), DataError);
}

// ---- trainer

TEST(TrainerTest, LossDecreasesOnTinyCorpus) {
  Dataset ds = testing::tiny_dataset();
  RunConfig c = tiny_run("/tmp/unused");
  c.dropout = 0.0;
  c.batch_size = 1000;
  Trainer t(c, ds);
  const double first = t.train_epoch().loss;
  double last = first;
  for (int i = 0; i < 19; ++i) last = t.train_epoch().loss;
  EXPECT_GT(first, 0.0);
  EXPECT_LT(last, first);
  EXPECT_EQ(t.steps(), 20u);
}

TEST(TrainerTest, NegativesAvoidClicksAndDnsIsHarder) {
  Dataset ds = testing::tiny_dataset();
  RunConfig c = tiny_run("/tmp/unused");
  Trainer t(c, ds);
  EpochRecord rec = t.train_epoch();
  EXPECT_GT(rec.dns_score_mean, rec.uniform_score_mean);
  EXPECT_EQ(rec.dns_draws, ds.train.size());

  c.dns_enabled = false;
  Trainer u(c, ds);
  for (const Instance& inst : ds.train) {
    TrainingGroup g = u.sample_negatives(inst, 9, Tensor());
    ASSERT_EQ(g.candidates.size(), 1 + c.dns_k);
    EXPECT_EQ(g.candidates[0], inst.candidate);
    const auto& clicked = ds.user_clicks[inst.user];
    for (std::size_t i = 1; i < g.candidates.size(); ++i) {
      EXPECT_FALSE(std::binary_search(clicked.begin(), clicked.end(), g.candidates[i]));
    }
  }
}

TEST(TrainerTest, ZeroEpochsStillEvaluatesAndWrites) {
  Dataset ds = testing::tiny_dataset();
  const fs::path out = fresh_dir("train_zero");
  RunConfig c = tiny_run(out);
  c.epochs = 0;
  TrainResult r = train(c, ds);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.history[0].test.instances, ds.test.size());
  EXPECT_TRUE(fs::exists(out / "best.ckpt"));
  EXPECT_TRUE(fs::exists(out / "metrics.jsonl"));
  EXPECT_TRUE(fs::exists(out / "metrics.json"));
  Checkpoint ck = load_checkpoint(r.checkpoint_path);
  EXPECT_EQ(ck.epoch, 0u);
  fs::remove_all(out);
}

// ---- cli

TEST(CliTest, SelectInstance) {
  EXPECT_EQ(select_instance("3", 5), 3u);
  EXPECT_EQ(select_instance("random:7", 5), select_instance("random:7", 5));
  EXPECT_LT(select_instance("random:123", 5), 5u);
  for (const char* bad : {"5", "-1", "x", "2x", "random:", "random:abc"}) {
    try {
      select_instance(bad, 5);
      FAIL() << bad;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("0..4"), std::string::npos) << e.what();
    }
  }
}

TEST(CliTest, VariantsAndGrids) {
  AblationVariant v = parse_variant("none:S+E+N:uniform");
  EXPECT_EQ(v.time_mode, TimeMode::kNone);
  EXPECT_FALSE(v.dns);
  EXPECT_EQ(parse_variant(v.name()).name(), v.name());
  EXPECT_THROW(parse_variant("both:S"), ConfigError);
  EXPECT_EQ(preset_grid("time").size(), 4u);
  EXPECT_EQ(preset_grid("layers").size(), 4u);
  EXPECT_EQ(preset_grid("dns").size(), 2u);
  EXPECT_THROW(preset_grid("nope"), ConfigError);
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "dhan");
  std::vector<char*> argv;
  for (std::string& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

TEST(CliTest, EndToEndAndExitCodes) {
  const fs::path root = fresh_dir("cli");
  const std::string data = (root / "data").string();
  ASSERT_EQ(run({"gen-synthetic", "--out", data, "--users", "6", "--news", "40", "--per-user", "16",
                 "--vocab", "120", "--topics", "4"}),
            kExitOk);
  std::vector<std::string> sets = {"--set", "data.interactions=" + data + "/interactions.tsv",
                                   "--set", "data.news=" + data + "/news.jsonl",
                                   "--set", "d=8",
                                   "--set", "d_prime=16",
                                   "--set", "L=3",
                                   "--set", "K=4",
                                   "--set", "batch_size=16",
                                   "--set", "dns.pool_size=8",
                                   "--set", "dns.k=2",
                                   "--set", "eval.negatives=20",
                                   "--set", "epochs=1"};
  auto with = [&](std::vector<std::string> head, std::vector<std::string> tail = {}) {
    head.insert(head.end(), sets.begin(), sets.end());
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
  };
  const std::string run_dir = (root / "run").string();
  ASSERT_EQ(run(with({"train"}, {"--set", "out_dir=" + run_dir})), kExitOk);
  const std::string ckpt = run_dir + "/best.ckpt";
  EXPECT_EQ(run({"evaluate", "--checkpoint", ckpt}), kExitOk);
  EXPECT_EQ(run({"export-attention", "--checkpoint", ckpt, "--instance", "random:3", "--out",
                 (root / "att").string()}),
            kExitOk);
  EXPECT_TRUE(fs::exists(root / "att" / "element.csv"));

  EXPECT_EQ(run({"export-attention", "--checkpoint", ckpt, "--instance", "999"}), kExitConfig);
  EXPECT_EQ(run(with({"train"}, {"--set", "heads=3"})), kExitConfig);
  EXPECT_EQ(run({"train", "--set", "data.interactions=/nonexistent.tsv", "--set", "data.news=/nonexistent.jsonl"}),
            kExitData);
  EXPECT_EQ(run({"evaluate", "--checkpoint", (root / "missing.ckpt").string()}), kExitData);
  fs::remove_all(root);
}

}  // namespace
}  // namespace dhan
