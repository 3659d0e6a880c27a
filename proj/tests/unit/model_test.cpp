#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dhan/errors.hpp"
#include "dhan/grad_check.hpp"
#include "dhan/model.hpp"
#include "dhan/ops.hpp"
#include "fixtures.hpp"

namespace dhan {
namespace {

using testing::config_for;
using testing::tiny_dataset;

Instance with_candidate(Instance inst, std::size_t cand) {
  inst.candidate = cand;
  return inst;
}

struct Variant {
  TimeMode mode;
  const char* layers;
  std::size_t heads;
};

class BatchedVsLiteral : public ::testing::TestWithParam<Variant> {};

TEST_P(BatchedVsLiteral, SameLogits) {
  const Variant v = GetParam();
  Dataset ds = tiny_dataset(4);
  ModelConfig cfg = config_for(ds, 8, 4);
  cfg.time_mode = v.mode;
  cfg.layers = parse_layers(v.layers);
  cfg.heads = v.heads;
  DhanModel model(cfg, 11);

  std::vector<ScoreGroup> groups;
  for (std::size_t i = 0; i < 3; ++i) groups.push_back({&ds.train[i * 5], {ds.train[i * 5].candidate, 1, 7, 30}});
  groups.push_back({&ds.test[0], {ds.test[0].candidate}});
  Tensor batched = model.score(groups, ds.news);

  std::size_t n = 0;
  double worst = 0;
  for (const ScoreGroup& g : groups) {
    for (std::size_t c : g.candidates) {
      const double literal = model.forward(with_candidate(*g.instance, c), ds.news).item();
      worst = std::max(worst, std::abs(literal - batched[n++]));
    }
  }
  EXPECT_EQ(n, batched.numel());
  EXPECT_LT(worst, 1e-9);
}

INSTANTIATE_TEST_SUITE_P(Variants, BatchedVsLiteral,
                         ::testing::Values(Variant{TimeMode::kBoth, "S+E+N", 1},
                                           Variant{TimeMode::kRelative, "S+E+N", 2},
                                           Variant{TimeMode::kAbsolute, "S+E+N", 4},
                                           Variant{TimeMode::kNone, "S+E+N", 1}, Variant{TimeMode::kBoth, "N", 1},
                                           Variant{TimeMode::kBoth, "S", 1}, Variant{TimeMode::kBoth, "E", 2}));

TEST(ModelTest, GradientMatchesFiniteDifferences) {
  Dataset ds = tiny_dataset(3);
  ModelConfig cfg = config_for(ds, 8, 4);
  DhanModel model(cfg, 5);
  const Instance& inst = ds.train[2];
  const double labels[] = {1.0, 0.0, 0.0};
  auto loss = [&] {
    std::vector<Tensor> logits;
    for (std::size_t c : {inst.candidate, std::size_t{4}, std::size_t{9}}) {
      logits.push_back(model.forward(with_candidate(inst, c), ds.news));
    }
    return bce_loss(concat(logits, 0), labels);
  };
  GradCheckReport r = grad_check(loss, model.params());
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "] analytic " << r.worst_analytic
                                   << " numeric " << r.worst_numeric;
}

TEST(ModelTest, BatchedGradientMatchesFiniteDifferences) {
  Dataset ds = tiny_dataset(3);
  ModelConfig cfg = config_for(ds, 8, 4);
  cfg.heads = 2;
  DhanModel model(cfg, 6);
  std::vector<ScoreGroup> groups = {{&ds.train[0], {ds.train[0].candidate, 3}}, {&ds.train[7], {ds.train[7].candidate, 12}}};
  const double labels[] = {1.0, 0.0, 1.0, 0.0};
  GradCheckReport r = grad_check([&] { return bce_loss(model.score(groups, ds.news), labels); }, model.params());
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
}

TEST(ModelTest, TraceShapesAndStochasticity) {
  Dataset ds = tiny_dataset(10);
  ModelConfig cfg = config_for(ds, 64, 20);
  cfg.d_prime = 256;
  DhanModel model(cfg, 1);
  AttentionTrace trace;
  ForwardOptions opts;
  opts.trace = &trace;
  model.forward(ds.test[0], ds.news, opts);
  ASSERT_EQ(trace.beta.size(), 10u);
  ASSERT_EQ(trace.gamma.size(), 10u);
  EXPECT_EQ(trace.beta[0].shape(), (Shape{22, 22}));
  EXPECT_EQ(trace.gamma[0].shape(), (Shape{5, 5}));
  EXPECT_EQ(trace.sequence.shape(), (Shape{10, 10}));
  EXPECT_EQ(trace.time_sequence.shape(), (Shape{10, 10}));
  auto rows_sum_to_one = [](const Tensor& m) {
    const std::size_t n = m.dim(1);
    for (std::size_t r = 0; r < m.dim(0); ++r) {
      double s = 0;
      for (std::size_t c = 0; c < n; ++c) s += m.at(r, c);
      if (std::abs(s - 1.0) > 1e-6) return false;
    }
    return true;
  };
  for (const Tensor& b : trace.beta) EXPECT_TRUE(rows_sum_to_one(b));
  for (const Tensor& g : trace.gamma) EXPECT_TRUE(rows_sum_to_one(g));
  EXPECT_TRUE(rows_sum_to_one(trace.sequence));
  EXPECT_TRUE(rows_sum_to_one(trace.time_sequence));
}

TEST(ModelTest, HierarchyParameterAccounting) {
  Dataset ds = tiny_dataset(3);
  ModelConfig full = config_for(ds, 16, 4);
  ModelConfig n_only = full;
  n_only.layers = parse_layers("N");
  const std::size_t a = DhanModel(full, 1).params().parameter_count();
  const std::size_t b = DhanModel(n_only, 1).params().parameter_count();
  EXPECT_EQ(a - b, 9u * 16 * 16);
  EXPECT_EQ(a - b, hierarchy_parameter_count(full.layers, 16));
}

TEST(ModelTest, DeterministicForward) {
  Dataset ds = tiny_dataset(3);
  ModelConfig cfg = config_for(ds, 8, 4);
  DhanModel a(cfg, 9), b(cfg, 9);
  EXPECT_EQ(a.forward(ds.test[1], ds.news).item(), b.forward(ds.test[1], ds.news).item());
  EXPECT_EQ(a.forward(ds.test[1], ds.news).item(), a.forward(ds.test[1], ds.news).item());
}

TEST(ModelTest, HistoryOrderOnlyMattersThroughTime) {
  Dataset ds = tiny_dataset(5);
  for (TimeMode mode : {TimeMode::kNone, TimeMode::kBoth}) {
    ModelConfig cfg = config_for(ds, 8, 4);
    cfg.time_mode = mode;
    DhanModel model(cfg, 2);
    Instance inst = ds.test[0];
    const double base = model.forward(inst, ds.news).item();
    Instance perm = inst;
    std::reverse(perm.history.begin(), perm.history.end());  // timestamps stay in place
    const double moved = model.forward(perm, ds.news).item();
    if (mode == TimeMode::kNone) {
      EXPECT_NEAR(base, moved, 1e-9);
    } else {
      EXPECT_GT(std::abs(base - moved), 1e-9);
    }
  }
}

TEST(ModelTest, RejectsBadConfig) {
  Dataset ds = tiny_dataset(3);
  ModelConfig cfg = config_for(ds, 8, 4);
  cfg.heads = 3;
  EXPECT_THROW(DhanModel(cfg, 1), ConfigError);
  EXPECT_THROW(parse_layers("S+X"), ConfigError);
  EXPECT_EQ(layers_name(parse_layers("N+S")), "S+N");
}

TEST(ModelTest, DnsParametersAreFrozen) {
  Dataset ds = tiny_dataset(3);
  DhanModel model(config_for(ds, 8, 4), 1);
  EXPECT_FALSE(model.params().get("dns.W").requires_grad());
  EXPECT_FALSE(model.params().get("dns.b").requires_grad());
  EXPECT_EQ(model.params().get("dns.W").shape(), (Shape{8, 8}));

  // Projected candidates are their id embeddings.
  Tensor proj = model.dns_projection();
  EXPECT_EQ(proj.shape(), (Shape{24, 8}));
  EXPECT_FALSE(proj.requires_grad());
  const std::vector<std::size_t> cands = {0, 2};
  Tensor y = matmul(model.candidate_reps(cands, ds.news), proj);
  const Tensor& ids = model.params().get("news_emb");
  for (std::size_t r = 0; r < cands.size(); ++r) {
    for (std::size_t j = 0; j < 8; ++j) EXPECT_DOUBLE_EQ(y[r * 8 + j], ids[cands[r] * 8 + j]);
  }
}

}  // namespace
}  // namespace dhan
