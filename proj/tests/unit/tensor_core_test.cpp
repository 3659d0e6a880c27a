#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>

#include "dhan/adam.hpp"
#include "dhan/errors.hpp"
#include "dhan/grad_check.hpp"
#include "dhan/ops.hpp"
#include "dhan/param_store.hpp"
#include "test_util.hpp"

namespace dhan {
namespace {

using testing::add_random;
using testing::probe;

constexpr double kGradTol = 1e-4;

double check(ParamStore& store, const std::function<Tensor()>& f) {
  GradCheckReport r = grad_check(f, store);
  EXPECT_GT(r.coords_checked, 0u);
  return r.max_rel_error;
}

TEST(TensorTest, RejectsBadShapes) {
  EXPECT_THROW(Tensor(Shape{2, 0}), ShapeError);
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  Tensor t({2, 3});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.dim(-1), 3u);
}

TEST(TensorTest, CopiesShareStorageCloneDoesNot) {
  Tensor a = Tensor::vector({1, 2});
  Tensor b = a;
  Tensor c = a.clone();
  b.data()[0] = 7;
  EXPECT_EQ(a[0], 7);
  EXPECT_EQ(c[0], 1);
  EXPECT_TRUE(a.same_storage(b));
}

TEST(OpsTest, MatmulExamples) {
  Tensor id = Tensor::matrix({{1, 0}, {0, 1}});
  Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  Tensor r = matmul(id, m);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(r[i], m[i]);

  Tensor dot = matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}}));
  EXPECT_EQ(dot.shape(), (Shape{1, 1}));
  EXPECT_EQ(dot[0], 11);

  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({4, 5})), ShapeError);
}

TEST(OpsTest, SoftmaxExamples) {
  Tensor s = softmax_rows(Tensor::matrix({{0, 0}, {std::log(3.0), 0}, {1000, 0}}));
  EXPECT_DOUBLE_EQ(s.at(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s.at(0, 1), 0.5);
  EXPECT_NEAR(s.at(1, 0), 0.75, 1e-15);
  EXPECT_NEAR(s.at(1, 1), 0.25, 1e-15);
  EXPECT_NEAR(s.at(2, 0), 1.0, 1e-12);
  EXPECT_NEAR(s.at(2, 1), 0.0, 1e-12);
}

TEST(OpsTest, SoftmaxRowsSumToOneAndShiftInvariant) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor m = testing::random_tensor({4, 7}, rng, -20, 20);
    Tensor shifted = m.clone();
    for (std::size_t j = 0; j < 7; ++j) shifted.data()[2 * 7 + j] += 13.5;
    Tensor a = softmax_rows(m);
    Tensor b = softmax_rows(shifted);
    for (std::size_t i = 0; i < 4; ++i) {
      double row = 0;
      for (std::size_t j = 0; j < 7; ++j) {
        row += a.at(i, j);
        EXPECT_NEAR(a.at(i, j), b.at(i, j), 1e-9);
      }
      EXPECT_NEAR(row, 1.0, 1e-9);
    }
  }
}

TEST(OpsTest, SoftmaxIsMonotone) {
  Tensor s = softmax_rows(Tensor::matrix({{0.1, 0.3, -2, 0.2}}));
  EXPECT_LT(s.at(0, 2), s.at(0, 0));
  EXPECT_LT(s.at(0, 0), s.at(0, 3));
  EXPECT_LT(s.at(0, 3), s.at(0, 1));
}

TEST(OpsTest, LayerNormExamples) {
  Tensor ones = Tensor::vector({1, 1, 1});
  Tensor zeros = Tensor::zeros({3});
  Tensor c = layer_norm(Tensor::matrix({{4, 4, 4}}), ones, zeros, 1e-6);
  for (double v : c.data()) EXPECT_EQ(v, 0.0);

  Tensor r = layer_norm(Tensor::matrix({{1, 3}}), Tensor::vector({1, 1}), Tensor::zeros({2}), 1e-12);
  EXPECT_NEAR(r[0], -1.0, 1e-9);
  EXPECT_NEAR(r[1], 1.0, 1e-9);

  Tensor a = layer_norm(Tensor::matrix({{0.3, -7, 2}}), zeros, Tensor::vector({5, 5, 5}), 1e-6);
  for (double v : a.data()) EXPECT_EQ(v, 5.0);
}

TEST(OpsTest, LayerNormNormalizesRows) {
  Rng rng(2);
  Tensor x = testing::random_tensor({3, 2, 6}, rng, -4, 4);
  Tensor y = layer_norm(x, Tensor(Shape{6}, std::vector<double>(6, 1.0)), Tensor::zeros({6}), 1e-12);
  for (std::size_t r = 0; r < 6; ++r) {
    double m = 0, v = 0;
    for (std::size_t j = 0; j < 6; ++j) m += y[r * 6 + j];
    m /= 6;
    for (std::size_t j = 0; j < 6; ++j) v += (y[r * 6 + j] - m) * (y[r * 6 + j] - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 6, 1.0, 1e-9);
  }
}

TEST(OpsTest, NonFiniteForwardIsAnError) {
  Tensor big = Tensor::vector({1e308});
  EXPECT_THROW(scale(big, 10.0), NumericError);
  EXPECT_THROW(softmax_rows(Tensor::matrix({{std::numeric_limits<double>::infinity(), 0}})), NumericError);
}

TEST(OpsTest, BceWithLogits) {
  const double one[] = {1.0};
  const double zero[] = {0.0};
  EXPECT_NEAR(bce_with_logits(Tensor::vector({0}), one).item(), std::log(2.0), 1e-15);
  const double hi = bce_with_logits(Tensor::vector({30}), one).item();
  EXPECT_TRUE(std::isfinite(hi));
  EXPECT_NEAR(hi, 0.0, 1e-12);
  EXPECT_NEAR(bce_with_logits(Tensor::vector({-30}), zero).item(), 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(bce_with_logits(Tensor::vector({-800}), one).item()));
  const double bad[] = {0.5};
  EXPECT_THROW(bce_with_logits(Tensor::vector({0}), bad), std::invalid_argument);
}

TEST(OpsTest, DropoutScalesKeptEntries) {
  Rng rng(3);
  Tensor x(Shape{1000}, std::vector<double>(1000, 1.0));
  Tensor y = dropout(x, 0.2, rng);
  std::size_t kept = 0;
  for (double v : y.data()) {
    if (v != 0.0) {
      EXPECT_DOUBLE_EQ(v, 1.25);
      ++kept;
    }
  }
  EXPECT_GT(kept, 700u);
  EXPECT_LT(kept, 900u);
  EXPECT_TRUE(dropout(x, 0.0, rng).same_storage(x));
  EXPECT_THROW(dropout(x, 1.0, rng), std::invalid_argument);
}

TEST(OpsTest, GatherGradientOnlyTouchesLookedUpRows) {
  Tensor table(Shape{5, 3}, std::vector<double>(15, 0.5), true);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = sum(gather_rows(table, {1, 3, 1}));
    tape.backward(loss);
  }
  const auto g = table.grad();
  for (std::size_t r = 0; r < 5; ++r) {
    const double expect = r == 1 ? 2.0 : (r == 3 ? 1.0 : 0.0);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(g[r * 3 + j], expect);
  }
}

TEST(OpsTest, NoTapeMeansNoGradient) {
  Tensor a(Shape{2, 2}, std::vector<double>{1, 2, 3, 4}, true);
  Tensor loss = sum(matmul(a, a));
  EXPECT_FALSE(a.has_grad());
  Tape tape;
  TapeScope scope(tape);
  {
    NoGradScope off;
    sum(a);
  }
  EXPECT_EQ(tape.size(), 0u);
  (void)loss;
}

// Finite-difference checks, one per differentiable op.

class OpGradTest : public ::testing::Test {
 protected:
  ParamStore store;
  Rng rng{17};
};

TEST_F(OpGradTest, Matmul) {
  Tensor a = add_random(store, "a", {2, 3, 4}, rng);
  Tensor b = add_random(store, "b", {4, 5}, rng);
  EXPECT_LT(check(store, [&] { return probe(matmul(a, b)); }), kGradTol);
}

TEST_F(OpGradTest, Bmm) {
  Tensor a = add_random(store, "a", {3, 2, 4}, rng);
  Tensor b = add_random(store, "b", {3, 4, 5}, rng);
  Tensor c = add_random(store, "c", {3, 6, 4}, rng);
  EXPECT_LT(check(store, [&] { return add(probe(bmm(a, b), 1), probe(bmm(a, c, true), 2)); }), kGradTol);
}

TEST_F(OpGradTest, TransposeAddScaleSum) {
  Tensor a = add_random(store, "a", {3, 4}, rng);
  Tensor b = add_random(store, "b", {4, 3}, rng);
  EXPECT_LT(check(store, [&] { return add(probe(add(transpose(a), scale(b, -1.7))), scale(sum(a), 0.3)); }),
            kGradTol);
}

TEST_F(OpGradTest, AddBroadcast) {
  Tensor a = add_random(store, "a", {2, 3, 4}, rng);
  Tensor b = add_random(store, "b", {3, 4}, rng);
  Tensor c = add_random(store, "c", {4}, rng);
  EXPECT_LT(check(store, [&] { return probe(add_broadcast(add_broadcast(a, b), c)); }), kGradTol);
}

TEST_F(OpGradTest, ConcatSliceReshape) {
  Tensor a = add_random(store, "a", {2, 3}, rng);
  Tensor b = add_random(store, "b", {2, 5}, rng);
  Tensor c = add_random(store, "c", {1, 8}, rng);
  EXPECT_LT(check(store,
                  [&] {
                    Tensor cat = concat({concat({a, b}, 1), c}, 0);
                    Tensor part = slice(cat, 1, 2, 4);
                    return add(probe(reshape(part, {4, 3}), 3), probe(slice(cat, 0, 1, 2), 4));
                  }),
            kGradTol);
}

TEST_F(OpGradTest, GatherAndEmbeddingBag) {
  Tensor table = add_random(store, "table", {6, 3}, rng);
  Bags bags;
  const std::int32_t w1[] = {0, 2, 2};
  const std::int32_t w2[] = {5};
  bags.add_mean(w1);
  bags.add_empty();
  bags.add_weighted(w2, 0.25);
  bags.add_weighted(w1, 0.5);
  bags.close_bag();
  EXPECT_LT(check(store, [&] { return add(probe(gather_rows(table, {4, 1, 4})), probe(embedding_bag(table, bags))); }),
            kGradTol);
}

TEST_F(OpGradTest, MeanOverAxes) {
  Tensor a = add_random(store, "a", {3, 4, 2}, rng);
  EXPECT_LT(check(store, [&] { return add(add(probe(mean(a, 0)), probe(mean(a, 1))), probe(mean(a, -1))); }),
            kGradTol);
}

TEST_F(OpGradTest, SoftmaxAndLayerNorm) {
  Tensor a = add_random(store, "a", {2, 3, 5}, rng, -2, 2);
  Tensor g = add_random(store, "g", {5}, rng);
  Tensor b = add_random(store, "b", {5}, rng);
  EXPECT_LT(check(store, [&] { return add(probe(softmax_last(a)), probe(layer_norm(a, g, b, 1e-6), 7)); }),
            kGradTol);
}

TEST_F(OpGradTest, ReluSigmoid) {
  Tensor a = add_random(store, "a", {4, 5}, rng);
  EXPECT_LT(check(store, [&] { return probe(add(relu(a), sigmoid(scale(a, 2.0)))); }), kGradTol);
}

TEST_F(OpGradTest, Dropout) {
  Tensor a = add_random(store, "a", {4, 5}, rng);
  EXPECT_LT(check(store,
                  [&] {
                    Rng local(8);
                    return probe(dropout(a, 0.3, local));
                  }),
            kGradTol);
}

TEST_F(OpGradTest, BceWithLogits) {
  Tensor a = add_random(store, "a", {6}, rng, -3, 3);
  const double labels[] = {1, 0, 0, 1, 1, 0};
  EXPECT_LT(check(store, [&] { return bce_with_logits(a, labels); }), kGradTol);
}

TEST(GradCheckTest, QuadraticAndLinear) {
  ParamStore store;
  Tensor x = store.add("x", Tensor(Shape{1}, std::vector<double>{3.0}, true));
  GradCheckReport r = grad_check([&] { return matmul(reshape(x, {1, 1}), reshape(x, {1, 1})); }, store);
  EXPECT_NEAR(r.worst_analytic, 6.0, 1e-12);
  EXPECT_LT(r.max_rel_error, 1e-6);

  ParamStore lin;
  Rng rng(1);
  Tensor w = add_random(lin, "w", {7}, rng);
  EXPECT_LT(grad_check([&] { return probe(scale(w, 3.0)); }, lin).max_rel_error, 1e-9);
}

TEST(GradCheckTest, SamplesLargeTensors) {
  ParamStore store;
  Rng rng(1);
  Tensor w = add_random(store, "w", {30, 30}, rng);
  GradCheckReport r = grad_check([&] { return probe(w); }, store);
  EXPECT_EQ(r.coords_checked, 200u);
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  ParamStore store;
  store.add("w", Tensor(Shape{1}, std::vector<double>{0.5}, true));
  AdamState state;
  state.options.eps = 0.0;
  adam_step(store, {{"w", {1.0}}}, state);
  EXPECT_NEAR(store.get("w")[0], 0.5 - 1e-3, 1e-15);
  EXPECT_EQ(state.step, 1);

  ParamStore s2;
  s2.add("w", Tensor(Shape{1}, std::vector<double>{0.5}, true));
  AdamState st2;
  adam_step(s2, {{"w", {1.0}}}, st2);
  EXPECT_NEAR(s2.get("w")[0] - 0.5, -1e-3, 1e-10);
}

TEST(AdamTest, ZeroGradient) {
  ParamStore store;
  store.add("w", Tensor(Shape{2}, std::vector<double>{0.5, -2.0}, true));
  AdamState state;
  adam_step(store, {{"w", {0.0, 0.0}}}, state);
  EXPECT_EQ(store.get("w")[0], 0.5);
  EXPECT_EQ(store.get("w")[1], -2.0);

  state.options.weight_decay = 1e-4;
  adam_step(store, {{"w", {0.0, 0.0}}}, state);
  EXPECT_DOUBLE_EQ(store.get("w")[0], 0.5 * (1 - 1e-3 * 1e-4));
  EXPECT_DOUBLE_EQ(store.get("w")[1], -2.0 * (1 - 1e-3 * 1e-4));
}

TEST(AdamTest, MissingGradientThrowsAndLeavesStore) {
  ParamStore store;
  store.add("a", Tensor(Shape{1}, std::vector<double>{1.0}, true));
  store.add("b", Tensor(Shape{1}, std::vector<double>{1.0}, true));
  store.add("frozen", Tensor(Shape{1}, std::vector<double>{1.0}, false));
  AdamState state;
  EXPECT_THROW(adam_step(store, {{"a", {1.0}}}, state), std::invalid_argument);
  EXPECT_EQ(store.get("a")[0], 1.0);
  EXPECT_EQ(state.step, 0);
  adam_step(store, {{"a", {1.0}}, {"b", {1.0}}}, state);
  EXPECT_EQ(store.get("frozen")[0], 1.0);
}

TEST(AdamTest, BitwiseDeterministic) {
  auto run = [] {
    ParamStore store;
    Rng rng(4);
    add_random(store, "w", {3, 3}, rng);
    AdamState state;
    state.options.weight_decay = 1e-4;
    Rng grng(9);
    for (int i = 0; i < 10; ++i) {
      std::vector<double> g(9);
      for (double& v : g) v = grng.uniform(-1, 1);
      adam_step(store, {{"w", g}}, state);
    }
    return store;
  };
  EXPECT_TRUE(run().identical_to(run()));
}

TEST(ParamStoreTest, NamesAreUnique) {
  ParamStore store;
  Rng rng(1);
  store.add_uniform("w", {2, 2}, 0.5, rng);
  EXPECT_THROW(store.add_uniform("w", {2, 2}, 0.5, rng), std::invalid_argument);
  EXPECT_EQ(store.parameter_count(), 4u);
  for (double v : store.get("w").data()) EXPECT_LE(std::abs(v), 0.5);
}

}  // namespace
}  // namespace dhan
