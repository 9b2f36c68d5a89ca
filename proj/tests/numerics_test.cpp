#include <cmath>

#include <gtest/gtest.h>

#include "pvgae/adam.hpp"
#include "pvgae/random.hpp"
#include "pvgae/tape.hpp"
#include "testutil.hpp"

using namespace pvgae;

namespace {

Tensor random_tensor(Shape shape, RandomSource& rng, double lo = -2.0,
                     double hi = 2.0, bool requires_grad = true) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST(Tensor, ShapeInvariant) {
  EXPECT_THROW(Tensor::from({2, 3}, {1, 2, 3}), DimensionError);
  auto t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.at(1, 2), 6.0);
}

TEST(Matmul, IdentityCase) {
  GradientTape tape;
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto out = tape.matmul(eye, a);
  EXPECT_EQ(max_abs_diff(out, a), 0.0);
}

TEST(Matmul, HandComputed) {
  GradientTape tape;
  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto b = Tensor::from({2, 1}, {5, 6});
  auto out = tape.matmul(a, b);
  EXPECT_EQ(out.at(0, 0), 17.0);
  EXPECT_EQ(out.at(1, 0), 39.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  GradientTape tape;
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 3});
  try {
    tape.matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
  }
}

TEST(Backward, SquareDerivative) {
  GradientTape tape;
  auto x = Tensor::scalar(3.0, true);
  auto loss = tape.mul(x, x);
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(x.grad().value(), 6.0);
  // the loss node's own gradient is exactly one
  EXPECT_DOUBLE_EQ(loss.grad().value(), 1.0);
}

TEST(Backward, SigmoidChainMatchesFiniteDifferences) {
  RandomSource rng(11);
  auto w = random_tensor({3, 4}, rng);
  auto x = random_tensor({4, 2}, rng, -2.0, 2.0, false);

  auto forward = [&] {
    GradientTape tape;
    return tape.sum(tape.sigmoid(tape.matmul(w, x))).value();
  };
  GradientTape tape;
  auto loss = tape.sum(tape.sigmoid(tape.matmul(w, x)));
  tape.backward(loss);
  const auto fd = testutil::finite_difference_grad(forward, w);
  EXPECT_LT(testutil::max_rel_err(w.grad(), fd), 1e-6);
}

TEST(Backward, UnusedParameterGetsZeroGradient) {
  GradientTape tape;
  auto x = Tensor::scalar(2.0, true);
  auto unused = Tensor::from({2, 2}, {1, 1, 1, 1}, true);
  auto loss = tape.mul(x, x);
  std::vector<Tensor> params{x, unused};
  auto grads = tape.backward(loss, params);
  EXPECT_DOUBLE_EQ(grads[0].value(), 4.0);
  for (std::size_t i = 0; i < grads[1].size(); ++i) {
    EXPECT_DOUBLE_EQ(grads[1][i], 0.0);
  }
}

TEST(Backward, NonScalarLossRejected) {
  GradientTape tape;
  auto x = Tensor::from({2, 1}, {1, 2}, true);
  auto y = tape.scale(x, 2.0);
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Backward, AccumulationIsAdditive) {
  GradientTape tape;
  auto x = Tensor::scalar(5.0, true);
  auto c1 = Tensor::scalar(2.0);
  auto c2 = Tensor::scalar(7.0);
  // x enters through two paths: grad = 2 + 7
  auto loss = tape.add(tape.mul(x, c1), tape.mul(x, c2));
  tape.backward(loss);
  EXPECT_DOUBLE_EQ(x.grad().value(), 9.0);
}

TEST(Backward, StaleGradientsClearedBetweenPasses) {
  auto x = Tensor::scalar(3.0, true);
  {
    GradientTape tape;
    auto loss = tape.mul(x, x);
    tape.backward(loss);
    EXPECT_DOUBLE_EQ(x.grad().value(), 6.0);
  }
  {
    GradientTape tape;
    auto loss = tape.mul(x, x);
    tape.backward(loss);
    EXPECT_DOUBLE_EQ(x.grad().value(), 6.0);  // not 12
  }
}

TEST(Tape, NoRecordWithoutRequiresGrad) {
  GradientTape tape;
  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto b = Tensor::from({2, 2}, {1, 1, 1, 1});
  tape.matmul(a, b);
  tape.add(a, b);
  EXPECT_EQ(tape.num_recorded(), 0u);
  auto c = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  tape.mul(c, b);
  EXPECT_EQ(tape.num_recorded(), 1u);
}

// Every differentiable op against central finite differences on random
// inputs. h = 1e-5, tolerance 1e-4 relative.
TEST(Gradients, AllOpsMatchFiniteDifferences) {
  RandomSource rng(1234);
  const auto check = [&](const char* name, Tensor param,
                         std::function<Tensor(GradientTape&, const Tensor&)> op) {
    Tensor weights;  // fixed random output weights make row/col grads distinct
    {
      GradientTape tape;
      auto probe = op(tape, param);
      weights = random_tensor(probe.shape(), rng, -1.0, 1.0, false);
    }
    auto forward = [&] {
      GradientTape tape;
      return tape.sum(tape.mul(op(tape, param), weights)).value();
    };
    GradientTape tape;
    auto loss = tape.sum(tape.mul(op(tape, param), weights));
    tape.backward(loss);
    const auto fd = testutil::finite_difference_grad(forward, param);
    EXPECT_LT(testutil::max_rel_err(param.grad(), fd), 1e-4) << name;
  };

  auto other = random_tensor({3, 4}, rng, -2.0, 2.0, false);
  auto row = random_tensor({1, 4}, rng, -2.0, 2.0, false);
  auto mat = random_tensor({4, 2}, rng, -2.0, 2.0, false);

  check("matmul_lhs", random_tensor({3, 4}, rng),
        [&](GradientTape& t, const Tensor& p) { return t.matmul(p, mat); });
  check("matmul_rhs", random_tensor({4, 2}, rng),
        [&](GradientTape& t, const Tensor& p) { return t.matmul(other, p); });
  check("transpose", random_tensor({3, 4}, rng),
        [&](GradientTape& t, const Tensor& p) { return t.transpose(p); });
  check("add", random_tensor({3, 4}, rng),
        [&](GradientTape& t, const Tensor& p) { return t.add(p, other); });
  check("add_row_broadcast", random_tensor({1, 4}, rng),
        [&](GradientTape& t, const Tensor& p) { return t.add(other, p); });
  check("sub", random_tensor({3, 4}, rng),
        [&](GradientTape& t, const Tensor& p) { return t.sub(p, other); });
  check("sub_row_broadcast", random_tensor({1, 4}, rng),
        [&](GradientTape& t, const Tensor& p) { return t.sub(other, p); });
  check("mul", random_tensor({3, 4}, rng),
        [&](GradientTape& t, const Tensor& p) { return t.mul(p, other); });
  check("mul_row_broadcast", random_tensor({1, 4}, rng),
        [&](GradientTape& t, const Tensor& p) { return t.mul(other, p); });
  check("scale", random_tensor({3, 4}, rng),
        [&](GradientTape& t, const Tensor& p) { return t.scale(p, -1.7); });
  check("add_scalar", random_tensor({3, 4}, rng),
        [&](GradientTape& t, const Tensor& p) { return t.add_scalar(p, 0.3); });
  // keep relu inputs away from the kink
  {
    auto p = random_tensor({3, 4}, rng);
    for (double& v : p.data()) {
      if (std::abs(v) < 0.05) v = v < 0 ? -0.05 : 0.05;
    }
    check("relu", p,
          [&](GradientTape& t, const Tensor& q) { return t.relu(q); });
  }
  check("sigmoid", random_tensor({3, 4}, rng),
        [&](GradientTape& t, const Tensor& p) { return t.sigmoid(p); });
  check("exp", random_tensor({3, 4}, rng),
        [&](GradientTape& t, const Tensor& p) { return t.exp(p); });
  check("log", random_tensor({3, 4}, rng, 0.3, 2.0),
        [&](GradientTape& t, const Tensor& p) { return t.log(p); });
  // clamp inputs away from the boundaries at +-1
  {
    auto p = random_tensor({3, 4}, rng);
    for (double& v : p.data()) {
      if (std::abs(std::abs(v) - 1.0) < 0.05) v *= 1.2;
    }
    check("clamp", p, [&](GradientTape& t, const Tensor& q) {
      return t.clamp(q, -1.0, 1.0);
    });
  }
  check("sum", random_tensor({3, 4}, rng),
        [&](GradientTape& t, const Tensor& p) { return t.sum(p); });
  check("mean_rows", random_tensor({5, 3}, rng),
        [&](GradientTape& t, const Tensor& p) { return t.mean_rows(p); });
  check("log_softmax", random_tensor({4, 5}, rng),
        [&](GradientTape& t, const Tensor& p) { return t.log_softmax(p); });
}

TEST(Transcendentals, LogClampKeepsOutputsFinite) {
  GradientTape tape;
  auto zero = Tensor::from({1, 3}, {0.0, 1e-12, 0.5}, true);
  auto out = tape.log(zero);
  EXPECT_TRUE(all_finite(out));
  EXPECT_DOUBLE_EQ(out[0], std::log(1e-7));
  EXPECT_DOUBLE_EQ(out[1], std::log(1e-7));
  EXPECT_DOUBLE_EQ(out[2], std::log(0.5));
}

TEST(Transcendentals, SigmoidOutputsStayInsideOpenUnitInterval) {
  GradientTape tape;
  auto x = Tensor::from({1, 4}, {-1000.0, -40.0, 40.0, 1000.0});
  auto out = tape.sigmoid(x);
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_GT(out[i], 0.0);
    EXPECT_LT(out[i], 1.0);
  }
  EXPECT_DOUBLE_EQ(out[0], 1e-7);
  EXPECT_DOUBLE_EQ(out[3], 1.0 - 1e-7);
}

TEST(Transcendentals, ExpClampKeepsOutputsFinite) {
  GradientTape tape;
  auto x = Tensor::from({1, 2}, {1000.0, -1000.0});
  auto out = tape.exp(x);
  EXPECT_TRUE(all_finite(out));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<Tensor> params{Tensor::scalar(0.0, true)};
  std::vector<Tensor> grads{Tensor::scalar(1.0)};
  auto state = AdamState::for_params(params);
  adam_step(params, grads, state, 0.005);
  // mhat = vhat = 1 after bias correction, so the step is -lr/(1+eps)
  EXPECT_LT(std::abs(params[0].value() + 0.005), 1e-6);
  EXPECT_EQ(state.step_count, 1u);
}

TEST(Adam, ZeroGradientFreshStateLeavesParameterUnchanged) {
  std::vector<Tensor> params{Tensor::scalar(1.5, true)};
  std::vector<Tensor> grads{Tensor::scalar(0.0)};
  auto state = AdamState::for_params(params);
  adam_step(params, grads, state, 0.005);
  EXPECT_DOUBLE_EQ(params[0].value(), 1.5);
}

TEST(Adam, DeterministicAcrossIdenticalCalls) {
  auto run = [] {
    std::vector<Tensor> params{Tensor::from({2, 2}, {1, 2, 3, 4}, true)};
    std::vector<Tensor> grads{Tensor::from({2, 2}, {0.1, -0.2, 0.3, -0.4})};
    auto state = AdamState::for_params(params);
    for (int i = 0; i < 5; ++i) adam_step(params, grads, state, 0.01);
    return params[0];
  };
  EXPECT_EQ(max_abs_diff(run(), run()), 0.0);
}

TEST(Adam, ZeroLearningRateIsIdentity) {
  std::vector<Tensor> params{Tensor::from({2, 2}, {1, 2, 3, 4}, true)};
  auto reference = params[0].detached();
  std::vector<Tensor> grads{Tensor::from({2, 2}, {5, -5, 2, 9})};
  auto state = AdamState::for_params(params);
  for (int i = 0; i < 3; ++i) adam_step(params, grads, state, 0.0);
  EXPECT_EQ(max_abs_diff(params[0], reference), 0.0);
}

TEST(Adam, ShapeMismatchRejected) {
  std::vector<Tensor> params{Tensor::zeros({2, 2}, true)};
  std::vector<Tensor> grads{Tensor::zeros({2, 3})};
  auto state = AdamState::for_params(params);
  EXPECT_THROW(
      adam_step(params, grads, state, 0.01),
      DimensionError);
}

TEST(RandomSource, NormalMomentsMatchStandardNormal) {
  RandomSource rng(99);
  const std::size_t n = 1000000;
  auto draws = sample_standard_normal({n}, rng);
  double mean = 0.0;
  for (double v : draws.data()) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : draws.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  EXPECT_LT(std::abs(mean), 0.01);
  EXPECT_LT(std::abs(var - 1.0), 0.01);
}

TEST(RandomSource, SameSeedSameSequence) {
  RandomSource a(31415), b(31415);
  auto ta = sample_standard_normal({4, 4}, a);
  auto tb = sample_standard_normal({4, 4}, b);
  EXPECT_EQ(max_abs_diff(ta, tb), 0.0);
}

TEST(RandomSource, DistinctSeedsDiffer) {
  RandomSource a(1), b(2);
  auto ta = sample_standard_normal({4, 4}, a);
  auto tb = sample_standard_normal({4, 4}, b);
  EXPECT_GT(max_abs_diff(ta, tb), 0.0);
}

TEST(RandomSource, EmptyShapeRejected) {
  RandomSource rng(5);
  EXPECT_THROW(sample_standard_normal({}, rng), ContractError);
}

TEST(RandomSource, ChildStreamsIndependentOfParentState) {
  RandomSource a(77);
  auto child_before = a.child(3);
  a.next_u64();
  a.next_u64();
  auto child_after = a.child(3);
  EXPECT_EQ(child_before.next_u64(), child_after.next_u64());
}

TEST(RandomSource, ShuffleIsDeterministic) {
  auto run = [] {
    RandomSource rng(8);
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
    rng.shuffle(v);
    return v;
  };
  EXPECT_EQ(run(), run());
}
