#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "gradcheck.hpp"
#include "op_gradient_cases.hpp"
#include "sickfuse/adam.hpp"
#include "sickfuse/binary_io.hpp"
#include "sickfuse/errors.hpp"
#include "sickfuse/ops.hpp"

using namespace sickfuse;
using namespace sickfuse::ops;
using sickfuse::testing::gradcheck;
using sickfuse::testing::random_tensor;
using sickfuse::testing::reduce_with_weights;

namespace {

// Direct nested-loop 3-D convolution of one (T,H,W,Cin) sample, valid padding.
Tensor naive_conv3d_valid(const Tensor& x, const Tensor& k, const Tensor& b) {
  const auto T = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const auto kt = k.dim(0), kh = k.dim(1), kw = k.dim(2), F = k.dim(4);
  Tensor y({T - kt + 1, H - kh + 1, W - kw + 1, F}, 0.0);
  for (std::size_t t = 0; t + kt <= T; ++t)
    for (std::size_t i = 0; i + kh <= H; ++i)
      for (std::size_t j = 0; j + kw <= W; ++j)
        for (std::size_t f = 0; f < F; ++f) {
          double acc = b[f];
          for (std::size_t a = 0; a < kt; ++a)
            for (std::size_t c = 0; c < kh; ++c)
              for (std::size_t e = 0; e < kw; ++e)
                for (std::size_t ch = 0; ch < C; ++ch)
                  acc += x.at({t + a, i + c, j + e, ch}) * k.at({a, c, e, ch, f});
          y.at({t, i, j, f}) = acc;
        }
  return y;
}

Tensor delta_kernel3d(std::size_t channels) {
  Tensor k({3, 3, 3, channels, channels}, 0.0);
  for (std::size_t c = 0; c < channels; ++c) k.at({1, 1, 1, c, c}) = 1.0;
  return k;
}

}  // namespace

TEST(Tensor, RejectsBadShapesAndNonFinite) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor({1}, std::vector<double>{NAN}), ContractError);
  EXPECT_THROW(Tensor({0, 3}), ShapeError);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_THROW(t.reshaped({4}), ShapeError);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
}

TEST(Conv3d, ConstantInputAllOnesKernelValid) {
  const double c = 0.7;
  Tape tape;
  Var x = tape.constant(Tensor({5, 5, 5, 1}, c));
  Var k = tape.constant(Tensor({3, 3, 3, 1, 1}, 1.0));
  Var b = tape.constant(Tensor({1}, 0.0));
  Var y = conv3d(x, k, b, Padding::Valid);
  ASSERT_EQ(y.shape(), (Shape{3, 3, 3, 1}));
  const Tensor oracle = naive_conv3d_valid(x.value(), k.value(), b.value());
  for (std::size_t i = 0; i < y.value().size(); ++i) {
    EXPECT_NEAR(y.value()[i], oracle[i], 1e-12);
    EXPECT_NEAR(y.value()[i], 27 * c, 1e-12);
  }
}

TEST(Conv3d, MatchesNestedLoopOracleOnRandomInput) {
  Tape tape;
  Tensor xv = random_tensor({4, 5, 6, 2}, 1);
  Tensor kv = random_tensor({3, 2, 3, 2, 3}, 2);
  Tensor bv = random_tensor({3}, 3);
  Var y = conv3d(tape.constant(xv), tape.constant(kv), tape.constant(bv), Padding::Valid);
  const Tensor oracle = naive_conv3d_valid(xv, kv, bv);
  ASSERT_EQ(y.shape(), oracle.shape());
  for (std::size_t i = 0; i < oracle.size(); ++i) EXPECT_NEAR(y.value()[i], oracle[i], 1e-12);
}

TEST(Conv3d, DeltaKernelSamePaddingIsIdentity) {
  Tape tape;
  Tensor xv = random_tensor({4, 5, 6, 2}, 4);
  Var y = conv3d(tape.constant(xv), tape.constant(delta_kernel3d(2)), tape.constant(Tensor({2}, 0.0)),
                 Padding::Same);
  EXPECT_EQ(y.value(), xv);
}

TEST(Conv3d, AcceptsFullVideoShapeAndRejectsChannelMismatch) {
  Tape tape;
  Var x = tape.constant(Tensor({60, 256, 256, 3}, 0.5));
  Var b = tape.constant(Tensor({1}, 0.0));
  EXPECT_THROW(conv3d(x, tape.constant(Tensor({3, 3, 3, 4, 1}, 0.1)), b), ShapeError);
  Var y = conv3d(x, tape.constant(Tensor({3, 3, 3, 3, 1}, 0.1)), b);
  EXPECT_EQ(y.shape(), (Shape{60, 256, 256, 1}));
}

TEST(Conv3d, ValidKernelLargerThanInputIsShapeError) {
  Tape tape;
  EXPECT_THROW(conv3d(tape.constant(Tensor({2, 4, 4, 1}, 1.0)), tape.constant(Tensor({3, 3, 3, 1, 1}, 1.0)),
                      tape.constant(Tensor({1}, 0.0)), Padding::Valid),
               ShapeError);
}

TEST(Conv1d, DeltaKernelSamePaddingIsIdentity) {
  Tape tape;
  Tensor xv = random_tensor({15, 9}, 5);
  Tensor k({3, 9, 9}, 0.0);
  for (std::size_t c = 0; c < 9; ++c) k.at({1, c, c}) = 1.0;
  Var y = conv1d(tape.constant(xv), tape.constant(k), tape.constant(Tensor({9}, 0.0)));
  EXPECT_EQ(y.shape(), (Shape{15, 9}));
  EXPECT_EQ(y.value(), xv);
}

TEST(Conv1d, OnesKernelValidOnConstantInput) {
  const double c = -1.25;
  Tape tape;
  Var y = conv1d(tape.constant(Tensor({10, 1}, c)), tape.constant(Tensor({3, 1, 1}, 1.0)),
                 tape.constant(Tensor({1}, 0.0)), Padding::Valid);
  ASSERT_EQ(y.shape(), (Shape{8, 1}));
  for (double v : y.value().data()) EXPECT_NEAR(v, 3 * c, 1e-12);
}

TEST(Conv1d, TimeDistributedBatchShape) {
  Tape tape;
  Var y = conv1d(tape.constant(random_tensor({2, 4, 15, 9}, 6)), tape.constant(random_tensor({3, 9, 5}, 7)),
                 tape.constant(Tensor({5}, 0.0)));
  EXPECT_EQ(y.shape(), (Shape{2, 4, 15, 5}));
  EXPECT_THROW(conv1d(tape.constant(Tensor({15, 8}, 1.0)), tape.constant(Tensor({3, 9, 5}, 1.0)),
                      tape.constant(Tensor({5}, 0.0))),
               ShapeError);
}

TEST(MaxPool, SmallBlockAndConstant) {
  Tape tape;
  Var y = maxpool(tape.constant(Tensor({2, 2, 1}, {1, 2, 3, 4})), {2, 2}, {2, 2});
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(y.value()[0], 4.0);
  Var c = maxpool(tape.constant(Tensor({6, 6, 6, 2}, 3.5)), {2, 2, 2}, {2, 2, 2});
  for (double v : c.value().data()) EXPECT_EQ(v, 3.5);
}

TEST(MaxPool, VideoShapeHalves) {
  Tape tape;
  Var y = maxpool(tape.constant(Tensor({60, 256, 256, 1}, 0.0)), {2, 2, 2}, {2, 2, 2});
  EXPECT_EQ(y.shape(), (Shape{30, 128, 128, 1}));
  Var z = maxpool(tape.constant(Tensor({8, 15, 4}, 0.0)), {2}, {2});
  EXPECT_EQ(z.shape(), (Shape{8, 7, 4}));
  EXPECT_THROW(maxpool(tape.constant(Tensor({1, 4}, 0.0)), {2}, {2}), ShapeError);
}

TEST(MaxPool, OutputValuesComeFromTheirWindow) {
  Tape tape;
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    Tensor xv = random_tensor({5, 7, 3}, seed);
    Var y = maxpool(tape.constant(xv), {2, 2}, {2, 2});
    for (std::size_t i = 0; i < y.shape()[0]; ++i)
      for (std::size_t j = 0; j < y.shape()[1]; ++j)
        for (std::size_t c = 0; c < 3; ++c) {
          const double v = y.value().at({i, j, c});
          bool found = false;
          double mx = -1e300;
          for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b) {
              const double in = xv.at({2 * i + a, 2 * j + b, c});
              found = found || in == v;
              mx = std::max(mx, in);
            }
          EXPECT_TRUE(found);
          EXPECT_EQ(v, mx);
        }
  }
}

TEST(Dense, IdentityAndHandArithmetic) {
  Tape tape;
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Var x = tape.constant(Tensor({2}, {1, 2}));
  EXPECT_EQ(dense(x, tape.constant(eye), tape.constant(Tensor({2}, 0.0))).value(), x.value());
  Var y = dense(x, tape.constant(eye), tape.constant(Tensor({2}, {1, 1})));
  EXPECT_EQ(y.value(), Tensor({2}, {2, 3}));
}

TEST(Dense, MatchesTripleLoopMatmul) {
  Tape tape;
  Tensor xv = random_tensor({5, 4}, 20), wv = random_tensor({4, 3}, 21), bv = random_tensor({3}, 22);
  Var y = dense(tape.constant(xv), tape.constant(wv), tape.constant(bv));
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = bv[j];
      for (std::size_t i = 0; i < 4; ++i) acc += xv.at({r, i}) * wv.at({i, j});
      EXPECT_NEAR(y.value().at({r, j}), acc, 1e-12);
    }
  EXPECT_THROW(dense(tape.constant(xv), tape.constant(Tensor({3, 3}, 0.0)), tape.constant(bv)),
               ShapeError);
}

TEST(Activation, ReluSoftmaxLinear) {
  Tape tape;
  EXPECT_EQ(activation(tape.constant(Tensor({3}, {-1, 0, 2})), Activation::Relu).value(),
            Tensor({3}, {0, 0, 2}));
  Var s = activation(tape.constant(Tensor({4}, 0.0)), Activation::Softmax);
  for (double v : s.value().data()) EXPECT_DOUBLE_EQ(v, 0.25);
  Tensor xv = random_tensor({3}, 30);
  EXPECT_EQ(activation(tape.constant(xv), Activation::Linear).value(), xv);
}

TEST(Activation, SoftmaxLargeInputsDoNotOverflow) {
  Tape tape;
  Var s = activation(tape.constant(Tensor({2}, {1000, 0})), Activation::Softmax);
  // High-precision oracle: p1 = 1 / (1 + e^-1000), p2 = e^-1000 / (1 + e^-1000).
  const long double tail = std::exp(-1000.0L);
  EXPECT_NEAR(s.value()[0], static_cast<double>(1.0L / (1.0L + tail)), 1e-15);
  EXPECT_NEAR(s.value()[1], static_cast<double>(tail / (1.0L + tail)), 1e-300);
  EXPECT_TRUE(s.value().all_finite());
}

TEST(Activation, SoftmaxRowsAreDistributionsForHugeMagnitudes) {
  Tape tape;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Tensor xv = random_tensor({6, 5}, 100 + seed, -5e3, 5e3);
    Var s = activation(tape.constant(xv), Activation::Softmax);
    for (std::size_t r = 0; r < 6; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        EXPECT_GE(s.value().at({r, j}), 0.0);
        total += s.value().at({r, j});
      }
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  }
}

TEST(BatchNorm, StandardizedBatchUnchanged) {
  Tape tape;
  Tensor xv({4, 1}, {-1.5, -0.5, 0.5, 1.5});
  // Rescale to population variance 1.
  const double sd = std::sqrt((2.25 + 0.25 + 0.25 + 2.25) / 4);
  for (auto& v : xv.data()) v /= sd;
  Tensor rm({1}, 0.0), rv({1}, 1.0);
  const double eps = 1e-9;
  Var y = batchnorm(tape.constant(xv), tape.constant(Tensor({1}, 1.0)), tape.constant(Tensor({1}, 0.0)),
                    rm, rv, Mode::Train, eps);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y.value()[i], xv[i], 1e-8);
}

TEST(BatchNorm, ConstantBatchGivesZeros) {
  Tape tape;
  Tensor rm({2}, 0.0), rv({2}, 1.0);
  Var y = batchnorm(tape.constant(Tensor({3, 4, 2}, 7.0)), tape.constant(Tensor({2}, 1.0)),
                    tape.constant(Tensor({2}, 0.0)), rm, rv, Mode::Train);
  for (double v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, InferUsesRunningStatistics) {
  Tape tape;
  Tensor rm({2}, {0.5, -1.0}), rv({2}, {4.0, 0.25});
  Tensor gamma({2}, {2.0, -1.0}), beta({2}, {0.1, 0.2});
  Tensor xv = random_tensor({3, 2}, 40);
  const double eps = 1e-3;
  Var y = batchnorm(tape.constant(xv), tape.constant(gamma), tape.constant(beta), rm, rv, Mode::Infer, eps);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      const double expect = gamma[j] * (xv.at({i, j}) - rm[j]) / std::sqrt(rv[j] + eps) + beta[j];
      EXPECT_NEAR(y.value().at({i, j}), expect, 1e-12);
    }
  // Infer mode on a single sample is allowed; train mode is not.
  EXPECT_NO_THROW(batchnorm(tape.constant(Tensor({1, 2}, 1.0)), tape.constant(gamma), tape.constant(beta),
                            rm, rv, Mode::Infer));
  EXPECT_THROW(batchnorm(tape.constant(Tensor({1, 2}, 1.0)), tape.constant(gamma), tape.constant(beta),
                         rm, rv, Mode::Train),
               DegenerateBatchError);
}

TEST(BatchNorm, TrainModeUpdatesRunningStatistics) {
  Tape tape;
  Tensor rm({1}, 0.0), rv({1}, 1.0);
  batchnorm(tape.constant(Tensor({2, 1}, {1.0, 3.0})), tape.constant(Tensor({1}, 1.0)),
            tape.constant(Tensor({1}, 0.0)), rm, rv, Mode::Train, 1e-3, 0.9);
  EXPECT_NEAR(rm[0], 0.1 * 2.0, 1e-15);
  EXPECT_NEAR(rv[0], 0.9 + 0.1 * 1.0, 1e-15);
}

TEST(Dropout, IdentityCases) {
  Tape tape;
  Rng rng(1);
  Tensor xv = random_tensor({10}, 50);
  EXPECT_EQ(dropout(tape.constant(xv), 0.0, Mode::Train, rng).value(), xv);
  EXPECT_EQ(dropout(tape.constant(xv), 0.5, Mode::Infer, rng).value(), xv);
  EXPECT_THROW(dropout(tape.constant(xv), 1.0, Mode::Train, rng), ContractError);
}

TEST(Dropout, MonteCarloMeanMatchesInput) {
  Tensor xv = random_tensor({8}, 51, 0.5, 2.0);
  std::vector<double> mean(8, 0.0);
  Rng rng(2024);
  const int trials = 10000;
  for (int k = 0; k < trials; ++k) {
    Tape tape;
    Var y = dropout(tape.constant(xv), 0.5, Mode::Train, rng);
    for (std::size_t i = 0; i < 8; ++i) mean[i] += y.value()[i] / trials;
  }
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(mean[i], xv[i], 0.05 * xv[i]);
}

TEST(Dropout, SameSeedSameMask) {
  Tensor xv = random_tensor({100}, 52);
  Tape tape;
  Rng a(9), b(9);
  EXPECT_EQ(dropout(tape.constant(xv), 0.3, Mode::Train, a).value(),
            dropout(tape.constant(xv), 0.3, Mode::Train, b).value());
}

TEST(Lstm, ZeroParametersGiveZeroOutputs) {
  Tape tape;
  Rng rng(0);
  Var y = lstm(tape.constant(random_tensor({5, 3}, 60)), tape.constant(Tensor({3, 8}, 0.0)),
               tape.constant(Tensor({2, 8}, 0.0)), tape.constant(Tensor({8}, 0.0)), 0.0, Mode::Infer,
               rng, true);
  EXPECT_EQ(y.shape(), (Shape{5, 2}));
  for (double v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, SingleStepHandComputed) {
  // Hidden size 1, one input feature, one step from zero state.
  const double x = 0.5;
  const double wi = 0.3, wf = -0.2, wc = 0.8, wo = 0.1;
  const double bi = 0.05, bf = 1.0, bc = -0.1, bo = 0.2;
  Tape tape;
  Rng rng(0);
  Var y = lstm(tape.constant(Tensor({1, 1}, {x})), tape.constant(Tensor({1, 4}, {wi, wf, wc, wo})),
               tape.constant(Tensor({1, 4}, {0.7, 0.7, 0.7, 0.7})),
               tape.constant(Tensor({4}, {bi, bf, bc, bo})), 0.0, Mode::Infer, rng);
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  const double i = sig(wi * x + bi);
  const double g = std::tanh(wc * x + bc);
  const double o = sig(wo * x + bo);
  const double c = i * g;  // forget gate multiplies the zero initial cell
  EXPECT_NEAR(y.value()[0], o * std::tanh(c), 1e-12);
}

TEST(Lstm, GradientMatchesFiniteDifferences) {
  for (bool seq : {false, true}) {
    const Tensor x = random_tensor({2, 4, 3}, 61);
    const Tensor w = random_tensor({3, 12}, 62, -0.5, 0.5);
    const Tensor u = random_tensor({3, 12}, 63, -0.5, 0.5);
    const Tensor b = random_tensor({12}, 64, -0.5, 0.5);
    auto op = [seq](Tape&, const std::vector<Var>& in) {
      Rng rng(7);
      return lstm(in[0], in[1], in[2], in[3], 0.2, Mode::Train, rng, seq);
    };
    auto sum_op = [op](Tape& tape, const std::vector<Var>& in) { return sum(op(tape, in)); };
    EXPECT_LT(gradcheck(sum_op, {x, w, u, b}), 1e-4);
    EXPECT_LT(gradcheck(reduce_with_weights(op, 65), {x, w, u, b}), 1e-4);
  }
}

TEST(Backward, SumOfSquares) {
  Tape tape;
  Var x = tape.variable(Tensor({1}, {3.0}));
  tape.backward(sum_squares(x));
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 6.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tape tape;
  Var x = tape.variable(Tensor({2}, {1, 2}));
  EXPECT_THROW(tape.backward(x), ContractError);
}

TEST(Backward, ParametersReceiveGradientsAndUntouchedStayZero) {
  Parameter used("used", Tensor({2}, {1.0, -2.0}));
  Parameter unused("unused", Tensor({3}, 1.0));
  Tape tape;
  Var u = tape.watch(used);
  tape.watch(unused);
  tape.backward(sum_squares(u));
  EXPECT_EQ(used.grad(), Tensor({2}, {2.0, -4.0}));
  EXPECT_EQ(unused.grad(), Tensor({3}, 0.0));
}

TEST(Backward, ReluDenseMatchesFiniteDifferences) {
  auto op = [](Tape&, const std::vector<Var>& in) {
    return activation(dense(in[0], in[1], in[2]), Activation::Relu);
  };
  for (std::uint64_t s = 0; s < 3; ++s) {
    EXPECT_LT(gradcheck(reduce_with_weights(op, 70 + s),
                        {random_tensor({3, 4}, 71 + s), random_tensor({4, 5}, 72 + s), random_tensor({5}, 73 + s)}),
              1e-4);
  }
}

TEST(Backward, ConvPoolDenseSoftmaxCrossEntropyChain) {
  Tensor target({1, 3}, {0.0, 1.0, 0.0});
  auto build = [target](Tape&, const std::vector<Var>& in) {
    Var c = conv3d(in[0], in[1], in[2], Padding::Same);
    Var p = maxpool(activation(c, Activation::Relu), {2, 2, 2}, {2, 2, 2});
    Var flat = reshape(p, Shape{1, shape_size(p.shape())});
    Var probs = activation(dense(flat, in[3], in[4]), Activation::Softmax);
    return loss_crossentropy(probs, target);
  };
  const Tensor x = random_tensor({4, 6, 6, 1}, 80);
  const Tensor k = random_tensor({3, 3, 3, 1, 2}, 81);
  const Tensor b = random_tensor({2}, 82, 0.0, 0.1);
  const Tensor w = random_tensor({2 * 3 * 3 * 2, 3}, 83);
  const Tensor bd = random_tensor({3}, 84);
  EXPECT_LT(gradcheck(build, {x, k, b, w, bd}), 1e-4);
}

TEST(Take, SelectsSliceOfSecondAxis) {
  Tape tape;
  Var x = tape.constant(Tensor({2, 3, 2}, std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}));
  const Tensor y = take(x, 1).value();
  EXPECT_EQ(y.shape(), (Shape{2, 2}));
  EXPECT_EQ(y.values(), (std::vector<double>{2, 3, 8, 9}));
  EXPECT_THROW(take(x, 3), ShapeError);
}

TEST(GradientSoundness, EveryOpOnThreeRandomShapes) {
  for (std::size_t s = 0; s < 3; ++s) {
    for (const auto& gc : sickfuse::testing::op_gradient_cases(s)) {
      EXPECT_LT(gradcheck(gc.build, gc.inputs), 1e-4) << gc.name << " on shape set " << s;
    }
  }
}

TEST(Regularization, AccumulatorEqualsDirectSum) {
  Tape tape;
  Tensor k1 = random_tensor({3, 3, 3, 1, 2}, 90), k2 = random_tensor({3, 3, 3, 2, 2}, 91);
  Var x = tape.constant(random_tensor({4, 4, 4, 1}, 92));
  Var h = conv3d(x, tape.variable(k1), tape.constant(Tensor({2}, 0.0)), Padding::Same, 0.01);
  conv3d(h, tape.variable(k2), tape.constant(Tensor({2}, 0.0)), Padding::Same, 0.01);
  double direct = 0.0;
  for (double w : k1.data()) direct += w * w;
  for (double w : k2.data()) direct += w * w;
  EXPECT_NEAR(tape.regularization_value(), 0.01 * direct, 1e-12);
  EXPECT_NEAR(tape.regularization().value().item(), 0.01 * direct, 1e-12);
}

TEST(FiniteDifference, ClosedFormCases) {
  auto sumsq = [](const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v * v;
    return s;
  };
  Tensor g = finite_difference_gradient(sumsq, Tensor({2}, {1, 2}), 1e-5);
  EXPECT_NEAR(g[0], 2.0, 1e-6);
  EXPECT_NEAR(g[1], 4.0, 1e-6);
  auto sumsin = [](const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += std::sin(v);
    return s;
  };
  EXPECT_NEAR(finite_difference_gradient(sumsin, Tensor({1}, {0.0}), 1e-5)[0], 1.0, 1e-6);
}

TEST(FiniteDifference, AgreesWithBackwardOnRandomDense) {
  const Tensor x = random_tensor({2, 4}, 95), w = random_tensor({4, 3}, 96), b = random_tensor({3}, 97);
  EXPECT_LT(gradcheck(reduce_with_weights([](Tape&, const std::vector<Var>& in) { return dense(in[0], in[1], in[2]); }, 98),
                      {x, w, b}),
            1e-4);
}

TEST(Losses, RmseExamples) {
  Tape tape;
  Tensor t({2, 1}, {1.0, 2.0});
  EXPECT_EQ(loss_rmse(tape.constant(t), t).value().item(), 0.0);
  EXPECT_NEAR(loss_rmse(tape.constant(Tensor({2, 1}, {4.0, 6.0})), t).value().item(), std::sqrt(12.5), 1e-12);
  EXPECT_NEAR(loss_rmse(tape.constant(Tensor({2, 1}, {7.0, 10.0})), t).value().item(), 2 * std::sqrt(12.5), 1e-12);
}

TEST(Losses, CrossEntropyExamples) {
  Tape tape;
  Tensor onehot({1, 4}, {0, 0, 1, 0});
  EXPECT_EQ(loss_crossentropy(tape.constant(onehot), onehot).value().item(), 0.0);
  EXPECT_NEAR(loss_crossentropy(tape.constant(Tensor({1, 4}, 0.25)), onehot).value().item(), std::log(4.0), 1e-12);
  const double l = loss_crossentropy(tape.constant(Tensor({1, 4}, {0.5, 0.5 - 1e-15, 1e-15, 0.0})), onehot)
                       .value()
                       .item();
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_NEAR(l, -std::log(1e-12), 1e-9);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Parameter p("w", Tensor({3}, {1.0, -2.0, 0.5}));
  Adam opt({&p});
  opt.step();
  EXPECT_EQ(p.value(), Tensor({3}, {1.0, -2.0, 0.5}));
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameter p("w", Tensor({3}, {1.0, -2.0, 0.5}));
  p.grad() = Tensor({3}, {0.3, -40.0, 1e-3});
  AdamOptions o;
  o.lr = 0.01;
  Adam opt({&p}, o);
  opt.step();
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  EXPECT_NEAR(p.value()[0], 1.0 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(p.value()[1], -2.0 + 0.01 * 40.0 / (40.0 + 1e-8), 1e-15);
  EXPECT_NEAR(std::abs(p.value()[2] - 0.5), 0.01, 1e-7);
}

TEST(Adam, TwoStepsMatchHandUnrolledRecurrence) {
  const double g = 0.7, lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Parameter p("w", Tensor({1}, {2.0}));
  Adam opt({&p});
  double w = 2.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    p.grad() = Tensor({1}, {g});
    opt.step();
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    w -= lr * mh / (std::sqrt(vh) + eps);
  }
  EXPECT_NEAR(p.value()[0], w, 1e-12);
  EXPECT_EQ(opt.steps(), 2u);
  EXPECT_EQ(opt.first_moment(0).shape(), p.value().shape());
}

TEST(Checkpoint, ByteLayoutAndRoundTrip) {
  Parameter a("conv.kernel", random_tensor({2, 3}, 99));
  Parameter b("bias", Tensor({1}, {-0.5}));
  const auto path = std::filesystem::temp_directory_path() / "sickfuse_ckpt_test.sfm";
  save_checkpoint(path, {&a, &b});
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  ASSERT_EQ(bytes.substr(0, 4), "SFM1");
  // First record: name length 11 as 64-bit little endian.
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 11);
  for (int i = 5; i < 12; ++i) EXPECT_EQ(bytes[i], 0);
  EXPECT_EQ(bytes.substr(12, 11), "conv.kernel");
  const std::size_t expected = 4 + (8 + 11 + 8 + 2 * 8 + 6 * 8) + (8 + 4 + 8 + 8 + 8);
  EXPECT_EQ(bytes.size(), expected);
  auto recs = load_checkpoint(path);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].name, "conv.kernel");
  EXPECT_EQ(recs[0].value, a.value());
  EXPECT_EQ(recs[1].value, b.value());
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsBadMagicAndTruncation) {
  const auto path = std::filesystem::temp_directory_path() / "sickfuse_bad.sfm";
  {
    std::ofstream out(path, std::ios::binary);
    out << "XXXX";
  }
  EXPECT_THROW(load_checkpoint(path), ParseError);
  {
    std::ofstream out(path, std::ios::binary);
    out << "SFM1";
    write_u64(out, 3);
    out << "ab";
  }
  EXPECT_THROW(load_checkpoint(path), ParseError);
  std::filesystem::remove(path);
}
