#include "mmgs/ad/adam.hpp"
#include "mmgs/ad/dual.hpp"
#include "mmgs/ad/grad_check.hpp"
#include "mmgs/ad/nn.hpp"
#include "mmgs/ad/ops.hpp"
#include "mmgs/common/error.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>

namespace mmgs::ad {
namespace {

using TensorD = Tensor<double>;

TensorD random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0,
                      bool requires_grad = true) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) {
        x = rng.uniform(lo, hi);
    }
    return TensorD(std::move(shape), std::move(v), requires_grad);
}

/// sum(t * w) with a fixed random w, so every output coordinate matters.
TensorD weighted_sum(const TensorD& t, std::uint64_t seed) {
    Rng rng(seed);
    return sum(mul(t, random_tensor(rng, t.shape(), -1.0, 1.0, false)));
}

TEST(DenseProducts, ResultsDoNotDependOnHeapLayout) {
    Rng rng(77);
    std::vector<float> x(64 * 52), w(52 * 128), b(128), img(16 * 16 * 3), cw(27 * 16), cb(16);
    for (auto* v : {&x, &w, &b, &img, &cw, &cb}) {
        for (auto& e : *v) e = static_cast<float>(rng.uniform(-1, 1));
    }
    // Tensors from earlier runs stay alive so freed blocks are not reused.
    std::vector<Tensor<float>> alive;
    auto run = [&] {
        const Tensor<float> input({64, 52}, x, true), weight({52, 128}, w, true), bias({128}, b, true);
        const Tensor<float> image({16, 16, 3}, img, true), conv_w({27, 16}, cw, true), conv_b({16}, cb, true);
        auto loss = add(sum(square(linear(input, weight, bias))),
                        sum(square(conv3x3(image, conv_w, conv_b))));
        backward(loss);
        std::vector<float> all{loss.item()};
        for (const auto* t : {&input, &image, &weight, &bias, &conv_w, &conv_b}) {
            all.insert(all.end(), t->grad().begin(), t->grad().end());
            alive.push_back(*t);
        }
        return all;
    };
    const auto reference = run();
    // Live spacer blocks of varying size shift later allocations.
    std::vector<std::vector<float>> spacers;
    for (std::size_t k = 1; k <= 16; ++k) {
        spacers.emplace_back(k);
        EXPECT_EQ(run(), reference) << "spacer " << k;
    }
}

TEST(Backward, SumGivesOnes) {
    TensorD x({3}, {0.3, -2.0, 5.0}, true);
    backward(sum(x));
    EXPECT_EQ(x.to_vector(), (std::vector<double>{0.3, -2.0, 5.0}));
    const std::vector<double> g(x.grad().begin(), x.grad().end());
    EXPECT_EQ(g, (std::vector<double>{1, 1, 1}));
}

TEST(Backward, SumOfSquares) {
    TensorD x({2}, {2.0, -1.0}, true);
    backward(sum(mul(x, x)));
    EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
    EXPECT_DOUBLE_EQ(x.grad()[1], -2.0);
}

TEST(Backward, MatrixVectorGivesColumnSums) {
    Rng rng(3);
    const TensorD a = random_tensor(rng, {4, 3}, -1, 1, false);
    TensorD x = random_tensor(rng, {3, 1});
    backward(sum(matmul(a, x)));
    for (std::size_t j = 0; j < 3; ++j) {
        double column = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            column += a.at(i * 3 + j);
        }
        EXPECT_NEAR(x.grad()[j], column, 1e-14);
    }
}

TEST(Backward, AccumulatesAcrossCalls) {
    TensorD x({2}, {1.0, 2.0}, true);
    backward(sum(scale(x, 3.0)));
    backward(sum(scale(x, 3.0)));
    EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
    EXPECT_DOUBLE_EQ(x.grad()[1], 6.0);
}

TEST(Backward, NonScalarLossIsRejected) {
    TensorD x({2}, {1.0, 2.0}, true);
    EXPECT_THROW(backward(scale(x, 2.0)), ContractViolation);
}

TEST(Backward, EveryReachableLeafGetsAGrad) {
    TensorD a({2}, {1.0, 2.0}, true);
    TensorD b({2}, {3.0, 4.0}, true);
    TensorD unused({2}, {0.0, 0.0}, true);
    const auto loss = sum(mul(relu(a), b));
    backward(loss);
    EXPECT_TRUE(a.has_grad());
    EXPECT_TRUE(b.has_grad());
    EXPECT_FALSE(unused.has_grad());
}

TEST(Backward, RepeatedPassesAreBitIdentical) {
    Rng rng(11);
    TensorD w = random_tensor(rng, {6, 5});
    const TensorD x = random_tensor(rng, {4, 6}, -1, 1, false);
    auto run = [&]() {
        w.clear_grad();
        backward(sum(tanh(matmul(x, w))));
        return std::vector<double>(w.grad().begin(), w.grad().end());
    };
    EXPECT_EQ(run(), run());
}

TEST(Tensor, ShapeContract) {
    EXPECT_THROW(TensorD({2, 0}, {}), ContractViolation);
    EXPECT_THROW(TensorD({2, 2}, {1.0, 2.0, 3.0}), ContractViolation);
    TensorD x({2}, {1.0, 2.0}, true);
    backward(sum(x));
    EXPECT_EQ(x.grad().size(), x.numel());
}

TEST(GradCheck, QuadraticIsNearlyExact) {
    const auto r = grad_check([](const TensorD& x) { return sum(mul(x, x)); },
                              TensorD({2}, {1.0, 2.0}), 1e-5);
    ASSERT_TRUE(r.finite());
    EXPECT_LT(r.max_relative_error, 1e-6);
    EXPECT_EQ(r.coordinates_checked, 2u);
}

TEST(GradCheck, ConstantFunction) {
    const auto r = grad_check([](const TensorD& x) { return sum(scale(x, 0.0)); },
                              TensorD({3}, {1.0, 2.0, 3.0}), 1e-4);
    EXPECT_LT(r.max_relative_error, 1e-12);
}

TEST(GradCheck, ReportsNonFiniteCoordinate) {
    // log-like blow-up: 1 / x evaluated at x = h hits zero under the minus step.
    const double h = 1e-4;
    const auto r = grad_check(
        [](const TensorD& x) {
            const auto v = x.to_vector();
            const double bad = v[1] == 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
            return add_scalar(sum(x), bad);
        },
        TensorD({2}, {0.5, h}), h);
    ASSERT_FALSE(r.finite());
    EXPECT_EQ(*r.nonfinite_coordinate, 1u);
    EXPECT_FALSE(r.passed(1e-3));
}

TEST(GradCheck, RejectsNonPositiveStep) {
    EXPECT_THROW(grad_check([](const TensorD& x) { return sum(x); }, TensorD({1}, {1.0}), 0.0),
                 ContractViolation);
}

// Every differentiable op, double precision, h = 1e-4, tolerance 1e-3.
struct OpCase {
    const char* name;
    std::function<TensorD(std::vector<TensorD>&)> build;
    std::vector<Shape> shapes;
    double lo = -1.0, hi = 1.0;
};

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
    const auto& c = GetParam();
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        Rng rng(seed * 101);
        std::vector<TensorD> inputs;
        for (const auto& s : c.shapes) {
            inputs.push_back(random_tensor(rng, s, c.lo, c.hi));
        }
        const auto r = grad_check_parameters([&]() { return weighted_sum(c.build(inputs), seed); },
                                             inputs, {1e-4, 0, seed});
        EXPECT_TRUE(r.passed(1e-3)) << c.name << " seed " << seed << " error "
                                    << r.max_relative_error << " at " << r.worst_tensor << "["
                                    << r.worst_coordinate << "]";
    }
}

const TensorD& in(std::vector<TensorD>& v, std::size_t i) { return v[i]; }

INSTANTIATE_TEST_SUITE_P(
    AllOps, OpGradient,
    ::testing::Values(
        OpCase{"add", [](auto& v) { return add(in(v, 0), in(v, 1)); }, {{3, 4}, {3, 4}}},
        OpCase{"sub", [](auto& v) { return sub(in(v, 0), in(v, 1)); }, {{3, 4}, {3, 4}}},
        OpCase{"mul", [](auto& v) { return mul(in(v, 0), in(v, 1)); }, {{3, 4}, {3, 4}}},
        OpCase{"scale", [](auto& v) { return scale(in(v, 0), 2.5); }, {{5}}},
        OpCase{"add_scalar", [](auto& v) { return add_scalar(in(v, 0), 0.7); }, {{5}}},
        OpCase{"relu", [](auto& v) { return relu(in(v, 0)); }, {{4, 4}}},
        OpCase{"elu", [](auto& v) { return elu(in(v, 0)); }, {{4, 4}}},
        OpCase{"leaky_relu", [](auto& v) { return leaky_relu(in(v, 0), 0.2); }, {{4, 4}}},
        OpCase{"tanh", [](auto& v) { return tanh(in(v, 0)); }, {{4, 4}}, -2, 2},
        OpCase{"sigmoid", [](auto& v) { return sigmoid(in(v, 0)); }, {{4, 4}}, -3, 3},
        OpCase{"exp", [](auto& v) { return exp(in(v, 0)); }, {{4, 4}}},
        OpCase{"square", [](auto& v) { return square(in(v, 0)); }, {{4, 4}}},
        OpCase{"mean", [](auto& v) { return mean(in(v, 0)); }, {{3, 5}}},
        OpCase{"matmul", [](auto& v) { return matmul(in(v, 0), in(v, 1)); }, {{3, 4}, {4, 2}}},
        OpCase{"linear", [](auto& v) { return linear(in(v, 0), in(v, 1), in(v, 2)); },
               {{5, 4}, {4, 3}, {3}}},
        OpCase{"add_row", [](auto& v) { return add_row(in(v, 0), in(v, 1)); }, {{4, 3}, {3}}},
        OpCase{"mul_col", [](auto& v) { return mul_col(in(v, 0), in(v, 1)); }, {{4, 3}, {4}}},
        OpCase{"concat_cols",
               [](auto& v) { return concat_cols<double>(std::vector<TensorD>{v[0], v[1]}); },
               {{3, 2}, {3, 4}}},
        OpCase{"concat_rows",
               [](auto& v) { return concat_rows<double>(std::vector<TensorD>{v[0], v[1]}); },
               {{2, 3}, {4, 3}}},
        OpCase{"slice_cols", [](auto& v) { return slice_cols(in(v, 0), 1, 3); }, {{3, 5}}},
        OpCase{"slice_rows", [](auto& v) { return slice_rows(in(v, 0), 1, 3); }, {{5, 3}}},
        OpCase{"gather_rows",
               [](auto& v) {
                   const std::vector<std::size_t> rows{2, 0, 2, 1};
                   return gather_rows<double>(v[0], rows);
               },
               {{3, 4}}},
        OpCase{"reshape", [](auto& v) { return reshape(in(v, 0), {2, 6}); }, {{3, 4}}},
        OpCase{"mean_rows", [](auto& v) { return mean_rows(in(v, 0)); }, {{5, 3}}},
        OpCase{"softmax_rows", [](auto& v) { return softmax_rows(in(v, 0)); }, {{4, 5}}, -2, 2},
        OpCase{"normalize_rows", [](auto& v) { return normalize_rows(in(v, 0)); }, {{4, 4}}},
        OpCase{"conv3x3",
               [](auto& v) { return conv3x3(in(v, 0), in(v, 1), in(v, 2)); },
               {{5, 6, 2}, {18, 3}, {3}}}),
    [](const auto& info) { return std::string(info.param.name); });

TEST(Ops, SoftmaxRowsSumToOne) {
    Rng rng(5);
    const auto s = softmax_rows(random_tensor(rng, {6, 7}, -30, 30, false));
    for (std::size_t r = 0; r < 6; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < 7; ++c) {
            total += s.at(r * 7 + c);
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(Ops, ShapeMismatchesThrow) {
    TensorD a({2, 3}, std::vector<double>(6, 1.0));
    TensorD b({3, 2}, std::vector<double>(6, 1.0));
    EXPECT_THROW(add(a, b), ContractViolation);
    EXPECT_THROW(matmul(a, a), ContractViolation);
    EXPECT_THROW(normalize_rows(TensorD({1, 3}, {0.0, 0.0, 0.0})), ContractViolation);
}

TEST(Ops, DropoutIsIdentityOutsideTraining) {
    Rng rng(1);
    const TensorD x = random_tensor(rng, {4, 4}, -1, 1, false);
    const auto y = dropout(x, 0.1, false, rng);
    EXPECT_EQ(x.to_vector(), y.to_vector());
}

TEST(Ops, DropoutIsSeededAndInverted) {
    const TensorD x = TensorD::full({2000}, 1.0);
    Rng a(9), b(9);
    const auto ya = dropout(x, 0.1, true, a).to_vector();
    const auto yb = dropout(x, 0.1, true, b).to_vector();
    EXPECT_EQ(ya, yb);
    double total = 0.0;
    for (double v : ya) {
        EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.9) < 1e-12);
        total += v;
    }
    EXPECT_NEAR(total / 2000.0, 1.0, 0.05);
}

TEST(Conv3x3, ZeroImageAndZeroBiasGiveZeros) {
    ParameterStore<double> store;
    Rng rng(2);
    const auto conv = make_conv3x3(store, "c", 3, 8, rng);
    const auto out = conv(TensorD::zeros({6, 5, 3}));
    ASSERT_EQ(out.shape(), (Shape{6, 5, 8}));
    for (double v : out.data()) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    TensorD p({3}, {1.0, -2.0, 0.5}, true);
    AdamState<double> state;
    for (int step = 0; step < 3; ++step) {
        p.zero_grad();
        std::vector<TensorD> params{p};
        adam_step<double>(params, state);
    }
    EXPECT_EQ(p.to_vector(), (std::vector<double>{1.0, -2.0, 0.5}));
    EXPECT_EQ(state.step_count, 3u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    TensorD p({1}, {1.0}, true);
    backward(sum(p)); // grad = 1
    AdamState<double> state;
    std::vector<TensorD> params{p};
    adam_step<double>(params, state);
    // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
    EXPECT_NEAR(p.item(), 1.0 - 1e-3 / (1.0 + 1e-8), 1e-15);
    EXPECT_FALSE(p.has_grad());
}

TEST(Adam, TwoStepsDecreaseConvexQuadratic) {
    TensorD p({2}, {1.5, -0.5}, true);
    auto f = [&]() { return sum(square(p)); };
    AdamState<double> state;
    state.config.lr = 0.05;
    double previous = f().item();
    for (int step = 0; step < 2; ++step) {
        backward(f());
        std::vector<TensorD> params{p};
        adam_step<double>(params, state);
        const double now = f().item();
        EXPECT_LT(now, previous);
        previous = now;
    }
}

TEST(Adam, MissingGradientNamesParameter) {
    TensorD p({1}, {1.0}, true);
    p.set_name("decoder.bias");
    AdamState<double> state;
    std::vector<TensorD> params{p};
    try {
        adam_step<double>(params, state);
        FAIL() << "expected an error";
    } catch (const ContractViolation& e) {
        EXPECT_NE(std::string(e.what()).find("decoder.bias"), std::string::npos);
    }
}

TEST(Dual, ProductAndQuotientRules) {
    using D = Dual<double, 2>;
    const D x = D::variable(3.0, 0), y = D::variable(2.0, 1);
    const D f = x * y / (x + y) + exp(x) * sqrt(y);
    const double sx = std::sqrt(2.0), ex = std::exp(3.0);
    EXPECT_NEAR(f.d[0], (2.0 * 5.0 - 6.0) / 25.0 + ex * sx, 1e-12);
    EXPECT_NEAR(f.d[1], (3.0 * 5.0 - 6.0) / 25.0 + ex * 0.5 / sx, 1e-12);
}

} // namespace
} // namespace mmgs::ad
