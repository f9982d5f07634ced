#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "susa/diagnostics.hpp"
#include "susa/rng.hpp"
#include "susa/tensor.hpp"

using namespace susa;

namespace {

Tensor random_param(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(s.size());
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::parameter(s, std::move(v));
}

// Gradient of f w.r.t. its inputs on a fresh tape.
void run_backward(const std::function<Tensor()>& f) {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f();
    tape.backward(loss);
}

}  // namespace

TEST(Tensor, SoftmaxOfEqualLogitsIsUniform) {
    Tensor p = softmax(Tensor::row({0, 0, 0}), 1);
    for (double v : p.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Tensor, LayerNormOfConstantRowIsZero) {
    Tensor g = Tensor::full({1, 4}, 1.0), b = Tensor::zeros({1, 4});
    Tensor y = layer_norm(Tensor::row({5, 5, 5, 5}), g, b);
    for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Tensor, CosineOfVectorWithItselfIsOne) {
    Tensor u = Tensor::row({0.3, -1.2, 2.5});
    EXPECT_NEAR(cosine_similarity(u, u).item(), 1.0, 1e-15);
}

TEST(Tensor, SumGradientIsOnes) {
    Tensor x = Tensor::parameter({1, 3}, {0.5, -2.0, 7.0});
    run_backward([&] { return sum(x); });
    EXPECT_EQ(x.grad(), (std::vector<double>{1, 1, 1}));
}

TEST(Tensor, MatmulGradientMatchesFiniteDifferences) {
    Rng rng(11);
    std::vector<Tensor> in = {random_param(rng, {3, 4}), random_param(rng, {4, 2})};
    GradCheckOptions o;
    o.eps = 1e-5;
    auto r = grad_check([](std::span<const Tensor> t) { return sum(matmul(t[0], t[1])); }, in, o);
    EXPECT_LT(r.worst(), 1e-6);
}

TEST(Tensor, CrossEntropyGradientIsSoftmaxMinusOneHot) {
    Tensor logits = Tensor::parameter({1, 4}, {0.2, -1.0, 1.5, 0.3});
    run_backward([&] { return cross_entropy(logits, 2); });
    std::vector<double> e(4);
    double z = 0;
    for (std::size_t i = 0; i < 4; ++i) z += e[i] = std::exp(logits.data()[i]);
    const auto g = logits.grad();
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(g[i], e[i] / z - (i == 2 ? 1.0 : 0.0), 1e-15);
    std::vector<Tensor> in = {logits};
    EXPECT_LT(grad_check([](std::span<const Tensor> t) { return cross_entropy(t[0], 2); }, in).worst(), 1e-7);
}

TEST(GradCheck, TanhIsAccurate) {
    Rng rng(3);
    std::vector<Tensor> in = {random_param(rng, {5, 6})};
    auto r = grad_check([](std::span<const Tensor> t) { return sum(tanh(t[0])); }, in);
    EXPECT_LT(r.worst(), 1e-7);
}

TEST(GradCheck, SoftmaxMatmulChainIsAccurate) {
    Rng rng(4);
    std::vector<Tensor> in = {random_param(rng, {3, 5}), random_param(rng, {5, 4})};
    Tensor w = Tensor::from({3, 4}, {1, -2, 3, 0.5, 0.1, 0.7, -1, 2, 1.5, -0.3, 0.2, 0.9});
    auto r = grad_check(
        [&](std::span<const Tensor> t) { return sum(elementwise_mul(softmax(matmul(t[0], t[1]), 1), w)); }, in);
    EXPECT_LT(r.worst(), 1e-5);
}

TEST(GradCheck, ConstantFunctionHasZeroGradient) {
    Tensor x = Tensor::parameter({2, 2}, {1, 2, 3, 4});
    std::vector<Tensor> in = {x};
    auto r = grad_check([](std::span<const Tensor>) { return Tensor::scalar(4.0); }, in);
    for (double g : x.grad()) EXPECT_EQ(g, 0.0);
    EXPECT_EQ(r.worst(), 0.0);
}

TEST(GradCheck, NonScalarLossFails) {
    Tensor x = Tensor::parameter({2, 2}, {1, 2, 3, 4});
    std::vector<Tensor> in = {x};
    EXPECT_THROW(grad_check([](std::span<const Tensor> t) { return tanh(t[0]); }, in), ShapeError);
}

TEST(GradCheck, EveryOpPassesOnRandomShapes) {
    for (const auto& c : diagnostics::check_ops(20, 1e-5, 1e-4)) {
        EXPECT_TRUE(c.passed) << c.op << " worst " << c.worst;
        EXPECT_GT(c.checked, 0u) << c.op;
    }
}

TEST(Tensor, SoftmaxRowsSumToOneAndIgnoreShift) {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = rng.between(1, 8), n = rng.between(1, 8);
        std::vector<double> v(m * n), shifted(m * n);
        for (std::size_t r = 0; r < m; ++r) {
            const double c = rng.uniform(-50, 50);
            for (std::size_t k = 0; k < n; ++k) {
                v[r * n + k] = rng.uniform(-5, 5);
                shifted[r * n + k] = v[r * n + k] + c;
            }
        }
        Tensor p = softmax(Tensor::from({m, n}, v), 1), q = softmax(Tensor::from({m, n}, shifted), 1);
        for (std::size_t r = 0; r < m; ++r) {
            double s = 0;
            for (std::size_t k = 0; k < n; ++k) {
                s += p.at(r, k);
                EXPECT_NEAR(p.at(r, k), q.at(r, k), 1e-12);
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(Tensor, BackwardTwiceIsBitIdentical) {
    Rng rng(6);
    Tensor a = random_param(rng, {4, 3}), b = random_param(rng, {3, 5});
    Tape tape;
    Tensor loss;
    {
        TapeScope scope(tape);
        loss = sum(log_softmax(matmul(tanh(a), b), 1));
    }
    tape.backward(loss);
    const auto ga = a.grad(), gb = b.grad();
    a.zero_grad();
    b.zero_grad();
    tape.backward(loss);
    EXPECT_EQ(a.grad(), ga);
    EXPECT_EQ(b.grad(), gb);
}

TEST(Tensor, ShapeMismatchThrows) {
    EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
    EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
    EXPECT_THROW(scalar_div(Tensor::zeros({2, 3}), Tensor::zeros({1, 2})), ShapeError);
}

TEST(Tensor, NoTapeNoRecording) {
    Tensor x = Tensor::parameter({1, 2}, {1, 2});
    Tensor y = tanh(x);
    EXPECT_FALSE(y.on_tape());
}
