#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <tuple>

#include "cdnn/layers.hpp"
#include "cdnn/network.hpp"
#include "test_util.hpp"

using namespace cdnn;
using testutil::max_abs;
using testutil::max_abs_diff;
using testutil::randn;

namespace {

CirculantStack random_stack(std::size_t n_in, std::size_t n_out, std::size_t b, Rng& rng) {
    CirculantStack p(n_in, n_out, b);
    p.coeffs = randn(p.coeffs.size(), rng);
    p.bias = randn(p.bias.size(), rng);
    return p;
}

DenseParams as_dense(const CirculantStack& p) {
    DenseParams d(p.n_in(), p.n_out());
    d.weight = to_dense(p);
    d.bias = p.bias;
    return d;
}

}  // namespace

TEST(LayerSpec, ParameterCounts) {
    EXPECT_EQ(LayerSpec::dense(64, 64).param_count(), 64u * 64u + 64u);
    EXPECT_EQ(LayerSpec::cdlinear(64, 64, 4).param_count(), 64u * 64u / 4u + 64u);
    EXPECT_EQ(LayerSpec::cdlinear(64, 16, 8).param_count(), 64u * 16u / 8u + 16u);
    EXPECT_EQ(LayerSpec::relu(10).param_count(), 0u);
}

TEST(LayerSpec, BlockMustDivideBothDimensions) {
    EXPECT_THROW(LayerSpec::cdlinear(8, 8, 3).validate(), std::invalid_argument);
    EXPECT_THROW(LayerSpec::cdlinear(8, 6, 4).validate(), std::invalid_argument);
    EXPECT_THROW(LayerSpec::cdlinear(8, 8, 0).validate(), std::invalid_argument);
    EXPECT_THROW(CirculantStack(10, 12, 4), std::invalid_argument);
    EXPECT_NO_THROW(LayerSpec::cdlinear(12, 12, 3).validate());
}

TEST(Architectures, ParameterCountsMatchTable) {
    EXPECT_EQ(param_count(dense_mlp()), 8970u);
    EXPECT_EQ(param_count(cd_mlp_b4()), 2380u);
    EXPECT_EQ(param_count(cd_mlp_b8()), 1296u);
    EXPECT_EQ(init_network(cd_mlp_b8(), 0).param_count(), 1296u);
    EXPECT_EQ(cd_mlp_b4().output_dim(), 12u);
    EXPECT_EQ(cd_mlp_b8().output_dim(), 16u);
    EXPECT_THROW(architecture_by_name("cd_b5"), std::invalid_argument);
}

TEST(Architectures, MismatchedLayersRejected) {
    NetworkSpec s{"bad", {LayerSpec::dense(4, 8), LayerSpec::relu(8), LayerSpec::dense(6, 2)}, 2};
    EXPECT_THROW(s.validate(), std::invalid_argument);
    NetworkSpec s2{"wide", {LayerSpec::dense(4, 8)}, 9};
    EXPECT_THROW(s2.validate(), std::invalid_argument);
}

TEST(CdLinear, ToDenseLayout) {
    CirculantStack p(4, 2, 2);  // k_out = 1, k_in = 2
    p.coeffs = {1, 2, 3, 4};
    const Matrix w = to_dense(p);
    const Matrix want{{1, 2, 3, 4}, {2, 1, 4, 3}};
    EXPECT_EQ(w, want);
}

TEST(CdLinear, ForwardMatchesMaterializedMatrix) {
    Rng rng(21);
    for (auto [ni, no, b] : {std::tuple{8, 8, 2}, {16, 8, 4}, {12, 12, 3}, {64, 16, 8}, {10, 15, 5}}) {
        const CirculantStack p = random_stack(ni, no, b, rng);
        const Matrix x = randn(5, ni, rng);
        const Matrix y = cdlinear_forward(p, x).first;
        const Matrix ref = dense_forward(as_dense(p), x).first;
        EXPECT_LE(max_abs_diff(y.data(), ref.data()), 1e-12 * std::max(1.0, max_abs(ref.data())));
    }
}

TEST(CdLinear, BackwardMatchesMaterializedMatrix) {
    Rng rng(22);
    for (auto [ni, no, b] : {std::tuple{8, 8, 2}, {16, 8, 4}, {12, 12, 3}, {64, 16, 8}}) {
        const CirculantStack p = random_stack(ni, no, b, rng);
        const Matrix x = randn(4, ni, rng);
        const Matrix dy = randn(4, no, rng);
        const auto cache = cdlinear_forward(p, x).second;
        const CirculantGrads g = cdlinear_backward(p, cache, dy);
        const DenseParams d = as_dense(p);
        const DenseGrads gd = dense_backward(d, dense_forward(d, x).second, dy);

        EXPECT_LE(max_abs_diff(g.input.data(), gd.input.data()), 1e-12 * std::max(1.0, max_abs(gd.input.data())));
        EXPECT_LE(max_abs_diff(g.bias, gd.bias), 1e-12);
        // W[iB+k][jB+l] = c_ij[(k-l) mod B], so dc_ij[m] sums dW along a wrapped diagonal.
        const std::size_t B = b;
        for (std::size_t i = 0; i < p.k_out; ++i)
            for (std::size_t j = 0; j < p.k_in; ++j)
                for (std::size_t m = 0; m < B; ++m) {
                    double want = 0.0;
                    for (std::size_t k = 0; k < B; ++k) want += gd.weight(i * B + k, j * B + (k + B - m) % B);
                    EXPECT_NEAR(g.coeffs[(i * p.k_in + j) * B + m], want, 1e-11);
                }
    }
}

TEST(CdLinear, BlockSizeOneIsDense) {
    Rng rng(23);
    const CirculantStack p = random_stack(5, 3, 1, rng);
    DenseParams d(5, 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 5; ++j) d.weight(i, j) = p.coeffs[i * 5 + j];
    d.bias = p.bias;
    const Matrix x = randn(4, 5, rng);
    EXPECT_LE(max_abs_diff(cdlinear_forward(p, x).first.data(), dense_forward(d, x).first.data()), 1e-12);
}

TEST(CdLinear, SingleBlockIsCircularConvolution) {
    Rng rng(24);
    CirculantStack p(6, 6, 6);
    p.coeffs = randn(6, rng);
    const RealVector x = randn(6, rng);
    const Matrix y = cdlinear_forward(p, Matrix(1, 6, x)).first;
    EXPECT_LE(max_abs_diff(y.data(), circulant_matvec_direct(p.coeffs, x)), 1e-12);
}

TEST(CdLinear, LinearInInput) {
    Rng rng(25);
    const CirculantStack p = random_stack(12, 8, 4, rng);
    const Matrix x1 = randn(3, 12, rng), x2 = randn(3, 12, rng);
    const double a = 0.7, b = -1.9;
    Matrix mix(3, 12);
    for (std::size_t i = 0; i < mix.size(); ++i) mix.data()[i] = a * x1.data()[i] + b * x2.data()[i];
    const Matrix y1 = cdlinear_forward(p, x1).first, y2 = cdlinear_forward(p, x2).first;
    const Matrix ym = cdlinear_forward(p, mix).first;
    for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t o = 0; o < 8; ++o) {
            const double want = a * (y1(s, o) - p.bias[o]) + b * (y2(s, o) - p.bias[o]) + p.bias[o];
            EXPECT_NEAR(ym(s, o), want, 1e-12);
        }
}

TEST(CdLinear, InputWidthChecked) {
    CirculantStack p(8, 8, 2);
    EXPECT_THROW(cdlinear_forward(p, Matrix(2, 6)), std::invalid_argument);
}

TEST(Relu, ForwardAndSubgradientAtZero) {
    const Matrix x{{-1.0, 0.0, 2.0}};
    auto [y, cache] = relu_forward(x);
    EXPECT_EQ(y, (Matrix{{0.0, 0.0, 2.0}}));
    const Matrix d = relu_backward(cache, Matrix{{5.0, 5.0, 5.0}});
    EXPECT_EQ(d, (Matrix{{0.0, 0.0, 5.0}}));
}

TEST(Loss, MseValueAndGradient) {
    const Matrix y{{1.0, 2.0}, {0.0, 0.0}};
    const Matrix t{{0.0, 0.0}, {0.0, 1.0}};
    const LossResult r = mse_loss(y, t);
    EXPECT_DOUBLE_EQ(r.loss, 0.5 * (1.0 + 4.0 + 1.0) / 2.0);
    EXPECT_EQ(r.grad, (Matrix{{0.5, 1.0}, {0.0, -0.5}}));
    EXPECT_THROW(mse_loss(y, Matrix(2, 3)), std::invalid_argument);
}

TEST(Loss, CrossEntropyUniformLogits) {
    const Matrix y(2, 5, 3.0);
    Matrix t(2, 5);
    t(0, 1) = 1.0;
    t(1, 4) = 1.0;
    const LossResult r = softmax_cross_entropy(y, t);
    EXPECT_NEAR(r.loss, std::log(5.0), 1e-14);
    EXPECT_NEAR(r.grad(0, 1), (0.2 - 1.0) / 2.0, 1e-15);
    EXPECT_NEAR(r.grad(0, 0), 0.2 / 2.0, 1e-15);
}

TEST(Loss, CrossEntropyStableForLargeLogits) {
    Matrix y{{1000.0, 0.0}};
    Matrix t{{1.0, 0.0}};
    const LossResult r = softmax_cross_entropy(y, t);
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_NEAR(r.loss, 0.0, 1e-12);
}

TEST(Slicing, DropsTailAndZeroPadsGradient) {
    const Matrix y{{1, 2, 3, 4}};
    EXPECT_EQ(slice_logits(y, 2), (Matrix{{1, 2}}));
    EXPECT_THROW(slice_logits(y, 5), std::invalid_argument);
    EXPECT_EQ(slice_logits_backward(Matrix{{7, 8}}, 4), (Matrix{{7, 8, 0, 0}}));
}

TEST(Network, PredictBreaksTiesTowardLowestIndex) {
    NetworkSpec spec{"toy", {LayerSpec::dense(2, 3)}, 3};
    Network net = init_network(spec, 0);
    auto& d = std::get<DenseParams>(net.layers[0]);
    d.weight = Matrix(3, 2);
    d.bias = {1.0, 1.0, 0.5};
    EXPECT_EQ(predict(net, Matrix(1, 2)), std::vector<int>{0});
}

TEST(Network, BackwardMatchesFiniteDifferences) {
    Rng rng(26);
    const NetworkSpec spec = make_mlp("small", {8, 8, 8, 4}, 2, 3);
    Network net = init_network(spec, 5);
    for (auto& layer : net.layers)
        if (auto* c = std::get_if<CirculantStack>(&layer)) c->bias = randn(c->bias.size(), rng);
    const Matrix x = randn(4, 8, rng);
    const std::vector<int> labels{0, 2, 1, 2};
    for (LossKind kind : {LossKind::mse, LossKind::cross_entropy}) {
        const ForwardResult fwd = network_forward(net, x);
        const Matrix logits = slice_logits(fwd.output, 3);
        const LossResult loss = evaluate_loss(kind, logits, one_hot(labels, 3));
        const NetworkGrads g = network_backward(net, fwd, slice_logits_backward(loss.grad, 4));
        auto params = net.parameters();
        ASSERT_EQ(params.size(), g.size());
        for (std::size_t t = 0; t < params.size(); ++t)
            for (std::size_t i = 0; i < params[t].size(); i += 3) {
                const double h = 1e-6, saved = params[t][i];
                params[t][i] = saved + h;
                const double up = network_loss(net, x, labels, kind);
                params[t][i] = saved - h;
                const double down = network_loss(net, x, labels, kind);
                params[t][i] = saved;
                EXPECT_NEAR(g[t][i], (up - down) / (2 * h), 1e-6) << "tensor " << t << " index " << i;
            }
    }
}
