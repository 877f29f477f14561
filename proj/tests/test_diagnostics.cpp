#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "cdnn/data.hpp"
#include "cdnn/diagnostics.hpp"
#include "cdnn/verify.hpp"
#include "test_util.hpp"

using namespace cdnn;
using testutil::max_abs;
using testutil::max_abs_diff;
using testutil::randn;

TEST(ConditionNumber, RatioAndDegenerateCase) {
    const RealVector e{4.0, 1.0, 2.0};
    EXPECT_EQ(condition_number(e).first, 4.0);
    EXPECT_FALSE(condition_number(e).second);
    const RealVector z{0.0, 1.0};
    EXPECT_TRUE(std::isinf(condition_number(z).first));
    EXPECT_TRUE(condition_number(z).second);
    EXPECT_THROW(condition_number(RealVector{}), std::invalid_argument);
}

TEST(ClosedForm, ImpulseAndFlatSpectrumInputsGiveUnitKappa) {
    Matrix impulse(3, 8);
    for (std::size_t s = 0; s < 3; ++s) impulse(s, 0) = impulse(s, 4) = 1.0;
    const LayerSpectrum a = hessian_spectrum_closed_form(impulse, 4);
    EXPECT_EQ(a.kappa, 1.0);
    EXPECT_EQ(a.eigenvalues.size(), 8u);

    const Matrix flat = gen_synthetic(SyntheticKind::flat_spectrum, 50, 16, 4, 3);
    const LayerSpectrum b = hessian_spectrum_closed_form(flat, 4);
    EXPECT_NEAR(b.kappa, 1.0, 1e-12);
    for (double v : b.eigenvalues) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(ClosedForm, ZeroBlockIsDegenerate) {
    Matrix x(2, 8);
    x(0, 0) = 1.0;  // second block identically zero
    const LayerSpectrum s = hessian_spectrum_closed_form(x, 4);
    EXPECT_TRUE(s.degenerate);
    EXPECT_TRUE(std::isinf(s.kappa));
    EXPECT_THROW(hessian_spectrum_closed_form(x, 3), std::invalid_argument);
}

// The block loss is 0.5 ||C(x) c - t||^2, so its Hessian in c is C(x)^T C(x).
TEST(BruteForce, HessianIsGramOfInputCirculant) {
    Rng rng(41);
    for (std::size_t b : {2, 3, 4, 8}) {
        const RealVector c = randn(b, rng), x = randn(b, rng), t = randn(b, rng);
        const BruteForceHessian h = hessian_brute_force(c, x, t);
        const Matrix cx = materialize_circulant(x);
        const Matrix gram = matmul(cx.transposed(), cx);
        EXPECT_LE(max_abs_diff(h.hessian.data(), gram.data()), 1e-12 * max_abs(gram.data()));
        EXPECT_LE(h.circulant_deviation, 1e-12 * max_abs(gram.data()));
    }
}

TEST(BruteForce, HessianIndependentOfWeightsAndTargets) {
    Rng rng(42);
    const RealVector x = randn(5, rng);
    const BruteForceHessian a = hessian_brute_force(randn(5, rng), x, randn(5, rng));
    const BruteForceHessian b = hessian_brute_force(randn(5, rng), x, randn(5, rng));
    EXPECT_EQ(a.hessian, b.hessian);
}

TEST(BruteForce, ClosedFormAgreesOnRandomTrials) {
    const ClosedFormReport rep = verify_closed_form_spectrum({2, 3, 4, 8}, 10, 7);
    EXPECT_EQ(rep.trials.size(), 40u);
    EXPECT_LT(rep.max_explicit_deviation, 1e-8);
    EXPECT_LT(rep.max_fd_deviation, 1e-4);
    EXPECT_LE(rep.max_circulant_deviation, 1e-12);
    EXPECT_TRUE(rep.passed());
}

TEST(BruteForce, RejectsMismatchedLengths) {
    EXPECT_THROW(hessian_brute_force(RealVector{1, 2}, RealVector{1, 2, 3}, RealVector{1, 2}),
                 std::invalid_argument);
}

TEST(Jacobi, KnownTwoByTwo) {
    const Matrix a{{2, 1}, {1, 2}};
    const RealVector e = sorted_eigenvalues(a);
    EXPECT_NEAR(e[0], 1.0, 1e-14);
    EXPECT_NEAR(e[1], 3.0, 1e-14);
}

TEST(Jacobi, ReconstructsRandomSymmetricMatrix) {
    Rng rng(43);
    for (std::size_t n : {1, 3, 7, 16}) {
        const Matrix g = randn(n, n, rng);
        const Matrix a = matmul(g, g.transposed());
        const EigenDecomposition d = jacobi_eigen(a);
        Matrix rec(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t k = 0; k < n; ++k) rec(i, j) += d.vectors(i, k) * d.values[k] * d.vectors(j, k);
        EXPECT_LE(max_abs_diff(rec.data(), a.data()), 1e-10 * max_abs(a.data())) << "n=" << n;
        const Matrix vtv = matmul(d.vectors.transposed(), d.vectors);
        EXPECT_LE(max_abs_diff(vtv.data(), Matrix::identity(n).data()), 1e-12);
    }
}

TEST(DenseSpectrum, IdentityAndDiagonal) {
    const LayerSpectrum id = dense_hessian_spectrum(Matrix::identity(6));
    for (double v : id.eigenvalues) EXPECT_NEAR(v, 1.0, 1e-15);
    EXPECT_EQ(id.kappa, 1.0);
    const LayerSpectrum d = dense_hessian_spectrum(Matrix{{1, 0, 0}, {0, 2, 0}, {0, 0, 3}});
    EXPECT_NEAR(d.eigenvalues[0], 1.0, 1e-14);
    EXPECT_NEAR(d.eigenvalues[2], 9.0, 1e-14);
    EXPECT_NEAR(d.kappa, 9.0, 1e-13);
}

TEST(DenseSpectrum, WideMatrixUsesSmallerGram) {
    Rng rng(44);
    const Matrix w = randn(10, 64, rng);
    const LayerSpectrum s = dense_hessian_spectrum(w);
    EXPECT_EQ(s.eigenvalues.size(), 10u);
    double tr = 0.0;
    for (double v : s.eigenvalues) tr += v;
    EXPECT_NEAR(tr, frobenius_norm_sq(w), 1e-10 * tr);
    EXPECT_FALSE(s.degenerate);
}

TEST(ModelKappa, ArithmeticMeanOfLayers) {
    Network net = init_network(make_mlp("toy", {4, 4, 4}, 0, 4), 1);
    std::get<DenseParams>(net.layers[0]).weight = Matrix::identity(4);
    std::get<DenseParams>(net.layers[2]).weight = Matrix{{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 3}};
    const SpectrumReport r = model_condition_number(net, Matrix(2, 4, 1.0));
    ASSERT_EQ(r.layers.size(), 2u);
    EXPECT_NEAR(r.mean_kappa, (1.0 + 9.0) / 2.0, 1e-12);
    EXPECT_FALSE(r.mixed_methods);
    EXPECT_FALSE(r.degenerate);
}

TEST(ModelKappa, CirculantLayersUseRecordedInputs) {
    const Network net = init_network(cd_mlp_b4(), 2);
    const Matrix x = gen_synthetic(SyntheticKind::flat_spectrum, 20, 64, 4, 5);
    const SpectrumReport r = model_condition_number(net, x);
    ASSERT_EQ(r.layers.size(), 3u);
    EXPECT_NEAR(r.layers[0].kappa, 1.0, 1e-12);
    for (const auto& l : r.layers) EXPECT_EQ(l.method, SpectrumMethod::cd_fft);
}

TEST(ConditionBound, PopulationKappaIsExactlyOne) {
    EXPECT_EQ(population_kappa(4, 4), 1.0);
    EXPECT_EQ(population_kappa(8, 64), 1.0);
}

TEST(ConditionBound, HoldsAndShrinksWithSamples) {
    const ConditionBoundReport r = verify_condition_bound(4, {100, 1000, 10000}, 100, 0);
    ASSERT_EQ(r.rows.size(), 3u);
    for (const auto& row : r.rows) {
        EXPECT_GE(row.fraction_within, 0.95) << "N=" << row.samples;
        EXPECT_NEAR(row.bound, 1.0 + 5.0 * std::sqrt(4.0 / static_cast<double>(row.samples)), 1e-15);
    }
    const auto& big = r.rows.back().kappas;
    EXPECT_LE(*std::max_element(big.begin(), big.end()), 1.1);
    EXPECT_GE(r.monotone_fraction, 0.9);
}

TEST(ConditionBound, RejectsTooFewSamples) {
    EXPECT_THROW(verify_condition_bound(8, {4}, 10, 0), std::invalid_argument);
    EXPECT_THROW(verify_condition_bound(4, {100}, 10, 0, 6), std::invalid_argument);
}

TEST(ClosedForm, ConstantBlockIsDcOnly) {
    const LayerSpectrum s = hessian_spectrum_closed_form(Matrix{{1, 1, 1, 1}}, 4);
    EXPECT_EQ(s.eigenvalues, (RealVector{0, 0, 0, 16}));
    EXPECT_TRUE(s.degenerate);
}

TEST(DenseSpectrum, TwoByTwoDiagonal) {
    const LayerSpectrum s = dense_hessian_spectrum(Matrix{{2, 0}, {0, 1}});
    EXPECT_NEAR(s.eigenvalues[0], 1.0, 1e-15);
    EXPECT_NEAR(s.eigenvalues[1], 4.0, 1e-15);
    EXPECT_NEAR(s.kappa, 4.0, 1e-14);
}

// Only the input layer sees whitened data; deeper layers see ReLU outputs.
TEST(ModelKappa, UntrainedSingleLayerOnWhitenedInputs) {
    const Network net = init_network(make_mlp("one", {64, 16}, 4, 10), 0);
    const Matrix x = gen_synthetic(SyntheticKind::gaussian, 10000, 64, 4, 1);
    const SpectrumReport r = model_condition_number(net, spectral_whiten(x, 4).data);
    EXPECT_GE(r.mean_kappa, 1.0);
    EXPECT_LE(r.mean_kappa, 1.5);
}
