#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "cdnn/data.hpp"
#include "cdnn/errors.hpp"
#include "test_util.hpp"

using namespace cdnn;

namespace {

std::string temp_file(const std::string& name, const std::string& content) {
    const auto path = std::filesystem::temp_directory_path() / ("cdnn_test_" + name);
    std::ofstream(path) << content;
    return path.string();
}

std::string row_of(int value, int label, std::size_t features = 64) {
    std::string s;
    for (std::size_t i = 0; i < features; ++i) s += std::to_string(value) + ",";
    return s + std::to_string(label) + "\n";
}

const DigitsDataset& digits() {
    static const DigitsDataset ds = load_digits_csv(testutil::data_path("digits.csv"));
    return ds;
}

}  // namespace

TEST(Digits, ShapeAndRanges) {
    const DigitsDataset& ds = digits();
    EXPECT_EQ(ds.size(), 1797u);
    EXPECT_EQ(ds.features.cols(), 64u);
    std::vector<int> counts(10, 0);
    for (int y : ds.labels) ++counts.at(static_cast<std::size_t>(y));
    for (int c : counts) EXPECT_GT(c, 170);
    for (double v : ds.features.data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 16.0);
    }
}

TEST(Digits, NormalizeToUnitRange) {
    const Matrix n = normalize(digits().features);
    EXPECT_EQ(*std::max_element(n.data().begin(), n.data().end()), 1.0);
    EXPECT_EQ(*std::min_element(n.data().begin(), n.data().end()), 0.0);
}

TEST(Csv, MissingFileIsIoError) { EXPECT_THROW(load_digits_csv("/nonexistent/digits.csv"), IoError); }

TEST(Csv, WrongColumnCountReportsRow) {
    const auto path = temp_file("cols.csv", row_of(1, 2) + row_of(1, 2, 63));
    try {
        load_digits_csv(path);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.row(), 2u);
    }
}

TEST(Csv, NonNumericAndBadLabels) {
    std::string bad = row_of(1, 2);
    bad.replace(0, 1, "x");
    EXPECT_THROW(load_digits_csv(temp_file("nan.csv", bad)), ParseError);
    EXPECT_THROW(load_digits_csv(temp_file("label.csv", row_of(1, 10))), ParseError);
    EXPECT_THROW(load_digits_csv(temp_file("neg.csv", row_of(1, -1))), ParseError);
    EXPECT_THROW(load_digits_csv(temp_file("empty.csv", "")), ParseError);
}

TEST(Csv, AcceptsBlankLinesAndSpaces) {
    std::string r = row_of(3, 4);
    r.replace(0, 1, " 3 ");
    const DigitsDataset ds = load_digits_csv(temp_file("ok.csv", "\n" + r + "\n" + row_of(5, 0)));
    EXPECT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.features(0, 0), 3.0);
    EXPECT_EQ(ds.labels[1], 0);
}

TEST(Split, SizesDisjointAndComplete) {
    const SplitDataset s = split_deterministic(digits(), kDigitsTrain, 0);
    EXPECT_EQ(s.train_x.rows(), 1437u);
    EXPECT_EQ(s.test_x.rows(), 360u);
    std::set<std::size_t> all(s.train_indices.begin(), s.train_indices.end());
    for (std::size_t i : s.test_indices) EXPECT_TRUE(all.insert(i).second);
    EXPECT_EQ(all.size(), 1797u);
    for (std::size_t r = 0; r < 5; ++r) {
        EXPECT_EQ(s.train_y[r], digits().labels[s.train_indices[r]]);
        EXPECT_EQ(s.train_x(r, 10), digits().features(s.train_indices[r], 10));
    }
}

TEST(Split, DeterministicPerSeed) {
    const SplitDataset a = split_deterministic(digits(), kDigitsTrain, 3);
    const SplitDataset b = split_deterministic(digits(), kDigitsTrain, 3);
    const SplitDataset c = split_deterministic(digits(), kDigitsTrain, 4);
    EXPECT_EQ(a.train_indices, b.train_indices);
    EXPECT_NE(a.train_indices, c.train_indices);
    EXPECT_THROW(split_deterministic(digits(), 1797, 0), std::invalid_argument);
}

TEST(Whiten, UnitSpectralVarianceAfterward) {
    Rng rng(51);
    Matrix x = testutil::randn(400, 8, rng);
    for (std::size_t s = 0; s < x.rows(); ++s) x(s, 1) *= 5.0;
    const WhitenResult w = spectral_whiten(x, 4);
    EXPECT_FALSE(w.degenerate);
    const WhitenResult again = spectral_whiten(w.data, 4);
    // Whitening an already-whitened batch changes nothing.
    EXPECT_LE(testutil::max_abs_diff(again.data.data(), w.data.data()), 1e-10);
    const FftPlan plan(4);
    ComplexVector buf(4);
    for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t k = 0; k < 4; ++k) {
            Complex mean{};
            std::vector<Complex> z;
            for (std::size_t s = 0; s < x.rows(); ++s) {
                plan.forward_real(w.data.row(s).subspan(j * 4, 4), buf);
                z.push_back(buf[k]);
                mean += buf[k];
            }
            mean /= static_cast<double>(z.size());
            double var = 0.0;
            for (const auto& v : z) var += std::norm(v - mean);
            EXPECT_NEAR(var / static_cast<double>(z.size()), 1.0, 1e-10);
        }
}

TEST(Whiten, ConstantColumnsAreFlaggedDegenerate) {
    const Matrix x(10, 4, 2.0);
    const WhitenResult w = spectral_whiten(x, 4);
    EXPECT_TRUE(w.degenerate);
    EXPECT_EQ(w.floored_frequencies, 4u);
    for (double v : w.data.data()) EXPECT_TRUE(std::isfinite(v));
    EXPECT_THROW(spectral_whiten(Matrix(1, 4), 4), std::invalid_argument);
    EXPECT_THROW(spectral_whiten(Matrix(3, 6), 4), std::invalid_argument);
}

TEST(Synthetic, FlatSpectrumBlocks) {
    for (std::size_t b : {1, 2, 3, 4, 7, 8}) {
        const Matrix x = gen_synthetic(SyntheticKind::flat_spectrum, 10, 4 * b, b, 9);
        for (std::size_t s = 0; s < 10; ++s)
            for (std::size_t j = 0; j < 4; ++j) {
                const RealVector blk(x.row(s).begin() + j * b, x.row(s).begin() + (j + 1) * b);
                for (const auto& z : fft(blk)) EXPECT_NEAR(std::abs(z), 1.0, 1e-12);
            }
    }
}

TEST(Synthetic, GaussianMomentsAndDeterminism) {
    const Matrix x = gen_synthetic(SyntheticKind::gaussian, 2000, 16, 4, 1);
    double m = 0.0, v = 0.0;
    for (double a : x.data()) m += a;
    m /= static_cast<double>(x.size());
    for (double a : x.data()) v += (a - m) * (a - m);
    v /= static_cast<double>(x.size());
    EXPECT_NEAR(m, 0.0, 0.03);
    EXPECT_NEAR(v, 1.0, 0.05);
    EXPECT_EQ(gen_synthetic(SyntheticKind::gaussian, 5, 8, 4, 2), gen_synthetic(SyntheticKind::gaussian, 5, 8, 4, 2));
    EXPECT_THROW(gen_synthetic(SyntheticKind::gaussian, 5, 6, 4, 2), std::invalid_argument);
    EXPECT_THROW(synthetic_kind_from_string("pink"), std::invalid_argument);
}

TEST(Rng, StreamsAreIndependentAndReproducible) {
    Rng a(5, Stream::init), b(5, Stream::init), c(5, Stream::shuffle);
    EXPECT_EQ(a.next_u64(), b.next_u64());
    EXPECT_NE(Rng(5, Stream::init).next_u64(), c.next_u64());
    Rng r(7);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
        EXPECT_LT(r.below(7), 7u);
    }
    auto p = Rng(8).permutation(50);
    std::sort(p.begin(), p.end());
    for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(p[i], i);
}
