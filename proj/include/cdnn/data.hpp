#pragma once

// Digits dataset ingestion, deterministic splitting and synthetic inputs for
// the spectral diagnostics.
//
// CSV format: one sample per line, 64 pixel intensities (0..16) followed by
// an integer label in [0, 9], comma separated, no header.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "cdnn/errors.hpp"
#include "cdnn/matrix.hpp"
#include "cdnn/random.hpp"
#include "cdnn/spectral.hpp"

namespace cdnn {

inline constexpr std::size_t kDigitsFeatures = 64;
inline constexpr std::size_t kDigitsClasses = 10;
inline constexpr std::size_t kDigitsSamples = 1797;
inline constexpr std::size_t kDigitsTrain = 1437;

struct DigitsDataset {
    Matrix features;  // N x 64
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }
};

struct SplitDataset {
    Matrix train_x;
    std::vector<int> train_y;
    Matrix test_x;
    std::vector<int> test_y;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(',', start);
        fields.push_back(trim(line.substr(start, pos == std::string_view::npos ? line.size() - start
                                                                               : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return fields;
}

}  // namespace detail

inline DigitsDataset load_digits_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open digits file '" + path + "'");

    DigitsDataset ds;
    std::vector<double> values;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_commas(line);
        if (fields.size() != kDigitsFeatures + 1) {
            throw ParseError(row, "expected " + std::to_string(kDigitsFeatures + 1) + " columns, found " +
                                      std::to_string(fields.size()));
        }
        for (std::size_t c = 0; c < kDigitsFeatures; ++c) {
            double v = 0.0;
            const auto f = fields[c];
            const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (ec != std::errc{} || ptr != f.data() + f.size() || !std::isfinite(v))
                throw ParseError(row, "column " + std::to_string(c + 1) + " is not a finite number");
            values.push_back(v);
        }
        int label = -1;
        const auto lf = fields.back();
        const auto [ptr, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
        if (ec != std::errc{} || ptr != lf.data() + lf.size())
            throw ParseError(row, "label is not an integer");
        if (label < 0 || label >= static_cast<int>(kDigitsClasses))
            throw ParseError(row, "label " + std::to_string(label) + " out of range [0, 9]");
        ds.labels.push_back(label);
    }
    if (ds.labels.empty()) throw ParseError(row, "no samples in '" + path + "'");
    ds.features = Matrix(ds.labels.size(), kDigitsFeatures, std::move(values));
    return ds;
}

// Seeded shuffle; the first train_n permuted indices form the training set.
inline SplitDataset split_deterministic(const DigitsDataset& ds, std::size_t train_n, std::uint64_t seed) {
    if (train_n >= ds.size()) {
        throw std::invalid_argument("split_deterministic: train_n " + std::to_string(train_n) +
                                    " must be smaller than dataset size " + std::to_string(ds.size()));
    }
    Rng rng(seed, Stream::split);
    const auto perm = rng.permutation(ds.size());
    SplitDataset s;
    s.train_indices.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(train_n));
    s.test_indices.assign(perm.begin() + static_cast<std::ptrdiff_t>(train_n), perm.end());

    const std::size_t d = ds.features.cols();
    auto gather = [&](const std::vector<std::size_t>& idx, Matrix& x, std::vector<int>& y) {
        x = Matrix(idx.size(), d);
        y.resize(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const auto src = ds.features.row(idx[r]);
            std::copy(src.begin(), src.end(), x.row(r).begin());
            y[r] = ds.labels[idx[r]];
        }
    };
    gather(s.train_indices, s.train_x, s.train_y);
    gather(s.test_indices, s.test_x, s.test_y);
    return s;
}

// Scales raw intensities 0..16 into [0, 1]. Apply once.
inline Matrix normalize(const Matrix& features) {
    Matrix out = features;
    for (double& v : out.data()) v /= 16.0;
    return out;
}

struct WhitenResult {
    Matrix data;
    bool degenerate = false;        // some (block, frequency) had ~zero variance
    std::size_t floored_frequencies = 0;
};

// Rescales every per-block DFT coefficient so that its empirical variance
// across the batch, E|z - mean z|^2, equals one, then transforms back. The
// scale for frequency k equals the scale for B - k, so real signals stay real.
inline WhitenResult spectral_whiten(const Matrix& batch, std::size_t block) {
    if (block == 0 || batch.cols() % block != 0)
        throw std::invalid_argument("spectral_whiten: block size must divide the feature dimension");
    if (batch.rows() < 2) throw std::invalid_argument("spectral_whiten: need more than one sample");
    constexpr double kFloor = 1e-12;

    const std::size_t n = batch.rows();
    const std::size_t dim = batch.cols();
    const FftPlan plan(block);

    ComplexVector spec(n * dim);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t j = 0; j < dim / block; ++j)
            plan.forward_real(batch.row(s).subspan(j * block, block),
                              std::span<Complex>(spec).subspan(s * dim + j * block, block));

    WhitenResult r{Matrix(n, dim)};
    std::vector<double> scale(dim);
    for (std::size_t f = 0; f < dim; ++f) {
        Complex mean{};
        for (std::size_t s = 0; s < n; ++s) mean += spec[s * dim + f];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t s = 0; s < n; ++s) var += std::norm(spec[s * dim + f] - mean);
        var /= static_cast<double>(n);
        double sd = std::sqrt(var);
        if (sd < kFloor) {
            sd = kFloor;
            r.degenerate = true;
            ++r.floored_frequencies;
        }
        scale[f] = 1.0 / sd;
    }

    ComplexVector buf(block);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t j = 0; j < dim / block; ++j) {
            for (std::size_t k = 0; k < block; ++k) buf[k] = spec[s * dim + j * block + k] * scale[j * block + k];
            plan.inverse(buf);
            for (std::size_t k = 0; k < block; ++k) r.data(s, j * block + k) = buf[k].real();
        }
    return r;
}

enum class SyntheticKind { gaussian, flat_spectrum };

inline SyntheticKind synthetic_kind_from_string(const std::string& s) {
    if (s == "gaussian") return SyntheticKind::gaussian;
    if (s == "flat_spectrum") return SyntheticKind::flat_spectrum;
    throw std::invalid_argument("unknown synthetic kind '" + s + "' (expected gaussian or flat_spectrum)");
}

// gaussian: i.i.d. N(0, 1) entries.
// flat_spectrum: every block is the inverse transform of a Hermitian-symmetric
// spectrum with unit magnitude and random phase, so |fft(block)[k]| == 1.
inline Matrix gen_synthetic(SyntheticKind kind, std::size_t n, std::size_t dim, std::size_t block,
                            std::uint64_t seed) {
    if (block == 0 || dim % block != 0)
        throw std::invalid_argument("gen_synthetic: block size must divide dim");
    Rng rng(seed, Stream::synthetic);
    Matrix out(n, dim);
    if (kind == SyntheticKind::gaussian) {
        for (double& v : out.data()) v = rng.normal();
        return out;
    }
    const FftPlan plan(block);
    ComplexVector spec(block);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t j = 0; j < dim / block; ++j) {
            spec[0] = rng.bernoulli(0.5) ? 1.0 : -1.0;
            for (std::size_t k = 1; k <= (block - 1) / 2; ++k) {
                const double phase = 2.0 * std::numbers::pi * rng.uniform();
                spec[k] = std::polar(1.0, phase);
                spec[block - k] = std::conj(spec[k]);
            }
            if (block % 2 == 0) spec[block / 2] = rng.bernoulli(0.5) ? 1.0 : -1.0;
            plan.inverse(spec);
            for (std::size_t k = 0; k < block; ++k) out(s, j * block + k) = spec[k].real();
        }
    return out;
}

}  // namespace cdnn
