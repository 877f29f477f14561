#pragma once

// Hessian-spectrum diagnostics.
//
// For a block-circulant layer under squared loss the Hessian with respect to
// each coefficient vector c_ij is circulant with first row equal to the
// cyclic autocorrelation of the input block x_j, so its eigenvalues are
// |fft(x_j)[k]|^2. They depend on the inputs only, never on the weights.
// Dense layers are measured through the squared singular values of W.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

#include "cdnn/data.hpp"
#include "cdnn/errors.hpp"
#include "cdnn/matrix.hpp"
#include "cdnn/network.hpp"
#include "cdnn/spectral.hpp"

namespace cdnn {

// Eigenvalues below this count as zero when forming a condition number.
inline constexpr double kDegenerateEigenvalue = 1e-300;

// Engineering constant c in the bound kappa <= 1 + c * sqrt(B / N).
inline constexpr double kConditionBoundConstant = 5.0;

enum class SpectrumMethod { cd_fft, dense_svd, brute_force };

inline const char* to_string(SpectrumMethod m) {
    switch (m) {
        case SpectrumMethod::cd_fft: return "cd_fft";
        case SpectrumMethod::dense_svd: return "dense_svd";
        case SpectrumMethod::brute_force: return "brute_force";
    }
    return "unknown";
}

struct LayerSpectrum {
    SpectrumMethod method = SpectrumMethod::cd_fft;
    RealVector eigenvalues;  // ascending, nonnegative
    double kappa = 1.0;      // +inf when degenerate
    bool degenerate = false;
};

struct SpectrumReport {
    std::vector<LayerSpectrum> layers;
    double mean_kappa = 1.0;
    bool degenerate = false;
    // Dense layers report singular values of W while circulant layers report
    // input-spectrum eigenvalues; the two are different objects.
    bool mixed_methods = false;
};

inline std::pair<double, bool> condition_number(std::span<const double> eigenvalues) {
    if (eigenvalues.empty()) throw std::invalid_argument("condition_number: no eigenvalues");
    const auto [lo, hi] = std::minmax_element(eigenvalues.begin(), eigenvalues.end());
    if (*lo < kDegenerateEigenvalue) return {std::numeric_limits<double>::infinity(), true};
    return {*hi / *lo, false};
}

inline LayerSpectrum make_layer_spectrum(SpectrumMethod method, RealVector eigenvalues) {
    std::sort(eigenvalues.begin(), eigenvalues.end());
    LayerSpectrum s{method, std::move(eigenvalues)};
    std::tie(s.kappa, s.degenerate) = condition_number(s.eigenvalues);
    return s;
}

// Eigenvalues eta_{j,k} = mean over the batch of |fft(x_j)[k]|^2 for every
// input block j and frequency k; one FFT per block per sample.
inline LayerSpectrum hessian_spectrum_closed_form(const Matrix& inputs, std::size_t block) {
    if (block == 0 || inputs.cols() % block != 0)
        throw std::invalid_argument("hessian_spectrum_closed_form: block size must divide the input dimension");
    if (inputs.rows() == 0) throw std::invalid_argument("hessian_spectrum_closed_form: empty batch");
    const std::size_t dim = inputs.cols();
    const FftPlan plan(block);
    RealVector eta(dim, 0.0);
    ComplexVector buf(block);
    for (std::size_t s = 0; s < inputs.rows(); ++s)
        for (std::size_t j = 0; j < dim / block; ++j) {
            plan.forward_real(inputs.row(s).subspan(j * block, block), buf);
            for (std::size_t k = 0; k < block; ++k) eta[j * block + k] += std::norm(buf[k]);
        }
    for (double& e : eta) e /= static_cast<double>(inputs.rows());
    return make_layer_spectrum(SpectrumMethod::cd_fft, std::move(eta));
}

struct EigenDecomposition {
    RealVector values;  // unsorted, paired with columns of vectors
    Matrix vectors;
    std::size_t sweeps = 0;
};

// Cyclic Jacobi rotations on a symmetric matrix until the off-diagonal
// Frobenius norm drops below tol * ||A||_F.
inline EigenDecomposition jacobi_eigen(const Matrix& sym, double tol = 1e-12, std::size_t max_sweeps = 100) {
    if (sym.rows() != sym.cols()) throw std::invalid_argument("jacobi_eigen: matrix must be square");
    const std::size_t n = sym.rows();
    Matrix a = sym;
    Matrix v = Matrix::identity(n);
    const double scale = std::sqrt(frobenius_norm_sq(sym));
    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = 0; q < n; ++q)
                if (p != q) s += a(p, q) * a(p, q);
        return std::sqrt(s);
    };

    std::size_t sweep = 0;
    for (; sweep < max_sweeps && off_norm() > tol * scale; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }
    EigenDecomposition out{RealVector(n), std::move(v), sweep};
    for (std::size_t i = 0; i < n; ++i) out.values[i] = a(i, i);
    return out;
}

inline RealVector sorted_eigenvalues(const Matrix& sym) {
    auto e = jacobi_eigen(sym).values;
    std::sort(e.begin(), e.end());
    return e;
}

// Squared singular values of W from the smaller Gram matrix, so a 10 x 64
// output layer yields its 10 nonzero values rather than 54 structural zeros.
inline LayerSpectrum dense_hessian_spectrum(const Matrix& w) {
    if (w.empty()) throw std::invalid_argument("dense_hessian_spectrum: empty matrix");
    const Matrix wt = w.transposed();
    const Matrix gram = w.rows() < w.cols() ? matmul(w, wt) : matmul(wt, w);
    RealVector eig = jacobi_eigen(gram).values;
    for (double& e : eig) e = std::max(e, 0.0);
    return make_layer_spectrum(SpectrumMethod::dense_svd, std::move(eig));
}

struct BruteForceHessian {
    Matrix hessian;                 // explicit shift-operator construction
    double circulant_deviation = 0.0;
    RealVector eigenvalues;         // dft of the first row, ascending
    RealVector jacobi_eigenvalues;  // Jacobi on the explicit matrix, ascending
    Matrix fd_hessian;              // central second differences of the loss
    RealVector fd_eigenvalues;      // ascending
};

// Squared loss 0.5 * ||C(c) x - t||^2 of one circulant block, evaluated with
// the direct O(B^2) product.
inline double block_loss(std::span<const double> c, std::span<const double> x, std::span<const double> t) {
    const RealVector y = circulant_matvec_direct(c, x);
    double s = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) s += (y[k] - t[k]) * (y[k] - t[k]);
    return 0.5 * s;
}

// Explicit Hessian of a single block's squared loss,
//     H[m][m'] = sum_k x[(k - m) mod B] * x[(k - m') mod B],
// checked for circulant structure and cross-checked against second-order
// central differences of the loss itself.
inline BruteForceHessian hessian_brute_force(std::span<const double> c, std::span<const double> x,
                                             std::span<const double> t, double fd_step = 1e-3) {
    const std::size_t n = x.size();
    if (n == 0 || c.size() != n || t.size() != n)
        throw std::invalid_argument("hessian_brute_force: c, x and t must share a nonzero length");
    if (n > 64) throw std::invalid_argument("hessian_brute_force: block too large for the explicit path");

    BruteForceHessian r;
    r.hessian = Matrix(n, n);
    for (std::size_t m = 0; m < n; ++m)
        for (std::size_t mp = 0; mp < n; ++mp) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += x[(k + n - m) % n] * x[(k + n - mp) % n];
            r.hessian(m, mp) = s;
        }

    double hmax = 0.0;
    for (double v : r.hessian.data()) hmax = std::max(hmax, std::abs(v));
    for (std::size_t m = 0; m < n; ++m)
        for (std::size_t mp = 0; mp < n; ++mp)
            r.circulant_deviation = std::max(r.circulant_deviation,
                                             std::abs(r.hessian(m, mp) - r.hessian(0, (mp + n - m) % n)));
    if (r.circulant_deviation > 1e-12 * std::max(1.0, hmax)) {
        throw ConsistencyError("hessian_brute_force: explicit Hessian is not circulant (deviation " +
                               std::to_string(r.circulant_deviation) + ")");
    }

    const auto row0 = r.hessian.row(0);
    const ComplexVector spec = dft(row0);
    r.eigenvalues = real_part(spec);
    std::sort(r.eigenvalues.begin(), r.eigenvalues.end());
    r.jacobi_eigenvalues = sorted_eigenvalues(r.hessian);

    r.fd_hessian = Matrix(n, n);
    RealVector cp(c.begin(), c.end());
    const double h = fd_step;
    auto loss_at = [&](std::size_t a, double da, std::size_t b, double db) {
        cp[a] += da;
        cp[b] += db;
        const double l = block_loss(cp, x, t);
        cp[a] -= da;
        cp[b] -= db;
        return l;
    };
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            const double lpp = loss_at(a, h, b, h);
            const double lpm = loss_at(a, h, b, -h);
            const double lmp = loss_at(a, -h, b, h);
            const double lmm = loss_at(a, -h, b, -h);
            r.fd_hessian(a, b) = (lpp - lpm - lmp + lmm) / (4.0 * h * h);
        }
    Matrix sym = r.fd_hessian;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) sym(a, b) = sym(b, a) = 0.5 * (sym(a, b) + sym(b, a));
    r.fd_eigenvalues = sorted_eigenvalues(sym);
    return r;
}

// Per weight layer: circulant layers use the closed-form spectrum of their
// recorded input activations, dense layers the squared singular values of W.
// The model-level figure is the arithmetic mean of the per-layer kappas.
inline SpectrumReport model_condition_number(const Network& net, const Matrix& inputs) {
    const ForwardResult fwd = network_forward(net, inputs);
    SpectrumReport rep;
    bool saw_dense = false, saw_cd = false;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (const auto* d = std::get_if<DenseParams>(&net.layers[l])) {
            rep.layers.push_back(dense_hessian_spectrum(d->weight));
            saw_dense = true;
        } else if (const auto* c = std::get_if<CirculantStack>(&net.layers[l])) {
            rep.layers.push_back(hessian_spectrum_closed_form(fwd.caches[l].linear.input, c->block));
            saw_cd = true;
        }
    }
    if (rep.layers.empty()) throw std::invalid_argument("model_condition_number: network has no weight layers");
    double sum = 0.0;
    for (const auto& s : rep.layers) {
        sum += s.kappa;
        rep.degenerate = rep.degenerate || s.degenerate;
    }
    rep.mean_kappa = sum / static_cast<double>(rep.layers.size());
    rep.mixed_methods = saw_dense && saw_cd;
    return rep;
}

struct ConditionBoundRow {
    std::size_t samples = 0;
    double bound = 0.0;                // 1 + c * sqrt(B / N)
    double sqrt_b_over_n = 0.0;
    std::vector<double> kappas;        // one per trial
    double fraction_within = 0.0;
    double median_scaled_excess = 0.0; // median of (kappa - 1) / sqrt(B / N)
};

struct ConditionBoundReport {
    std::size_t block = 0;
    std::size_t dim = 0;
    std::size_t trials = 0;
    std::vector<ConditionBoundRow> rows;
    double population_kappa = 1.0;
    // Fraction of trials where kappa at the smallest N exceeds kappa at the largest N.
    double monotone_fraction = 0.0;
};

// Empirical kappa of the mean per-frequency power over n samples whose
// per-block DFT coefficients have unit population variance: i.i.d. N(0, 1/B)
// entries give E|fft(x)[k]|^2 == 1 for every k.
inline double whitened_sample_kappa(std::size_t block, std::size_t dim, std::size_t n, std::uint64_t seed) {
    Matrix x = gen_synthetic(SyntheticKind::gaussian, n, dim, block, seed);
    const double s = 1.0 / std::sqrt(static_cast<double>(block));
    for (double& v : x.data()) v *= s;
    return hessian_spectrum_closed_form(x, block).kappa;
}

// Population case: the expected spectrum is identically one.
inline double population_kappa(std::size_t block, std::size_t dim) {
    const RealVector eta(dim == 0 ? block : dim, 1.0);
    return condition_number(eta).first;
}

inline ConditionBoundReport verify_condition_bound(std::size_t block, std::vector<std::size_t> sample_sizes,
                                                   std::size_t trials, std::uint64_t seed,
                                                   std::size_t dim = 0) {
    if (block == 0) throw std::invalid_argument("verify_condition_bound: block size must be positive");
    if (dim == 0) dim = block;
    if (dim % block != 0) throw std::invalid_argument("verify_condition_bound: block must divide dim");
    if (trials == 0) throw std::invalid_argument("verify_condition_bound: need at least one trial");
    for (std::size_t n : sample_sizes)
        if (n < block) {
            throw std::invalid_argument("verify_condition_bound: N=" + std::to_string(n) +
                                        " is smaller than B=" + std::to_string(block));
        }

    ConditionBoundReport rep{block, dim, trials, {}, population_kappa(block, dim), 0.0};
    for (std::size_t ni = 0; ni < sample_sizes.size(); ++ni) {
        const std::size_t n = sample_sizes[ni];
        ConditionBoundRow row;
        row.samples = n;
        row.sqrt_b_over_n = std::sqrt(static_cast<double>(block) / static_cast<double>(n));
        row.bound = 1.0 + kConditionBoundConstant * row.sqrt_b_over_n;
        std::size_t within = 0;
        std::vector<double> scaled;
        for (std::size_t t = 0; t < trials; ++t) {
            const std::uint64_t trial_seed = splitmix64(seed ^ splitmix64(n * 1000003ULL + t));
            const double k = whitened_sample_kappa(block, dim, n, trial_seed);
            row.kappas.push_back(k);
            within += k <= row.bound;
            scaled.push_back((k - 1.0) / row.sqrt_b_over_n);
        }
        row.fraction_within = static_cast<double>(within) / static_cast<double>(trials);
        std::sort(scaled.begin(), scaled.end());
        row.median_scaled_excess = scaled.size() % 2 ? scaled[scaled.size() / 2]
                                                     : 0.5 * (scaled[scaled.size() / 2 - 1] + scaled[scaled.size() / 2]);
        rep.rows.push_back(std::move(row));
    }
    if (rep.rows.size() >= 2) {
        const auto& first = rep.rows.front().kappas;
        const auto& last = rep.rows.back().kappas;
        std::size_t wins = 0;
        for (std::size_t t = 0; t < trials; ++t) wins += first[t] > last[t];
        rep.monotone_fraction = static_cast<double>(wins) / static_cast<double>(trials);
    }
    return rep;
}

}  // namespace cdnn
