#pragma once

// Discrete Fourier transforms and circulant algebra.
//
// Sign convention: the forward transform is
//     X[k] = sum_j x[j] * exp(+2*pi*i*j*k/B)
// and the inverse carries the 1/B factor with exp(-2*pi*i*j*k/B), so that
// idft(dft(x)) == x. With this convention the eigenvalues of a circulant
// with coefficient vector c are dft(c), and Parseval reads
//     sum_k |X[k]|^2 == B * sum_j x[j]^2.
// The weight gradient of a circulant layer conjugates the input spectrum;
// that conjugation is only correct under this convention.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdnn/matrix.hpp"

namespace cdnn {

using Complex = std::complex<double>;
using RealVector = std::vector<double>;
using ComplexVector = std::vector<Complex>;

namespace detail {

inline bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

inline void require_nonempty(std::size_t n, const char* what) {
    if (n == 0) throw std::invalid_argument(std::string(what) + ": empty input");
}

inline void require_same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw std::invalid_argument(std::string(what) + ": length mismatch (" +
                                    std::to_string(a) + " vs " + std::to_string(b) + ")");
    }
}

// exp(sign * 2*pi*i * m / n), with m reduced mod n first to keep the angle small.
inline Complex unit_root(std::size_t m, std::size_t n, int sign) {
    const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(m % n) /
                         static_cast<double>(n);
    return {std::cos(angle), std::sin(angle)};
}

}  // namespace detail

// Direct O(B^2) transform. Reference path for everything else in this file.
inline ComplexVector dft(std::span<const Complex> x) {
    detail::require_nonempty(x.size(), "dft");
    const std::size_t n = x.size();
    ComplexVector out(n);
    for (std::size_t k = 0; k < n; ++k) {
        Complex acc{0.0, 0.0};
        for (std::size_t j = 0; j < n; ++j) acc += x[j] * detail::unit_root(j * k, n, +1);
        out[k] = acc;
    }
    return out;
}

inline ComplexVector dft(std::span<const double> x) {
    const ComplexVector cx(x.begin(), x.end());
    return dft(std::span<const Complex>(cx));
}

inline ComplexVector idft(std::span<const Complex> xf) {
    detail::require_nonempty(xf.size(), "idft");
    const std::size_t n = xf.size();
    ComplexVector out(n);
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
        Complex acc{0.0, 0.0};
        for (std::size_t k = 0; k < n; ++k) acc += xf[k] * detail::unit_root(j * k, n, -1);
        out[j] = acc * scale;
    }
    return out;
}

// Precomputed transform of a fixed length. Power-of-two lengths use an
// in-place iterative radix-2 butterfly; other lengths use a cached B x B
// twiddle table (block sizes here are at most a few dozen).
class FftPlan {
public:
    explicit FftPlan(std::size_t n) : n_(n) {
        detail::require_nonempty(n, "FftPlan");
        if (detail::is_power_of_two(n)) {
            bitrev_.resize(n);
            std::size_t bits = 0;
            while ((std::size_t{1} << bits) < n) ++bits;
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t r = 0;
                for (std::size_t b = 0; b < bits; ++b)
                    if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
                bitrev_[i] = r;
            }
            roots_.resize(n);
            for (std::size_t m = 0; m < n; ++m) roots_[m] = detail::unit_root(m, n, +1);
        } else {
            table_.resize(n * n);
            for (std::size_t k = 0; k < n; ++k)
                for (std::size_t j = 0; j < n; ++j) table_[k * n + j] = detail::unit_root(j * k, n, +1);
        }
    }

    std::size_t size() const noexcept { return n_; }

    void forward(std::span<Complex> data) const { transform(data, false); }

    void inverse(std::span<Complex> data) const {
        transform(data, true);
        const double scale = 1.0 / static_cast<double>(n_);
        for (auto& v : data) v *= scale;
    }

    // Forward transform of a real signal into a caller-provided buffer.
    void forward_real(std::span<const double> x, std::span<Complex> out) const {
        detail::require_same_length(x.size(), n_, "FftPlan::forward_real");
        for (std::size_t i = 0; i < n_; ++i) out[i] = Complex{x[i], 0.0};
        forward(out);
    }

private:
    void transform(std::span<Complex> a, bool inverse) const {
        detail::require_same_length(a.size(), n_, "FftPlan");
        if (n_ == 1) return;
        if (!table_.empty()) {
            const ComplexVector scratch(a.begin(), a.end());
            for (std::size_t k = 0; k < n_; ++k) {
                Complex acc{0.0, 0.0};
                const Complex* row = table_.data() + k * n_;
                for (std::size_t j = 0; j < n_; ++j)
                    acc += scratch[j] * (inverse ? std::conj(row[j]) : row[j]);
                a[k] = acc;
            }
            return;
        }
        for (std::size_t i = 0; i < n_; ++i)
            if (i < bitrev_[i]) std::swap(a[i], a[bitrev_[i]]);
        for (std::size_t len = 2; len <= n_; len <<= 1) {
            const std::size_t stride = n_ / len;
            const std::size_t half = len / 2;
            for (std::size_t start = 0; start < n_; start += len) {
                for (std::size_t t = 0; t < half; ++t) {
                    Complex w = roots_[t * stride];
                    if (inverse) w = std::conj(w);
                    const Complex u = a[start + t];
                    const Complex v = a[start + t + half] * w;
                    a[start + t] = u + v;
                    a[start + t + half] = u - v;
                }
            }
        }
    }

    std::size_t n_;
    std::vector<std::size_t> bitrev_;
    ComplexVector roots_;
    ComplexVector table_;
};

inline ComplexVector fft(std::span<const Complex> x) {
    detail::require_nonempty(x.size(), "fft");
    ComplexVector out(x.begin(), x.end());
    FftPlan(x.size()).forward(out);
    return out;
}

inline ComplexVector fft(std::span<const double> x) {
    detail::require_nonempty(x.size(), "fft");
    ComplexVector out(x.size());
    FftPlan(x.size()).forward_real(x, out);
    return out;
}

inline ComplexVector ifft(std::span<const Complex> xf) {
    detail::require_nonempty(xf.size(), "ifft");
    ComplexVector out(xf.begin(), xf.end());
    FftPlan(xf.size()).inverse(out);
    return out;
}

inline RealVector real_part(std::span<const Complex> z) {
    RealVector out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i].real();
    return out;
}

// y[k] = sum_l c[(k - l) mod B] * x[l], evaluated as ifft(fft(c) * fft(x)).
inline RealVector circulant_matvec(std::span<const double> c, std::span<const double> x) {
    detail::require_same_length(c.size(), x.size(), "circulant_matvec");
    detail::require_nonempty(c.size(), "circulant_matvec");
    const FftPlan plan(c.size());
    ComplexVector cf(c.size()), xf(x.size());
    plan.forward_real(c, cf);
    plan.forward_real(x, xf);
    for (std::size_t k = 0; k < cf.size(); ++k) cf[k] *= xf[k];
    plan.inverse(cf);
    return real_part(cf);
}

inline RealVector circulant_matvec_direct(std::span<const double> c, std::span<const double> x) {
    detail::require_same_length(c.size(), x.size(), "circulant_matvec_direct");
    detail::require_nonempty(c.size(), "circulant_matvec_direct");
    const std::size_t n = c.size();
    RealVector y(n, 0.0);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < n; ++l) y[k] += c[(k + n - l) % n] * x[l];
    return y;
}

// r[m] = sum_k u[k] * v[(k + m) mod B], evaluated as ifft(conj(fft(u)) * fft(v)).
inline RealVector circulant_corr(std::span<const double> u, std::span<const double> v) {
    detail::require_same_length(u.size(), v.size(), "circulant_corr");
    detail::require_nonempty(u.size(), "circulant_corr");
    const FftPlan plan(u.size());
    ComplexVector uf(u.size()), vf(v.size());
    plan.forward_real(u, uf);
    plan.forward_real(v, vf);
    for (std::size_t k = 0; k < uf.size(); ++k) uf[k] = std::conj(uf[k]) * vf[k];
    plan.inverse(uf);
    return real_part(uf);
}

inline RealVector circulant_corr_direct(std::span<const double> u, std::span<const double> v) {
    detail::require_same_length(u.size(), v.size(), "circulant_corr_direct");
    detail::require_nonempty(u.size(), "circulant_corr_direct");
    const std::size_t n = u.size();
    RealVector r(n, 0.0);
    for (std::size_t m = 0; m < n; ++m)
        for (std::size_t k = 0; k < n; ++k) r[m] += u[k] * v[(k + m) % n];
    return r;
}

// out[m] = c[(-m) mod B]. The circulant built from the result is the
// transpose of the one built from c.
inline RealVector reverse_coeffs(std::span<const double> c) {
    const std::size_t n = c.size();
    RealVector out(n);
    for (std::size_t m = 0; m < n; ++m) out[m] = c[(n - m) % n];
    return out;
}

// Entry (k, l) = c[(k - l) mod B].
inline Matrix materialize_circulant(std::span<const double> c) {
    detail::require_nonempty(c.size(), "materialize_circulant");
    const std::size_t n = c.size();
    Matrix m(n, n);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < n; ++l) m(k, l) = c[(k + n - l) % n];
    return m;
}

}  // namespace cdnn
