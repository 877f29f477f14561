#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include "cdnn/layers.hpp"
#include "cdnn/matrix.hpp"
#include "cdnn/random.hpp"
#include "cdnn/spectral.hpp"

namespace cdnn {

// Channel noise rate used as the default drop probability.
inline constexpr double kShannonRate = 0.0118;

struct ShannonDropoutConfig {
    double rate = kShannonRate;
    bool enabled = false;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (!(rate >= 0.0 && rate < 1.0))
            throw std::invalid_argument("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
};

struct FisherConfig {
    double strength = 1e-4;
    double epsilon = 1e-8;
    bool enabled = false;

    void validate() const {
        if (!(strength >= 0.0)) throw std::invalid_argument("fisher strength must be nonnegative");
        if (!(epsilon > 0.0)) throw std::invalid_argument("fisher epsilon must be positive");
    }
};

struct DropoutResult {
    Matrix output;
    Matrix mask;  // 1 where the entry survived, 0 where it was dropped
};

// Inverted dropout: survivors are scaled by 1 / (1 - rate). Identity outside
// training.
inline DropoutResult shannon_dropout(const Matrix& x, double rate, bool training, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0))
        throw std::invalid_argument("shannon_dropout: rate must lie in [0, 1), got " + std::to_string(rate));
    DropoutResult r{x, Matrix(x.rows(), x.cols(), 1.0)};
    if (!training || rate == 0.0) return r;
    const double keep_scale = 1.0 / (1.0 - rate);
    auto& out = r.output.data();
    auto& mask = r.mask.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (rng.bernoulli(rate)) {
            mask[i] = 0.0;
            out[i] = 0.0;
        } else {
            out[i] *= keep_scale;
        }
    }
    return r;
}

inline Matrix shannon_dropout_backward(const Matrix& d_out, const Matrix& mask, double rate) {
    if (d_out.rows() != mask.rows() || d_out.cols() != mask.cols())
        throw std::invalid_argument("shannon_dropout_backward: shape mismatch");
    Matrix dx = d_out;
    const double keep_scale = 1.0 / (1.0 - rate);
    auto& d = dx.data();
    const auto& m = mask.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= m[i] * keep_scale;
    return dx;
}

// Trace of the inverse Fisher information of a block-circulant layer:
//     sum_{i,j,k} 1 / (|fft(c_ij)[k]|^2 + eps).
// Small spectral magnitudes ("dead" frequencies) dominate the sum.
inline double fisher_trace(const CirculantStack& p, const FisherConfig& cfg) {
    if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("fisher_trace: epsilon must be positive");
    const std::size_t b = p.block;
    const FftPlan plan(b);
    ComplexVector cf(b);
    double total = 0.0;
    for (std::size_t ij = 0; ij < p.k_out * p.k_in; ++ij) {
        plan.forward_real(std::span<const double>(p.coeffs).subspan(ij * b, b), cf);
        for (const Complex& z : cf) total += 1.0 / (std::norm(z) + cfg.epsilon);
    }
    return total;
}

// Gradient of fisher_trace with respect to every coefficient. Per block,
//     dR/dc_m = B * Re(ifft(w * fft(c)))[m],  w_k = -2 / (|c_k|^2 + eps)^2,
// which follows from d|C_k|^2/dc_m = 2 Re(conj(C_k) exp(+2 pi i m k / B)).
inline RealVector fisher_trace_grad(const CirculantStack& p, const FisherConfig& cfg) {
    if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("fisher_trace_grad: epsilon must be positive");
    const std::size_t b = p.block;
    const FftPlan plan(b);
    RealVector grad(p.coeffs.size(), 0.0);
    ComplexVector cf(b);
    for (std::size_t ij = 0; ij < p.k_out * p.k_in; ++ij) {
        plan.forward_real(std::span<const double>(p.coeffs).subspan(ij * b, b), cf);
        for (Complex& z : cf) {
            const double d = std::norm(z) + cfg.epsilon;
            z *= -2.0 / (d * d);
        }
        plan.inverse(cf);
        for (std::size_t m = 0; m < b; ++m) grad[ij * b + m] = static_cast<double>(b) * cf[m].real();
    }
    return grad;
}

}  // namespace cdnn
