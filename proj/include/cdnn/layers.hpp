#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cdnn/matrix.hpp"
#include "cdnn/spectral.hpp"

namespace cdnn {

enum class LayerKind { dense, cdlinear, relu };

inline const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::dense: return "dense";
        case LayerKind::cdlinear: return "cdlinear";
        case LayerKind::relu: return "relu";
    }
    return "unknown";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
    if (s == "dense") return LayerKind::dense;
    if (s == "cdlinear") return LayerKind::cdlinear;
    if (s == "relu") return LayerKind::relu;
    throw std::invalid_argument("unknown layer kind '" + s + "'");
}

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    std::size_t n_in = 0;
    std::size_t n_out = 0;
    std::size_t block_size = 1;  // cdlinear only

    static LayerSpec dense(std::size_t n_in, std::size_t n_out) {
        return {LayerKind::dense, n_in, n_out, 1};
    }
    static LayerSpec cdlinear(std::size_t n_in, std::size_t n_out, std::size_t block) {
        return {LayerKind::cdlinear, n_in, n_out, block};
    }
    static LayerSpec relu(std::size_t n) { return {LayerKind::relu, n, n, 1}; }

    bool has_params() const noexcept { return kind != LayerKind::relu; }

    void validate() const {
        if (n_in == 0 || n_out == 0) throw std::invalid_argument("LayerSpec: dimensions must be positive");
        if (kind == LayerKind::relu && n_in != n_out)
            throw std::invalid_argument("LayerSpec: relu must preserve dimension");
        if (kind == LayerKind::cdlinear) {
            if (block_size == 0) throw std::invalid_argument("LayerSpec: block size must be positive");
            if (n_in % block_size != 0 || n_out % block_size != 0) {
                throw std::invalid_argument("LayerSpec: block size " + std::to_string(block_size) +
                                            " must divide n_in=" + std::to_string(n_in) +
                                            " and n_out=" + std::to_string(n_out));
            }
        }
    }

    std::size_t param_count() const noexcept {
        switch (kind) {
            case LayerKind::dense: return n_in * n_out + n_out;
            case LayerKind::cdlinear: return n_in * n_out / block_size + n_out;
            case LayerKind::relu: return 0;
        }
        return 0;
    }

    bool operator==(const LayerSpec&) const = default;
};

// Block-circulant parameters: k_out x k_in coefficient vectors of length
// `block`, stored contiguously as coeffs[(i * k_in + j) * block + m].
struct CirculantStack {
    std::size_t k_out = 0;
    std::size_t k_in = 0;
    std::size_t block = 1;
    RealVector coeffs;
    RealVector bias;

    CirculantStack() = default;
    CirculantStack(std::size_t n_in, std::size_t n_out, std::size_t block_size) {
        LayerSpec::cdlinear(n_in, n_out, block_size).validate();
        block = block_size;
        k_in = n_in / block_size;
        k_out = n_out / block_size;
        coeffs.assign(k_out * k_in * block, 0.0);
        bias.assign(n_out, 0.0);
    }

    std::size_t n_in() const noexcept { return k_in * block; }
    std::size_t n_out() const noexcept { return k_out * block; }
    std::size_t param_count() const noexcept { return coeffs.size() + bias.size(); }

    std::span<double> coeff(std::size_t i, std::size_t j) noexcept {
        return {coeffs.data() + (i * k_in + j) * block, block};
    }
    std::span<const double> coeff(std::size_t i, std::size_t j) const noexcept {
        return {coeffs.data() + (i * k_in + j) * block, block};
    }
};

struct DenseParams {
    Matrix weight;  // n_out x n_in
    RealVector bias;

    DenseParams() = default;
    DenseParams(std::size_t n_in, std::size_t n_out) : weight(n_out, n_in), bias(n_out, 0.0) {}

    std::size_t n_in() const noexcept { return weight.cols(); }
    std::size_t n_out() const noexcept { return weight.rows(); }
    std::size_t param_count() const noexcept { return weight.size() + bias.size(); }
};

// Saved input of an affine layer, one sample per row.
struct LinearCache {
    Matrix input;
};

struct ReluCache {
    Matrix pre_activation;
};

struct CirculantGrads {
    RealVector coeffs;
    RealVector bias;
    Matrix input;  // gradient with respect to the layer input
};

struct DenseGrads {
    Matrix weight;
    RealVector bias;
    Matrix input;
};

// Full n_out x n_in weight matrix assembled from the circulant blocks.
inline Matrix to_dense(const CirculantStack& p) {
    Matrix w(p.n_out(), p.n_in());
    const std::size_t b = p.block;
    for (std::size_t i = 0; i < p.k_out; ++i)
        for (std::size_t j = 0; j < p.k_in; ++j) {
            const Matrix blk = materialize_circulant(p.coeff(i, j));
            for (std::size_t r = 0; r < b; ++r)
                for (std::size_t c = 0; c < b; ++c) w(i * b + r, j * b + c) = blk(r, c);
        }
    return w;
}

// y_i = bias_i + sum_j ifft(fft(c_ij) * fft(x_j)), evaluated with all weight
// spectra computed once and the sum over j carried out in frequency space.
inline std::pair<Matrix, LinearCache> cdlinear_forward(const CirculantStack& p, const Matrix& x) {
    if (x.cols() != p.n_in()) {
        throw std::invalid_argument("cdlinear_forward: input width " + std::to_string(x.cols()) +
                                    " != n_in " + std::to_string(p.n_in()));
    }
    const std::size_t b = p.block;
    const FftPlan plan(b);

    ComplexVector cf(p.coeffs.size());
    for (std::size_t ij = 0; ij < p.k_out * p.k_in; ++ij)
        plan.forward_real(std::span<const double>(p.coeffs).subspan(ij * b, b),
                          std::span<Complex>(cf).subspan(ij * b, b));

    Matrix y(x.rows(), p.n_out());
    ComplexVector xf(p.n_in());
    ComplexVector acc(b);
    for (std::size_t s = 0; s < x.rows(); ++s) {
        const auto xs = x.row(s);
        for (std::size_t j = 0; j < p.k_in; ++j)
            plan.forward_real(xs.subspan(j * b, b), std::span<Complex>(xf).subspan(j * b, b));
        auto ys = y.row(s);
        for (std::size_t i = 0; i < p.k_out; ++i) {
            std::fill(acc.begin(), acc.end(), Complex{});
            for (std::size_t j = 0; j < p.k_in; ++j) {
                const Complex* c = cf.data() + (i * p.k_in + j) * b;
                const Complex* v = xf.data() + j * b;
                for (std::size_t k = 0; k < b; ++k) acc[k] += c[k] * v[k];
            }
            plan.inverse(acc);
            for (std::size_t k = 0; k < b; ++k) ys[i * b + k] = acc[k].real() + p.bias[i * b + k];
        }
    }
    return {std::move(y), LinearCache{x}};
}

// Weight VJP: grad c_ij = sum over batch of ifft(conj(fft(x_j)) * fft(dy_i)).
// Input VJP: dx_j = sum_i ifft(fft(reverse(c_ij)) * fft(dy_i)).
inline CirculantGrads cdlinear_backward(const CirculantStack& p, const LinearCache& cache,
                                        const Matrix& dy) {
    const Matrix& x = cache.input;
    if (x.cols() != p.n_in() || dy.cols() != p.n_out() || dy.rows() != x.rows())
        throw std::invalid_argument("cdlinear_backward: shape mismatch between cache, params and dy");

    const std::size_t b = p.block;
    const std::size_t blocks = p.k_out * p.k_in;
    const FftPlan plan(b);

    ComplexVector rev_f(p.coeffs.size());
    for (std::size_t ij = 0; ij < blocks; ++ij) {
        const RealVector rev = reverse_coeffs(std::span<const double>(p.coeffs).subspan(ij * b, b));
        plan.forward_real(rev, std::span<Complex>(rev_f).subspan(ij * b, b));
    }

    ComplexVector grad_f(p.coeffs.size(), Complex{});
    CirculantGrads g;
    g.bias.assign(p.n_out(), 0.0);
    g.input = Matrix(x.rows(), p.n_in());

    ComplexVector xf(p.n_in()), dyf(p.n_out()), acc(b);
    for (std::size_t s = 0; s < x.rows(); ++s) {
        const auto xs = x.row(s);
        const auto dys = dy.row(s);
        for (std::size_t j = 0; j < p.k_in; ++j)
            plan.forward_real(xs.subspan(j * b, b), std::span<Complex>(xf).subspan(j * b, b));
        for (std::size_t i = 0; i < p.k_out; ++i)
            plan.forward_real(dys.subspan(i * b, b), std::span<Complex>(dyf).subspan(i * b, b));
        for (std::size_t o = 0; o < p.n_out(); ++o) g.bias[o] += dys[o];

        for (std::size_t i = 0; i < p.k_out; ++i)
            for (std::size_t j = 0; j < p.k_in; ++j) {
                Complex* gij = grad_f.data() + (i * p.k_in + j) * b;
                const Complex* xj = xf.data() + j * b;
                const Complex* di = dyf.data() + i * b;
                for (std::size_t k = 0; k < b; ++k) gij[k] += std::conj(xj[k]) * di[k];
            }

        auto dxs = g.input.row(s);
        for (std::size_t j = 0; j < p.k_in; ++j) {
            std::fill(acc.begin(), acc.end(), Complex{});
            for (std::size_t i = 0; i < p.k_out; ++i) {
                const Complex* r = rev_f.data() + (i * p.k_in + j) * b;
                const Complex* di = dyf.data() + i * b;
                for (std::size_t k = 0; k < b; ++k) acc[k] += r[k] * di[k];
            }
            plan.inverse(acc);
            for (std::size_t k = 0; k < b; ++k) dxs[j * b + k] = acc[k].real();
        }
    }

    g.coeffs.assign(p.coeffs.size(), 0.0);
    for (std::size_t ij = 0; ij < blocks; ++ij) {
        std::span<Complex> blk(grad_f.data() + ij * b, b);
        plan.inverse(blk);
        for (std::size_t k = 0; k < b; ++k) g.coeffs[ij * b + k] = blk[k].real();
    }
    return g;
}

inline std::pair<Matrix, LinearCache> dense_forward(const DenseParams& p, const Matrix& x) {
    if (x.cols() != p.n_in()) {
        throw std::invalid_argument("dense_forward: input width " + std::to_string(x.cols()) +
                                    " != n_in " + std::to_string(p.n_in()));
    }
    Matrix y(x.rows(), p.n_out());
    for (std::size_t s = 0; s < x.rows(); ++s) {
        const auto xs = x.row(s);
        auto ys = y.row(s);
        for (std::size_t o = 0; o < p.n_out(); ++o) {
            const auto w = p.weight.row(o);
            double acc = p.bias[o];
            for (std::size_t i = 0; i < xs.size(); ++i) acc += w[i] * xs[i];
            ys[o] = acc;
        }
    }
    return {std::move(y), LinearCache{x}};
}

inline DenseGrads dense_backward(const DenseParams& p, const LinearCache& cache, const Matrix& dy) {
    const Matrix& x = cache.input;
    if (x.cols() != p.n_in() || dy.cols() != p.n_out() || dy.rows() != x.rows())
        throw std::invalid_argument("dense_backward: shape mismatch between cache, params and dy");
    DenseGrads g{Matrix(p.n_out(), p.n_in()), RealVector(p.n_out(), 0.0), Matrix(x.rows(), p.n_in())};
    for (std::size_t s = 0; s < x.rows(); ++s) {
        const auto xs = x.row(s);
        const auto dys = dy.row(s);
        auto dxs = g.input.row(s);
        for (std::size_t o = 0; o < p.n_out(); ++o) {
            const double d = dys[o];
            g.bias[o] += d;
            if (d == 0.0) continue;
            auto gw = g.weight.row(o);
            const auto w = p.weight.row(o);
            for (std::size_t i = 0; i < xs.size(); ++i) {
                gw[i] += d * xs[i];
                dxs[i] += d * w[i];
            }
        }
    }
    return g;
}

inline std::pair<Matrix, ReluCache> relu_forward(const Matrix& x) {
    Matrix y = x;
    for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
    return {std::move(y), ReluCache{x}};
}

// Subgradient at exactly zero is zero.
inline Matrix relu_backward(const ReluCache& cache, const Matrix& dy) {
    if (dy.rows() != cache.pre_activation.rows() || dy.cols() != cache.pre_activation.cols())
        throw std::invalid_argument("relu_backward: shape mismatch");
    Matrix dx = dy;
    const auto& pre = cache.pre_activation.data();
    auto& d = dx.data();
    for (std::size_t i = 0; i < d.size(); ++i)
        if (!(pre[i] > 0.0)) d[i] = 0.0;
    return dx;
}

struct LossResult {
    double loss = 0.0;
    Matrix grad;
};

// Batch mean of 0.5 * ||y - t||^2.
inline LossResult mse_loss(const Matrix& y, const Matrix& t) {
    if (y.rows() != t.rows() || y.cols() != t.cols())
        throw std::invalid_argument("mse_loss: prediction and target shapes differ");
    if (y.rows() == 0) throw std::invalid_argument("mse_loss: empty batch");
    const double inv_n = 1.0 / static_cast<double>(y.rows());
    LossResult r{0.0, Matrix(y.rows(), y.cols())};
    const auto& yd = y.data();
    const auto& td = t.data();
    auto& gd = r.grad.data();
    double sum = 0.0;
    for (std::size_t i = 0; i < yd.size(); ++i) {
        const double e = yd[i] - td[i];
        sum += e * e;
        gd[i] = e * inv_n;
    }
    r.loss = 0.5 * sum * inv_n;
    return r;
}

// Batch mean of -log softmax(y)[label], written against one-hot targets.
inline LossResult softmax_cross_entropy(const Matrix& y, const Matrix& t) {
    if (y.rows() != t.rows() || y.cols() != t.cols())
        throw std::invalid_argument("softmax_cross_entropy: prediction and target shapes differ");
    if (y.rows() == 0) throw std::invalid_argument("softmax_cross_entropy: empty batch");
    const double inv_n = 1.0 / static_cast<double>(y.rows());
    LossResult r{0.0, Matrix(y.rows(), y.cols())};
    double sum = 0.0;
    for (std::size_t s = 0; s < y.rows(); ++s) {
        const auto ys = y.row(s);
        const auto ts = t.row(s);
        auto gs = r.grad.row(s);
        const double mx = *std::max_element(ys.begin(), ys.end());
        double z = 0.0;
        for (double v : ys) z += std::exp(v - mx);
        const double log_z = mx + std::log(z);
        for (std::size_t c = 0; c < ys.size(); ++c) {
            const double p = std::exp(ys[c] - log_z);
            sum -= ts[c] * (ys[c] - log_z);
            gs[c] = (p - ts[c]) * inv_n;
        }
    }
    r.loss = sum * inv_n;
    return r;
}

enum class LossKind { mse, cross_entropy };

inline const char* to_string(LossKind k) { return k == LossKind::mse ? "mse" : "cross_entropy"; }

inline LossKind loss_kind_from_string(const std::string& s) {
    if (s == "mse") return LossKind::mse;
    if (s == "cross_entropy") return LossKind::cross_entropy;
    throw std::invalid_argument("unknown loss '" + s + "' (expected mse or cross_entropy)");
}

inline LossResult evaluate_loss(LossKind kind, const Matrix& y, const Matrix& t) {
    return kind == LossKind::mse ? mse_loss(y, t) : softmax_cross_entropy(y, t);
}

inline Matrix slice_logits(const Matrix& y, std::size_t n_classes) {
    if (n_classes > y.cols()) {
        throw std::invalid_argument("slice_logits: n_classes " + std::to_string(n_classes) +
                                    " exceeds output width " + std::to_string(y.cols()));
    }
    Matrix out(y.rows(), n_classes);
    for (std::size_t s = 0; s < y.rows(); ++s)
        std::copy_n(y.row(s).begin(), n_classes, out.row(s).begin());
    return out;
}

// Scatters the gradient of the sliced logits back into the full output;
// the dropped tail receives zero.
inline Matrix slice_logits_backward(const Matrix& d_sliced, std::size_t n_out) {
    if (d_sliced.cols() > n_out) throw std::invalid_argument("slice_logits_backward: n_classes > n_out");
    Matrix out(d_sliced.rows(), n_out);
    for (std::size_t s = 0; s < d_sliced.rows(); ++s)
        std::copy(d_sliced.row(s).begin(), d_sliced.row(s).end(), out.row(s).begin());
    return out;
}

}  // namespace cdnn
