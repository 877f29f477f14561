#pragma once

// Central finite-difference checks of every hand-written backward pass.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdnn/layers.hpp"
#include "cdnn/matrix.hpp"
#include "cdnn/random.hpp"
#include "cdnn/regularization.hpp"

namespace cdnn {

struct GradCheckConfig {
    std::size_t n_in = 0;
    std::size_t n_out = 0;
    std::size_t block = 1;

    std::string label() const {
        return "(" + std::to_string(n_in) + "," + std::to_string(n_out) + "," + std::to_string(block) + ")";
    }
    void validate() const { LayerSpec::cdlinear(n_in, n_out, block).validate(); }
};

inline std::vector<GradCheckConfig> default_gradcheck_configs() { return {{8, 8, 2}, {16, 8, 4}, {12, 12, 3}}; }

struct GradCheckEntry {
    std::string config;
    std::string tensor;  // e.g. "cdlinear.coeffs"
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
    bool passed = true;
};

struct GradCheckReport {
    double tolerance = 1e-4;
    double step = 1e-5;
    std::vector<GradCheckEntry> entries;
    double max_rel_error = 0.0;
    std::size_t failures = 0;

    bool passed() const { return failures == 0 && !entries.empty(); }
};

// |a - n| / max(|a|, |n|, 1e-6); the floor keeps coordinates whose true
// gradient is zero from dividing noise by noise.
inline double gradcheck_relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

namespace detail {

inline constexpr std::size_t kCoordinatesPerTensor = 24;
inline constexpr std::size_t kBatch = 3;

inline std::vector<std::size_t> pick_coordinates(std::size_t size, Rng& rng) {
    std::vector<std::size_t> idx = rng.permutation(size);
    if (idx.size() > kCoordinatesPerTensor) idx.resize(kCoordinatesPerTensor);
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline void fill_normal(std::span<double> v, Rng& rng) {
    for (double& x : v) x = rng.normal();
}

// Compares analytic[i] with a central difference of f along coordinate i of x.
inline void check_tensor(GradCheckReport& rep, const std::string& config, const std::string& tensor,
                         std::span<double> x, std::span<const double> analytic, const std::function<double()>& f,
                         Rng& rng) {
    if (x.size() != analytic.size()) throw std::logic_error("gradcheck: " + tensor + " shape mismatch");
    for (std::size_t i : pick_coordinates(x.size(), rng)) {
        const double saved = x[i];
        x[i] = saved + rep.step;
        const double up = f();
        x[i] = saved - rep.step;
        const double down = f();
        x[i] = saved;
        GradCheckEntry e{config, tensor, i, analytic[i], (up - down) / (2.0 * rep.step), 0.0, true};
        e.rel_error = gradcheck_relative_error(e.analytic, e.numeric);
        e.passed = e.rel_error < rep.tolerance;
        rep.max_rel_error = std::max(rep.max_rel_error, e.rel_error);
        rep.failures += !e.passed;
        rep.entries.push_back(std::move(e));
    }
}

// Scalar probe L(y) = sum(r * y) + 0.5 * sum(y^2), so dL/dy = r + y.
inline double probe_loss(const Matrix& y, const Matrix& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r.data()[i] * y.data()[i] + 0.5 * y.data()[i] * y.data()[i];
    return s;
}

inline Matrix probe_grad(const Matrix& y, const Matrix& r) {
    Matrix g = y;
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += r.data()[i];
    return g;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    fill_normal(m.data(), rng);
    return m;
}

}  // namespace detail

inline void gradcheck_cdlinear(GradCheckReport& rep, const GradCheckConfig& c, Rng& rng) {
    using namespace detail;
    CirculantStack p(c.n_in, c.n_out, c.block);
    fill_normal(p.coeffs, rng);
    fill_normal(p.bias, rng);
    Matrix x = random_matrix(kBatch, c.n_in, rng);
    const Matrix r = random_matrix(kBatch, c.n_out, rng);

    auto [y, cache] = cdlinear_forward(p, x);
    const CirculantGrads g = cdlinear_backward(p, cache, probe_grad(y, r));
    auto f = [&] { return probe_loss(cdlinear_forward(p, x).first, r); };
    check_tensor(rep, c.label(), "cdlinear.coeffs", p.coeffs, g.coeffs, f, rng);
    check_tensor(rep, c.label(), "cdlinear.bias", p.bias, g.bias, f, rng);
    check_tensor(rep, c.label(), "cdlinear.input", x.data(), g.input.data(), f, rng);
}

inline void gradcheck_dense(GradCheckReport& rep, const GradCheckConfig& c, Rng& rng) {
    using namespace detail;
    DenseParams p(c.n_in, c.n_out);
    fill_normal(p.weight.data(), rng);
    fill_normal(p.bias, rng);
    Matrix x = random_matrix(kBatch, c.n_in, rng);
    const Matrix r = random_matrix(kBatch, c.n_out, rng);

    auto [y, cache] = dense_forward(p, x);
    const DenseGrads g = dense_backward(p, cache, probe_grad(y, r));
    auto f = [&] { return probe_loss(dense_forward(p, x).first, r); };
    check_tensor(rep, c.label(), "dense.weight", p.weight.data(), g.weight.data(), f, rng);
    check_tensor(rep, c.label(), "dense.bias", p.bias, g.bias, f, rng);
    check_tensor(rep, c.label(), "dense.input", x.data(), g.input.data(), f, rng);
}

// Inputs are kept at least 0.1 away from the kink so the step never crosses it.
inline void gradcheck_relu(GradCheckReport& rep, const GradCheckConfig& c, Rng& rng) {
    using namespace detail;
    Matrix x(kBatch, c.n_in);
    for (double& v : x.data()) v = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.1, 1.0);
    const Matrix r = random_matrix(kBatch, c.n_in, rng);
    auto [y, cache] = relu_forward(x);
    const Matrix g = relu_backward(cache, probe_grad(y, r));
    auto f = [&] { return probe_loss(relu_forward(x).first, r); };
    check_tensor(rep, c.label(), "relu.input", x.data(), g.data(), f, rng);
}

inline void gradcheck_losses(GradCheckReport& rep, const GradCheckConfig& c, Rng& rng) {
    using namespace detail;
    Matrix y = random_matrix(kBatch, c.n_out, rng);
    Matrix t(kBatch, c.n_out);
    for (std::size_t s = 0; s < kBatch; ++s) t(s, rng.below(c.n_out)) = 1.0;

    const LossResult mse = mse_loss(y, t);
    check_tensor(rep, c.label(), "mse.prediction", y.data(), mse.grad.data(), [&] { return mse_loss(y, t).loss; }, rng);
    const LossResult ce = softmax_cross_entropy(y, t);
    check_tensor(rep, c.label(), "cross_entropy.logits", y.data(), ce.grad.data(),
                 [&] { return softmax_cross_entropy(y, t).loss; }, rng);
}

inline void gradcheck_fisher(GradCheckReport& rep, const GradCheckConfig& c, Rng& rng) {
    using namespace detail;
    CirculantStack p(c.n_in, c.n_out, c.block);
    fill_normal(p.coeffs, rng);
    const FisherConfig cfg{};
    const RealVector g = fisher_trace_grad(p, cfg);
    check_tensor(rep, c.label(), "fisher_trace.coeffs", p.coeffs, g, [&] { return fisher_trace(p, cfg); }, rng);
}

inline GradCheckReport run_gradcheck(const std::vector<GradCheckConfig>& configs, double tolerance = 1e-4,
                                     std::uint64_t seed = 0, double step = 1e-5) {
    if (configs.empty()) throw std::invalid_argument("run_gradcheck: no configurations");
    if (!(tolerance > 0.0)) throw std::invalid_argument("run_gradcheck: tolerance must be positive");
    if (!(step > 0.0)) throw std::invalid_argument("run_gradcheck: step must be positive");
    for (const auto& c : configs) c.validate();

    GradCheckReport rep;
    rep.tolerance = tolerance;
    rep.step = step;
    Rng rng(seed, Stream::gradcheck);
    for (const auto& c : configs) {
        gradcheck_cdlinear(rep, c, rng);
        gradcheck_dense(rep, c, rng);
        gradcheck_relu(rep, c, rng);
        gradcheck_losses(rep, c, rng);
        gradcheck_fisher(rep, c, rng);
    }
    return rep;
}

}  // namespace cdnn
