#pragma once

// Sequential networks built from dense, block-circulant and ReLU layers, with
// an explicit forward cache and a hand-written backward pass.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cdnn/layers.hpp"
#include "cdnn/matrix.hpp"
#include "cdnn/random.hpp"
#include "cdnn/regularization.hpp"

namespace cdnn {

struct NetworkSpec {
    std::string name;
    std::vector<LayerSpec> layers;
    std::size_t n_classes = 10;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().n_in; }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().n_out; }

    void validate() const {
        if (layers.empty()) throw std::invalid_argument("NetworkSpec: no layers");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            layers[l].validate();
            if (l > 0 && layers[l].n_in != layers[l - 1].n_out) {
                throw std::invalid_argument("NetworkSpec: layer " + std::to_string(l) + " expects " +
                                            std::to_string(layers[l].n_in) + " inputs but receives " +
                                            std::to_string(layers[l - 1].n_out));
            }
        }
        if (n_classes == 0 || n_classes > output_dim())
            throw std::invalid_argument("NetworkSpec: n_classes must be in [1, output_dim]");
    }

    bool operator==(const NetworkSpec&) const = default;
};

inline std::size_t param_count(const NetworkSpec& spec) {
    std::size_t total = 0;
    for (const auto& l : spec.layers) total += l.param_count();
    return total;
}

// Three-weight-layer MLP with ReLU between weight layers. block_size == 0
// selects dense layers; otherwise every weight layer is block-circulant.
inline NetworkSpec make_mlp(std::string name, std::vector<std::size_t> widths,
                            std::size_t block_size, std::size_t n_classes = 10) {
    NetworkSpec spec{std::move(name), {}, n_classes};
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        if (l > 0) spec.layers.push_back(LayerSpec::relu(widths[l]));
        spec.layers.push_back(block_size == 0 ? LayerSpec::dense(widths[l], widths[l + 1])
                                              : LayerSpec::cdlinear(widths[l], widths[l + 1], block_size));
    }
    spec.validate();
    return spec;
}

// The three architectures of the digits experiment.
inline NetworkSpec dense_mlp() { return make_mlp("dense", {64, 64, 64, 10}, 0); }
inline NetworkSpec cd_mlp_b4() { return make_mlp("cd_b4", {64, 64, 64, 12}, 4); }
inline NetworkSpec cd_mlp_b8() { return make_mlp("cd_b8", {64, 64, 64, 16}, 8); }

inline NetworkSpec architecture_by_name(const std::string& name) {
    if (name == "dense") return dense_mlp();
    if (name == "cd_b4") return cd_mlp_b4();
    if (name == "cd_b8") return cd_mlp_b8();
    throw std::invalid_argument("unknown model '" + name + "' (expected dense, cd_b4 or cd_b8)");
}

struct ReluLayer {};

using LayerParams = std::variant<DenseParams, CirculantStack, ReluLayer>;

struct Network {
    NetworkSpec spec;
    std::vector<LayerParams> layers;

    // Trainable tensors in a fixed order: for each weight layer, weights then bias.
    std::vector<std::span<double>> parameters() {
        std::vector<std::span<double>> out;
        for (auto& l : layers) {
            if (auto* d = std::get_if<DenseParams>(&l)) {
                out.emplace_back(d->weight.data());
                out.emplace_back(d->bias);
            } else if (auto* c = std::get_if<CirculantStack>(&l)) {
                out.emplace_back(c->coeffs);
                out.emplace_back(c->bias);
            }
        }
        return out;
    }

    std::size_t param_count() const {
        std::size_t total = 0;
        for (const auto& l : layers) {
            if (const auto* d = std::get_if<DenseParams>(&l)) total += d->param_count();
            else if (const auto* c = std::get_if<CirculantStack>(&l)) total += c->param_count();
        }
        return total;
    }
};

// He-scale initialization: weights and circulant coefficients ~ N(0, 2/n_in),
// biases zero. Each input coordinate reaches an output through exactly one
// coefficient in both layer kinds, so the fan-in is n_in for both.
inline Network init_network(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed, Stream::init);
    Network net{spec, {}};
    for (const auto& ls : spec.layers) {
        const double stddev = std::sqrt(2.0 / static_cast<double>(ls.n_in));
        switch (ls.kind) {
            case LayerKind::dense: {
                DenseParams p(ls.n_in, ls.n_out);
                for (double& w : p.weight.data()) w = rng.normal(0.0, stddev);
                net.layers.emplace_back(std::move(p));
                break;
            }
            case LayerKind::cdlinear: {
                CirculantStack p(ls.n_in, ls.n_out, ls.block_size);
                for (double& c : p.coeffs) c = rng.normal(0.0, stddev);
                net.layers.emplace_back(std::move(p));
                break;
            }
            case LayerKind::relu: net.layers.emplace_back(ReluLayer{}); break;
        }
    }
    return net;
}

struct LayerCache {
    LinearCache linear;             // weight layers: input after dropout
    ReluCache relu;                 // relu layers
    std::optional<Matrix> dropout_mask;
};

struct ForwardResult {
    Matrix output;  // full width, before slicing
    std::vector<LayerCache> caches;
};

struct DropoutSettings {
    double rate = 0.0;
    bool enabled = false;
};

// Dropout, when enabled and training, is applied to the input of every weight
// layer.
inline ForwardResult network_forward(const Network& net, const Matrix& x, bool training = false,
                                     DropoutSettings dropout = {}, Rng* rng = nullptr) {
    if (x.cols() != net.spec.input_dim())
        throw std::invalid_argument("network_forward: input width does not match network");
    const bool drop = training && dropout.enabled && dropout.rate > 0.0;
    if (drop && rng == nullptr) throw std::invalid_argument("network_forward: dropout requires an Rng");

    ForwardResult r;
    r.caches.resize(net.layers.size());
    Matrix h = x;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        auto& cache = r.caches[l];
        if (std::holds_alternative<ReluLayer>(layer)) {
            auto [y, c] = relu_forward(h);
            cache.relu = std::move(c);
            h = std::move(y);
            continue;
        }
        if (drop) {
            auto d = shannon_dropout(h, dropout.rate, true, *rng);
            cache.dropout_mask = std::move(d.mask);
            h = std::move(d.output);
        }
        if (const auto* dp = std::get_if<DenseParams>(&layer)) {
            auto [y, c] = dense_forward(*dp, h);
            cache.linear = std::move(c);
            h = std::move(y);
        } else {
            auto [y, c] = cdlinear_forward(std::get<CirculantStack>(layer), h);
            cache.linear = std::move(c);
            h = std::move(y);
        }
    }
    r.output = std::move(h);
    return r;
}

// Gradients in the same order as Network::parameters().
using NetworkGrads = std::vector<RealVector>;

inline NetworkGrads network_backward(const Network& net, const ForwardResult& fwd, const Matrix& d_output,
                                     DropoutSettings dropout = {}) {
    NetworkGrads grads;
    std::vector<std::pair<RealVector, RealVector>> per_layer(net.layers.size());
    Matrix d = d_output;
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const auto& layer = net.layers[l];
        const auto& cache = fwd.caches[l];
        if (std::holds_alternative<ReluLayer>(layer)) {
            d = relu_backward(cache.relu, d);
            continue;
        }
        if (const auto* dp = std::get_if<DenseParams>(&layer)) {
            auto g = dense_backward(*dp, cache.linear, d);
            per_layer[l] = {std::move(g.weight.data()), std::move(g.bias)};
            d = std::move(g.input);
        } else {
            auto g = cdlinear_backward(std::get<CirculantStack>(layer), cache.linear, d);
            per_layer[l] = {std::move(g.coeffs), std::move(g.bias)};
            d = std::move(g.input);
        }
        if (cache.dropout_mask) d = shannon_dropout_backward(d, *cache.dropout_mask, dropout.rate);
    }
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (std::holds_alternative<ReluLayer>(net.layers[l])) continue;
        grads.push_back(std::move(per_layer[l].first));
        grads.push_back(std::move(per_layer[l].second));
    }
    return grads;
}

inline Matrix one_hot(std::span<const int> labels, std::size_t n_classes) {
    Matrix t(labels.size(), n_classes);
    for (std::size_t s = 0; s < labels.size(); ++s) t(s, static_cast<std::size_t>(labels[s])) = 1.0;
    return t;
}

// Argmax over the first n_classes logits; ties go to the lowest index.
inline std::vector<int> predict(const Network& net, const Matrix& x) {
    const Matrix logits = slice_logits(network_forward(net, x).output, net.spec.n_classes);
    std::vector<int> out(logits.rows());
    for (std::size_t s = 0; s < logits.rows(); ++s) {
        const auto row = logits.row(s);
        std::size_t best = 0;
        for (std::size_t c = 1; c < row.size(); ++c)
            if (row[c] > row[best]) best = c;
        out[s] = static_cast<int>(best);
    }
    return out;
}

inline double accuracy(const Network& net, const Matrix& x, std::span<const int> labels) {
    if (labels.empty()) return 0.0;
    const auto pred = predict(net, x);
    std::size_t hits = 0;
    for (std::size_t s = 0; s < pred.size(); ++s) hits += pred[s] == labels[s];
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// Batch-mean loss of the sliced logits against one-hot targets.
inline double network_loss(const Network& net, const Matrix& x, std::span<const int> labels,
                           LossKind kind = LossKind::mse) {
    const Matrix logits = slice_logits(network_forward(net, x).output, net.spec.n_classes);
    return evaluate_loss(kind, logits, one_hot(labels, net.spec.n_classes)).loss;
}

}  // namespace cdnn
