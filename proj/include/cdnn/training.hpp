#pragma once

// Mini-batch SGD with classical momentum and the multi-seed experiment
// driver.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "cdnn/data.hpp"
#include "cdnn/diagnostics.hpp"
#include "cdnn/errors.hpp"
#include "cdnn/layers.hpp"
#include "cdnn/network.hpp"
#include "cdnn/random.hpp"
#include "cdnn/regularization.hpp"

namespace cdnn {

struct TrainingConfig {
    double learning_rate = 0.1;
    double momentum = 0.9;
    std::size_t batch_size = 64;
    std::size_t epochs = 25;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    ShannonDropoutConfig dropout;
    FisherConfig fisher;
    LossKind loss = LossKind::cross_entropy;

    void validate() const {
        if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
        if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
        if (epochs == 0) throw std::invalid_argument("epochs must be at least 1");
        dropout.validate();
        fisher.validate();
    }
};

struct RunResult {
    std::string model;
    std::uint64_t seed = 0;
    std::size_t param_count = 0;
    std::vector<double> train_loss;     // per epoch, full training set
    std::vector<double> test_accuracy;  // per epoch
    double final_train_loss = 0.0;
    double final_test_accuracy = 0.0;
    SpectrumReport spectrum;            // at the end of training, full training set
    double wall_clock_seconds = 0.0;
};

struct TrainedModel {
    Network network;
    RunResult result;
};

// Classical (heavy-ball) momentum: v <- beta * v + g; theta <- theta - lr * v.
inline void sgd_momentum_step(std::span<double> params, std::span<const double> grads,
                              std::span<double> velocity, double lr, double beta) {
    if (params.size() != grads.size() || params.size() != velocity.size())
        throw std::invalid_argument("sgd_momentum_step: parameter, gradient and velocity shapes differ");
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = beta * velocity[i] + grads[i];
        params[i] -= lr * velocity[i];
    }
}

inline Matrix gather_rows(const Matrix& x, std::span<const std::size_t> idx) {
    Matrix out(idx.size(), x.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto src = x.row(idx[r]);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

// One optimizer step on a mini-batch. Returns the batch data loss.
inline double train_step(Network& net, std::vector<RealVector>& velocity, const Matrix& x,
                         std::span<const int> labels, const TrainingConfig& cfg, Rng& dropout_rng) {
    const DropoutSettings drop{cfg.dropout.rate, cfg.dropout.enabled};
    const ForwardResult fwd = network_forward(net, x, true, drop, &dropout_rng);
    const Matrix logits = slice_logits(fwd.output, net.spec.n_classes);
    const LossResult loss = evaluate_loss(cfg.loss, logits, one_hot(labels, net.spec.n_classes));
    NetworkGrads grads = network_backward(net, fwd, slice_logits_backward(loss.grad, fwd.output.cols()), drop);

    if (cfg.fisher.enabled && cfg.fisher.strength > 0.0) {
        std::size_t t = 0;
        for (const auto& layer : net.layers) {
            if (std::holds_alternative<ReluLayer>(layer)) continue;
            if (const auto* c = std::get_if<CirculantStack>(&layer)) {
                const RealVector g = fisher_trace_grad(*c, cfg.fisher);
                for (std::size_t i = 0; i < g.size(); ++i) grads[t][i] += cfg.fisher.strength * g[i];
            }
            t += 2;
        }
    }

    auto params = net.parameters();
    for (std::size_t t = 0; t < params.size(); ++t)
        sgd_momentum_step(params[t], grads[t], velocity[t], cfg.learning_rate, cfg.momentum);
    return loss.loss;
}

// Deterministic in (spec, data, cfg, seed): initialization, batch order and
// dropout masks come from independent streams of the same seed.
inline TrainedModel train_model(const NetworkSpec& spec, const SplitDataset& data, const TrainingConfig& cfg,
                                std::uint64_t seed) {
    cfg.validate();
    spec.validate();
    if (data.train_x.cols() != spec.input_dim())
        throw std::invalid_argument("train_model: data width does not match the network input");
    if (spec.n_classes < kDigitsClasses)
        throw std::invalid_argument("train_model: network must produce at least 10 class logits");

    const auto start = std::chrono::steady_clock::now();
    TrainedModel out{init_network(spec, seed), {}};
    Network& net = out.network;
    RunResult& res = out.result;
    res.model = spec.name;
    res.seed = seed;
    res.param_count = net.param_count();

    std::vector<RealVector> velocity;
    for (const auto& p : net.parameters()) velocity.emplace_back(p.size(), 0.0);

    Rng shuffle_rng(seed, Stream::shuffle);
    Rng dropout_rng(seed ^ splitmix64(cfg.dropout.rng_seed), Stream::dropout);
    const std::size_t n = data.train_x.rows();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffle_rng.permutation(n);
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
            const std::size_t end = std::min(n, begin + cfg.batch_size);
            const std::span<const std::size_t> idx(order.data() + begin, end - begin);
            const Matrix xb = gather_rows(data.train_x, idx);
            std::vector<int> yb(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = data.train_y[idx[i]];
            const double batch_loss = train_step(net, velocity, xb, yb, cfg, dropout_rng);
            if (!std::isfinite(batch_loss)) throw DivergenceError(epoch + 1, "non-finite mini-batch loss");
        }
        const double loss = network_loss(net, data.train_x, data.train_y, cfg.loss);
        if (!std::isfinite(loss)) throw DivergenceError(epoch + 1, "non-finite training loss");
        res.train_loss.push_back(loss);
        res.test_accuracy.push_back(accuracy(net, data.test_x, data.test_y));
    }
    res.final_train_loss = res.train_loss.back();
    res.final_test_accuracy = res.test_accuracy.back();
    res.spectrum = model_condition_number(net, data.train_x);
    res.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

struct ModelSummary {
    std::string name;
    std::size_t param_count = 0;
    std::vector<RunResult> runs;  // one per seed, in seed order
    std::vector<Network> networks;
    double loss_mean = 0.0, loss_std = 0.0;
    double accuracy_mean = 0.0, accuracy_std = 0.0;
    double kappa_mean = 0.0;  // mean over seeds of the per-run mean kappa
};

struct ExperimentSummary {
    TrainingConfig config;
    std::vector<ModelSummary> models;
};

// Mean and population standard deviation.
inline std::pair<double, double> mean_std(std::span<const double> v) {
    if (v.empty()) return {0.0, 0.0};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

inline std::vector<NetworkSpec> experiment_architectures() { return {dense_mlp(), cd_mlp_b4(), cd_mlp_b8()}; }

// Trains every architecture on every seed. Independent runs may execute on
// up to `jobs` threads; results do not depend on the thread count.
inline ExperimentSummary run_experiment(const TrainingConfig& cfg, const SplitDataset& data,
                                        const std::vector<NetworkSpec>& specs = experiment_architectures(),
                                        std::size_t jobs = 1) {
    cfg.validate();
    if (cfg.seeds.empty()) throw std::invalid_argument("run_experiment: no seeds");

    struct Task {
        std::size_t model;
        std::size_t seed_index;
    };
    std::vector<Task> tasks;
    for (std::size_t m = 0; m < specs.size(); ++m)
        for (std::size_t s = 0; s < cfg.seeds.size(); ++s) tasks.push_back({m, s});

    std::vector<std::vector<TrainedModel>> results(specs.size(), std::vector<TrainedModel>(cfg.seeds.size()));
    std::exception_ptr failure;
    std::mutex mu;
    std::size_t next = 0;
    auto worker = [&] {
        for (;;) {
            std::size_t t;
            {
                std::lock_guard lock(mu);
                if (next >= tasks.size() || failure) return;
                t = next++;
            }
            try {
                const auto [m, s] = tasks[t];
                results[m][s] = train_model(specs[m], data, cfg, cfg.seeds[s]);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t j = 0; j < std::min(jobs, tasks.size()); ++j) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    ExperimentSummary summary{cfg, {}};
    for (std::size_t m = 0; m < specs.size(); ++m) {
        ModelSummary ms;
        ms.name = specs[m].name;
        ms.param_count = param_count(specs[m]);
        std::vector<double> losses, accs;
        double kappa_sum = 0.0;
        for (auto& tm : results[m]) {
            losses.push_back(tm.result.final_train_loss);
            accs.push_back(tm.result.final_test_accuracy);
            kappa_sum += tm.result.spectrum.mean_kappa;
            ms.runs.push_back(std::move(tm.result));
            ms.networks.push_back(std::move(tm.network));
        }
        std::tie(ms.loss_mean, ms.loss_std) = mean_std(losses);
        std::tie(ms.accuracy_mean, ms.accuracy_std) = mean_std(accs);
        ms.kappa_mean = kappa_sum / static_cast<double>(ms.runs.size());
        summary.models.push_back(std::move(ms));
    }
    return summary;
}

// Loads the digits file, scales intensities to [0, 1] and applies the
// seeded 1437/360 split.
inline SplitDataset prepare_digits(const std::string& path, std::uint64_t split_seed = 0) {
    DigitsDataset ds = load_digits_csv(path);
    ds.features = normalize(ds.features);
    return split_deterministic(ds, kDigitsTrain, split_seed);
}

}  // namespace cdnn
