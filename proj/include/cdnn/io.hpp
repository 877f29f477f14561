#pragma once

// JSON and CSV serialization of models, spectra and experiment results.
//
// Non-finite condition numbers are written as null together with a
// "degenerate" flag, since JSON has no representation for infinity.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cdnn/diagnostics.hpp"
#include "cdnn/errors.hpp"
#include "cdnn/network.hpp"
#include "cdnn/training.hpp"

namespace cdnn {

using json = nlohmann::json;

inline constexpr const char* kModelFormat = "cdnn-model";
inline constexpr int kModelFormatVersion = 1;

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const LayerSpectrum& s) {
    return {{"method", to_string(s.method)},
            {"eigenvalues", s.eigenvalues},
            {"kappa", finite_or_null(s.kappa)},
            {"degenerate", s.degenerate}};
}

inline json to_json(const SpectrumReport& r) {
    json layers = json::array();
    for (const auto& l : r.layers) layers.push_back(to_json(l));
    return {{"layers", layers},
            {"mean_kappa", finite_or_null(r.mean_kappa)},
            {"degenerate", r.degenerate},
            {"mixed_methods", r.mixed_methods}};
}

// Wall-clock fields are the only non-deterministic content; pass
// include_timing = false to obtain a byte-stable document.
inline json to_json(const RunResult& r, bool include_timing = true) {
    json kappas = json::array();
    for (const auto& l : r.spectrum.layers) kappas.push_back(finite_or_null(l.kappa));
    json j = {{"model", r.model},
              {"seed", r.seed},
              {"param_count", r.param_count},
              {"epochs", r.train_loss.size()},
              {"train_loss", r.train_loss},
              {"test_accuracy", r.test_accuracy},
              {"final_train_loss", r.final_train_loss},
              {"final_test_accuracy", r.final_test_accuracy},
              {"kappa_per_layer", kappas},
              {"kappa_mean", finite_or_null(r.spectrum.mean_kappa)},
              {"kappa_degenerate", r.spectrum.degenerate},
              {"spectrum", to_json(r.spectrum)}};
    if (include_timing) j["wall_clock_seconds"] = r.wall_clock_seconds;
    return j;
}

inline json to_json(const TrainingConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"momentum", c.momentum},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"seeds", c.seeds},
            {"loss", to_string(c.loss)},
            {"dropout", {{"enabled", c.dropout.enabled}, {"rate", c.dropout.rate}, {"rng_seed", c.dropout.rng_seed}}},
            {"fisher", {{"enabled", c.fisher.enabled}, {"strength", c.fisher.strength}, {"epsilon", c.fisher.epsilon}}}};
}

inline json to_json(const ExperimentSummary& s, bool include_timing = true) {
    json models = json::array();
    for (const auto& m : s.models) {
        json runs = json::array();
        for (const auto& r : m.runs) runs.push_back(to_json(r, include_timing));
        models.push_back({{"model", m.name},
                          {"param_count", m.param_count},
                          {"final_train_loss_mean", m.loss_mean},
                          {"final_train_loss_std", m.loss_std},
                          {"test_accuracy_mean", m.accuracy_mean},
                          {"test_accuracy_std", m.accuracy_std},
                          {"kappa_mean", finite_or_null(m.kappa_mean)},
                          {"runs", runs}});
    }
    return {{"config", to_json(s.config)}, {"models", models}};
}

inline std::string display_name(const std::string& model) {
    if (model == "dense") return "Dense MLP";
    if (model == "cd_b4") return "CD-MLP (B=4)";
    if (model == "cd_b8") return "CD-MLP (B=8)";
    return model;
}

inline std::string format_kappa(double k) {
    if (!std::isfinite(k)) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2g", k);
    return buf;
}

// Columns: Model, Parameters, Final training loss, Test accuracy, Hessian kappa.
inline std::string format_table(const ExperimentSummary& s) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-16s %10s %22s %20s %12s\n", "Model", "Parameters", "Final training loss",
                  "Test accuracy", "Hessian kappa");
    out << line;
    for (const auto& m : s.models) {
        char loss[64], acc[64];
        std::snprintf(loss, sizeof loss, "%.4f +/- %.4f", m.loss_mean, m.loss_std);
        std::snprintf(acc, sizeof acc, "%.2f%% +/- %.2f%%", 100.0 * m.accuracy_mean, 100.0 * m.accuracy_std);
        std::snprintf(line, sizeof line, "%-16s %10zu %22s %20s %12s\n", display_name(m.name).c_str(),
                      m.param_count, loss, acc, format_kappa(m.kappa_mean).c_str());
        out << line;
    }
    return out.str();
}

// epoch,train_loss,test_accuracy
inline std::string curves_csv(const RunResult& r) {
    std::ostringstream out;
    out << std::setprecision(17) << "epoch,train_loss,test_accuracy\n";
    for (std::size_t e = 0; e < r.train_loss.size(); ++e)
        out << e + 1 << ',' << r.train_loss[e] << ',' << r.test_accuracy[e] << '\n';
    return out.str();
}

// layer,method,index,eigenvalue with eigenvalues in descending order per layer.
inline std::string spectrum_csv(const SpectrumReport& rep) {
    std::ostringstream out;
    out << std::setprecision(17) << "layer,method,index,eigenvalue\n";
    for (std::size_t l = 0; l < rep.layers.size(); ++l) {
        const auto& ev = rep.layers[l].eigenvalues;
        for (std::size_t i = 0; i < ev.size(); ++i)
            out << l << ',' << to_string(rep.layers[l].method) << ',' << i << ',' << ev[ev.size() - 1 - i] << '\n';
    }
    return out.str();
}

inline json to_json(const Network& net) {
    json layers = json::array();
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const LayerSpec& ls = net.spec.layers[l];
        json j = {{"kind", to_string(ls.kind)}, {"n_in", ls.n_in}, {"n_out", ls.n_out}};
        if (const auto* d = std::get_if<DenseParams>(&net.layers[l])) {
            j["weight"] = d->weight.data();
            j["bias"] = d->bias;
        } else if (const auto* c = std::get_if<CirculantStack>(&net.layers[l])) {
            j["block_size"] = ls.block_size;
            j["coeffs"] = c->coeffs;
            j["bias"] = c->bias;
        }
        layers.push_back(std::move(j));
    }
    return {{"format", kModelFormat},
            {"version", kModelFormatVersion},
            {"name", net.spec.name},
            {"n_classes", net.spec.n_classes},
            {"layers", layers}};
}

inline Network network_from_json(const json& j) {
    try {
        if (j.at("format").get<std::string>() != kModelFormat) throw IoError("not a cdnn model document");
        if (j.at("version").get<int>() != kModelFormatVersion) throw IoError("unsupported model format version");
        Network net;
        net.spec.name = j.value("name", std::string{});
        net.spec.n_classes = j.at("n_classes").get<std::size_t>();
        for (const auto& lj : j.at("layers")) {
            LayerSpec ls;
            ls.kind = layer_kind_from_string(lj.at("kind").get<std::string>());
            ls.n_in = lj.at("n_in").get<std::size_t>();
            ls.n_out = lj.at("n_out").get<std::size_t>();
            if (ls.kind == LayerKind::cdlinear) ls.block_size = lj.at("block_size").get<std::size_t>();
            ls.validate();
            net.spec.layers.push_back(ls);
            switch (ls.kind) {
                case LayerKind::dense: {
                    DenseParams p(ls.n_in, ls.n_out);
                    auto w = lj.at("weight").get<std::vector<double>>();
                    p.weight = Matrix(ls.n_out, ls.n_in, std::move(w));
                    p.bias = lj.at("bias").get<std::vector<double>>();
                    if (p.bias.size() != ls.n_out) throw IoError("dense bias has the wrong length");
                    net.layers.emplace_back(std::move(p));
                    break;
                }
                case LayerKind::cdlinear: {
                    CirculantStack p(ls.n_in, ls.n_out, ls.block_size);
                    auto c = lj.at("coeffs").get<std::vector<double>>();
                    if (c.size() != p.coeffs.size()) throw IoError("cdlinear coeffs have the wrong length");
                    p.coeffs = std::move(c);
                    p.bias = lj.at("bias").get<std::vector<double>>();
                    if (p.bias.size() != ls.n_out) throw IoError("cdlinear bias has the wrong length");
                    net.layers.emplace_back(std::move(p));
                    break;
                }
                case LayerKind::relu: net.layers.emplace_back(ReluLayer{}); break;
            }
        }
        net.spec.validate();
        return net;
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed model document: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw IoError(std::string("invalid model document: ") + e.what());
    }
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << text;
    if (!out) throw IoError("write to '" + path + "' failed");
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void save_network(const Network& net, const std::string& path) { write_text(path, to_json(net).dump(1) + "\n"); }

inline Network load_network(const std::string& path) {
    const std::string text = read_text(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError("cannot parse model file '" + path + "': " + e.what());
    }
    return network_from_json(j);
}

}  // namespace cdnn
