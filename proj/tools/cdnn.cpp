// cdnn: gradient checks, spectral verifiers, training and the digits
// experiment from the command line.
//
// Exit codes: 0 success, 1 a check failed, 2 usage error, 3 runtime error
// (I/O, malformed input, divergence).

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cdnn/cdnn.hpp"

namespace {

using cdnn::json;

constexpr int kExitOk = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void emit_json(const std::string& path, const json& j) {
    if (path.empty()) return;
    if (path == "-") {
        std::cout << j.dump(2) << '\n';
        return;
    }
    cdnn::write_text(path, j.dump(2) + "\n");
}

std::vector<std::size_t> parse_triple(const std::string& s) {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const std::size_t comma = std::min(s.find(',', pos), s.size());
        const std::string tok = s.substr(pos, comma - pos);
        std::size_t used = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (tok.empty() || used != tok.size()) throw UsageError("bad --config '" + s + "', expected n_in,n_out,B");
        out.push_back(v);
        pos = comma + 1;
    }
    if (out.size() != 3) throw UsageError("bad --config '" + s + "', expected n_in,n_out,B");
    return out;
}

// ---- grad-check ----------------------------------------------------------

struct GradCheckArgs {
    std::vector<std::string> configs;
    bool no_defaults = false;
    double tolerance = 1e-4;
    double step = 1e-5;
    std::uint64_t seed = 0;
    std::string json_path;
};

int cmd_grad_check(const GradCheckArgs& a) {
    std::vector<cdnn::GradCheckConfig> configs;
    if (!a.no_defaults) configs = cdnn::default_gradcheck_configs();
    for (const auto& s : a.configs) {
        const auto t = parse_triple(s);
        const cdnn::GradCheckConfig c{t[0], t[1], t[2]};
        try {
            c.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError("--config " + s + ": " + e.what());
        }
        configs.push_back(c);
    }
    if (configs.empty()) throw UsageError("no configurations to check");
    if (!(a.tolerance > 0.0)) throw UsageError("--tolerance must be positive");

    const cdnn::GradCheckReport rep = cdnn::run_gradcheck(configs, a.tolerance, a.seed, a.step);

    std::printf("%-12s %-22s %8s %12s\n", "config", "tensor", "checked", "max rel err");
    for (std::size_t i = 0; i < rep.entries.size();) {
        const auto& first = rep.entries[i];
        std::size_t n = 0;
        double worst = 0.0;
        while (i < rep.entries.size() && rep.entries[i].config == first.config &&
               rep.entries[i].tensor == first.tensor) {
            worst = std::max(worst, rep.entries[i].rel_error);
            ++n;
            ++i;
        }
        std::printf("%-12s %-22s %8zu %12.3e\n", first.config.c_str(), first.tensor.c_str(), n, worst);
    }
    for (const auto& e : rep.entries)
        if (!e.passed)
            std::printf("FAIL %s %s[%zu]: analytic %.12e numeric %.12e rel err %.3e\n", e.config.c_str(),
                        e.tensor.c_str(), e.index, e.analytic, e.numeric, e.rel_error);
    std::printf("%zu coordinates, max rel err %.3e, tolerance %.1e: %s\n", rep.entries.size(), rep.max_rel_error,
                rep.tolerance, rep.passed() ? "PASS" : "FAIL");

    json entries = json::array();
    for (const auto& e : rep.entries)
        entries.push_back({{"config", e.config},
                           {"tensor", e.tensor},
                           {"index", e.index},
                           {"analytic", e.analytic},
                           {"numeric", e.numeric},
                           {"rel_error", e.rel_error},
                           {"passed", e.passed}});
    emit_json(a.json_path, {{"tolerance", rep.tolerance},
                            {"step", rep.step},
                            {"checked", rep.entries.size()},
                            {"failures", rep.failures},
                            {"max_rel_error", rep.max_rel_error},
                            {"passed", rep.passed()},
                            {"entries", entries}});
    return rep.passed() ? kExitOk : kExitFail;
}

// ---- verify-theorem1 -----------------------------------------------------

struct Theorem1Args {
    std::vector<std::size_t> blocks{2, 3, 4, 8};
    std::size_t trials = 10;
    std::uint64_t seed = 0;
    std::string json_path;
};

int cmd_verify_theorem1(const Theorem1Args& a) {
    for (std::size_t b : a.blocks)
        if (b == 0 || b > 64) throw UsageError("--blocks entries must lie in [1, 64]");
    if (a.trials == 0) throw UsageError("--trials must be positive");
    const cdnn::ClosedFormReport rep = cdnn::verify_closed_form_spectrum(a.blocks, a.trials, a.seed);

    std::printf("%4s %8s %14s %14s %14s %14s\n", "B", "trials", "explicit", "jacobi", "finite diff", "circulant");
    json rows = json::array();
    for (std::size_t b : a.blocks) {
        double ex = 0, jac = 0, fd = 0, circ = 0;
        for (const auto& t : rep.trials)
            if (t.block == b) {
                ex = std::max(ex, t.explicit_deviation);
                jac = std::max(jac, t.jacobi_deviation);
                fd = std::max(fd, t.fd_deviation);
                circ = std::max(circ, t.circulant_deviation);
            }
        std::printf("%4zu %8zu %14.3e %14.3e %14.3e %14.3e\n", b, a.trials, ex, jac, fd, circ);
        rows.push_back({{"block", b},
                        {"trials", a.trials},
                        {"max_explicit_deviation", ex},
                        {"max_jacobi_deviation", jac},
                        {"max_fd_deviation", fd},
                        {"max_circulant_deviation", circ}});
    }
    std::printf("closed form vs explicit: %.3e (< %.0e), vs finite differences: %.3e (< %.0e): %s\n",
                rep.max_explicit_deviation, rep.tolerance, rep.max_fd_deviation, rep.fd_tolerance,
                rep.passed() ? "PASS" : "FAIL");
    emit_json(a.json_path, {{"tolerance", rep.tolerance},
                            {"fd_tolerance", rep.fd_tolerance},
                            {"circulant_tolerance", rep.circulant_tolerance},
                            {"max_explicit_deviation", rep.max_explicit_deviation},
                            {"max_fd_deviation", rep.max_fd_deviation},
                            {"max_circulant_deviation", rep.max_circulant_deviation},
                            {"passed", rep.passed()},
                            {"blocks", rows}});
    return rep.passed() ? kExitOk : kExitFail;
}

// ---- verify-theorem2 -----------------------------------------------------

struct Theorem2Args {
    std::size_t block = 4;
    std::size_t dim = 0;
    std::vector<std::size_t> samples{100, 1000, 10000};
    std::size_t trials = 100;
    std::uint64_t seed = 0;
    double min_fraction = 0.95;
    bool population = false;
    std::string json_path;
};

int cmd_verify_theorem2(const Theorem2Args& a) {
    const std::size_t dim = a.dim == 0 ? a.block : a.dim;
    if (a.block == 0 || dim % a.block != 0) throw UsageError("--block must divide --dim");
    if (a.population) {
        const double k = cdnn::population_kappa(a.block, dim);
        std::printf("population spectrum: B=%zu dim=%zu kappa = %.17g\n", a.block, dim, k);
        emit_json(a.json_path, {{"mode", "population"}, {"block", a.block}, {"dim", dim}, {"kappa", k}});
        return k == 1.0 ? kExitOk : kExitFail;
    }
    if (a.trials == 0) throw UsageError("--trials must be positive");
    for (std::size_t n : a.samples)
        if (n < a.block) throw UsageError("--samples entries must be at least B");

    const cdnn::ConditionBoundReport rep = cdnn::verify_condition_bound(a.block, a.samples, a.trials, a.seed, dim);
    bool ok = true;
    std::printf("%8s %12s %10s %10s %10s %18s\n", "N", "sqrt(B/N)", "bound", "within", "max kappa",
                "median (k-1)/rate");
    json rows = json::array();
    for (const auto& r : rep.rows) {
        const double kmax = *std::max_element(r.kappas.begin(), r.kappas.end());
        std::printf("%8zu %12.5f %10.5f %10.2f %10.5f %18.4f\n", r.samples, r.sqrt_b_over_n, r.bound,
                    r.fraction_within, kmax, r.median_scaled_excess);
        ok = ok && r.fraction_within >= a.min_fraction;
        rows.push_back({{"samples", r.samples},
                        {"sqrt_b_over_n", r.sqrt_b_over_n},
                        {"bound", r.bound},
                        {"fraction_within", r.fraction_within},
                        {"max_kappa", kmax},
                        {"median_scaled_excess", r.median_scaled_excess},
                        {"kappas", r.kappas}});
    }
    std::printf("population kappa = %.17g; kappa(N=%zu) > kappa(N=%zu) in %.0f%% of trials\n", rep.population_kappa,
                rep.rows.front().samples, rep.rows.back().samples, 100.0 * rep.monotone_fraction);
    std::printf("bound 1 + %.0f sqrt(B/N) held in >= %.0f%% of trials at every N: %s\n",
                cdnn::kConditionBoundConstant, 100.0 * a.min_fraction, ok ? "PASS" : "FAIL");
    emit_json(a.json_path, {{"mode", "sample"},
                            {"block", rep.block},
                            {"dim", rep.dim},
                            {"trials", rep.trials},
                            {"constant", cdnn::kConditionBoundConstant},
                            {"min_fraction", a.min_fraction},
                            {"population_kappa", rep.population_kappa},
                            {"monotone_fraction", rep.monotone_fraction},
                            {"passed", ok},
                            {"rows", rows}});
    return ok ? kExitOk : kExitFail;
}

// ---- train / reproduce ---------------------------------------------------

struct TrainArgs {
    std::string model = "cd_b4";
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::size_t epochs = 25;
    double lr = 0.1;
    double momentum = 0.9;
    std::size_t batch_size = 64;
    double dropout_alpha = cdnn::kShannonRate;
    double fisher_lambda = 1e-4;
    bool enable_dropout = false;
    bool enable_fisher = false;
    std::uint64_t dropout_seed = 0;
    std::string loss = "cross_entropy";
    std::string data = "data/digits.csv";
    std::uint64_t split_seed = 0;
    std::size_t jobs = 1;
    std::string out;
    std::string curves;
    std::string json_path;
};

cdnn::TrainingConfig make_config(const TrainArgs& a) {
    cdnn::TrainingConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.momentum = a.momentum;
    cfg.batch_size = a.batch_size;
    cfg.epochs = a.epochs;
    cfg.seeds = a.seeds;
    cfg.dropout.rate = a.dropout_alpha;
    cfg.dropout.enabled = a.enable_dropout;
    cfg.dropout.rng_seed = a.dropout_seed;
    cfg.fisher.strength = a.fisher_lambda;
    cfg.fisher.enabled = a.enable_fisher;
    try {
        cfg.loss = cdnn::loss_kind_from_string(a.loss);
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (cfg.seeds.empty()) throw UsageError("--seeds must list at least one seed");
    return cfg;
}

void print_run(const cdnn::RunResult& r) {
    std::printf("%-8s seed %-4llu params %-6zu loss %.6f  test acc %.4f  kappa %s  (%.1f s)\n", r.model.c_str(),
                static_cast<unsigned long long>(r.seed), r.param_count, r.final_train_loss, r.final_test_accuracy,
                cdnn::format_kappa(r.spectrum.mean_kappa).c_str(), r.wall_clock_seconds);
}

int cmd_train(const TrainArgs& a) {
    cdnn::NetworkSpec spec;
    try {
        spec = cdnn::architecture_by_name(a.model);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const cdnn::TrainingConfig cfg = make_config(a);
    if (cfg.seeds.size() != 1) throw UsageError("train takes exactly one --seed");
    const cdnn::SplitDataset data = cdnn::prepare_digits(a.data, a.split_seed);
    const cdnn::TrainedModel tm = cdnn::train_model(spec, data, cfg, cfg.seeds.front());
    print_run(tm.result);
    if (!a.out.empty()) cdnn::save_network(tm.network, a.out);
    if (!a.curves.empty()) cdnn::write_text(a.curves, cdnn::curves_csv(tm.result));
    emit_json(a.json_path, {{"config", cdnn::to_json(cfg)}, {"run", cdnn::to_json(tm.result)}});
    return kExitOk;
}

int cmd_reproduce(const TrainArgs& a) {
    const cdnn::TrainingConfig cfg = make_config(a);
    if (a.jobs == 0) throw UsageError("--jobs must be positive");
    const cdnn::SplitDataset data = cdnn::prepare_digits(a.data, a.split_seed);
    const cdnn::ExperimentSummary summary = cdnn::run_experiment(cfg, data, cdnn::experiment_architectures(), a.jobs);

    const std::filesystem::path out = a.out.empty() ? "results" : a.out;
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw cdnn::IoError("cannot create '" + out.string() + "': " + ec.message());

    json doc = cdnn::to_json(summary);
    doc["data"] = {{"path", a.data}, {"split_seed", a.split_seed}, {"train", data.train_y.size()},
                   {"test", data.test_y.size()}};
    cdnn::write_text((out / "results.json").string(), doc.dump(2) + "\n");
    const std::string table = cdnn::format_table(summary);
    cdnn::write_text((out / "table1.txt").string(), table);
    for (const auto& m : summary.models) {
        for (const auto& r : m.runs) {
            print_run(r);
            cdnn::write_text((out / ("curves_" + m.name + "_" + std::to_string(r.seed) + ".csv")).string(),
                             cdnn::curves_csv(r));
        }
        cdnn::write_text((out / ("spectrum_" + m.name + ".csv")).string(), cdnn::spectrum_csv(m.runs.front().spectrum));
    }
    std::printf("\n%s", table.c_str());
    emit_json(a.json_path, doc);
    return kExitOk;
}

// ---- spectrum ------------------------------------------------------------

struct SpectrumArgs {
    std::string model_file;
    std::string data;
    std::string synthetic;
    std::size_t samples = 1000;
    std::size_t block = 0;
    std::uint64_t seed = 0;
    std::uint64_t split_seed = 0;
    std::string out;
    std::string json_path;
};

int cmd_spectrum(const SpectrumArgs& a) {
    const cdnn::Network net = cdnn::load_network(a.model_file);
    cdnn::Matrix inputs;
    if (!a.synthetic.empty()) {
        cdnn::SyntheticKind kind;
        try {
            kind = cdnn::synthetic_kind_from_string(a.synthetic);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        std::size_t block = a.block;
        if (block == 0) {
            block = 1;
            for (const auto& l : net.spec.layers)
                if (l.kind == cdnn::LayerKind::cdlinear) {
                    block = l.block_size;
                    break;
                }
        }
        if (net.spec.input_dim() % block != 0) throw UsageError("--block must divide the model input width");
        inputs = cdnn::gen_synthetic(kind, a.samples, net.spec.input_dim(), block, a.seed);
    } else {
        const std::string path = a.data.empty() ? "data/digits.csv" : a.data;
        inputs = cdnn::prepare_digits(path, a.split_seed).train_x;
        if (inputs.cols() != net.spec.input_dim())
            throw UsageError("model input width does not match the digits features");
    }
    const cdnn::SpectrumReport rep = cdnn::model_condition_number(net, inputs);
    const std::string csv = cdnn::spectrum_csv(rep);
    if (a.out.empty() || a.out == "-") std::cout << csv;
    else cdnn::write_text(a.out, csv);
    for (std::size_t l = 0; l < rep.layers.size(); ++l)
        std::fprintf(stderr, "layer %zu (%s): kappa %s\n", l, cdnn::to_string(rep.layers[l].method),
                     cdnn::format_kappa(rep.layers[l].kappa).c_str());
    json j = cdnn::to_json(rep);
    j["model"] = net.spec.name;
    emit_json(a.json_path, j);
    return kExitOk;
}

void add_training_flags(CLI::App* sub, TrainArgs& a) {
    sub->add_option("--epochs", a.epochs, "Training epochs")->capture_default_str();
    sub->add_option("--lr", a.lr, "Learning rate")->capture_default_str();
    sub->add_option("--momentum", a.momentum, "Momentum coefficient")->capture_default_str();
    sub->add_option("--batch-size", a.batch_size, "Mini-batch size")->capture_default_str();
    sub->add_option("--dropout-alpha", a.dropout_alpha, "Dropout rate")->capture_default_str();
    sub->add_option("--dropout-seed", a.dropout_seed, "Extra seed mixed into the dropout stream")
        ->capture_default_str();
    sub->add_option("--fisher-lambda", a.fisher_lambda, "Fisher-trace penalty strength")->capture_default_str();
    sub->add_flag("--enable-dropout", a.enable_dropout, "Apply dropout before every weight layer");
    sub->add_flag("--enable-fisher", a.enable_fisher, "Add the Fisher-trace penalty to circulant layers");
    sub->add_option("--loss", a.loss, "Training loss: cross_entropy or mse")->capture_default_str();
    sub->add_option("--data", a.data, "Digits CSV")->capture_default_str();
    sub->add_option("--split-seed", a.split_seed, "Seed of the train/test split")->capture_default_str();
    sub->add_option("--json", a.json_path, "Write a JSON report to this path ('-' for stdout)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Block-circulant networks: gradient checks, spectral diagnostics and the digits experiment"};
    app.require_subcommand(1);

    GradCheckArgs gc;
    auto* gc_cmd = app.add_subcommand("grad-check", "Finite-difference checks of every backward pass");
    gc_cmd->add_option("--config", gc.configs, "Extra n_in,n_out,B configuration (repeatable)");
    gc_cmd->add_flag("--no-defaults", gc.no_defaults, "Skip the built-in configurations");
    gc_cmd->add_option("--tolerance", gc.tolerance, "Relative error tolerance")->capture_default_str();
    gc_cmd->add_option("--step", gc.step, "Central difference step")->capture_default_str();
    gc_cmd->add_option("--seed", gc.seed, "Seed for parameters and probes")->capture_default_str();
    gc_cmd->add_option("--json", gc.json_path, "Write a JSON report to this path ('-' for stdout)");

    Theorem1Args t1;
    auto* t1_cmd = app.add_subcommand("verify-theorem1", "Closed-form vs brute-force circulant Hessian spectra");
    t1_cmd->add_option("--blocks", t1.blocks, "Block sizes")->delimiter(',')->capture_default_str();
    t1_cmd->add_option("--trials", t1.trials, "Random trials per block size")->capture_default_str();
    t1_cmd->add_option("--seed", t1.seed, "Seed")->capture_default_str();
    t1_cmd->add_option("--json", t1.json_path, "Write a JSON report to this path ('-' for stdout)");

    Theorem2Args t2;
    auto* t2_cmd = app.add_subcommand("verify-theorem2", "Condition number of whitened data vs sample size");
    t2_cmd->add_option("--block", t2.block, "Block size B")->capture_default_str();
    t2_cmd->add_option("--dim", t2.dim, "Input width (default B)");
    t2_cmd->add_option("--samples", t2.samples, "Sample sizes N")->delimiter(',')->capture_default_str();
    t2_cmd->add_option("--trials", t2.trials, "Trials per sample size")->capture_default_str();
    t2_cmd->add_option("--seed", t2.seed, "Seed")->capture_default_str();
    t2_cmd->add_option("--min-fraction", t2.min_fraction, "Required fraction of trials within the bound")
        ->capture_default_str();
    t2_cmd->add_flag("--population", t2.population, "Report the population spectrum instead of sampling");
    t2_cmd->add_option("--json", t2.json_path, "Write a JSON report to this path ('-' for stdout)");

    TrainArgs tr;
    std::uint64_t train_seed = 0;
    auto* tr_cmd = app.add_subcommand("train", "Train one architecture on one seed");
    tr_cmd->add_option("--model", tr.model, "dense, cd_b4 or cd_b8")->capture_default_str();
    tr_cmd->add_option("--seed", train_seed, "Seed")->capture_default_str();
    tr_cmd->add_option("--out", tr.out, "Save the trained model as JSON");
    tr_cmd->add_option("--curves", tr.curves, "Write per-epoch loss and accuracy CSV");
    add_training_flags(tr_cmd, tr);

    TrainArgs rp;
    rp.out = "results";
    auto* rp_cmd = app.add_subcommand("reproduce", "Train all three architectures on every seed and tabulate");
    rp_cmd->add_option("--seeds", rp.seeds, "Seeds")->delimiter(',')->capture_default_str();
    rp_cmd->add_option("--out", rp.out, "Output directory")->capture_default_str();
    rp_cmd->add_option("--jobs", rp.jobs, "Concurrent training runs")->capture_default_str();
    add_training_flags(rp_cmd, rp);

    SpectrumArgs sp;
    auto* sp_cmd = app.add_subcommand("spectrum", "Per-layer Hessian spectrum of a saved model");
    sp_cmd->add_option("--model", sp.model_file, "Model JSON written by train")->required();
    sp_cmd->add_option("--data", sp.data, "Digits CSV (default data/digits.csv)");
    sp_cmd->add_option("--synthetic", sp.synthetic, "Use synthetic inputs: gaussian or flat_spectrum")
        ->excludes("--data");
    sp_cmd->add_option("--samples", sp.samples, "Synthetic sample count")->capture_default_str();
    sp_cmd->add_option("--block", sp.block, "Synthetic block size (default: first circulant layer)");
    sp_cmd->add_option("--seed", sp.seed, "Synthetic seed")->capture_default_str();
    sp_cmd->add_option("--split-seed", sp.split_seed, "Seed of the train/test split")->capture_default_str();
    sp_cmd->add_option("--out", sp.out, "CSV output path (default stdout)");
    sp_cmd->add_option("--json", sp.json_path, "Write a JSON report to this path ('-' for stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*gc_cmd) return cmd_grad_check(gc);
        if (*t1_cmd) return cmd_verify_theorem1(t1);
        if (*t2_cmd) return cmd_verify_theorem2(t2);
        if (*tr_cmd) {
            tr.seeds = {train_seed};
            return cmd_train(tr);
        }
        if (*rp_cmd) return cmd_reproduce(rp);
        if (*sp_cmd) return cmd_spectrum(sp);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\nRun with --help for more information.\n";
        return kExitUsage;
    } catch (const cdnn::DivergenceError& e) {
        std::cerr << "training diverged at epoch " << e.epoch() << ": " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
