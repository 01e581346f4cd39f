// Command-line entry point: synth, train, eval, export-cots.
//
// Failures print exactly one line to stderr,
//   error: <category>: <message>
// and exit with a nonzero status specific to the category.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "trackrec/run.hpp"

namespace {

using namespace trackrec;

int exit_code(ErrorKind kind) { return 3 + static_cast<int>(kind); }

std::string one_line(std::string text) {
    for (char& c : text) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return text;
}

int fail(std::string_view category, const std::string& message, int code) {
    std::cerr << "error: " << category << ": " << one_line(message) << '\n';
    return code;
}

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> iterations;
    bool no_align = false;
    bool no_distill = false;
    std::string out;
    std::string run_dir;
    std::string split;
    std::optional<int> iteration;
};

RunConfig resolve_config(const Options& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    apply_overrides(cfg, {o.seed, o.iterations, o.no_align, o.no_distill});
    return cfg;
}

std::filesystem::path run_dir_of(const Options& o) {
    if (!o.run_dir.empty()) return o.run_dir;
    if (!o.out.empty()) return o.out;
    throw Error(ErrorKind::invalid_input, "a run directory is required");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generator/validator preference-reasoning experiments"};
    app.require_subcommand(1);
    Options o;

    auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
    synth->add_option("--config", o.config, "JSON run config");
    synth->add_option("--seed", o.seed, "override the seed");
    synth->add_option("--out", o.out, "output directory")->default_str("data");

    auto* train = app.add_subcommand("train", "run distillation, alternating training and the CTR arms");
    train->add_option("--config", o.config, "JSON run config");
    train->add_option("--seed", o.seed, "override the seed");
    train->add_option("--iterations", o.iterations, "override the iteration count");
    train->add_flag("--no-align", o.no_align, "skip preference alignment");
    train->add_flag("--no-distill", o.no_distill, "skip distillation");
    train->add_option("--out", o.out, "run directory (default <runs_dir>/<name>)");

    auto* eval = app.add_subcommand("eval", "recompute validator metrics from checkpoints");
    eval->add_option("run_dir", o.run_dir, "run directory");
    eval->add_option("--out", o.out, "run directory (alternative to the positional)");
    eval->add_option("--split", o.split, "train, valid or test")->default_str("valid");
    eval->add_option("--iteration", o.iteration, "checkpoint iteration (default: last)");

    auto* export_cots = app.add_subcommand("export-cots", "write rec-tuning tuples as JSONL");
    export_cots->add_option("run_dir", o.run_dir, "run directory")->required();
    export_cots->add_option("--split", o.split, "train, valid or test")->default_str("train");
    export_cots->add_option("--iteration", o.iteration, "checkpoint iteration (default: last)");
    export_cots->add_option("--out", o.out, "output file (default: standard output)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), 2);
    }

    try {
        if (synth->parsed()) {
            const auto cfg = resolve_config(o);
            const auto out = o.out.empty() ? std::filesystem::path("data") : std::filesystem::path(o.out);
            const auto r = cmd_synth(cfg, out);
            fmt::print("wrote {} users, {} items, {} interactions to {}\n", r.n_users, r.n_items, r.n_interactions,
                       r.dir.string());
        } else if (train->parsed()) {
            const auto cfg = resolve_config(o);
            const auto out = o.out.empty() ? std::nullopt : std::optional<std::filesystem::path>(o.out);
            const auto r = cmd_train(cfg, out, &std::cerr);
            fmt::print("{}\n", r.run_dir.string());
        } else if (eval->parsed()) {
            const auto split = parse_split(o.split.empty() ? "valid" : o.split);
            const auto row = cmd_eval(run_dir_of(o), split, o.iteration);
            fmt::print("{}\n{}\n", kMetricsHeader, format_metrics_row(row));
        } else if (export_cots->parsed()) {
            const auto split = parse_split(o.split.empty() ? "train" : o.split);
            if (o.out.empty()) {
                cmd_export_cots(o.run_dir, split, o.iteration, std::cout);
            } else {
                std::ofstream file(o.out, std::ios::binary | std::ios::trunc);
                if (!file) {
                    throw Error(ErrorKind::io, fmt::format("cannot write {}", o.out));
                }
                cmd_export_cots(o.run_dir, split, o.iteration, file);
            }
        }
    } catch (const Error& e) {
        return fail(to_string(e.kind()), e.what(), exit_code(e.kind()));
    } catch (const std::exception& e) {
        return fail("internal", e.what(), 1);
    }
    return 0;
}
