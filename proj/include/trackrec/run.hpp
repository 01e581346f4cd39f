#pragma once

// Experiment harness: run configuration, checkpoint files, and the four
// subcommands (synth, train, eval, export-cots) behind the command-line tool.
//
// Run directory layout:
//   <run>/config.json               effective configuration
//   <run>/metrics.csv               one row per report, fixed column order
//   <run>/checkpoints/iter_<k>.gen  generator after iteration k
//   <run>/checkpoints/iter_<k>.val  validator after iteration k
//   <run>/cots/iter_<k>.jsonl       greedy chain per user after iteration k
//   <run>/log.txt                   wall-clock timings (not compared across runs)

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "trackrec/env.hpp"
#include "trackrec/generator.hpp"
#include "trackrec/loop.hpp"
#include "trackrec/rec.hpp"
#include "trackrec/validator.hpp"

namespace trackrec {

struct CtrRunConfig {
    CtrTrainConfig train{};
    int encoder_dim = 32;
};

struct RunConfig {
    std::string name = "default";
    std::uint64_t seed = 42;
    /// Directory written by `synth`; when absent the world is synthesized in
    /// memory from `env`.
    std::optional<std::filesystem::path> data_dir;
    std::filesystem::path runs_dir = "run";
    EnvConfig env{};
    LoopConfig loop{};
    CtrRunConfig ctr{};

    /// Pushes `seed` and the chain length into the nested configs and
    /// validates everything.
    void finalize();
};

/// Strict parse: unknown keys and mistyped values raise schema errors naming
/// the offending key path (e.g. "dpo.beta").
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& config);

/// Command-line overrides, applied on top of the config file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> iterations;
    bool no_align = false;
    bool no_distill = false;
};

void apply_overrides(RunConfig& config, const Overrides& overrides);

// ---------------------------------------------------------------------------
// Checkpoints: 8-byte magic, u32 format version, u32 shape fields, then
// little-endian IEEE-754 doubles.

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_generator(const GeneratorParams& params, const std::filesystem::path& path);
GeneratorParams load_generator(const std::filesystem::path& path);
void save_validator(const ValidatorParams& params, const std::filesystem::path& path);
ValidatorParams load_validator(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Data and metrics files

/// Reads interactions.csv and items.csv from a `synth` directory; users.json,
/// when present, restores the noisy features, latent vectors and histories.
Dataset load_dataset_dir(const std::filesystem::path& dir);

/// The config's data directory if set, otherwise the synthetic world.
Dataset resolve_dataset(const RunConfig& config);

inline constexpr std::string_view kMetricsHeader =
    "run,arm,iteration,split,auc,acc,logloss,mean_reward,tag_recall,sdpo_loss,rectune_loss";

struct MetricsRow {
    std::string run;
    std::string arm;
    int iteration = 0;
    Split split = Split::valid;
    std::optional<double> auc;
    double acc = 0.0;
    double logloss = 0.0;
    std::optional<double> mean_reward;
    std::optional<double> tag_recall;
    std::optional<double> sdpo_loss;
    std::optional<double> rectune_loss;
};

/// Missing values are empty fields; numbers use the shortest round-trip form.
std::string format_metrics_row(const MetricsRow& row);
MetricsRow validator_row(const std::string& run, const IterationReport& report, Split split);

// ---------------------------------------------------------------------------
// Subcommands

struct SynthResult {
    std::filesystem::path dir;
    std::size_t n_users = 0;
    std::size_t n_items = 0;
    std::size_t n_interactions = 0;
};

SynthResult cmd_synth(const RunConfig& config, const std::filesystem::path& out_dir);

struct TrainResult {
    std::filesystem::path run_dir;
    std::vector<IterationReport> reports;
    MetricsReport base;
    MetricsReport trackrec;  // CTR arm with the final generator's chains
};

/// Distillation (optional), alternating training, CTR arms, artifacts.
/// `run_dir` defaults to <runs_dir>/<name>. Progress lines go to `log`.
TrainResult cmd_train(const RunConfig& config, const std::optional<std::filesystem::path>& run_dir,
                      std::ostream* log = nullptr);

/// Recomputes validator metrics from the checkpoints of `iteration` (default:
/// the last one); prints the row and appends it to metrics.csv unless an
/// identical row is already there.
MetricsRow cmd_eval(const std::filesystem::path& run_dir, Split split, std::optional<int> iteration = std::nullopt);

/// Rec-tuning tuples (user_id, item_id, tag_ids, label) for one split, built
/// from the stored generator, one JSON object per line.
void cmd_export_cots(const std::filesystem::path& run_dir, Split split, std::optional<int> iteration,
                     std::ostream& out);

}  // namespace trackrec
