#pragma once

// Iterative alternating training of generator and validator.
//
// Each iteration runs
//   stage 1: sample feedback with the current (G, V) and align G by S-DPO
//   stage 2: rec-tune V on greedy chains from the aligned G
// and is followed by an evaluation snapshot on the validation split.

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "trackrec/align.hpp"
#include "trackrec/env.hpp"
#include "trackrec/feedback.hpp"
#include "trackrec/generator.hpp"
#include "trackrec/rectune.hpp"
#include "trackrec/validator.hpp"

namespace trackrec {

enum class ReferenceMode { per_iteration_snapshot, initial };

std::string_view to_string(ReferenceMode mode);
ReferenceMode parse_reference_mode(std::string_view text);

struct LoopConfig {
    int iterations = 3;
    int cot_length = 4;
    SamplingParams sampling{};
    DpoConfig dpo{};
    RecTuneConfig rectune{};
    std::optional<DistillConfig> distill = DistillConfig{};
    ReferenceMode reference_mode = ReferenceMode::per_iteration_snapshot;
    /// false skips stage 1 entirely (the no-alignment ablation arm).
    bool align = true;
    std::uint64_t seed = 42;

    void validate() const;
};

struct IterationReport {
    int iteration = 0;
    /// Absent for the baseline row and when alignment is disabled.
    std::optional<double> sdpo_loss;
    std::optional<double> rectune_loss;
    std::optional<double> auc;
    double acc = 0.0;
    double logloss = 0.0;
    double mean_reward = 0.0;
    /// Only for worlds with latent preferences.
    std::optional<double> tag_recall;

    friend bool operator==(const IterationReport&, const IterationReport&) = default;
};

/// Scores the validator on greedy chains from the generator over one split.
IterationReport evaluate_models(const GeneratorParams& generator, const ValidatorParams& validator,
                                const Dataset& data, Split split, int iteration);

/// Mean fraction of each user's top-L latent tags recovered by the greedy
/// chain. Absent when no user has latent preferences.
std::optional<double> oracle_tag_recall(const GeneratorParams& generator, const Dataset& data);

struct IterationOutcome {
    GeneratorParams generator;
    ValidatorParams validator;
    IterationReport report;
    std::vector<FeedbackRecord> feedback;
    std::vector<RecTuneExample> rectune_examples;
};

IterationOutcome run_iteration(const GeneratorParams& generator, const ValidatorParams& validator,
                               const GeneratorParams& reference, const Dataset& data, const LoopConfig& cfg,
                               int iteration);

struct InitialModels {
    GeneratorParams generator;
    ValidatorParams validator;
};

/// Seeded initialization, followed by distillation when configured.
InitialModels initialize_models(const Dataset& data, const LoopConfig& cfg);

/// Called for the baseline (iteration 0) and after every iteration.
using IterationObserver =
    std::function<void(const GeneratorParams&, const ValidatorParams&, const IterationReport&)>;

struct TrackRecResult {
    GeneratorParams generator;
    ValidatorParams validator;
    std::vector<IterationReport> reports;
};

TrackRecResult run_trackrec(const Dataset& data, const LoopConfig& cfg, const IterationObserver& observer = {});

}  // namespace trackrec
