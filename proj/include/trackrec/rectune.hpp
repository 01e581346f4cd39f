#pragma once

// Validator fine-tuning on greedy chains, and generator warm-start by
// distilling a teacher's chains. Here the teacher reads the environment's
// latent preferences directly.

#include <cstdint>
#include <span>
#include <vector>

#include "trackrec/env.hpp"
#include "trackrec/generator.hpp"
#include "trackrec/validator.hpp"

namespace trackrec {

struct RecTuneConfig {
    double learning_rate = 1e-2;
    /// One pass leaves a freshly initialized validator close to chance.
    int epochs = 10;

    void validate() const;
};

struct DistillConfig {
    double fraction = 0.05;
    double learning_rate = 0.5;
    int epochs = 100;

    void validate() const;
};

struct RecTuneExample {
    int user_id = 0;
    int item_id = 0;
    RecCoT cot;
    Label label = Label::no;

    friend bool operator==(const RecTuneExample&, const RecTuneExample&) = default;
};

/// One example per interaction, carrying the generator's greedy chain for the
/// interaction's user.
std::vector<RecTuneExample> build_rectune_dataset(const GeneratorParams& generator, const Dataset& data,
                                                  std::span<const Interaction> interactions);

struct RecTuneResult {
    ValidatorParams params;
    /// Mean clamped BCE before each step, per epoch.
    std::vector<double> epoch_losses;
};

RecTuneResult rectune_validator(const ValidatorParams& validator, const Dataset& data,
                                const std::vector<RecTuneExample>& examples, const RecTuneConfig& cfg);

/// The m tags with the largest latent weight, descending, lowest id on ties.
RecCoT oracle_cot(const UserProfile& user, int m);

struct DistillResult {
    GeneratorParams params;
    std::vector<int> selected_users;
};

/// Picks ceil(fraction * |users with latent|) users and runs per-user
/// gradient ascent on the log-likelihood of their oracle chains.
DistillResult distill_generator(const GeneratorParams& generator, std::span<const UserProfile> users,
                                const DistillConfig& cfg, std::uint64_t seed);

}  // namespace trackrec
