#pragma once

// Multiple-sampling feedback: N sampled chains per interaction, each scored by
// the validator against the observed label, split into one positive (highest
// reward) and N-1 negatives.

#include <cstdint>
#include <span>
#include <vector>

#include "trackrec/env.hpp"
#include "trackrec/generator.hpp"
#include "trackrec/validator.hpp"

namespace trackrec {

struct FeedbackRecord {
    int user_id = 0;
    int item_id = 0;
    Label label = Label::no;
    std::vector<RecCoT> cots;
    std::vector<double> rewards;
    int positive_index = 0;
    std::vector<int> negative_indices;

    const RecCoT& positive() const { return cots[static_cast<std::size_t>(positive_index)]; }
    friend bool operator==(const FeedbackRecord&, const FeedbackRecord&) = default;
};

/// p_true when the label is Yes, p_false otherwise. Inputs must sum to 1.
double feedback_reward(double p_true, double p_false, Label y);

struct Ranking {
    int positive_index = 0;
    std::vector<int> negative_indices;
};

/// argmax with ties to the lowest index; every other index is a negative.
Ranking rank_rewards(std::span<const double> rewards);

FeedbackRecord run_sampling_feedback(const GeneratorParams& generator, const ValidatorParams& validator,
                                     const Dataset& data, const Interaction& interaction,
                                     const SamplingParams& sampling, std::uint64_t stream_seed);

/// One record per interaction, in input order. Each record draws from
/// sub-streams keyed by (user, item, sample index), so reordering the input
/// reorders the output without changing any record.
std::vector<FeedbackRecord> build_feedback_batch(const GeneratorParams& generator, const ValidatorParams& validator,
                                                 const Dataset& data, std::span<const Interaction> interactions,
                                                 const SamplingParams& sampling, std::uint64_t stream_seed);

}  // namespace trackrec
