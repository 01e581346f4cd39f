#include "trackrec/feedback.hpp"

#include <cmath>

#include <fmt/core.h>

namespace trackrec {

double feedback_reward(double p_true, double p_false, Label y) {
    if (std::abs(p_true + p_false - 1.0) > 1e-9) {
        throw Error(ErrorKind::contract, fmt::format("reward inputs {} and {} are not normalized", p_true, p_false));
    }
    return y == Label::yes ? p_true : p_false;
}

Ranking rank_rewards(std::span<const double> rewards) {
    if (rewards.empty()) {
        throw Error(ErrorKind::contract, "cannot rank an empty reward list");
    }
    Ranking r;
    for (std::size_t i = 1; i < rewards.size(); ++i) {
        if (rewards[i] > rewards[static_cast<std::size_t>(r.positive_index)]) {
            r.positive_index = static_cast<int>(i);
        }
    }
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        if (static_cast<int>(i) != r.positive_index) {
            r.negative_indices.push_back(static_cast<int>(i));
        }
    }
    return r;
}

FeedbackRecord run_sampling_feedback(const GeneratorParams& generator, const ValidatorParams& validator,
                                     const Dataset& data, const Interaction& interaction,
                                     const SamplingParams& sampling, std::uint64_t stream_seed) {
    sampling.validate();
    const UserProfile& user = data.user(interaction.user_id);
    const ItemProfile& item = data.item(interaction.item_id);

    FeedbackRecord rec;
    rec.user_id = interaction.user_id;
    rec.item_id = interaction.item_id;
    rec.label = interaction.label;
    rec.cots.reserve(static_cast<std::size_t>(sampling.num_samples));
    rec.rewards.reserve(static_cast<std::size_t>(sampling.num_samples));
    for (int j = 0; j < sampling.num_samples; ++j) {
        Rng rng(stream_seed, "feedback.sample",
                {static_cast<std::uint64_t>(interaction.user_id), static_cast<std::uint64_t>(interaction.item_id),
                 static_cast<std::uint64_t>(j)});
        RecCoT cot = sample_cot(generator, user, sampling, rng);
        const auto raw = raw_scores(validator, user, item, cot);
        NormalizedScores norm;
        if (std::isfinite(raw.yes) && std::isfinite(raw.no) && raw.yes + raw.no > 0.0) {
            norm = normalize(raw.yes, raw.no);
        } else {
            // Overflowed or underflowed heads: use the shifted form.
            norm.p_true = p_yes(validator, user, item, cot);
            norm.p_false = 1.0 - norm.p_true;
        }
        rec.rewards.push_back(feedback_reward(norm.p_true, norm.p_false, interaction.label));
        rec.cots.push_back(std::move(cot));
    }
    auto ranking = rank_rewards(rec.rewards);
    rec.positive_index = ranking.positive_index;
    rec.negative_indices = std::move(ranking.negative_indices);
    return rec;
}

std::vector<FeedbackRecord> build_feedback_batch(const GeneratorParams& generator, const ValidatorParams& validator,
                                                 const Dataset& data, std::span<const Interaction> interactions,
                                                 const SamplingParams& sampling, std::uint64_t stream_seed) {
    if (interactions.empty()) {
        throw Error(ErrorKind::contract, "feedback batch needs at least one interaction");
    }
    std::vector<FeedbackRecord> out;
    out.reserve(interactions.size());
    for (const auto& x : interactions) {
        out.push_back(run_sampling_feedback(generator, validator, data, x, sampling, stream_seed));
    }
    return out;
}

}  // namespace trackrec
