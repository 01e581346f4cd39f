#include "trackrec/align.hpp"

#include <cmath>

#include <fmt/core.h>

namespace trackrec {

void DpoConfig::validate() const {
    if (!(beta > 0.0)) {
        throw Error(ErrorKind::invalid_input, "dpo beta must be positive");
    }
    if (!(learning_rate >= 0.0)) {
        throw Error(ErrorKind::invalid_input, "dpo learning rate must be nonnegative");
    }
    if (epochs_per_iteration < 1) {
        throw Error(ErrorKind::invalid_input, "dpo epochs must be positive");
    }
}

namespace {

void check_record(const FeedbackRecord& record) {
    if (record.negative_indices.empty()) {
        throw Error(ErrorKind::contract, "feedback record has no negatives");
    }
}

double log_ratio(const GeneratorParams& policy, const GeneratorParams& reference, const UserProfile& user,
                 const RecCoT& cot, double beta) {
    return beta * (cot_log_prob(policy, user, cot) - cot_log_prob(reference, user, cot));
}

}  // namespace

double sdpo_loss(const GeneratorParams& policy, const GeneratorParams& reference, const FeedbackRecord& record,
                 const DpoConfig& cfg, const UserProfile& user) {
    check_record(record);
    const double pos = log_ratio(policy, reference, user, record.positive(), cfg.beta);
    // log(1 + sum exp(z_d)) = LSE({0} u {z_d})
    std::vector<double> terms{0.0};
    for (int d : record.negative_indices) {
        terms.push_back(log_ratio(policy, reference, user, record.cots[static_cast<std::size_t>(d)], cfg.beta) - pos);
    }
    return log_sum_exp(terms);
}

double sdpo_loss_and_grad(const GeneratorParams& policy, const GeneratorParams& reference,
                          const FeedbackRecord& record, const DpoConfig& cfg, const UserProfile& user,
                          GeneratorParams& grad) {
    check_record(record);
    grad = GeneratorParams(policy.shape);
    const double pos = log_ratio(policy, reference, user, record.positive(), cfg.beta);
    std::vector<double> terms{0.0};
    for (int d : record.negative_indices) {
        terms.push_back(log_ratio(policy, reference, user, record.cots[static_cast<std::size_t>(d)], cfg.beta) - pos);
    }
    const double loss = log_sum_exp(terms);

    // dL/dz_d = softmax({0, z})_d and dz_d = beta * (grad log pi(d) - grad log pi(p)).
    // A negative identical to the positive cancels exactly and is skipped.
    double weight_total = 0.0;
    for (std::size_t i = 0; i < record.negative_indices.size(); ++i) {
        const auto& cot = record.cots[static_cast<std::size_t>(record.negative_indices[i])];
        if (cot == record.positive()) {
            continue;
        }
        const double w = std::exp(terms[i + 1] - loss);
        weight_total += w;
        accumulate_log_prob_grad(policy, user, cot, cfg.beta * w, grad);
    }
    accumulate_log_prob_grad(policy, user, record.positive(), -cfg.beta * weight_total, grad);
    return loss;
}

GeneratorParams sdpo_grad(const GeneratorParams& policy, const GeneratorParams& reference,
                          const FeedbackRecord& record, const DpoConfig& cfg, const UserProfile& user) {
    GeneratorParams grad;
    sdpo_loss_and_grad(policy, reference, record, cfg, user, grad);
    return grad;
}

AlignResult align_generator(const GeneratorParams& policy, const GeneratorParams& reference,
                            const std::vector<FeedbackRecord>& records, const DpoConfig& cfg, const Dataset& data) {
    cfg.validate();
    if (records.empty()) {
        throw Error(ErrorKind::contract, "alignment needs at least one feedback record");
    }
    AlignResult result{policy, {}};
    GeneratorParams grad(policy.shape);
    for (int epoch = 0; epoch < cfg.epochs_per_iteration; ++epoch) {
        double total = 0.0;
        for (std::size_t r = 0; r < records.size(); ++r) {
            const auto& record = records[r];
            const double loss =
                sdpo_loss_and_grad(result.params, reference, record, cfg, data.user(record.user_id), grad);
            if (!std::isfinite(loss)) {
                throw Error(ErrorKind::divergence,
                            fmt::format("non-finite S-DPO loss at record {} (user {}, item {})", r, record.user_id,
                                        record.item_id));
            }
            total += loss;
            if (cfg.learning_rate != 0.0) {
                result.params.add_scaled(grad, -cfg.learning_rate);
            }
        }
        result.epoch_losses.push_back(total / static_cast<double>(records.size()));
    }
    if (!result.params.all_finite()) {
        throw Error(ErrorKind::divergence, "generator parameters became non-finite during alignment");
    }
    return result;
}

}  // namespace trackrec
