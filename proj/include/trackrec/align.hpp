#pragma once

// Softmax-DPO alignment of the generator against validator feedback.
//
// With ratio(c) = beta * (log pi(c|u) - log ref(c|u)) the per-record loss is
//   -log sigmoid( -log sum_{d in negatives} exp(ratio(d) - ratio(p)) )
// which equals log(1 + sum_d exp(ratio(d) - ratio(p))).

#include <vector>

#include "trackrec/env.hpp"
#include "trackrec/feedback.hpp"
#include "trackrec/generator.hpp"

namespace trackrec {

struct DpoConfig {
    double beta = 1.0;
    double learning_rate = 1e-2;
    int epochs_per_iteration = 1;

    void validate() const;
};

double sdpo_loss(const GeneratorParams& policy, const GeneratorParams& reference, const FeedbackRecord& record,
                 const DpoConfig& cfg, const UserProfile& user);

GeneratorParams sdpo_grad(const GeneratorParams& policy, const GeneratorParams& reference,
                          const FeedbackRecord& record, const DpoConfig& cfg, const UserProfile& user);

/// Loss and gradient in one pass; gradient is written into `grad`.
double sdpo_loss_and_grad(const GeneratorParams& policy, const GeneratorParams& reference,
                          const FeedbackRecord& record, const DpoConfig& cfg, const UserProfile& user,
                          GeneratorParams& grad);

struct AlignResult {
    GeneratorParams params;
    /// Mean pre-step loss for each epoch.
    std::vector<double> epoch_losses;
};

/// Per-record gradient descent over the records in their given order.
AlignResult align_generator(const GeneratorParams& policy, const GeneratorParams& reference,
                            const std::vector<FeedbackRecord>& records, const DpoConfig& cfg, const Dataset& data);

}  // namespace trackrec
