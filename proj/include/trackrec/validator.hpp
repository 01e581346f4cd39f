#pragma once

// Chain validator: two exponential heads scoring "Yes" and "No" for a
// (user, item, chain) triple. Scores are unnormalized; normalize() turns them
// into the click probability.

#include <vector>

#include "trackrec/core.hpp"
#include "trackrec/env.hpp"

namespace trackrec {

struct ValidatorParams {
    int num_tags = 0;
    std::vector<double> w_yes;  // 4K
    std::vector<double> w_no;   // 4K
    double b_yes = 0.0;
    double b_no = 0.0;

    ValidatorParams() = default;
    explicit ValidatorParams(int k);

    int feature_dim() const { return 4 * num_tags; }
    void add_scaled(const ValidatorParams& other, double scale);
    bool all_finite() const;

    friend bool operator==(const ValidatorParams&, const ValidatorParams&) = default;
};

ValidatorParams init_validator(int num_tags, std::uint64_t seed, double stddev = 0.01);

/// psi = [f_u ; f_i ; h ; h * f_i] with h the chain's multi-hot.
std::vector<double> validator_features(const UserProfile& user, const ItemProfile& item, const RecCoT& cot);

struct RawScores {
    double yes = 0.0;
    double no = 0.0;
};

struct NormalizedScores {
    double p_true = 0.0;
    double p_false = 0.0;
};

RawScores raw_scores(const ValidatorParams& params, const UserProfile& user, const ItemProfile& item,
                     const RecCoT& cot);

/// Throws degenerate_score when both scores are zero.
NormalizedScores normalize(double s_yes, double s_no);

double p_yes(const ValidatorParams& params, const UserProfile& user, const ItemProfile& item, const RecCoT& cot);

/// Clamped binary cross-entropy of p_yes against the label.
double bce_loss(const ValidatorParams& params, const UserProfile& user, const ItemProfile& item, const RecCoT& cot,
                Label y);

ValidatorParams bce_grad(const ValidatorParams& params, const UserProfile& user, const ItemProfile& item,
                         const RecCoT& cot, Label y);

}  // namespace trackrec
