#pragma once

// Chain generator: an autoregressive linear-softmax policy over tags.
//
// For slot s with prefix P the logits are z = W * phi + bias where
//   phi = [ user features (K) ; multi-hot(P) (K) ; one-hot(s) (L) ].
// Tags already in P are masked out and the remaining mass renormalized.

#include <span>
#include <vector>

#include "trackrec/core.hpp"
#include "trackrec/env.hpp"

namespace trackrec {

struct GeneratorParams {
    CotShape shape;
    Matrix weights;             // K x (2K + L)
    std::vector<double> bias;   // K

    GeneratorParams() = default;
    explicit GeneratorParams(CotShape s);

    int num_tags() const { return shape.num_tags; }
    int length() const { return shape.length; }
    int feature_dim() const { return 2 * shape.num_tags + shape.length; }

    /// this += scale * other
    void add_scaled(const GeneratorParams& other, double scale);
    bool all_finite() const;

    friend bool operator==(const GeneratorParams&, const GeneratorParams&) = default;
};

/// Gaussian(0, stddev^2) initialization from a dedicated sub-stream.
GeneratorParams init_generator(CotShape shape, std::uint64_t seed, double stddev = 0.01);

struct SamplingParams {
    int num_samples = 10;
    double temperature = 1.0;
    double top_p = 0.9;

    void validate() const;
};

std::vector<double> slot_logits(const GeneratorParams& params, std::span<const double> user_features,
                                std::span<const int> prefix, int slot);

/// Masked tempered softmax for one slot. temperature == 0 gives a point mass
/// on the best unmasked tag, lowest id on ties.
std::vector<double> slot_distribution(const GeneratorParams& params, const UserProfile& user,
                                      std::span<const int> prefix, int slot, double temperature);

/// Keeps the smallest set of tags, in order of decreasing probability with
/// lower id first on ties, whose cumulative mass reaches top_p, then
/// renormalizes. Zero-probability tags are never kept.
std::vector<double> nucleus_filter(std::span<const double> probs, double top_p);

RecCoT sample_cot(const GeneratorParams& params, const UserProfile& user, const SamplingParams& sampling, Rng& rng);
RecCoT greedy_cot(const GeneratorParams& params, const UserProfile& user);

/// Log probability of the chain under the untempered, unfiltered policy.
double cot_log_prob(const GeneratorParams& params, const UserProfile& user, const RecCoT& cot);

/// Exact gradient of cot_log_prob; returned in parameter shape.
GeneratorParams cot_log_prob_grad(const GeneratorParams& params, const UserProfile& user, const RecCoT& cot);

/// Adds scale * grad(log p(cot)) into `out` and returns log p(cot).
double accumulate_log_prob_grad(const GeneratorParams& params, const UserProfile& user, const RecCoT& cot,
                                double scale, GeneratorParams& out);

}  // namespace trackrec
