#include "trackrec/generator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/core.h>

namespace trackrec {

GeneratorParams::GeneratorParams(CotShape s)
    : shape(s), weights(s.num_tags, 2 * s.num_tags + s.length), bias(static_cast<std::size_t>(s.num_tags), 0.0) {
    shape.validate();
}

void GeneratorParams::add_scaled(const GeneratorParams& other, double scale) {
    for (std::size_t i = 0; i < weights.values.size(); ++i) {
        weights.values[i] += scale * other.weights.values[i];
    }
    for (std::size_t i = 0; i < bias.size(); ++i) {
        bias[i] += scale * other.bias[i];
    }
}

bool GeneratorParams::all_finite() const {
    auto finite = [](double x) { return std::isfinite(x); };
    return std::all_of(weights.values.begin(), weights.values.end(), finite) &&
           std::all_of(bias.begin(), bias.end(), finite);
}

GeneratorParams init_generator(CotShape shape, std::uint64_t seed, double stddev) {
    GeneratorParams p(shape);
    Rng rng(seed, "generator.init");
    for (auto& w : p.weights.values) {
        w = stddev * rng.normal();
    }
    for (auto& b : p.bias) {
        b = stddev * rng.normal();
    }
    return p;
}

void SamplingParams::validate() const {
    if (num_samples < 2) {
        throw Error(ErrorKind::invalid_input, "need at least two samples per interaction");
    }
    if (!(temperature >= 0.0)) {
        throw Error(ErrorKind::invalid_input, "temperature must be nonnegative");
    }
    if (!(top_p > 0.0 && top_p <= 1.0)) {
        throw Error(ErrorKind::invalid_input, "top_p must lie in (0, 1]");
    }
}

namespace {

void check_prefix(const GeneratorParams& params, std::span<const int> prefix, int slot) {
    if (slot < 0 || slot >= params.length()) {
        throw Error(ErrorKind::contract, fmt::format("slot {} outside [0, {})", slot, params.length()));
    }
    if (static_cast<int>(prefix.size()) != slot) {
        throw Error(ErrorKind::contract,
                    fmt::format("prefix of length {} does not match slot {}", prefix.size(), slot));
    }
}

std::vector<bool> prefix_mask(std::span<const int> prefix, int num_tags) {
    std::vector<bool> masked(static_cast<std::size_t>(num_tags), false);
    for (int id : prefix) {
        if (id < 0 || id >= num_tags || masked[static_cast<std::size_t>(id)]) {
            throw Error(ErrorKind::contract, fmt::format("prefix tag {} invalid or repeated", id));
        }
        masked[static_cast<std::size_t>(id)] = true;
    }
    return masked;
}

int best_unmasked(std::span<const double> logits, const std::vector<bool>& masked) {
    int best = -1;
    for (int k = 0; k < static_cast<int>(logits.size()); ++k) {
        if (masked[static_cast<std::size_t>(k)]) {
            continue;
        }
        if (best < 0 || logits[static_cast<std::size_t>(k)] > logits[static_cast<std::size_t>(best)]) {
            best = k;
        }
    }
    return best;
}

/// Softmax of logits / temperature restricted to unmasked tags.
std::vector<double> masked_softmax(std::span<const double> logits, const std::vector<bool>& masked,
                                   double temperature) {
    std::vector<double> p(logits.size(), 0.0);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < logits.size(); ++k) {
        if (!masked[k]) {
            top = std::max(top, logits[k] / temperature);
        }
    }
    double total = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        if (!masked[k]) {
            p[k] = std::exp(logits[k] / temperature - top);
            total += p[k];
        }
    }
    for (auto& x : p) {
        x /= total;
    }
    return p;
}

}  // namespace

std::vector<double> slot_logits(const GeneratorParams& params, std::span<const double> user_features,
                                std::span<const int> prefix, int slot) {
    const int K = params.num_tags();
    std::vector<double> z(params.bias);
    for (int k = 0; k < K; ++k) {
        const auto row = params.weights.row(k);
        double acc = 0.0;
        for (int j = 0; j < K; ++j) {
            acc += row[static_cast<std::size_t>(j)] * user_features[static_cast<std::size_t>(j)];
        }
        for (int id : prefix) {
            acc += row[static_cast<std::size_t>(K + id)];
        }
        acc += row[static_cast<std::size_t>(2 * K + slot)];
        z[static_cast<std::size_t>(k)] += acc;
    }
    return z;
}

std::vector<double> slot_distribution(const GeneratorParams& params, const UserProfile& user,
                                      std::span<const int> prefix, int slot, double temperature) {
    check_prefix(params, prefix, slot);
    if (!(temperature >= 0.0)) {
        throw Error(ErrorKind::contract, "temperature must be nonnegative");
    }
    const auto masked = prefix_mask(prefix, params.num_tags());
    const auto z = slot_logits(params, user.features, prefix, slot);
    if (temperature == 0.0) {
        std::vector<double> p(z.size(), 0.0);
        p[static_cast<std::size_t>(best_unmasked(z, masked))] = 1.0;
        return p;
    }
    return masked_softmax(z, masked, temperature);
}

std::vector<double> nucleus_filter(std::span<const double> probs, double top_p) {
    std::vector<int> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
    });
    std::vector<double> kept(probs.size(), 0.0);
    double mass = 0.0;
    for (int id : order) {
        const double p = probs[static_cast<std::size_t>(id)];
        if (p <= 0.0) {
            break;
        }
        kept[static_cast<std::size_t>(id)] = p;
        mass += p;
        // Tolerance absorbs rounding in the cumulative sum.
        if (mass >= top_p - 1e-12) {
            break;
        }
    }
    for (auto& x : kept) {
        x /= mass;
    }
    return kept;
}

RecCoT sample_cot(const GeneratorParams& params, const UserProfile& user, const SamplingParams& sampling, Rng& rng) {
    if (!(sampling.temperature > 0.0)) {
        throw Error(ErrorKind::contract, "sample_cot needs a positive temperature; use greedy_cot");
    }
    RecCoT cot;
    cot.tags.reserve(static_cast<std::size_t>(params.length()));
    for (int slot = 0; slot < params.length(); ++slot) {
        const auto dist = nucleus_filter(slot_distribution(params, user, cot.tags, slot, sampling.temperature),
                                         sampling.top_p);
        const double u = rng.uniform();
        double acc = 0.0;
        int choice = -1;
        for (int k = 0; k < static_cast<int>(dist.size()); ++k) {
            if (dist[static_cast<std::size_t>(k)] <= 0.0) {
                continue;
            }
            choice = k;
            acc += dist[static_cast<std::size_t>(k)];
            if (u < acc) {
                break;
            }
        }
        cot.tags.push_back(choice);
    }
    return cot;
}

RecCoT greedy_cot(const GeneratorParams& params, const UserProfile& user) {
    RecCoT cot;
    std::vector<bool> masked(static_cast<std::size_t>(params.num_tags()), false);
    for (int slot = 0; slot < params.length(); ++slot) {
        const auto z = slot_logits(params, user.features, cot.tags, slot);
        const int pick = best_unmasked(z, masked);
        masked[static_cast<std::size_t>(pick)] = true;
        cot.tags.push_back(pick);
    }
    return cot;
}

double accumulate_log_prob_grad(const GeneratorParams& params, const UserProfile& user, const RecCoT& cot,
                                double scale, GeneratorParams& out) {
    if (cot.length() != params.length()) {
        throw Error(ErrorKind::invalid_input,
                    fmt::format("chain has length {}, expected {}", cot.length(), params.length()));
    }
    check_cot(cot, params.num_tags());
    const int K = params.num_tags();
    std::vector<bool> masked(static_cast<std::size_t>(K), false);
    double log_prob = 0.0;
    std::span<const int> all(cot.tags);
    for (int slot = 0; slot < params.length(); ++slot) {
        const auto prefix = all.first(static_cast<std::size_t>(slot));
        const auto z = slot_logits(params, user.features, prefix, slot);
        const auto q = masked_softmax(z, masked, 1.0);
        const int chosen = cot.tags[static_cast<std::size_t>(slot)];
        log_prob += std::log(q[static_cast<std::size_t>(chosen)]);

        if (scale != 0.0) {
            for (int k = 0; k < K; ++k) {
                if (masked[static_cast<std::size_t>(k)]) {
                    continue;
                }
                const double coeff = scale * ((k == chosen ? 1.0 : 0.0) - q[static_cast<std::size_t>(k)]);
                auto row = out.weights.row(k);
                for (int j = 0; j < K; ++j) {
                    row[static_cast<std::size_t>(j)] += coeff * user.features[static_cast<std::size_t>(j)];
                }
                for (int id : prefix) {
                    row[static_cast<std::size_t>(K + id)] += coeff;
                }
                row[static_cast<std::size_t>(2 * K + slot)] += coeff;
                out.bias[static_cast<std::size_t>(k)] += coeff;
            }
        }
        masked[static_cast<std::size_t>(chosen)] = true;
    }
    return log_prob;
}

double cot_log_prob(const GeneratorParams& params, const UserProfile& user, const RecCoT& cot) {
    GeneratorParams unused;
    return accumulate_log_prob_grad(params, user, cot, 0.0, unused);
}

GeneratorParams cot_log_prob_grad(const GeneratorParams& params, const UserProfile& user, const RecCoT& cot) {
    GeneratorParams grad(params.shape);
    accumulate_log_prob_grad(params, user, cot, 1.0, grad);
    return grad;
}

}  // namespace trackrec
