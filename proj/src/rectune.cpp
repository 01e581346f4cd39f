#include "trackrec/rectune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include <fmt/core.h>

namespace trackrec {

void RecTuneConfig::validate() const {
    if (!(learning_rate >= 0.0)) {
        throw Error(ErrorKind::invalid_input, "rec-tuning learning rate must be nonnegative");
    }
    if (epochs < 1) {
        throw Error(ErrorKind::invalid_input, "rec-tuning epochs must be positive");
    }
}

void DistillConfig::validate() const {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw Error(ErrorKind::invalid_input, "distillation fraction must lie in (0, 1]");
    }
    if (!(learning_rate >= 0.0)) {
        throw Error(ErrorKind::invalid_input, "distillation learning rate must be nonnegative");
    }
    if (epochs < 1) {
        throw Error(ErrorKind::invalid_input, "distillation epochs must be positive");
    }
}

std::vector<RecTuneExample> build_rectune_dataset(const GeneratorParams& generator, const Dataset& data,
                                                  std::span<const Interaction> interactions) {
    std::unordered_map<int, RecCoT> cache;
    std::vector<RecTuneExample> out;
    out.reserve(interactions.size());
    for (const auto& x : interactions) {
        auto it = cache.find(x.user_id);
        if (it == cache.end()) {
            it = cache.emplace(x.user_id, greedy_cot(generator, data.user(x.user_id))).first;
        }
        out.push_back({x.user_id, x.item_id, it->second, x.label});
    }
    return out;
}

RecTuneResult rectune_validator(const ValidatorParams& validator, const Dataset& data,
                                const std::vector<RecTuneExample>& examples, const RecTuneConfig& cfg) {
    cfg.validate();
    if (examples.empty()) {
        throw Error(ErrorKind::contract, "rec-tuning needs at least one example");
    }
    RecTuneResult result{validator, {}};
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double total = 0.0;
        for (const auto& ex : examples) {
            const auto& user = data.user(ex.user_id);
            const auto& item = data.item(ex.item_id);
            const double loss = bce_loss(result.params, user, item, ex.cot, ex.label);
            if (!std::isfinite(loss)) {
                throw Error(ErrorKind::divergence, fmt::format("non-finite rec-tuning loss in epoch {} (user {}, item {})",
                                                               epoch, ex.user_id, ex.item_id));
            }
            total += loss;
            if (cfg.learning_rate != 0.0) {
                result.params.add_scaled(bce_grad(result.params, user, item, ex.cot, ex.label), -cfg.learning_rate);
            }
        }
        result.epoch_losses.push_back(total / static_cast<double>(examples.size()));
    }
    if (!result.params.all_finite()) {
        throw Error(ErrorKind::divergence, "validator parameters became non-finite during rec-tuning");
    }
    return result;
}

RecCoT oracle_cot(const UserProfile& user, int m) {
    if (!user.has_latent()) {
        throw Error(ErrorKind::unsupported,
                    fmt::format("user {} has no latent preferences; oracle chains need a synthetic world", user.user_id));
    }
    const int K = static_cast<int>(user.latent.size());
    if (m < 1 || m > K) {
        throw Error(ErrorKind::invalid_input, fmt::format("oracle chain length {} outside [1, {}]", m, K));
    }
    std::vector<int> order(static_cast<std::size_t>(K));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return user.latent[static_cast<std::size_t>(a)] > user.latent[static_cast<std::size_t>(b)];
    });
    order.resize(static_cast<std::size_t>(m));
    return RecCoT{std::move(order)};
}

DistillResult distill_generator(const GeneratorParams& generator, std::span<const UserProfile> users,
                                const DistillConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::vector<int> pool;
    for (std::size_t i = 0; i < users.size(); ++i) {
        if (users[i].has_latent()) {
            pool.push_back(static_cast<int>(i));
        }
    }
    if (pool.empty()) {
        throw Error(ErrorKind::unsupported, "distillation needs at least one user with latent preferences");
    }
    // The epsilon keeps 0.05 * 200 from rounding up to 11.
    const auto count = static_cast<std::size_t>(
        std::clamp(std::ceil(cfg.fraction * static_cast<double>(pool.size()) - 1e-9), 1.0,
                   static_cast<double>(pool.size())));
    Rng rng(seed, "distill.select");
    rng.shuffle(pool);
    pool.resize(count);
    std::sort(pool.begin(), pool.end());

    std::vector<RecCoT> targets;
    for (int i : pool) {
        targets.push_back(oracle_cot(users[static_cast<std::size_t>(i)], generator.length()));
    }

    DistillResult result{generator, {}};
    for (int i : pool) {
        result.selected_users.push_back(users[static_cast<std::size_t>(i)].user_id);
    }
    if (cfg.learning_rate == 0.0) {
        return result;
    }
    GeneratorParams grad(generator.shape);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t j = 0; j < pool.size(); ++j) {
            std::fill(grad.weights.values.begin(), grad.weights.values.end(), 0.0);
            std::fill(grad.bias.begin(), grad.bias.end(), 0.0);
            accumulate_log_prob_grad(result.params, users[static_cast<std::size_t>(pool[j])], targets[j], 1.0, grad);
            result.params.add_scaled(grad, cfg.learning_rate);
        }
    }
    if (!result.params.all_finite()) {
        throw Error(ErrorKind::divergence, "generator parameters became non-finite during distillation");
    }
    return result;
}

}  // namespace trackrec
