#include "trackrec/loop.hpp"

#include <algorithm>

#include <fmt/core.h>

#include "trackrec/rec.hpp"

namespace trackrec {

std::string_view to_string(ReferenceMode mode) {
    return mode == ReferenceMode::initial ? "initial" : "per-iteration-snapshot";
}

ReferenceMode parse_reference_mode(std::string_view text) {
    if (text == "per-iteration-snapshot") return ReferenceMode::per_iteration_snapshot;
    if (text == "initial") return ReferenceMode::initial;
    throw Error(ErrorKind::schema, fmt::format("unknown reference mode '{}'", text));
}

void LoopConfig::validate() const {
    if (iterations < 0) {
        throw Error(ErrorKind::invalid_input, "iteration count must be nonnegative");
    }
    if (cot_length < 1) {
        throw Error(ErrorKind::invalid_input, "chain length must be positive");
    }
    sampling.validate();
    dpo.validate();
    rectune.validate();
    if (distill) {
        distill->validate();
    }
}

std::optional<double> oracle_tag_recall(const GeneratorParams& generator, const Dataset& data) {
    double total = 0.0;
    int counted = 0;
    for (const auto& user : data.users()) {
        if (!user.has_latent()) {
            continue;
        }
        const auto target = oracle_cot(user, generator.length());
        const auto got = greedy_cot(generator, user);
        int hits = 0;
        for (int id : got.tags) {
            hits += std::find(target.tags.begin(), target.tags.end(), id) != target.tags.end() ? 1 : 0;
        }
        total += static_cast<double>(hits) / static_cast<double>(generator.length());
        ++counted;
    }
    if (counted == 0) {
        return std::nullopt;
    }
    return total / counted;
}

IterationReport evaluate_models(const GeneratorParams& generator, const ValidatorParams& validator,
                                const Dataset& data, Split split, int iteration) {
    const auto rows = data.split(split);
    if (rows.empty()) {
        throw Error(ErrorKind::contract, fmt::format("split '{}' is empty", to_string(split)));
    }
    const auto examples = build_rectune_dataset(generator, data, rows);
    std::vector<ScoredLabel> scored;
    scored.reserve(examples.size());
    double reward = 0.0;
    for (const auto& ex : examples) {
        const double p = p_yes(validator, data.user(ex.user_id), data.item(ex.item_id), ex.cot);
        scored.push_back({p, ex.label});
        reward += feedback_reward(p, 1.0 - p, ex.label);
    }
    const auto metrics = evaluate(scored);
    IterationReport report;
    report.iteration = iteration;
    report.auc = metrics.auc;
    report.acc = metrics.acc;
    report.logloss = metrics.logloss;
    report.mean_reward = reward / static_cast<double>(examples.size());
    report.tag_recall = oracle_tag_recall(generator, data);
    return report;
}

IterationOutcome run_iteration(const GeneratorParams& generator, const ValidatorParams& validator,
                               const GeneratorParams& reference, const Dataset& data, const LoopConfig& cfg,
                               int iteration) {
    // Interactions are stored user by user; per-example descent needs them
    // interleaved, so each iteration visits them in a seeded random order.
    auto train = data.split(Split::train);
    Rng order_rng(cfg.seed, "loop.order", {static_cast<std::uint64_t>(iteration)});
    order_rng.shuffle(train);
    IterationOutcome out{generator, validator, {}, {}, {}};
    try {
        if (cfg.align) {
            const auto stream = derive_seed(cfg.seed, {stream_tag("loop.feedback"), static_cast<std::uint64_t>(iteration)});
            out.feedback = build_feedback_batch(generator, validator, data, train, cfg.sampling, stream);
            auto aligned = align_generator(generator, reference, out.feedback, cfg.dpo, data);
            out.generator = std::move(aligned.params);
            out.report.sdpo_loss = aligned.epoch_losses.back();
        }
        out.rectune_examples = build_rectune_dataset(out.generator, data, train);
        auto tuned = rectune_validator(validator, data, out.rectune_examples, cfg.rectune);
        out.validator = std::move(tuned.params);
        out.report.rectune_loss = tuned.epoch_losses.back();
    } catch (const Error& e) {
        throw Error(e.kind(), fmt::format("iteration {}: {}", iteration, e.what()));
    }
    auto eval = evaluate_models(out.generator, out.validator, data, Split::valid, iteration);
    eval.sdpo_loss = out.report.sdpo_loss;
    eval.rectune_loss = out.report.rectune_loss;
    out.report = eval;
    return out;
}

InitialModels initialize_models(const Dataset& data, const LoopConfig& cfg) {
    const CotShape shape{data.num_tags(), cfg.cot_length};
    shape.validate();
    InitialModels m{init_generator(shape, cfg.seed), init_validator(data.num_tags(), cfg.seed)};
    if (cfg.distill) {
        m.generator = distill_generator(m.generator, data.users(), *cfg.distill, cfg.seed).params;
    }
    return m;
}

TrackRecResult run_trackrec(const Dataset& data, const LoopConfig& cfg, const IterationObserver& observer) {
    cfg.validate();
    auto init = initialize_models(data, cfg);
    TrackRecResult result{std::move(init.generator), std::move(init.validator), {}};
    const GeneratorParams initial = result.generator;

    result.reports.push_back(evaluate_models(result.generator, result.validator, data, Split::valid, 0));
    if (observer) {
        observer(result.generator, result.validator, result.reports.back());
    }
    for (int k = 1; k <= cfg.iterations; ++k) {
        const GeneratorParams& reference =
            cfg.reference_mode == ReferenceMode::initial ? initial : result.generator;
        auto step = run_iteration(result.generator, result.validator, reference, data, cfg, k);
        result.generator = std::move(step.generator);
        result.validator = std::move(step.validator);
        result.reports.push_back(step.report);
        if (observer) {
            observer(result.generator, result.validator, result.reports.back());
        }
    }
    return result;
}

}  // namespace trackrec
