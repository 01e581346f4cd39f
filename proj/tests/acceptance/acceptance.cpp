// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "support.hpp"
#include "trackrec/align.hpp"
#include "trackrec/feedback.hpp"
#include "trackrec/loop.hpp"
#include "trackrec/run.hpp"

using namespace trackrec;
using namespace trackrec::testing;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

FeedbackRecord record_of(int n, CotShape shape, Rng& rng) {
    FeedbackRecord r;
    for (int i = 0; i < n; ++i) r.cots.push_back(random_cot(shape.num_tags, shape.length, rng));
    r.rewards.assign(static_cast<std::size_t>(n), 0.5);
    r.positive_index = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    for (int i = 0; i < n; ++i) {
        if (i != r.positive_index) r.negative_indices.push_back(i);
    }
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// ---------------------------------------------------------------------------

Verdict sdpo_closed_forms() {
    Rng rng(101);
    const CotShape shape{16, 4};
    double worst_ref = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto g = random_generator(shape, rng, 0.5);
        const auto u = random_user(0, 16, rng);
        for (int negatives : {1, 4, 9}) {
            const auto r = record_of(negatives + 1, shape, rng);
            worst_ref = std::max(worst_ref, std::abs(sdpo_loss(g, g, r, DpoConfig{}, u) - std::log1p(negatives)));
        }
    }
    double worst_pair = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto pi = random_generator(shape, rng);
        const auto ref = random_generator(shape, rng);
        const auto u = random_user(0, 16, rng);
        const auto r = record_of(2, shape, rng);
        const DpoConfig cfg{0.1 + 2.0 * rng.uniform(), 1e-2, 1};
        const auto& neg = r.cots[static_cast<std::size_t>(r.negative_indices[0])];
        const double margin = cfg.beta * ((cot_log_prob(pi, u, r.positive()) - cot_log_prob(ref, u, r.positive())) -
                                          (cot_log_prob(pi, u, neg) - cot_log_prob(ref, u, neg)));
        worst_pair = std::max(worst_pair, std::abs(sdpo_loss(pi, ref, r, cfg, u) - std::log1p(std::exp(-margin))));
    }
    return {worst_ref <= 1e-9 && worst_pair <= 1e-12,
            fmt::format("reference-point error {:.1e}, pairwise error {:.1e}", worst_ref, worst_pair)};
}

Verdict gradient_suites() {
    Rng rng(202);
    double sdpo = 0.0, logp = 0.0, bce = 0.0, ctr = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const CotShape shape{6, 1 + static_cast<int>(rng.below(3))};
        auto pi = random_generator(shape, rng, 0.5);
        const auto ref = random_generator(shape, rng, 0.5);
        const auto u = random_user(0, 6, rng);
        const auto r = record_of(std::vector<int>{2, 5, 10}[static_cast<std::size_t>(trial % 3)], shape, rng);
        const DpoConfig cfg{0.5 + 1.5 * rng.uniform(), 1e-2, 1};
        sdpo = std::max(sdpo, max_fd_error(generator_coords(pi), generator_flat(sdpo_grad(pi, ref, r, cfg, u)),
                                           [&] { return sdpo_loss(pi, ref, r, cfg, u); }));
        const auto& c = r.positive();
        logp = std::max(logp, max_fd_error(generator_coords(pi), generator_flat(cot_log_prob_grad(pi, u, c)),
                                           [&] { return cot_log_prob(pi, u, c); }));

        auto v = random_validator(6, rng, 0.5);
        const auto item = random_item(0, 6, rng);
        const Label y = rng.uniform() < 0.5 ? Label::yes : Label::no;
        bce = std::max(bce, max_fd_error(validator_coords(v), validator_flat(bce_grad(v, u, item, c, y)),
                                         [&] { return bce_loss(v, u, item, c, y); }));
    }

    EnvConfig env;
    env.n_users = 5;
    env.n_items = 7;
    env.n_interactions_per_user = 4;
    env.shape = {4, 2};
    const auto data = make_synthetic(env);
    const CtrDims dims{5, 7, 4};
    const auto enc = make_tag_encoder(4, dims.encoder_dim, 7);
    for (int trial = 0; trial < 50; ++trial) {
        CtrModelParams p(dims);
        for (double& x : p.values()) x = 0.3 * rng.normal();
        UserCots cots;
        for (const auto& user : data.users()) {
            if (rng.uniform() < 0.8) cots[user.user_id] = random_cot(4, 2, rng);
        }
        std::vector<Interaction> batch;
        for (int i = 0; i < 3; ++i) batch.push_back(data.interactions()[rng.below(data.interactions().size())]);
        std::vector<double> grad;
        ctr_loss_and_grad(p, data, batch, cots, enc, &grad);
        std::vector<double*> coords;
        for (double& x : p.values()) coords.push_back(&x);
        ctr = std::max(ctr, max_fd_error(coords, grad, [&] { return ctr_loss_and_grad(p, data, batch, cots, enc, nullptr); }));
    }
    return {sdpo < 1e-5 && logp < 1e-5 && bce < 1e-5 && ctr < 1e-4,
            fmt::format("max relative error: sdpo {:.1e}, log-prob {:.1e}, bce {:.1e}, ctr {:.1e}", sdpo, logp, bce,
                        ctr)};
}

Verdict probability_exactness() {
    Rng rng(303);
    const CotShape shape{4, 2};
    const auto chains = all_cots(4, 2);
    double worst_sum = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto g = random_generator(shape, rng, 2.0);
        const auto u = random_user(0, 4, rng);
        double total = 0.0;
        for (const auto& c : chains) total += std::exp(cot_log_prob(g, u, c));
        worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    }

    // Joint frequencies of whole chains cover every slot's conditional.
    const auto g = random_generator(shape, rng);
    const auto u = random_user(0, 4, rng);
    std::map<std::vector<int>, double> freq;
    const SamplingParams sp{10, 1.0, 1.0};
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) freq[sample_cot(g, u, sp, rng).tags] += 1.0 / draws;
    double worst_freq = 0.0;
    for (const auto& c : chains) worst_freq = std::max(worst_freq, std::abs(freq[c.tags] - std::exp(cot_log_prob(g, u, c))));
    const auto slot0 = slot_distribution(g, u, {}, 0, 1.0);
    for (int k = 0; k < 4; ++k) {
        double marginal = 0.0;
        for (const auto& [tags, f] : freq) marginal += tags[0] == k ? f : 0.0;
        worst_freq = std::max(worst_freq, std::abs(marginal - slot0[static_cast<std::size_t>(k)]));
    }
    return {worst_sum < 1e-10 && worst_freq <= 0.01,
            fmt::format("sum error {:.1e}, max frequency error {:.4f}", worst_sum, worst_freq)};
}

Verdict feedback_contract() {
    RunConfig cfg;
    cfg.finalize();
    const auto data = make_synthetic(cfg.env);
    const auto init = initialize_models(data, cfg.loop);
    const auto train = data.split(Split::train);
    Rng rng(404);
    const auto sharp = random_validator(data.num_tags(), rng, 1.0);

    std::size_t checked = 0, bad = 0;
    double worst_norm = 0.0;
    for (const ValidatorParams* v : {&init.validator, &sharp}) {
        const auto records = build_feedback_batch(init.generator, *v, data, train, cfg.loop.sampling, 9);
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto& r = records[i];
            const auto& user = data.user(r.user_id);
            const auto& item = data.item(r.item_id);
            bool ok = r.cots.size() == 10 && r.rewards.size() == 10 && r.negative_indices.size() == 9;
            for (double x : r.rewards) ok = ok && x > 0.0 && x < 1.0;
            for (int n : r.negative_indices) ok = ok && n != r.positive_index;
            for (double x : r.rewards) ok = ok && x <= r.rewards[static_cast<std::size_t>(r.positive_index)];
            for (const auto& c : r.cots) {
                const auto s = raw_scores(*v, user, item, c);
                const auto p = normalize(s.yes, s.no);
                worst_norm = std::max(worst_norm, std::abs(p.p_true + p.p_false - 1.0));
            }
            ++checked;
            bad += ok ? 0 : 1;
        }
    }
    return {bad == 0 && worst_norm <= 1e-12 && checked > 0,
            fmt::format("{} records, {} violations, max |p_T + p_F - 1| {:.1e}", checked, bad, worst_norm)};
}

// Runs of the alternating loop on the default world, cached by arm.
struct ArmKey {
    std::uint64_t seed;
    bool align;
    bool distill;
    auto operator<=>(const ArmKey&) const = default;
};

const std::vector<IterationReport>& loop_reports(const ArmKey& key) {
    static std::map<ArmKey, std::vector<IterationReport>> cache;
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    RunConfig cfg;
    apply_overrides(cfg, {key.seed, std::nullopt, !key.align, !key.distill});
    const auto data = make_synthetic(cfg.env);
    return cache[key] = run_trackrec(data, cfg.loop).reports;
}

double final_auc(const ArmKey& key) { return loop_reports(key).back().auc.value_or(0.0); }

Verdict iteration_improvement() {
    const auto& reports = loop_reports({42, true, true});
    const double gain = reports.back().auc.value_or(0.0) - reports.front().auc.value_or(0.0);
    bool monotone = true;
    std::string rewards;
    for (std::size_t k = 0; k < reports.size(); ++k) {
        if (k > 0) monotone = monotone && reports[k].mean_reward >= reports[k - 1].mean_reward - 0.005;
        rewards += fmt::format("{}{:.4f}", k ? " " : "", reports[k].mean_reward);
    }
    return {gain >= 0.01 && monotone,
            fmt::format("AUC {:.4f} -> {:.4f} (gain {:+.4f}), greedy reward by iteration [{}]",
                        reports.front().auc.value_or(0.0), reports.back().auc.value_or(0.0), gain, rewards)};
}

Verdict alignment_ablation() {
    const double aligned42 = final_auc({42, true, true});
    const double plain42 = final_auc({42, false, true});
    int positive = 0;
    std::string gaps;
    for (std::uint64_t s = 1; s <= 5; ++s) {
        const double gap = final_auc({s, true, true}) - final_auc({s, false, true});
        positive += gap > 0.0 ? 1 : 0;
        gaps += fmt::format("{}{:+.4f}", s > 1 ? " " : "", gap);
    }
    return {plain42 <= aligned42 && positive >= 4,
            fmt::format("seed 42: aligned {:.4f} vs no-align {:.4f}; gaps on seeds 1-5 [{}] ({}/5 positive)",
                        aligned42, plain42, gaps, positive)};
}

Verdict distillation_ablation() {
    int recall_wins = 0, auc_wins = 0;
    std::string detail;
    for (std::uint64_t s = 1; s <= 5; ++s) {
        const auto& d = loop_reports({s, true, true});
        const auto& r = loop_reports({s, true, false});
        const double rd = d.front().tag_recall.value_or(0.0), rr = r.front().tag_recall.value_or(0.0);
        recall_wins += rd > rr ? 1 : 0;
        auc_wins += final_auc({s, true, true}) >= final_auc({s, true, false}) ? 1 : 0;
        detail += fmt::format("{}{:.3f}/{:.3f}", s > 1 ? " " : "", rd, rr);
    }
    return {recall_wins == 5 && auc_wins >= 3,
            fmt::format("iteration-0 recall distilled/random [{}]; recall wins {}/5, final-AUC wins {}/5", detail,
                        recall_wins, auc_wins)};
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::current_path() / "acceptance_tmp" / name;
    fs::remove_all(dir);
    return dir;
}

Verdict utilization_ablation() {
    RunConfig cfg;
    cfg.finalize();
    const auto r = cmd_train(cfg, scratch("ctr"));
    const double base = r.base.auc.value_or(0.0), ours = r.trackrec.auc.value_or(0.0);
    return {ours >= base + 0.005, fmt::format("test AUC base {:.4f}, with chains {:.4f} (gap {:+.4f})", base, ours,
                                              ours - base)};
}

Verdict metrics_oracle() {
    Rng rng(909);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(200));
        const int levels = 1 + static_cast<int>(rng.below(20));
        std::vector<ScoredLabel> s;
        for (int i = 0; i < n; ++i) {
            const Label y = i == 0 ? Label::yes : i == 1 ? Label::no : rng.uniform() < 0.3 ? Label::yes : Label::no;
            s.push_back({static_cast<double>(rng.below(static_cast<std::uint64_t>(levels))) / levels, y});
        }
        worst = std::max(worst, std::abs(roc_auc(s) - pairwise_auc(s)));
    }
    return {worst <= 1e-12, fmt::format("max deviation from the pairwise oracle {:.1e}", worst)};
}

Verdict determinism() {
    RunConfig cfg;
    cfg.finalize();
    const auto a = scratch("det_a");
    const auto b = scratch("det_b");
    cmd_train(cfg, a);
    cmd_train(cfg, b);
    std::size_t compared = 0, differing = 0;
    std::vector<fs::path> files{"metrics.csv"};
    for (const auto& e : fs::directory_iterator(a / "checkpoints")) files.push_back(fs::path("checkpoints") / e.path().filename());
    for (const auto& f : files) {
        ++compared;
        differing += slurp(a / f) == slurp(b / f) && fs::exists(b / f) ? 0 : 1;
    }
    return {differing == 0 && compared == 1 + 2 * (static_cast<std::size_t>(cfg.loop.iterations) + 1),
            fmt::format("{} files compared, {} differ", compared, differing)};
}

}  // namespace

int main() {
    const std::vector<std::pair<int, std::function<Verdict()>>> criteria{
        {1, sdpo_closed_forms},     {2, gradient_suites},       {3, probability_exactness}, {4, feedback_contract},
        {5, iteration_improvement}, {6, alignment_ablation},    {7, distillation_ablation}, {8, utilization_ablation},
        {9, metrics_oracle},        {10, determinism}};
    int failures = 0;
    for (const auto& [id, check] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, fmt::format("error: {}", e.what())};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        fmt::print("criterion {}: {} - {} ({:.2f}s)\n", id, v.pass ? "PASS" : "FAIL", v.detail, secs);
        std::fflush(stdout);
        failures += v.pass ? 0 : 1;
    }
    fmt::print("{} of {} criteria passed\n", criteria.size() - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
