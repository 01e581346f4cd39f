#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "trackrec/align.hpp"
#include "trackrec/rectune.hpp"

using namespace trackrec;
using testing::random_cot;
using testing::random_generator;
using testing::random_user;

namespace {

FeedbackRecord record_of(std::vector<RecCoT> cots, int positive) {
    FeedbackRecord r;
    r.cots = std::move(cots);
    r.rewards.assign(r.cots.size(), 0.5);
    r.positive_index = positive;
    for (int i = 0; i < static_cast<int>(r.cots.size()); ++i) {
        if (i != positive) r.negative_indices.push_back(i);
    }
    return r;
}

FeedbackRecord random_record(int n, CotShape shape, Rng& rng) {
    std::vector<RecCoT> cots;
    for (int i = 0; i < n; ++i) cots.push_back(random_cot(shape.num_tags, shape.length, rng));
    return record_of(std::move(cots), static_cast<int>(rng.below(static_cast<std::uint64_t>(n))));
}

double ratio(const GeneratorParams& pi, const GeneratorParams& ref, const UserProfile& u, const RecCoT& c,
             double beta) {
    return beta * (cot_log_prob(pi, u, c) - cot_log_prob(ref, u, c));
}

}  // namespace

TEST_CASE("loss at the reference point is log(1 + negatives)") {
    Rng rng(1);
    const CotShape shape{16, 4};
    const auto g = random_generator(shape, rng, 0.3);
    const auto u = random_user(0, 16, rng);
    for (int negatives : {1, 4, 9}) {
        const auto r = random_record(negatives + 1, shape, rng);
        CHECK(std::abs(sdpo_loss(g, g, r, DpoConfig{}, u) - std::log(1.0 + negatives)) < 1e-9);
    }
    const auto r = random_record(10, shape, rng);
    CHECK(sdpo_loss(g, g, r, DpoConfig{}, u) == doctest::Approx(2.302585093).epsilon(1e-9));
}

TEST_CASE("pairwise DPO closed form") {
    // K=2, L=1, zero features: the ratio difference is the bias difference.
    GeneratorParams pi({2, 1});
    pi.bias = {1.0, 0.0};
    const GeneratorParams ref({2, 1});
    UserProfile u;
    u.features = {0.0, 0.0};
    const auto r = record_of({RecCoT{{0}}, RecCoT{{1}}}, 0);
    CHECK(sdpo_loss(pi, ref, r, DpoConfig{}, u) == doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
    CHECK(sdpo_loss(pi, ref, r, DpoConfig{}, u) == doctest::Approx(0.313262).epsilon(1e-6));
}

TEST_CASE("one negative reduces to pairwise DPO") {
    Rng rng(2);
    const CotShape shape{6, 3};
    for (int i = 0; i < 100; ++i) {
        const auto pi = random_generator(shape, rng);
        const auto ref = random_generator(shape, rng);
        const auto u = random_user(0, 6, rng);
        const auto r = random_record(2, shape, rng);
        const DpoConfig cfg{0.1 + 2.0 * rng.uniform(), 1e-2, 1};
        const double margin = ratio(pi, ref, u, r.positive(), cfg.beta) -
                              ratio(pi, ref, u, r.cots[static_cast<std::size_t>(r.negative_indices[0])], cfg.beta);
        const double pairwise = -std::log(sigmoid(margin));
        CHECK(std::abs(sdpo_loss(pi, ref, r, cfg, u) - pairwise) < 1e-12);
    }
}

TEST_CASE("loss is positive, stable and invariant to the order of negatives") {
    Rng rng(3);
    const CotShape shape{8, 3};
    for (int i = 0; i < 100; ++i) {
        // Half the draws are extreme: exp overflows without the stabilizer and
        // log(1 + tiny) may round to zero, so only non-negativity holds there.
        const bool extreme = i % 2 == 1;
        const double scale = extreme ? 20.0 : 1.0;
        const auto pi = random_generator(shape, rng, scale);
        const auto ref = random_generator(shape, rng, scale);
        const auto u = random_user(0, 8, rng);
        auto r = random_record(6, shape, rng);
        const double loss = sdpo_loss(pi, ref, r, DpoConfig{5.0, 1e-2, 1}, u);
        CHECK(std::isfinite(loss));
        CHECK(loss >= 0.0);
        if (!extreme) CHECK(loss > 0.0);
        std::reverse(r.negative_indices.begin(), r.negative_indices.end());
        CHECK(sdpo_loss(pi, ref, r, DpoConfig{5.0, 1e-2, 1}, u) == doctest::Approx(loss).epsilon(1e-12));
    }
}

TEST_CASE("gradient matches finite differences") {
    Rng rng(4);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = std::vector<int>{2, 5, 10}[static_cast<std::size_t>(trial % 3)];
        const CotShape shape{6, 2};
        auto pi = random_generator(shape, rng, 0.5);
        const auto ref = random_generator(shape, rng, 0.5);
        const auto u = random_user(0, 6, rng);
        const auto r = random_record(n, shape, rng);
        const DpoConfig cfg{0.5 + 1.5 * rng.uniform(), 1e-2, 1};
        const auto analytic = testing::generator_flat(sdpo_grad(pi, ref, r, cfg, u));
        worst = std::max(worst, testing::max_fd_error(testing::generator_coords(pi), analytic,
                                                      [&] { return sdpo_loss(pi, ref, r, cfg, u); }));
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("gradient at the reference point has uniform softmax weights") {
    // d/dtheta log(1 + sum_d exp(z_d)) at z = 0 is
    //   beta * n/(1+n) * mean_d (grad log pi(d) - grad log pi(p)).
    Rng rng(5);
    const CotShape shape{6, 2};
    for (int n : {1, 4, 9}) {
        const auto g = random_generator(shape, rng, 0.5);
        const auto u = random_user(0, 6, rng);
        const auto r = random_record(n + 1, shape, rng);
        const double beta = 1.7;
        const auto grad = testing::generator_flat(sdpo_grad(g, g, r, DpoConfig{beta, 1e-2, 1}, u));
        const auto gp = testing::generator_flat(cot_log_prob_grad(g, u, r.positive()));
        std::vector<double> expect(gp.size(), 0.0);
        for (int d : r.negative_indices) {
            const auto gd = testing::generator_flat(cot_log_prob_grad(g, u, r.cots[static_cast<std::size_t>(d)]));
            for (std::size_t i = 0; i < gp.size(); ++i) {
                expect[i] += beta * (static_cast<double>(n) / (1.0 + n)) * (gd[i] - gp[i]) / n;
            }
        }
        for (std::size_t i = 0; i < gp.size(); ++i) CHECK(grad[i] == doctest::Approx(expect[i]).epsilon(1e-10));
    }
}

TEST_CASE("identical chains give exactly zero gradient") {
    Rng rng(6);
    const CotShape shape{6, 3};
    const auto pi = random_generator(shape, rng);
    const auto ref = random_generator(shape, rng);
    const auto u = random_user(0, 6, rng);
    const auto c = random_cot(6, 3, rng);
    const auto r = record_of(std::vector<RecCoT>(10, c), 0);
    for (double v : testing::generator_flat(sdpo_grad(pi, ref, r, DpoConfig{}, u))) CHECK(v == 0.0);
}

TEST_CASE("reference parameters receive no gradient") {
    Rng rng(7);
    const CotShape shape{5, 2};
    const auto pi = random_generator(shape, rng);
    auto ref = random_generator(shape, rng);
    const auto u = random_user(0, 5, rng);
    const auto r = random_record(4, shape, rng);
    const auto before = sdpo_grad(pi, ref, r, DpoConfig{}, u);
    GeneratorParams sink(shape);
    sdpo_loss_and_grad(pi, ref, r, DpoConfig{}, u, sink);
    CHECK(sink == before);
}

namespace {

Dataset tiny_world() {
    EnvConfig c;
    c.n_users = 10;
    c.n_items = 30;
    c.n_interactions_per_user = 10;
    c.shape = {6, 2};
    return make_synthetic(c);
}

}  // namespace

TEST_CASE("zero learning rate leaves the policy alone") {
    const auto data = tiny_world();
    const auto g = init_generator({6, 2}, 1, 0.5);
    const auto v = init_validator(6, 1, 1.0);
    const auto records = build_feedback_batch(g, v, data, data.split(Split::train), SamplingParams{}, 3);
    const auto out = align_generator(g, g, records, DpoConfig{1.0, 0.0, 3}, data);
    CHECK(out.params == g);
    REQUIRE(out.epoch_losses.size() == 3);
    CHECK(out.epoch_losses[0] == out.epoch_losses[1]);
    CHECK(out.epoch_losses[1] == out.epoch_losses[2]);
}

TEST_CASE("single pairwise record: loss decreases monotonically") {
    const auto data = tiny_world();
    const auto g = init_generator({6, 2}, 2, 0.5);
    auto r = record_of({RecCoT{{0, 1}}, RecCoT{{2, 3}}}, 0);
    r.user_id = data.users()[0].user_id;
    r.item_id = data.items()[0].item_id;
    const auto out = align_generator(g, g, {r}, DpoConfig{1.0, 1e-2, 100}, data);
    REQUIRE(out.epoch_losses.size() == 100);
    for (std::size_t i = 1; i < out.epoch_losses.size(); ++i) CHECK(out.epoch_losses[i] < out.epoch_losses[i - 1]);
}

TEST_CASE("a diverging step is reported with the record") {
    const auto data = tiny_world();
    const auto g = init_generator({6, 2}, 2, 0.5);
    auto r = record_of({RecCoT{{0, 1}}, RecCoT{{2, 3}}}, 0);
    r.user_id = data.users()[0].user_id;
    r.item_id = data.items()[0].item_id;
    try {
        align_generator(g, g, {r, r}, DpoConfig{1.0, 1e308, 2}, data);
        FAIL("expected a divergence error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::divergence);
        CHECK(std::string(e.what()).find("record") != std::string::npos);
    }
}

TEST_CASE("alignment raises the validator's reward for greedy chains") {
    EnvConfig env;
    env.n_users = 60;
    const auto data = make_synthetic(env);
    const auto train = data.split(Split::train);
    const auto g = init_generator({16, 4}, 8, 0.3);
    // A validator that already learned something from greedy chains.
    const auto v = rectune_validator(init_validator(16, 8), data, build_rectune_dataset(g, data, train),
                                     RecTuneConfig{1e-2, 10})
                       .params;
    const auto records = build_feedback_batch(g, v, data, train, SamplingParams{}, 9);
    const auto aligned = align_generator(g, g, records, DpoConfig{}, data).params;

    auto mean_reward = [&](const GeneratorParams& gen) {
        double total = 0.0;
        for (const auto& r : records) {
            const auto& u = data.user(r.user_id);
            const double p = p_yes(v, u, data.item(r.item_id), greedy_cot(gen, u));
            total += feedback_reward(p, 1.0 - p, r.label);
        }
        return total / static_cast<double>(records.size());
    };
    CHECK(mean_reward(aligned) >= mean_reward(g));
}
