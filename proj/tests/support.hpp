#pragma once

// Helpers shared by the unit tests and the acceptance runner: random
// instances, brute-force oracles and central finite differences.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "trackrec/core.hpp"
#include "trackrec/env.hpp"
#include "trackrec/generator.hpp"
#include "trackrec/rec.hpp"
#include "trackrec/validator.hpp"

namespace trackrec::testing {

inline UserProfile random_user(int id, int num_tags, Rng& rng, bool with_latent = true) {
    UserProfile u;
    u.user_id = id;
    for (int k = 0; k < num_tags; ++k) {
        u.features.push_back(rng.uniform());
    }
    if (with_latent) {
        u.latent = rng.dirichlet(num_tags, 0.5);
    }
    return u;
}

inline ItemProfile random_item(int id, int num_tags, Rng& rng) {
    ItemProfile it;
    it.item_id = id;
    it.affinity = rng.dirichlet(num_tags, 0.5);
    it.features = it.affinity;
    return it;
}

inline GeneratorParams random_generator(CotShape shape, Rng& rng, double scale = 1.0) {
    GeneratorParams g(shape);
    for (double& v : g.weights.values) v = scale * rng.normal();
    for (double& v : g.bias) v = scale * rng.normal();
    return g;
}

inline RecCoT random_cot(int num_tags, int length, Rng& rng) {
    std::vector<int> ids(static_cast<std::size_t>(num_tags));
    for (int k = 0; k < num_tags; ++k) ids[static_cast<std::size_t>(k)] = k;
    rng.shuffle(ids);
    ids.resize(static_cast<std::size_t>(length));
    return RecCoT{ids};
}

inline ValidatorParams random_validator(int K, Rng& rng, double scale = 1.0) {
    ValidatorParams v(K);
    for (double& x : v.w_yes) x = scale * rng.normal();
    for (double& x : v.w_no) x = scale * rng.normal();
    v.b_yes = scale * rng.normal();
    v.b_no = scale * rng.normal();
    return v;
}

inline std::vector<double*> validator_coords(ValidatorParams& v) {
    std::vector<double*> out;
    for (double& x : v.w_yes) out.push_back(&x);
    for (double& x : v.w_no) out.push_back(&x);
    out.push_back(&v.b_yes);
    out.push_back(&v.b_no);
    return out;
}

inline std::vector<double> validator_flat(const ValidatorParams& v) {
    std::vector<double> out(v.w_yes);
    out.insert(out.end(), v.w_no.begin(), v.w_no.end());
    out.push_back(v.b_yes);
    out.push_back(v.b_no);
    return out;
}

/// Every ordered selection of `length` distinct tags.
inline std::vector<RecCoT> all_cots(int num_tags, int length) {
    std::vector<RecCoT> out;
    std::vector<int> cur;
    std::vector<bool> used(static_cast<std::size_t>(num_tags), false);
    std::function<void()> rec = [&] {
        if (static_cast<int>(cur.size()) == length) {
            out.push_back(RecCoT{cur});
            return;
        }
        for (int k = 0; k < num_tags; ++k) {
            if (used[static_cast<std::size_t>(k)]) continue;
            used[static_cast<std::size_t>(k)] = true;
            cur.push_back(k);
            rec();
            cur.pop_back();
            used[static_cast<std::size_t>(k)] = false;
        }
    };
    rec();
    return out;
}

/// Pairwise AUC: fraction of (positive, negative) pairs ordered correctly,
/// ties counting one half.
inline double pairwise_auc(const std::vector<ScoredLabel>& s) {
    double wins = 0.0;
    double pairs = 0.0;
    for (const auto& p : s) {
        if (p.label != Label::yes) continue;
        for (const auto& n : s) {
            if (n.label != Label::no) continue;
            pairs += 1.0;
            wins += p.score > n.score ? 1.0 : (p.score == n.score ? 0.5 : 0.0);
        }
    }
    return wins / pairs;
}

inline constexpr double kFdStep = 1e-5;

/// Central difference of f with respect to the scalar `x`, restoring it.
template <typename F>
double central_difference(double& x, F&& f, double h = kFdStep) {
    const double saved = x;
    x = saved + h;
    const double up = f();
    x = saved - h;
    const double down = f();
    x = saved;
    return (up - down) / (2.0 * h);
}

/// |a - n| / max(|a|, |n|, floor). The floor makes coordinates whose true
/// value is zero up to roundoff compare absolutely.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Views a generator's parameters as one list of scalars (weights, then bias).
inline std::vector<double*> generator_coords(GeneratorParams& g) {
    std::vector<double*> out;
    for (double& v : g.weights.values) out.push_back(&v);
    for (double& v : g.bias) out.push_back(&v);
    return out;
}

inline std::vector<double> generator_flat(const GeneratorParams& g) {
    std::vector<double> out(g.weights.values);
    out.insert(out.end(), g.bias.begin(), g.bias.end());
    return out;
}

/// Max relative error between an analytic gradient (flattened) and central
/// differences of `loss` over every coordinate in `coords`.
template <typename F>
double max_fd_error(const std::vector<double*>& coords, const std::vector<double>& analytic, F&& loss,
                    double floor = 1e-3) {
    double worst = 0.0;
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const double numeric = central_difference(*coords[i], loss);
        worst = std::max(worst, relative_error(analytic[i], numeric, floor));
    }
    return worst;
}

}  // namespace trackrec::testing
