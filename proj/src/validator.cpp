#include "trackrec/validator.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

namespace trackrec {

ValidatorParams::ValidatorParams(int k)
    : num_tags(k), w_yes(static_cast<std::size_t>(4 * k), 0.0), w_no(static_cast<std::size_t>(4 * k), 0.0) {}

void ValidatorParams::add_scaled(const ValidatorParams& other, double scale) {
    for (std::size_t i = 0; i < w_yes.size(); ++i) {
        w_yes[i] += scale * other.w_yes[i];
        w_no[i] += scale * other.w_no[i];
    }
    b_yes += scale * other.b_yes;
    b_no += scale * other.b_no;
}

bool ValidatorParams::all_finite() const {
    auto finite = [](double x) { return std::isfinite(x); };
    return std::all_of(w_yes.begin(), w_yes.end(), finite) && std::all_of(w_no.begin(), w_no.end(), finite) &&
           std::isfinite(b_yes) && std::isfinite(b_no);
}

ValidatorParams init_validator(int num_tags, std::uint64_t seed, double stddev) {
    ValidatorParams p(num_tags);
    Rng rng(seed, "validator.init");
    for (auto& w : p.w_yes) {
        w = stddev * rng.normal();
    }
    for (auto& w : p.w_no) {
        w = stddev * rng.normal();
    }
    p.b_yes = stddev * rng.normal();
    p.b_no = stddev * rng.normal();
    return p;
}

std::vector<double> validator_features(const UserProfile& user, const ItemProfile& item, const RecCoT& cot) {
    const int K = static_cast<int>(user.features.size());
    const auto h = cot_multi_hot(cot, K);
    std::vector<double> psi;
    psi.reserve(static_cast<std::size_t>(4 * K));
    psi.insert(psi.end(), user.features.begin(), user.features.end());
    psi.insert(psi.end(), item.features.begin(), item.features.end());
    psi.insert(psi.end(), h.begin(), h.end());
    for (int k = 0; k < K; ++k) {
        psi.push_back(h[static_cast<std::size_t>(k)] * item.features[static_cast<std::size_t>(k)]);
    }
    return psi;
}

namespace {

struct HeadLogits {
    double yes;
    double no;
};

HeadLogits head_logits(const ValidatorParams& params, std::span<const double> psi) {
    return {dot(params.w_yes, psi) + params.b_yes, dot(params.w_no, psi) + params.b_no};
}

}  // namespace

RawScores raw_scores(const ValidatorParams& params, const UserProfile& user, const ItemProfile& item,
                     const RecCoT& cot) {
    const auto logits = head_logits(params, validator_features(user, item, cot));
    return {std::exp(logits.yes), std::exp(logits.no)};
}

NormalizedScores normalize(double s_yes, double s_no) {
    if (s_yes < 0.0 || s_no < 0.0) {
        throw Error(ErrorKind::contract, "scores must be nonnegative");
    }
    const double total = s_yes + s_no;
    if (total == 0.0) {
        throw Error(ErrorKind::degenerate_score, "both validator scores are zero");
    }
    return {s_yes / total, s_no / total};
}

double p_yes(const ValidatorParams& params, const UserProfile& user, const ItemProfile& item, const RecCoT& cot) {
    const auto logits = head_logits(params, validator_features(user, item, cot));
    // Shift both heads by the larger logit; the ratio is unchanged and exp
    // cannot overflow.
    const double top = std::max(logits.yes, logits.no);
    return normalize(std::exp(logits.yes - top), std::exp(logits.no - top)).p_true;
}

double bce_loss(const ValidatorParams& params, const UserProfile& user, const ItemProfile& item, const RecCoT& cot,
                Label y) {
    return bce(p_yes(params, user, item, cot), y);
}

ValidatorParams bce_grad(const ValidatorParams& params, const UserProfile& user, const ItemProfile& item,
                         const RecCoT& cot, Label y) {
    const auto psi = validator_features(user, item, cot);
    const auto logits = head_logits(params, psi);
    const double residual = sigmoid(logits.yes - logits.no) - label_value(y);
    ValidatorParams g(params.num_tags);
    for (std::size_t i = 0; i < psi.size(); ++i) {
        g.w_yes[i] = residual * psi[i];
        g.w_no[i] = -residual * psi[i];
    }
    g.b_yes = residual;
    g.b_no = -residual;
    return g;
}

}  // namespace trackrec
