#include "trackrec/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

#include <fmt/core.h>

namespace trackrec {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_input: return "invalid-input";
        case ErrorKind::contract: return "contract";
        case ErrorKind::parse: return "parse";
        case ErrorKind::referential: return "referential";
        case ErrorKind::degenerate_score: return "degenerate-score";
        case ErrorKind::undefined_metric: return "undefined-metric";
        case ErrorKind::unsupported: return "unsupported";
        case ErrorKind::divergence: return "divergence";
        case ErrorKind::io: return "io";
        case ErrorKind::schema: return "schema";
    }
    return "unknown";
}

TagVocabulary::TagVocabulary(std::vector<std::string> tags) : tags_(std::move(tags)) {
    if (tags_.size() < 2) {
        throw Error(ErrorKind::invalid_input, "tag vocabulary needs at least two tags");
    }
    std::unordered_set<std::string> seen;
    for (const auto& t : tags_) {
        if (t.empty()) {
            throw Error(ErrorKind::invalid_input, "tag names must be non-empty");
        }
        if (!seen.insert(t).second) {
            throw Error(ErrorKind::invalid_input, fmt::format("duplicate tag name '{}'", t));
        }
    }
}

TagVocabulary TagVocabulary::numbered(int count) {
    std::vector<std::string> tags;
    tags.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) {
        tags.push_back(fmt::format("tag_{}", i));
    }
    return TagVocabulary(std::move(tags));
}

const std::string& TagVocabulary::name(int id) const {
    if (id < 0 || id >= size()) {
        throw Error(ErrorKind::invalid_input, fmt::format("tag id {} outside vocabulary of {}", id, size()));
    }
    return tags_[static_cast<std::size_t>(id)];
}

void CotShape::validate() const {
    if (num_tags < 2) {
        throw Error(ErrorKind::invalid_input, "need at least two tags");
    }
    if (length < 1 || length > num_tags) {
        throw Error(ErrorKind::invalid_input,
                    fmt::format("chain length {} must be in [1, {}]", length, num_tags));
    }
}

void check_cot(const RecCoT& cot, int num_tags) {
    std::vector<bool> used(static_cast<std::size_t>(std::max(num_tags, 0)), false);
    for (int id : cot.tags) {
        if (id < 0 || id >= num_tags) {
            throw Error(ErrorKind::invalid_input, fmt::format("tag id {} outside [0, {})", id, num_tags));
        }
        if (used[static_cast<std::size_t>(id)]) {
            throw Error(ErrorKind::invalid_input, fmt::format("tag id {} repeated in chain", id));
        }
        used[static_cast<std::size_t>(id)] = true;
    }
}

std::string cot_render(const RecCoT& cot, const TagVocabulary& vocab) {
    std::string out = "prefers: ";
    for (std::size_t i = 0; i < cot.tags.size(); ++i) {
        if (i > 0) {
            out += ", ";
        }
        out += vocab.name(cot.tags[i]);
    }
    return out;
}

std::vector<double> cot_multi_hot(const RecCoT& cot, int num_tags) {
    check_cot(cot, num_tags);
    std::vector<double> h(static_cast<std::size_t>(num_tags), 0.0);
    for (int id : cot.tags) {
        h[static_cast<std::size_t>(id)] = 1.0;
    }
    return h;
}

double sigmoid(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) {
    if (x > 0) {
        return x + std::log1p(std::exp(-x));
    }
    return std::log1p(std::exp(x));
}

double log_sum_exp(std::span<const double> xs) {
    if (xs.empty()) {
        return -std::numeric_limits<double>::infinity();
    }
    const auto top = std::max_element(xs.begin(), xs.end());
    const double m = *top;
    if (!std::isfinite(m)) {
        return m;
    }
    // log1p keeps tiny tails that 1 + s would round away.
    double s = 0.0;
    for (auto it = xs.begin(); it != xs.end(); ++it) {
        if (it != top) s += std::exp(*it - m);
    }
    return m + std::log1p(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double bce(double p, Label y) {
    const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    return y == Label::yes ? -std::log(q) : -std::log(1.0 - q);
}

// ---------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> coords) {
    std::uint64_t h = splitmix64(base);
    for (std::uint64_t c : coords) {
        h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
    }
    return h;
}

std::uint64_t stream_tag(std::string_view purpose) {
    // FNV-1a
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : purpose) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Rng::Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) {
        s = splitmix64(s);
        word = s;
    }
}

Rng::Rng(std::uint64_t base, std::string_view purpose, std::initializer_list<std::uint64_t> coords)
    : Rng(derive_seed(derive_seed(base, {stream_tag(purpose)}), coords)) {}

namespace {
inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
    if (n <= 1) {
        return 0;
    }
    // Lemire-style rejection keeps the draw unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = next_u64();
    while (x >= limit) {
        x = next_u64();
    }
    return x % n;
}

double Rng::normal() {
    // Box-Muller, one value per call to keep the stream position obvious.
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gamma(double shape) {
    if (shape <= 0.0) {
        throw Error(ErrorKind::invalid_input, "gamma shape must be positive");
    }
    if (shape < 1.0) {
        double u = uniform();
        while (u <= 0.0) {
            u = uniform();
        }
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    // Marsaglia-Tsang
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = 0.0;
        double v = 0.0;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) {
            return d * v;
        }
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
            return d * v;
        }
    }
}

std::vector<double> Rng::dirichlet(int dim, double alpha) {
    std::vector<double> out(static_cast<std::size_t>(dim));
    double total = 0.0;
    for (auto& x : out) {
        x = gamma(alpha);
        total += x;
    }
    if (total <= 0.0) {
        // Every draw underflowed; fall back to a vertex chosen uniformly.
        std::fill(out.begin(), out.end(), 0.0);
        out[below(static_cast<std::uint64_t>(dim))] = 1.0;
        return out;
    }
    for (auto& x : out) {
        x /= total;
    }
    return out;
}

}  // namespace trackrec
