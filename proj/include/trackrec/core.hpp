#pragma once

// Shared domain types for the generator/validator pipeline: tag vocabulary,
// chains of reasoning tags (RecCoT), labels, dense matrices and the seeded
// randomness contract that every other module builds on.

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace trackrec {

enum class ErrorKind {
    invalid_input,
    contract,
    parse,
    referential,
    degenerate_score,
    undefined_metric,
    unsupported,
    divergence,
    io,
    schema,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a category so the CLI can
/// report it as a single machine-parseable line.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

enum class Label : std::uint8_t { no = 0, yes = 1 };

constexpr double label_value(Label y) { return y == Label::yes ? 1.0 : 0.0; }

class TagVocabulary {
public:
    explicit TagVocabulary(std::vector<std::string> tags);

    /// "tag_0", "tag_1", ... for synthetic worlds.
    static TagVocabulary numbered(int count);

    int size() const { return static_cast<int>(tags_.size()); }
    const std::string& name(int id) const;
    const std::vector<std::string>& tags() const { return tags_; }

private:
    std::vector<std::string> tags_;
};

/// Fixed-length sequence of distinct tag ids.
struct RecCoT {
    std::vector<int> tags;

    int length() const { return static_cast<int>(tags.size()); }
    friend bool operator==(const RecCoT&, const RecCoT&) = default;
};

/// Vocabulary size and chain length. K >= 2 and K >= L.
struct CotShape {
    int num_tags = 16;
    int length = 4;

    void validate() const;
    friend bool operator==(const CotShape&, const CotShape&) = default;
};

/// Throws invalid_input unless every id is in [0, num_tags) and ids are
/// pairwise distinct.
void check_cot(const RecCoT& cot, int num_tags);

std::string cot_render(const RecCoT& cot, const TagVocabulary& vocab);
std::vector<double> cot_multi_hot(const RecCoT& cot, int num_tags);

// ---------------------------------------------------------------------------
// Dense row-major matrix of doubles.

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }

    std::span<double> row(int r) { return {values.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const double> row(int r) const {
        return {values.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

// ---------------------------------------------------------------------------
// Numerics shared across modules.

inline constexpr double kProbClamp = 1e-7;

double sigmoid(double x);
/// log(1 + exp(x)) without overflow.
double softplus(double x);
double log_sum_exp(std::span<const double> xs);
double dot(std::span<const double> a, std::span<const double> b);
/// Clamped binary cross-entropy of probability p against label y.
double bce(double p, Label y);

// ---------------------------------------------------------------------------
// Randomness.
//
// A run owns one 64-bit seed. Independent sub-streams are derived by hashing
// the seed together with a purpose tag and integer coordinates, so the value
// drawn for (user, sample) never depends on the order in which other users
// were processed. The engine is xoshiro256** and the distributions are
// implemented here, so outputs do not depend on the standard library vendor.

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> coords);
std::uint64_t stream_tag(std::string_view purpose);

class Rng {
public:
    explicit Rng(std::uint64_t seed);
    Rng(std::uint64_t base, std::string_view purpose, std::initializer_list<std::uint64_t> coords = {});

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    double normal();
    double gamma(double shape);
    std::vector<double> dirichlet(int dim, double alpha);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_[4];
};

}  // namespace trackrec
