#pragma once

// Recommendation worlds: a synthetic generator with latent user tastes and
// Bernoulli clicks, plus a loader for small external interaction logs.

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "trackrec/core.hpp"

namespace trackrec {

enum class Split : std::uint8_t { train, valid, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct UserProfile {
    int user_id = 0;
    /// Simplex vector of true tag preferences. Empty for external data.
    std::vector<double> latent;
    /// Observed history aggregate, entries in [0, 1].
    std::vector<double> features;
    std::vector<int> history;

    bool has_latent() const { return !latent.empty(); }
};

struct ItemProfile {
    int item_id = 0;
    std::vector<double> affinity;
    std::vector<double> features;
};

struct Interaction {
    int user_id = 0;
    int item_id = 0;
    Label label = Label::no;
    Split split = Split::train;

    friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct EnvConfig {
    int n_users = 200;
    int n_items = 500;
    int n_interactions_per_user = 30;
    CotShape shape{};
    // Sharper clicks and sparser tastes than the classic (8.0, 0.3) setting:
    // that one yields ~18% positives and history features too weak to learn
    // from, so (16.0, 0.1) is the default.
    double click_sharpness = 16.0;
    double click_bias = -2.0;
    double feature_noise = 0.05;
    double dirichlet_alpha = 0.1;
    std::uint64_t seed = 42;

    void validate() const;
};

class Dataset {
public:
    Dataset() = default;
    Dataset(int num_tags, std::vector<UserProfile> users, std::vector<ItemProfile> items,
            std::vector<Interaction> interactions);

    int num_tags() const { return num_tags_; }
    const std::vector<UserProfile>& users() const { return users_; }
    const std::vector<ItemProfile>& items() const { return items_; }
    const std::vector<Interaction>& interactions() const { return interactions_; }

    const UserProfile& user(int user_id) const;
    const ItemProfile& item(int item_id) const;
    /// Dense position of an id in users()/items(); throws referential.
    int user_index(int user_id) const;
    int item_index(int item_id) const;

    std::vector<Interaction> split(Split which) const;
    bool has_latent() const;

private:
    int num_tags_ = 0;
    std::vector<UserProfile> users_;
    std::vector<ItemProfile> items_;
    std::vector<Interaction> interactions_;
    std::unordered_map<int, int> user_pos_;
    std::unordered_map<int, int> item_pos_;
};

/// sigmoid(c * <theta, a> + b0)
double click_probability(std::span<const double> latent, std::span<const double> affinity, double sharpness,
                         double bias);

/// Mean affinity of the liked items plus per-coordinate Gaussian noise,
/// clamped to [0, 1]; the uniform vector when nothing was liked.
std::vector<double> history_features(const std::vector<const ItemProfile*>& liked, int num_tags, double noise,
                                     Rng* rng);

Dataset make_synthetic(const EnvConfig& config);

/// Reads `user_id,item_id,label,split` rows and the companion item table
/// `item_id,tag_0..tag_{K-1}`. User features are rebuilt from train-split
/// positives without noise; latent vectors are absent.
Dataset load_interactions_csv(const std::filesystem::path& interactions_path,
                              const std::filesystem::path& items_path);
Dataset load_interactions_csv(const std::filesystem::path& interactions_path);

void write_interactions_csv(const Dataset& data, const std::filesystem::path& path);
void write_items_csv(const Dataset& data, const std::filesystem::path& path);

}  // namespace trackrec
