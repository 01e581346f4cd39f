#include "trackrec/env.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include <fmt/core.h>

namespace trackrec {

std::string_view to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::valid: return "valid";
        case Split::test: return "test";
    }
    return "train";
}

Split parse_split(std::string_view text) {
    if (text == "train") return Split::train;
    if (text == "valid") return Split::valid;
    if (text == "test") return Split::test;
    throw Error(ErrorKind::parse, fmt::format("unknown split '{}'", text));
}

void EnvConfig::validate() const {
    if (n_users <= 0 || n_items <= 0 || n_interactions_per_user <= 0) {
        throw Error(ErrorKind::invalid_input, "environment counts must be positive");
    }
    if (n_interactions_per_user > n_items) {
        throw Error(ErrorKind::invalid_input, "interactions per user cannot exceed the item count");
    }
    shape.validate();
    if (!(click_sharpness > 0.0)) {
        throw Error(ErrorKind::invalid_input, "click sharpness must be positive");
    }
    if (!(feature_noise >= 0.0)) {
        throw Error(ErrorKind::invalid_input, "feature noise must be nonnegative");
    }
    if (!(dirichlet_alpha > 0.0)) {
        throw Error(ErrorKind::invalid_input, "dirichlet alpha must be positive");
    }
}

Dataset::Dataset(int num_tags, std::vector<UserProfile> users, std::vector<ItemProfile> items,
                 std::vector<Interaction> interactions)
    : num_tags_(num_tags), users_(std::move(users)), items_(std::move(items)), interactions_(std::move(interactions)) {
    for (std::size_t i = 0; i < users_.size(); ++i) {
        if (!user_pos_.emplace(users_[i].user_id, static_cast<int>(i)).second) {
            throw Error(ErrorKind::referential, fmt::format("duplicate user id {}", users_[i].user_id));
        }
        if (static_cast<int>(users_[i].features.size()) != num_tags_) {
            throw Error(ErrorKind::invalid_input, fmt::format("user {} features have wrong length", users_[i].user_id));
        }
    }
    for (std::size_t i = 0; i < items_.size(); ++i) {
        if (!item_pos_.emplace(items_[i].item_id, static_cast<int>(i)).second) {
            throw Error(ErrorKind::referential, fmt::format("duplicate item id {}", items_[i].item_id));
        }
        if (static_cast<int>(items_[i].features.size()) != num_tags_) {
            throw Error(ErrorKind::invalid_input, fmt::format("item {} features have wrong length", items_[i].item_id));
        }
    }
    for (const auto& x : interactions_) {
        user_index(x.user_id);
        item_index(x.item_id);
    }
}

int Dataset::user_index(int user_id) const {
    auto it = user_pos_.find(user_id);
    if (it == user_pos_.end()) {
        throw Error(ErrorKind::referential, fmt::format("unknown user id {}", user_id));
    }
    return it->second;
}

int Dataset::item_index(int item_id) const {
    auto it = item_pos_.find(item_id);
    if (it == item_pos_.end()) {
        throw Error(ErrorKind::referential, fmt::format("unknown item id {}", item_id));
    }
    return it->second;
}

const UserProfile& Dataset::user(int user_id) const { return users_[static_cast<std::size_t>(user_index(user_id))]; }

const ItemProfile& Dataset::item(int item_id) const { return items_[static_cast<std::size_t>(item_index(item_id))]; }

std::vector<Interaction> Dataset::split(Split which) const {
    std::vector<Interaction> out;
    for (const auto& x : interactions_) {
        if (x.split == which) {
            out.push_back(x);
        }
    }
    return out;
}

bool Dataset::has_latent() const {
    return std::any_of(users_.begin(), users_.end(), [](const UserProfile& u) { return u.has_latent(); });
}

double click_probability(std::span<const double> latent, std::span<const double> affinity, double sharpness,
                         double bias) {
    return sigmoid(sharpness * dot(latent, affinity) + bias);
}

std::vector<double> history_features(const std::vector<const ItemProfile*>& liked, int num_tags, double noise,
                                     Rng* rng) {
    std::vector<double> f(static_cast<std::size_t>(num_tags), 0.0);
    if (liked.empty()) {
        std::fill(f.begin(), f.end(), 1.0 / num_tags);
        return f;
    }
    for (const ItemProfile* item : liked) {
        for (int k = 0; k < num_tags; ++k) {
            f[static_cast<std::size_t>(k)] += item->affinity[static_cast<std::size_t>(k)];
        }
    }
    for (auto& x : f) {
        x /= static_cast<double>(liked.size());
        if (noise > 0.0 && rng != nullptr) {
            x += noise * rng->normal();
        }
        x = std::clamp(x, 0.0, 1.0);
    }
    return f;
}

Dataset make_synthetic(const EnvConfig& config) {
    config.validate();
    const int K = config.shape.num_tags;

    std::vector<ItemProfile> items;
    items.reserve(static_cast<std::size_t>(config.n_items));
    for (int i = 0; i < config.n_items; ++i) {
        Rng rng(config.seed, "env.item", {static_cast<std::uint64_t>(i)});
        ItemProfile item;
        item.item_id = i;
        item.affinity = rng.dirichlet(K, config.dirichlet_alpha);
        item.features = item.affinity;
        items.push_back(std::move(item));
    }

    const int n = config.n_interactions_per_user;
    const int n_train = std::max(1, static_cast<int>(std::lround(0.8 * n)));
    const int n_valid = std::min(n - n_train, static_cast<int>(std::lround(0.1 * n)));

    std::vector<UserProfile> users;
    std::vector<Interaction> interactions;
    users.reserve(static_cast<std::size_t>(config.n_users));
    interactions.reserve(static_cast<std::size_t>(config.n_users) * static_cast<std::size_t>(n));

    std::vector<int> pool(static_cast<std::size_t>(config.n_items));
    for (int u = 0; u < config.n_users; ++u) {
        Rng rng(config.seed, "env.user", {static_cast<std::uint64_t>(u)});
        UserProfile user;
        user.user_id = u;
        user.latent = rng.dirichlet(K, config.dirichlet_alpha);

        // Partial Fisher-Yates over the item pool for n distinct items.
        std::iota(pool.begin(), pool.end(), 0);
        for (int j = 0; j < n; ++j) {
            const auto pick = static_cast<std::size_t>(j) + rng.below(pool.size() - static_cast<std::size_t>(j));
            std::swap(pool[static_cast<std::size_t>(j)], pool[pick]);
        }

        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        std::vector<Split> split_of(static_cast<std::size_t>(n), Split::test);
        for (int j = 0; j < n; ++j) {
            const int slot = order[static_cast<std::size_t>(j)];
            split_of[static_cast<std::size_t>(slot)] = j < n_train ? Split::train
                                                     : j < n_train + n_valid ? Split::valid
                                                                             : Split::test;
        }

        std::vector<const ItemProfile*> liked;
        for (int j = 0; j < n; ++j) {
            const int item_id = pool[static_cast<std::size_t>(j)];
            const ItemProfile& item = items[static_cast<std::size_t>(item_id)];
            const double p = click_probability(user.latent, item.affinity, config.click_sharpness, config.click_bias);
            const Label y = rng.uniform() < p ? Label::yes : Label::no;
            const Split s = split_of[static_cast<std::size_t>(j)];
            interactions.push_back({u, item_id, y, s});
            if (s == Split::train) {
                user.history.push_back(item_id);
                if (y == Label::yes) {
                    liked.push_back(&item);
                }
            }
        }
        user.features = history_features(liked, K, config.feature_noise, &rng);
        users.push_back(std::move(user));
    }
    return Dataset(K, std::move(users), std::move(items), std::move(interactions));
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

std::string_view trim_cr(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) {
        s.remove_suffix(1);
    }
    while (!s.empty() && s.front() == ' ') {
        s.remove_prefix(1);
    }
    return s;
}

template <class T>
T parse_number(std::string_view field, const std::filesystem::path& path, int line_no) {
    field = trim_cr(field);
    T value{};
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, value);
    if (ec != std::errc() || ptr != end || field.empty()) {
        throw Error(ErrorKind::parse,
                    fmt::format("{}:{}: cannot parse '{}' as a number", path.string(), line_no, field));
    }
    return value;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::io, fmt::format("cannot open {}", path.string()));
    }
    return in;
}

}  // namespace

Dataset load_interactions_csv(const std::filesystem::path& interactions_path) {
    return load_interactions_csv(interactions_path, interactions_path.parent_path() / "items.csv");
}

Dataset load_interactions_csv(const std::filesystem::path& interactions_path,
                              const std::filesystem::path& items_path) {
    std::vector<ItemProfile> items;
    int num_tags = 0;
    {
        auto in = open_input(items_path);
        std::string line;
        if (!std::getline(in, line)) {
            throw Error(ErrorKind::parse, fmt::format("{}:1: missing header", items_path.string()));
        }
        const auto header = split_fields(trim_cr(line));
        if (header.empty() || trim_cr(header[0]) != "item_id") {
            throw Error(ErrorKind::parse, fmt::format("{}:1: header must start with item_id", items_path.string()));
        }
        num_tags = static_cast<int>(header.size()) - 1;
        for (int k = 0; k < num_tags; ++k) {
            if (trim_cr(header[static_cast<std::size_t>(k) + 1]) != fmt::format("tag_{}", k)) {
                throw Error(ErrorKind::parse,
                            fmt::format("{}:1: expected column tag_{}", items_path.string(), k));
            }
        }
        int line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim_cr(line).empty()) {
                continue;
            }
            const auto fields = split_fields(trim_cr(line));
            if (static_cast<int>(fields.size()) != num_tags + 1) {
                throw Error(ErrorKind::parse, fmt::format("{}:{}: expected {} fields, got {}", items_path.string(),
                                                          line_no, num_tags + 1, fields.size()));
            }
            ItemProfile item;
            item.item_id = parse_number<int>(fields[0], items_path, line_no);
            for (int k = 0; k < num_tags; ++k) {
                item.affinity.push_back(parse_number<double>(fields[static_cast<std::size_t>(k) + 1], items_path, line_no));
            }
            item.features = item.affinity;
            items.push_back(std::move(item));
        }
    }
    std::unordered_map<int, const ItemProfile*> item_by_id;
    for (const auto& item : items) {
        item_by_id.emplace(item.item_id, &item);
    }

    std::vector<Interaction> interactions;
    {
        auto in = open_input(interactions_path);
        std::string line;
        if (!std::getline(in, line) || trim_cr(line) != "user_id,item_id,label,split") {
            throw Error(ErrorKind::parse,
                        fmt::format("{}:1: header must be user_id,item_id,label,split", interactions_path.string()));
        }
        int line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim_cr(line).empty()) {
                continue;
            }
            const auto fields = split_fields(trim_cr(line));
            if (fields.size() != 4) {
                throw Error(ErrorKind::parse, fmt::format("{}:{}: expected 4 fields, got {}",
                                                          interactions_path.string(), line_no, fields.size()));
            }
            Interaction x;
            x.user_id = parse_number<int>(fields[0], interactions_path, line_no);
            x.item_id = parse_number<int>(fields[1], interactions_path, line_no);
            const auto label = trim_cr(fields[2]);
            if (label == "1") {
                x.label = Label::yes;
            } else if (label == "0") {
                x.label = Label::no;
            } else {
                throw Error(ErrorKind::parse, fmt::format("{}:{}: label must be 0 or 1, got '{}'",
                                                          interactions_path.string(), line_no, label));
            }
            try {
                x.split = parse_split(trim_cr(fields[3]));
            } catch (const Error& e) {
                throw Error(ErrorKind::parse, fmt::format("{}:{}: {}", interactions_path.string(), line_no, e.what()));
            }
            if (!item_by_id.contains(x.item_id)) {
                throw Error(ErrorKind::referential, fmt::format("{}:{}: unknown item id {}",
                                                                interactions_path.string(), line_no, x.item_id));
            }
            interactions.push_back(x);
        }
    }

    // Users in first-appearance order.
    std::vector<UserProfile> users;
    std::unordered_map<int, std::size_t> user_pos;
    std::vector<std::vector<const ItemProfile*>> liked;
    for (const auto& x : interactions) {
        auto [it, inserted] = user_pos.emplace(x.user_id, users.size());
        if (inserted) {
            UserProfile u;
            u.user_id = x.user_id;
            users.push_back(std::move(u));
            liked.emplace_back();
        }
        if (x.split == Split::train) {
            users[it->second].history.push_back(x.item_id);
            if (x.label == Label::yes) {
                liked[it->second].push_back(item_by_id.at(x.item_id));
            }
        }
    }
    for (std::size_t i = 0; i < users.size(); ++i) {
        users[i].features = history_features(liked[i], num_tags, 0.0, nullptr);
    }
    return Dataset(num_tags, std::move(users), std::move(items), std::move(interactions));
}

void write_interactions_csv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::io, fmt::format("cannot write {}", path.string()));
    }
    out << "user_id,item_id,label,split\n";
    for (const auto& x : data.interactions()) {
        out << fmt::format("{},{},{},{}\n", x.user_id, x.item_id, x.label == Label::yes ? 1 : 0, to_string(x.split));
    }
}

void write_items_csv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::io, fmt::format("cannot write {}", path.string()));
    }
    out << "item_id";
    for (int k = 0; k < data.num_tags(); ++k) {
        out << ",tag_" << k;
    }
    out << '\n';
    for (const auto& item : data.items()) {
        out << item.item_id;
        for (double v : item.features) {
            out << ',' << fmt::format("{}", v);
        }
        out << '\n';
    }
}

}  // namespace trackrec
