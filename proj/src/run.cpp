#include "trackrec/run.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <chrono>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

namespace trackrec {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

namespace {

std::string key_path(const std::string& prefix, std::string_view key) {
    return prefix.empty() ? std::string(key) : fmt::format("{}.{}", prefix, key);
}

/// Walks one JSON object, remembering which keys were consumed so the rest
/// can be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const json& object, std::string prefix) : object_(object), prefix_(std::move(prefix)) {
        if (!object_.is_object()) {
            throw Error(ErrorKind::schema,
                        fmt::format("config key '{}' must be an object", prefix_.empty() ? "<root>" : prefix_));
        }
    }

    const json* find(std::string_view key) {
        seen_.emplace(key);
        auto it = object_.find(std::string(key));
        return it == object_.end() ? nullptr : &*it;
    }

    void read(std::string_view key, int& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number_integer()) fail(key, "an integer");
            const auto wide = v->get<std::int64_t>();
            if (wide < std::numeric_limits<int>::min() || wide > std::numeric_limits<int>::max()) {
                fail(key, "an integer in range");
            }
            out = static_cast<int>(wide);
        }
    }

    void read(std::string_view key, std::uint64_t& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number_unsigned()) fail(key, "a nonnegative integer");
            out = v->get<std::uint64_t>();
        }
    }

    void read(std::string_view key, double& out) {
        if (const auto* v = find(key)) {
            if (!v->is_number()) fail(key, "a number");
            out = v->get<double>();
        }
    }

    void read(std::string_view key, bool& out) {
        if (const auto* v = find(key)) {
            if (!v->is_boolean()) fail(key, "a boolean");
            out = v->get<bool>();
        }
    }

    void read(std::string_view key, std::string& out) {
        if (const auto* v = find(key)) {
            if (!v->is_string()) fail(key, "a string");
            out = v->get<std::string>();
        }
    }

    template <typename Fn>
    void child(std::string_view key, Fn&& fn) {
        if (const auto* v = find(key)) {
            ObjectReader sub(*v, key_path(prefix_, key));
            fn(sub);
            sub.finish();
        }
    }

    void finish() const {
        for (const auto& [key, value] : object_.items()) {
            if (!seen_.count(key)) {
                throw Error(ErrorKind::schema, fmt::format("unknown config key '{}'", key_path(prefix_, key)));
            }
        }
    }

    [[noreturn]] void fail(std::string_view key, std::string_view expected) const {
        throw Error(ErrorKind::schema, fmt::format("config key '{}' must be {}", key_path(prefix_, key), expected));
    }

private:
    const json& object_;
    std::string prefix_;
    std::set<std::string, std::less<>> seen_;
};

}  // namespace

void RunConfig::finalize() {
    if (name.empty() || !std::all_of(name.begin(), name.end(), [](char c) {
            return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
        }) || name == "." || name == "..") {
        throw Error(ErrorKind::schema, fmt::format("run name '{}' must be a non-empty [A-Za-z0-9._-] word", name));
    }
    env.seed = seed;
    loop.seed = seed;
    loop.cot_length = env.shape.length;
    env.validate();
    loop.validate();
    ctr.train.validate();
    if (ctr.encoder_dim < 1) {
        throw Error(ErrorKind::invalid_input, "encoder dimension must be positive");
    }
}

RunConfig parse_run_config(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::parse, fmt::format("config is not valid JSON: {}", e.what()));
    }
    RunConfig cfg;
    ObjectReader root(doc, "");
    root.read("name", cfg.name);
    root.read("seed", cfg.seed);
    if (const auto* data = root.find("data"); data && !data->is_null()) {
        if (!data->is_string()) root.fail("data", "a string or null");
        cfg.data_dir = data->get<std::string>();
    }
    std::string runs_dir = cfg.runs_dir.string();
    root.read("runs_dir", runs_dir);
    cfg.runs_dir = runs_dir;
    root.child("env", [&](ObjectReader& r) {
        r.read("n_users", cfg.env.n_users);
        r.read("n_items", cfg.env.n_items);
        r.read("interactions_per_user", cfg.env.n_interactions_per_user);
        r.read("num_tags", cfg.env.shape.num_tags);
        r.read("cot_length", cfg.env.shape.length);
        r.read("click_sharpness", cfg.env.click_sharpness);
        r.read("click_bias", cfg.env.click_bias);
        r.read("feature_noise", cfg.env.feature_noise);
        r.read("dirichlet_alpha", cfg.env.dirichlet_alpha);
    });
    root.child("sampling", [&](ObjectReader& r) {
        r.read("num_samples", cfg.loop.sampling.num_samples);
        r.read("temperature", cfg.loop.sampling.temperature);
        r.read("top_p", cfg.loop.sampling.top_p);
    });
    root.child("dpo", [&](ObjectReader& r) {
        r.read("beta", cfg.loop.dpo.beta);
        r.read("learning_rate", cfg.loop.dpo.learning_rate);
        r.read("epochs", cfg.loop.dpo.epochs_per_iteration);
    });
    root.child("rectune", [&](ObjectReader& r) {
        r.read("learning_rate", cfg.loop.rectune.learning_rate);
        r.read("epochs", cfg.loop.rectune.epochs);
    });
    root.child("distill", [&](ObjectReader& r) {
        bool enabled = cfg.loop.distill.has_value();
        DistillConfig d = cfg.loop.distill.value_or(DistillConfig{});
        r.read("enabled", enabled);
        r.read("fraction", d.fraction);
        r.read("learning_rate", d.learning_rate);
        r.read("epochs", d.epochs);
        cfg.loop.distill = enabled ? std::optional<DistillConfig>(d) : std::nullopt;
    });
    root.child("loop", [&](ObjectReader& r) {
        r.read("iterations", cfg.loop.iterations);
        r.read("align", cfg.loop.align);
        std::string mode(to_string(cfg.loop.reference_mode));
        r.read("reference_mode", mode);
        cfg.loop.reference_mode = parse_reference_mode(mode);
    });
    root.child("ctr", [&](ObjectReader& r) {
        r.read("epochs", cfg.ctr.train.epochs);
        r.read("learning_rate", cfg.ctr.train.learning_rate);
        r.read("batch_size", cfg.ctr.train.batch_size);
        r.read("encoder_dim", cfg.ctr.encoder_dim);
    });
    root.finish();
    cfg.finalize();
    return cfg;
}

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::io, fmt::format("cannot read {}", path.string()));
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
        throw Error(ErrorKind::io, fmt::format("cannot write {}", path.string()));
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorKind::io, fmt::format("cannot create directory {}: {}", dir.string(), ec.message()));
    }
}

}  // namespace

RunConfig load_run_config(const fs::path& path) {
    try {
        return parse_run_config(read_text(path));
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::io) throw;
        throw Error(e.kind(), fmt::format("{}: {}", path.string(), e.what()));
    }
}

namespace {

json env_json(const EnvConfig& env) {
    return json{{"n_users", env.n_users},
                {"n_items", env.n_items},
                {"interactions_per_user", env.n_interactions_per_user},
                {"num_tags", env.shape.num_tags},
                {"cot_length", env.shape.length},
                {"click_sharpness", env.click_sharpness},
                {"click_bias", env.click_bias},
                {"feature_noise", env.feature_noise},
                {"dirichlet_alpha", env.dirichlet_alpha}};
}

}  // namespace

std::string dump_run_config(const RunConfig& c) {
    const DistillConfig d = c.loop.distill.value_or(DistillConfig{});
    json doc = json::object();
    doc["name"] = c.name;
    doc["seed"] = c.seed;
    doc["data"] = c.data_dir ? json(c.data_dir->string()) : json(nullptr);
    doc["runs_dir"] = c.runs_dir.string();
    doc["env"] = env_json(c.env);
    doc["sampling"] = {{"num_samples", c.loop.sampling.num_samples},
                       {"temperature", c.loop.sampling.temperature},
                       {"top_p", c.loop.sampling.top_p}};
    doc["dpo"] = {{"beta", c.loop.dpo.beta},
                  {"learning_rate", c.loop.dpo.learning_rate},
                  {"epochs", c.loop.dpo.epochs_per_iteration}};
    doc["rectune"] = {{"learning_rate", c.loop.rectune.learning_rate}, {"epochs", c.loop.rectune.epochs}};
    doc["distill"] = {{"enabled", c.loop.distill.has_value()},
                      {"fraction", d.fraction},
                      {"learning_rate", d.learning_rate},
                      {"epochs", d.epochs}};
    doc["loop"] = {{"iterations", c.loop.iterations},
                   {"align", c.loop.align},
                   {"reference_mode", std::string(to_string(c.loop.reference_mode))}};
    doc["ctr"] = {{"epochs", c.ctr.train.epochs},
                  {"learning_rate", c.ctr.train.learning_rate},
                  {"batch_size", c.ctr.train.batch_size},
                  {"encoder_dim", c.ctr.encoder_dim}};
    return doc.dump(2) + "\n";
}

void apply_overrides(RunConfig& config, const Overrides& o) {
    if (o.seed) config.seed = *o.seed;
    if (o.iterations) config.loop.iterations = *o.iterations;
    if (o.no_align) config.loop.align = false;
    if (o.no_distill) config.loop.distill.reset();
    config.finalize();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kGeneratorMagic[8] = {'T', 'R', 'K', 'R', 'G', 'E', 'N', '\0'};
constexpr char kValidatorMagic[8] = {'T', 'R', 'K', 'R', 'V', 'A', 'L', '\0'};

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f64(std::string& buf, double v) { put_u64(buf, std::bit_cast<std::uint64_t>(v)); }

class ByteReader {
public:
    ByteReader(std::string bytes, fs::path path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

    void expect_magic(const char (&magic)[8], std::string_view what) {
        if (bytes_.size() < 8 || std::memcmp(bytes_.data(), magic, 8) != 0) {
            throw Error(ErrorKind::parse, fmt::format("{} is not a {} checkpoint", path_.string(), what));
        }
        pos_ = 8;
    }

    std::uint64_t uint(int width) {
        need(static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]))
                 << (8 * i);
        }
        pos_ += static_cast<std::size_t>(width);
        return v;
    }

    double f64() { return std::bit_cast<double>(uint(8)); }

    void expect_end() const {
        if (pos_ != bytes_.size()) {
            throw Error(ErrorKind::parse, fmt::format("{} has {} trailing bytes", path_.string(), bytes_.size() - pos_));
        }
    }

    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw Error(ErrorKind::parse, fmt::format("{} is truncated", path_.string()));
        }
    }

    [[noreturn]] void corrupt(std::string_view why) const {
        throw Error(ErrorKind::parse, fmt::format("{}: {}", path_.string(), why));
    }

private:
    std::string bytes_;
    fs::path path_;
    std::size_t pos_ = 0;
};

ByteReader open_checkpoint(const fs::path& path) {
    if (!fs::exists(path)) {
        throw Error(ErrorKind::io, fmt::format("missing checkpoint {}", path.string()));
    }
    return ByteReader(read_text(path), path);
}

void check_version(ByteReader& r) {
    const auto version = r.uint(4);
    if (version != kCheckpointVersion) {
        r.corrupt(fmt::format("unsupported checkpoint version {} (expected {})", version, kCheckpointVersion));
    }
}

}  // namespace

void save_generator(const GeneratorParams& params, const fs::path& path) {
    std::string buf(kGeneratorMagic, 8);
    put_u32(buf, kCheckpointVersion);
    put_u32(buf, static_cast<std::uint32_t>(params.num_tags()));
    put_u32(buf, static_cast<std::uint32_t>(params.length()));
    put_u64(buf, params.weights.values.size() + params.bias.size());
    for (double v : params.weights.values) put_f64(buf, v);
    for (double v : params.bias) put_f64(buf, v);
    write_text(path, buf);
}

GeneratorParams load_generator(const fs::path& path) {
    auto r = open_checkpoint(path);
    r.expect_magic(kGeneratorMagic, "generator");
    check_version(r);
    const CotShape shape{static_cast<int>(r.uint(4)), static_cast<int>(r.uint(4))};
    try {
        shape.validate();
    } catch (const Error& e) {
        r.corrupt(e.what());
    }
    GeneratorParams params(shape);
    const auto count = r.uint(8);
    if (count != params.weights.values.size() + params.bias.size()) {
        r.corrupt("value count does not match the stored shape");
    }
    for (double& v : params.weights.values) v = r.f64();
    for (double& v : params.bias) v = r.f64();
    r.expect_end();
    if (!params.all_finite()) r.corrupt("non-finite parameter");
    return params;
}

void save_validator(const ValidatorParams& params, const fs::path& path) {
    std::string buf(kValidatorMagic, 8);
    put_u32(buf, kCheckpointVersion);
    put_u32(buf, static_cast<std::uint32_t>(params.num_tags));
    put_u64(buf, params.w_yes.size() + params.w_no.size() + 2);
    for (double v : params.w_yes) put_f64(buf, v);
    for (double v : params.w_no) put_f64(buf, v);
    put_f64(buf, params.b_yes);
    put_f64(buf, params.b_no);
    write_text(path, buf);
}

ValidatorParams load_validator(const fs::path& path) {
    auto r = open_checkpoint(path);
    r.expect_magic(kValidatorMagic, "validator");
    check_version(r);
    const auto k = r.uint(4);
    if (k < 2 || k > (1u << 20)) r.corrupt("implausible tag count");
    ValidatorParams params(static_cast<int>(k));
    if (r.uint(8) != params.w_yes.size() + params.w_no.size() + 2) {
        r.corrupt("value count does not match the stored shape");
    }
    for (double& v : params.w_yes) v = r.f64();
    for (double& v : params.w_no) v = r.f64();
    params.b_yes = r.f64();
    params.b_no = r.f64();
    r.expect_end();
    if (!params.all_finite()) r.corrupt("non-finite parameter");
    return params;
}

// ---------------------------------------------------------------------------
// Data and metrics files

namespace {

std::vector<double> number_array(const json& v, const std::string& what) {
    if (!v.is_array()) throw Error(ErrorKind::schema, fmt::format("{} must be an array", what));
    std::vector<double> out;
    for (const auto& x : v) {
        if (!x.is_number()) throw Error(ErrorKind::schema, fmt::format("{} must hold numbers", what));
        out.push_back(x.get<double>());
    }
    return out;
}

}  // namespace

Dataset load_dataset_dir(const fs::path& dir) {
    auto base = load_interactions_csv(dir / "interactions.csv", dir / "items.csv");
    const auto users_path = dir / "users.json";
    if (!fs::exists(users_path)) {
        return base;
    }
    json doc;
    try {
        doc = json::parse(read_text(users_path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::parse, fmt::format("{}: {}", users_path.string(), e.what()));
    }
    if (!doc.is_object() || !doc.contains("users") || !doc["users"].is_array()) {
        throw Error(ErrorKind::schema, fmt::format("{}: expected an object with a 'users' array", users_path.string()));
    }
    std::map<int, const json*> by_id;
    for (const auto& u : doc["users"]) {
        if (!u.is_object() || !u.contains("user_id") || !u["user_id"].is_number_integer()) {
            throw Error(ErrorKind::schema, fmt::format("{}: every user needs an integer user_id", users_path.string()));
        }
        by_id[u["user_id"].get<int>()] = &u;
    }
    auto users = base.users();
    const auto K = static_cast<std::size_t>(base.num_tags());
    for (auto& user : users) {
        const auto it = by_id.find(user.user_id);
        if (it == by_id.end()) {
            throw Error(ErrorKind::referential,
                        fmt::format("{}: user {} missing", users_path.string(), user.user_id));
        }
        const json& u = *it->second;
        const auto what = fmt::format("{}: user {}", users_path.string(), user.user_id);
        if (u.contains("features")) {
            user.features = number_array(u["features"], what + " features");
        }
        if (u.contains("latent") && !u["latent"].is_null()) {
            user.latent = number_array(u["latent"], what + " latent");
        }
        if (u.contains("history")) {
            user.history.clear();
            for (double id : number_array(u["history"], what + " history")) {
                user.history.push_back(static_cast<int>(id));
            }
        }
        if (user.features.size() != K || (!user.latent.empty() && user.latent.size() != K)) {
            throw Error(ErrorKind::schema, fmt::format("{} vectors must have length {}", what, K));
        }
    }
    return Dataset(base.num_tags(), std::move(users), base.items(), base.interactions());
}

Dataset resolve_dataset(const RunConfig& config) {
    if (config.data_dir) {
        auto data = load_dataset_dir(*config.data_dir);
        CotShape{data.num_tags(), config.env.shape.length}.validate();
        return data;
    }
    return make_synthetic(config.env);
}

namespace {

std::string opt_number(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); }

}  // namespace

std::string format_metrics_row(const MetricsRow& r) {
    return fmt::format("{},{},{},{},{},{},{},{},{},{},{}", r.run, r.arm, r.iteration, to_string(r.split),
                       opt_number(r.auc), r.acc, r.logloss, opt_number(r.mean_reward), opt_number(r.tag_recall),
                       opt_number(r.sdpo_loss), opt_number(r.rectune_loss));
}

MetricsRow validator_row(const std::string& run, const IterationReport& report, Split split) {
    return MetricsRow{run,
                      "validator",
                      report.iteration,
                      split,
                      report.auc,
                      report.acc,
                      report.logloss,
                      report.mean_reward,
                      report.tag_recall,
                      report.sdpo_loss,
                      report.rectune_loss};
}

// ---------------------------------------------------------------------------
// Subcommands

SynthResult cmd_synth(const RunConfig& config, const fs::path& out_dir) {
    const auto data = make_synthetic(config.env);
    ensure_dir(out_dir);
    write_interactions_csv(data, out_dir / "interactions.csv");
    write_items_csv(data, out_dir / "items.csv");

    json users = json::array();
    for (const auto& u : data.users()) {
        users.push_back({{"user_id", u.user_id}, {"features", u.features}, {"latent", u.latent}, {"history", u.history}});
    }
    write_text(out_dir / "users.json", json{{"num_tags", data.num_tags()}, {"users", users}}.dump() + "\n");

    const json manifest{{"format", "trackrec-dataset"},
                        {"version", 1},
                        {"seed", config.seed},
                        {"env", env_json(config.env)},
                        {"n_users", data.users().size()},
                        {"n_items", data.items().size()},
                        {"n_interactions", data.interactions().size()},
                        {"files", {"interactions.csv", "items.csv", "users.json"}}};
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
    return {out_dir, data.users().size(), data.items().size(), data.interactions().size()};
}

namespace {

fs::path checkpoint_path(const fs::path& run_dir, int k, std::string_view ext) {
    return run_dir / "checkpoints" / fmt::format("iter_{}.{}", k, ext);
}

UserCots greedy_cots(const GeneratorParams& generator, const Dataset& data) {
    UserCots cots;
    for (const auto& u : data.users()) {
        cots.emplace(u.user_id, greedy_cot(generator, u));
    }
    return cots;
}

void write_cots(const fs::path& path, const Dataset& data, const UserCots& cots) {
    const auto vocab = TagVocabulary::numbered(data.num_tags());
    std::string text;
    for (const auto& u : data.users()) {
        const auto& cot = cots.at(u.user_id);
        text += json{{"user_id", u.user_id}, {"tag_ids", cot.tags}, {"text", cot_render(cot, vocab)}}.dump();
        text += '\n';
    }
    write_text(path, text);
}

template <typename Fn>
auto in_stage(std::string_view stage, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.kind(), fmt::format("{}: {}", stage, e.what()));
    }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TrainResult cmd_train(const RunConfig& input, const std::optional<fs::path>& run_dir_arg, std::ostream* log) {
    RunConfig config = input;
    config.finalize();
    const fs::path run_dir = run_dir_arg.value_or(config.runs_dir / config.name);

    // A re-run replaces the previous artifacts rather than mixing with them.
    for (const char* sub : {"checkpoints", "cots"}) {
        std::error_code ec;
        fs::remove_all(run_dir / sub, ec);
        ensure_dir(run_dir / sub);
    }
    write_text(run_dir / "config.json", dump_run_config(config));

    std::ofstream timing(run_dir / "log.txt", std::ios::binary | std::ios::trunc);
    auto note = [&](const std::string& line) {
        timing << line << '\n';
        if (log) *log << line << '\n';
    };

    const auto data = in_stage("data", [&] { return resolve_dataset(config); });
    note(fmt::format("data: {} users, {} items, {} interactions", data.users().size(), data.items().size(),
                     data.interactions().size()));

    std::string metrics(kMetricsHeader);
    metrics += '\n';
    std::vector<UserCots> cots_per_iteration;
    auto t_iter = std::chrono::steady_clock::now();
    const auto observer = [&](const GeneratorParams& g, const ValidatorParams& v, const IterationReport& report) {
        const int k = report.iteration;
        save_generator(g, checkpoint_path(run_dir, k, "gen"));
        save_validator(v, checkpoint_path(run_dir, k, "val"));
        cots_per_iteration.push_back(greedy_cots(g, data));
        write_cots(run_dir / "cots" / fmt::format("iter_{}.jsonl", k), data, cots_per_iteration.back());
        metrics += format_metrics_row(validator_row(config.name, report, Split::valid));
        metrics += '\n';
        note(fmt::format("iteration {}: valid auc {} reward {:.4f} ({:.2f}s)", k,
                         report.auc ? fmt::format("{:.4f}", *report.auc) : std::string("n/a"), report.mean_reward,
                         seconds_since(t_iter)));
        t_iter = std::chrono::steady_clock::now();
    };
    const auto loop = in_stage("alternating training", [&] { return run_trackrec(data, config.loop, observer); });

    const auto train = data.split(Split::train);
    const auto test = data.split(Split::test);
    const CtrDims dims{static_cast<int>(data.users().size()), static_cast<int>(data.items().size()), data.num_tags(),
                       config.ctr.encoder_dim};
    const auto encoder = make_tag_encoder(data.num_tags(), config.ctr.encoder_dim, config.seed);
    const auto init = init_ctr_model(dims, config.seed);
    auto ctr_arm = [&](const UserCots& cots) {
        const auto trained = ctr_train(init, data, train, cots, encoder, config.ctr.train, config.seed);
        return evaluate(ctr_score(trained.params, data, test, cots, encoder));
    };
    auto ctr_row = [&](std::string arm, int k, const MetricsReport& m) {
        metrics += format_metrics_row({config.name, std::move(arm), k, Split::test, m.auc, m.acc, m.logloss, {}, {}, {}, {}});
        metrics += '\n';
    };

    TrainResult result{run_dir, loop.reports, {}, {}};
    auto t_ctr = std::chrono::steady_clock::now();
    result.base = in_stage("ctr base arm", [&] { return ctr_arm({}); });
    ctr_row("base", 0, result.base);
    note(fmt::format("ctr base: test auc {} ({:.2f}s)", opt_number(result.base.auc), seconds_since(t_ctr)));
    for (std::size_t k = 0; k < cots_per_iteration.size(); ++k) {
        t_ctr = std::chrono::steady_clock::now();
        const auto m = in_stage(fmt::format("ctr trackrec arm, iteration {}", k),
                                [&] { return ctr_arm(cots_per_iteration[k]); });
        ctr_row("trackrec", static_cast<int>(k), m);
        note(fmt::format("ctr trackrec iteration {}: test auc {} ({:.2f}s)", k, opt_number(m.auc),
                         seconds_since(t_ctr)));
        result.trackrec = m;
    }
    write_text(run_dir / "metrics.csv", metrics);
    return result;
}

namespace {

struct StoredRun {
    RunConfig config;
    Dataset data;
    int iteration = 0;
    GeneratorParams generator;
};

StoredRun open_run(const fs::path& run_dir, std::optional<int> iteration) {
    const auto config_path = run_dir / "config.json";
    if (!fs::exists(config_path)) {
        throw Error(ErrorKind::io, fmt::format("missing run config {}", config_path.string()));
    }
    auto config = load_run_config(config_path);
    const int k = iteration.value_or(config.loop.iterations);
    if (k < 0) {
        throw Error(ErrorKind::invalid_input, fmt::format("iteration {} is negative", k));
    }
    auto generator = load_generator(checkpoint_path(run_dir, k, "gen"));
    auto data = resolve_dataset(config);
    if (generator.num_tags() != data.num_tags()) {
        throw Error(ErrorKind::schema, fmt::format("generator checkpoint has {} tags but the data has {}",
                                                   generator.num_tags(), data.num_tags()));
    }
    return {std::move(config), std::move(data), k, std::move(generator)};
}

}  // namespace

MetricsRow cmd_eval(const fs::path& run_dir, Split split, std::optional<int> iteration) {
    auto run = open_run(run_dir, iteration);
    const auto validator = load_validator(checkpoint_path(run_dir, run.iteration, "val"));
    if (validator.num_tags != run.data.num_tags()) {
        throw Error(ErrorKind::schema, "validator checkpoint does not match the data's tag count");
    }
    const auto report = evaluate_models(run.generator, validator, run.data, split, run.iteration);
    const auto row = validator_row(run.config.name, report, split);
    const auto line = format_metrics_row(row);

    const auto metrics_path = run_dir / "metrics.csv";
    std::string existing = fs::exists(metrics_path) ? read_text(metrics_path) : std::string();
    if (existing.empty()) {
        existing = std::string(kMetricsHeader) + "\n";
    }
    std::istringstream lines(existing);
    bool present = false;
    for (std::string l; std::getline(lines, l);) {
        present = present || l == line;
    }
    if (!present) {
        if (existing.back() != '\n') existing += '\n';
        write_text(metrics_path, existing + line + "\n");
    }
    return row;
}

void cmd_export_cots(const fs::path& run_dir, Split split, std::optional<int> iteration, std::ostream& out) {
    const auto run = open_run(run_dir, iteration);
    const auto rows = run.data.split(split);
    for (const auto& ex : build_rectune_dataset(run.generator, run.data, rows)) {
        out << json{{"user_id", ex.user_id},
                    {"item_id", ex.item_id},
                    {"tag_ids", ex.cot.tags},
                    {"label", ex.label == Label::yes ? 1 : 0}}
                   .dump()
            << '\n';
    }
}

}  // namespace trackrec
