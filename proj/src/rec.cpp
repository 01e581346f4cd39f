#include "trackrec/rec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

namespace trackrec {

double roc_auc(std::span<const ScoredLabel> scores) {
    std::size_t n_pos = 0;
    for (const auto& s : scores) {
        n_pos += s.label == Label::yes ? 1 : 0;
    }
    const std::size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw Error(ErrorKind::undefined_metric, "AUC needs at least one positive and one negative");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a].score < scores[b].score; });

    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]].score == scores[order[i]].score) {
            ++j;
        }
        // Ranks are 1-based; the tie group [i, j] shares the mean rank.
        const double mid_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            if (scores[order[k]].label == Label::yes) {
                pos_rank_sum += mid_rank;
            }
        }
        i = j + 1;
    }
    const double np = static_cast<double>(n_pos);
    const double nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

MetricsReport evaluate(std::span<const ScoredLabel> scores) {
    if (scores.empty()) {
        throw Error(ErrorKind::contract, "cannot evaluate an empty score list");
    }
    MetricsReport report;
    std::size_t correct = 0;
    double loss = 0.0;
    bool has_pos = false;
    bool has_neg = false;
    for (const auto& s : scores) {
        const bool predicted_yes = s.score >= 0.5;
        correct += predicted_yes == (s.label == Label::yes) ? 1 : 0;
        loss += bce(s.score, s.label);
        has_pos = has_pos || s.label == Label::yes;
        has_neg = has_neg || s.label == Label::no;
    }
    report.acc = static_cast<double>(correct) / static_cast<double>(scores.size());
    report.logloss = loss / static_cast<double>(scores.size());
    if (has_pos && has_neg) {
        report.auc = roc_auc(scores);
    }
    return report;
}

// ---------------------------------------------------------------------------

TagEncoder make_tag_encoder(int num_tags, int dim, std::uint64_t seed) {
    TagEncoder enc{Matrix(num_tags, dim)};
    Rng rng(seed, "rec.encoder");
    const double stddev = 1.0 / std::sqrt(static_cast<double>(dim));
    for (auto& v : enc.table.values) {
        v = stddev * rng.normal();
    }
    return enc;
}

std::vector<double> encode_preference(const RecCoT& cot, const TagEncoder& encoder) {
    check_cot(cot, encoder.table.rows);
    std::vector<double> e(static_cast<std::size_t>(encoder.dim()), 0.0);
    if (cot.tags.empty()) {
        return e;
    }
    for (int id : cot.tags) {
        const auto row = encoder.table.row(id);
        for (std::size_t j = 0; j < e.size(); ++j) {
            e[j] += row[j];
        }
    }
    for (auto& x : e) {
        x /= static_cast<double>(cot.tags.size());
    }
    return e;
}

// ---------------------------------------------------------------------------

CtrModelParams::CtrModelParams(CtrDims dims) : dims_(dims) {
    auto sz = [](int a, int b) { return static_cast<std::size_t>(a) * static_cast<std::size_t>(b); };
    std::size_t at = 0;
    auto take = [&](std::size_t n) {
        const std::size_t start = at;
        at += n;
        return start;
    };
    layout_.user_emb = take(sz(dims.n_users, dims.id_dim));
    layout_.item_emb = take(sz(dims.n_items, dims.id_dim));
    layout_.conn_w1 = take(sz(dims.connector_hidden, dims.encoder_dim));
    layout_.conn_b1 = take(static_cast<std::size_t>(dims.connector_hidden));
    layout_.conn_w2 = take(sz(dims.connector_out, dims.connector_hidden));
    layout_.conn_b2 = take(static_cast<std::size_t>(dims.connector_out));
    layout_.hidden_w = take(sz(dims.hidden, dims.input_dim()));
    layout_.hidden_b = take(static_cast<std::size_t>(dims.hidden));
    layout_.head_w = take(static_cast<std::size_t>(dims.hidden));
    layout_.head_b = take(1);
    layout_.total = at;
    values_.assign(at, 0.0);
}

std::span<double> CtrModelParams::user_embedding(int user_index) {
    return {values_.data() + layout_.user_emb + static_cast<std::size_t>(user_index) * dims_.id_dim,
            static_cast<std::size_t>(dims_.id_dim)};
}

std::span<double> CtrModelParams::item_embedding(int item_index) {
    return {values_.data() + layout_.item_emb + static_cast<std::size_t>(item_index) * dims_.id_dim,
            static_cast<std::size_t>(dims_.id_dim)};
}

std::span<const double> CtrModelParams::user_embedding(int user_index) const {
    return {values_.data() + layout_.user_emb + static_cast<std::size_t>(user_index) * dims_.id_dim,
            static_cast<std::size_t>(dims_.id_dim)};
}

std::span<const double> CtrModelParams::item_embedding(int item_index) const {
    return {values_.data() + layout_.item_emb + static_cast<std::size_t>(item_index) * dims_.id_dim,
            static_cast<std::size_t>(dims_.id_dim)};
}

CtrModelParams init_ctr_model(CtrDims dims, std::uint64_t seed) {
    CtrModelParams p(dims);
    Rng rng(seed, "rec.init");
    const auto& L = p.layout();
    auto& v = p.values();
    auto fill = [&](std::size_t from, std::size_t to, double stddev) {
        for (std::size_t i = from; i < to; ++i) {
            v[i] = stddev * rng.normal();
        }
    };
    fill(L.user_emb, L.conn_w1, 0.05);
    fill(L.conn_w1, L.conn_b1, 1.0 / std::sqrt(static_cast<double>(dims.encoder_dim)));
    fill(L.conn_w2, L.conn_b2, 1.0 / std::sqrt(static_cast<double>(dims.connector_hidden)));
    fill(L.hidden_w, L.hidden_b, std::sqrt(2.0 / static_cast<double>(dims.input_dim())));
    fill(L.head_w, L.head_b, 1.0 / std::sqrt(static_cast<double>(dims.hidden)));
    return p;
}

namespace {

struct Activations {
    std::vector<double> conn_hidden;  // tanh outputs
    std::vector<double> input;        // concatenated backbone input
    std::vector<double> pre;          // hidden pre-activations
    double prob = 0.5;
};

Activations forward(const CtrModelParams& params, int user_index, int item_index, std::span<const double> f_u,
                    std::span<const double> f_i, std::span<const double> preference) {
    const auto& d = params.dims();
    const auto& L = params.layout();
    const auto& v = params.values();
    Activations a;

    a.conn_hidden.resize(static_cast<std::size_t>(d.connector_hidden));
    for (int h = 0; h < d.connector_hidden; ++h) {
        double s = v[L.conn_b1 + static_cast<std::size_t>(h)];
        const double* w = v.data() + L.conn_w1 + static_cast<std::size_t>(h) * d.encoder_dim;
        for (int j = 0; j < d.encoder_dim; ++j) {
            s += w[j] * preference[static_cast<std::size_t>(j)];
        }
        a.conn_hidden[static_cast<std::size_t>(h)] = std::tanh(s);
    }

    a.input.reserve(static_cast<std::size_t>(d.input_dim()));
    const auto ue = params.user_embedding(user_index);
    const auto ie = params.item_embedding(item_index);
    a.input.insert(a.input.end(), ue.begin(), ue.end());
    a.input.insert(a.input.end(), ie.begin(), ie.end());
    a.input.insert(a.input.end(), f_u.begin(), f_u.end());
    a.input.insert(a.input.end(), f_i.begin(), f_i.end());
    for (int o = 0; o < d.connector_out; ++o) {
        double s = v[L.conn_b2 + static_cast<std::size_t>(o)];
        const double* w = v.data() + L.conn_w2 + static_cast<std::size_t>(o) * d.connector_hidden;
        for (int h = 0; h < d.connector_hidden; ++h) {
            s += w[h] * a.conn_hidden[static_cast<std::size_t>(h)];
        }
        a.input.push_back(s);
    }

    a.pre.resize(static_cast<std::size_t>(d.hidden));
    double logit = v[L.head_b];
    for (int h = 0; h < d.hidden; ++h) {
        double s = v[L.hidden_b + static_cast<std::size_t>(h)];
        const double* w = v.data() + L.hidden_w + static_cast<std::size_t>(h) * d.input_dim();
        for (int j = 0; j < d.input_dim(); ++j) {
            s += w[j] * a.input[static_cast<std::size_t>(j)];
        }
        a.pre[static_cast<std::size_t>(h)] = s;
        logit += v[L.head_w + static_cast<std::size_t>(h)] * std::max(s, 0.0);
    }
    a.prob = sigmoid(logit);
    return a;
}

/// Adds scale * d(logit)/d(params) into grad given the forward activations.
void backward(const CtrModelParams& params, int user_index, int item_index, std::span<const double> preference,
              const Activations& a, double dlogit, std::vector<double>& grad) {
    const auto& d = params.dims();
    const auto& L = params.layout();
    const auto& v = params.values();
    const int in = d.input_dim();

    std::vector<double> dinput(static_cast<std::size_t>(in), 0.0);
    grad[L.head_b] += dlogit;
    for (int h = 0; h < d.hidden; ++h) {
        const double pre = a.pre[static_cast<std::size_t>(h)];
        grad[L.head_w + static_cast<std::size_t>(h)] += dlogit * std::max(pre, 0.0);
        if (pre <= 0.0) {
            continue;
        }
        const double dpre = dlogit * v[L.head_w + static_cast<std::size_t>(h)];
        grad[L.hidden_b + static_cast<std::size_t>(h)] += dpre;
        const std::size_t row = L.hidden_w + static_cast<std::size_t>(h) * in;
        for (int j = 0; j < in; ++j) {
            grad[row + static_cast<std::size_t>(j)] += dpre * a.input[static_cast<std::size_t>(j)];
            dinput[static_cast<std::size_t>(j)] += dpre * v[row + static_cast<std::size_t>(j)];
        }
    }

    const std::size_t ue = L.user_emb + static_cast<std::size_t>(user_index) * d.id_dim;
    const std::size_t ie = L.item_emb + static_cast<std::size_t>(item_index) * d.id_dim;
    for (int j = 0; j < d.id_dim; ++j) {
        grad[ue + static_cast<std::size_t>(j)] += dinput[static_cast<std::size_t>(j)];
        grad[ie + static_cast<std::size_t>(j)] += dinput[static_cast<std::size_t>(d.id_dim + j)];
    }

    const int conn_at = 2 * d.id_dim + 2 * d.num_tags;
    std::vector<double> dhidden(static_cast<std::size_t>(d.connector_hidden), 0.0);
    for (int o = 0; o < d.connector_out; ++o) {
        const double dout = dinput[static_cast<std::size_t>(conn_at + o)];
        grad[L.conn_b2 + static_cast<std::size_t>(o)] += dout;
        const std::size_t row = L.conn_w2 + static_cast<std::size_t>(o) * d.connector_hidden;
        for (int h = 0; h < d.connector_hidden; ++h) {
            grad[row + static_cast<std::size_t>(h)] += dout * a.conn_hidden[static_cast<std::size_t>(h)];
            dhidden[static_cast<std::size_t>(h)] += dout * v[row + static_cast<std::size_t>(h)];
        }
    }
    for (int h = 0; h < d.connector_hidden; ++h) {
        const double t = a.conn_hidden[static_cast<std::size_t>(h)];
        const double dpre = dhidden[static_cast<std::size_t>(h)] * (1.0 - t * t);
        grad[L.conn_b1 + static_cast<std::size_t>(h)] += dpre;
        const std::size_t row = L.conn_w1 + static_cast<std::size_t>(h) * d.encoder_dim;
        for (int j = 0; j < d.encoder_dim; ++j) {
            grad[row + static_cast<std::size_t>(j)] += dpre * preference[static_cast<std::size_t>(j)];
        }
    }
}

std::vector<double> preference_for(int user_id, const UserCots& cots, const TagEncoder& encoder) {
    auto it = cots.find(user_id);
    if (it == cots.end()) {
        return std::vector<double>(static_cast<std::size_t>(encoder.dim()), 0.0);
    }
    return encode_preference(it->second, encoder);
}

void check_ids(const CtrModelParams& params, const Dataset& data, const Interaction& x, int& ui, int& ii) {
    ui = data.user_index(x.user_id);
    ii = data.item_index(x.item_id);
    if (ui >= params.dims().n_users || ii >= params.dims().n_items) {
        throw Error(ErrorKind::referential,
                    fmt::format("interaction ({}, {}) is outside the model's embedding tables", x.user_id, x.item_id));
    }
}

}  // namespace

double ctr_forward(const CtrModelParams& params, const Dataset& data, const Interaction& interaction,
                   std::span<const double> preference) {
    int ui = 0;
    int ii = 0;
    check_ids(params, data, interaction, ui, ii);
    if (static_cast<int>(preference.size()) != params.dims().encoder_dim) {
        throw Error(ErrorKind::invalid_input, "preference vector has the wrong length");
    }
    return forward(params, ui, ii, data.users()[static_cast<std::size_t>(ui)].features,
                   data.items()[static_cast<std::size_t>(ii)].features, preference)
        .prob;
}

double ctr_loss_and_grad(const CtrModelParams& params, const Dataset& data, std::span<const Interaction> batch,
                         const UserCots& cots, const TagEncoder& encoder, std::vector<double>* grad) {
    if (grad != nullptr) {
        grad->assign(params.values().size(), 0.0);
    }
    if (batch.empty()) {
        return 0.0;
    }
    const double scale = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& x : batch) {
        int ui = 0;
        int ii = 0;
        check_ids(params, data, x, ui, ii);
        const auto pref = preference_for(x.user_id, cots, encoder);
        const auto a = forward(params, ui, ii, data.users()[static_cast<std::size_t>(ui)].features,
                               data.items()[static_cast<std::size_t>(ii)].features, pref);
        loss += bce(a.prob, x.label);
        if (grad != nullptr) {
            backward(params, ui, ii, pref, a, scale * (a.prob - label_value(x.label)), *grad);
        }
    }
    return loss * scale;
}

void CtrTrainConfig::validate() const {
    if (epochs < 1 || batch_size < 1) {
        throw Error(ErrorKind::invalid_input, "CTR epochs and batch size must be positive");
    }
    if (!(learning_rate >= 0.0)) {
        throw Error(ErrorKind::invalid_input, "CTR learning rate must be nonnegative");
    }
}

CtrTrainResult ctr_train(const CtrModelParams& params, const Dataset& data, std::span<const Interaction> train,
                         const UserCots& cots, const TagEncoder& encoder, const CtrTrainConfig& cfg,
                         std::uint64_t seed) {
    cfg.validate();
    if (train.empty()) {
        throw Error(ErrorKind::contract, "CTR training needs a nonempty train split");
    }
    CtrTrainResult result{params, {}};
    std::vector<Interaction> order(train.begin(), train.end());
    std::vector<double> grad;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(seed, "rec.shuffle", {static_cast<std::uint64_t>(epoch)});
        rng.shuffle(order);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t n = std::min(static_cast<std::size_t>(cfg.batch_size), order.size() - start);
            const std::span<const Interaction> batch(order.data() + start, n);
            const double loss = ctr_loss_and_grad(result.params, data, batch, cots, encoder, &grad);
            total += loss * static_cast<double>(n);
            if (cfg.learning_rate != 0.0) {
                auto& v = result.params.values();
                for (std::size_t i = 0; i < v.size(); ++i) {
                    v[i] -= cfg.learning_rate * grad[i];
                }
            }
        }
        const double mean = total / static_cast<double>(order.size());
        if (!std::isfinite(mean)) {
            throw Error(ErrorKind::divergence, fmt::format("non-finite CTR loss in epoch {}", epoch));
        }
        result.epoch_losses.push_back(mean);
    }
    return result;
}

std::vector<ScoredLabel> ctr_score(const CtrModelParams& params, const Dataset& data,
                                   std::span<const Interaction> interactions, const UserCots& cots,
                                   const TagEncoder& encoder) {
    std::vector<ScoredLabel> out;
    out.reserve(interactions.size());
    for (const auto& x : interactions) {
        out.push_back({ctr_forward(params, data, x, preference_for(x.user_id, cots, encoder)), x.label});
    }
    return out;
}

}  // namespace trackrec
