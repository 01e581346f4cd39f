#pragma once

// Preference utilization in a small CTR model, plus the offline metrics used
// everywhere (AUC, accuracy, log loss).
//
// A user's greedy chain is pooled through a frozen tag-embedding table, mapped
// by a connector MLP (d_e -> 16 -> 8, tanh hidden) and concatenated with ID
// embeddings and raw features:
//   x = [user emb ; item emb ; f_u ; f_i ; connector(e_p)]
//   y = sigmoid(w_out . relu(W_h x + b_h) + b_out)

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "trackrec/core.hpp"
#include "trackrec/env.hpp"

namespace trackrec {

// ---------------------------------------------------------------------------
// Metrics

struct ScoredLabel {
    double score = 0.0;
    Label label = Label::no;
};

struct MetricsReport {
    /// Absent when the input holds a single class.
    std::optional<double> auc;
    double acc = 0.0;
    double logloss = 0.0;
};

/// Mann-Whitney AUC with mid-ranks for ties. Throws undefined_metric when
/// either class is missing.
double roc_auc(std::span<const ScoredLabel> scores);

/// Accuracy at threshold 0.5 (0.5 counts as Yes), clamped log loss, and AUC
/// when both classes are present.
MetricsReport evaluate(std::span<const ScoredLabel> scores);

// ---------------------------------------------------------------------------
// Encoder

struct TagEncoder {
    Matrix table;  // K x d_e, frozen

    int dim() const { return table.cols; }
};

/// Entries drawn from Gaussian(0, 1/sqrt(dim)).
TagEncoder make_tag_encoder(int num_tags, int dim, std::uint64_t seed);

/// Mean of the encoder rows selected by the chain.
std::vector<double> encode_preference(const RecCoT& cot, const TagEncoder& encoder);

// ---------------------------------------------------------------------------
// CTR model

struct CtrDims {
    int n_users = 0;
    int n_items = 0;
    int num_tags = 0;
    int encoder_dim = 32;
    int id_dim = 8;
    int connector_hidden = 16;
    int connector_out = 8;
    int hidden = 32;

    int input_dim() const { return 2 * id_dim + 2 * num_tags + connector_out; }
    friend bool operator==(const CtrDims&, const CtrDims&) = default;
};

/// All weights live in one flat vector; the accessors return views into it.
class CtrModelParams {
public:
    CtrModelParams() = default;
    explicit CtrModelParams(CtrDims dims);

    const CtrDims& dims() const { return dims_; }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    std::span<double> user_embedding(int user_index);
    std::span<double> item_embedding(int item_index);
    std::span<const double> user_embedding(int user_index) const;
    std::span<const double> item_embedding(int item_index) const;

    struct Layout {
        std::size_t user_emb, item_emb, conn_w1, conn_b1, conn_w2, conn_b2, hidden_w, hidden_b, head_w, head_b,
            total;
    };
    const Layout& layout() const { return layout_; }

    friend bool operator==(const CtrModelParams& a, const CtrModelParams& b) {
        return a.dims_ == b.dims_ && a.values_ == b.values_;
    }

private:
    CtrDims dims_{};
    Layout layout_{};
    std::vector<double> values_;
};

CtrModelParams init_ctr_model(CtrDims dims, std::uint64_t seed);

/// Per-user chains feeding the connector; users without an entry get a zero
/// preference vector.
using UserCots = std::unordered_map<int, RecCoT>;

double ctr_forward(const CtrModelParams& params, const Dataset& data, const Interaction& interaction,
                   std::span<const double> preference);

/// Mean clamped BCE over the interactions and, when `grad` is non-null, the
/// gradient of the mean unclamped BCE written into it.
double ctr_loss_and_grad(const CtrModelParams& params, const Dataset& data, std::span<const Interaction> batch,
                         const UserCots& cots, const TagEncoder& encoder, std::vector<double>* grad);

struct CtrTrainConfig {
    int epochs = 20;
    double learning_rate = 0.1;
    int batch_size = 64;

    void validate() const;
};

struct CtrTrainResult {
    CtrModelParams params;
    std::vector<double> epoch_losses;
};

/// Mini-batch gradient descent; batches are reshuffled every epoch from the
/// given seed. The encoder stays frozen.
CtrTrainResult ctr_train(const CtrModelParams& params, const Dataset& data, std::span<const Interaction> train,
                         const UserCots& cots, const TagEncoder& encoder, const CtrTrainConfig& cfg,
                         std::uint64_t seed);

std::vector<ScoredLabel> ctr_score(const CtrModelParams& params, const Dataset& data,
                                   std::span<const Interaction> interactions, const UserCots& cots,
                                   const TagEncoder& encoder);

}  // namespace trackrec
