#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "capforge/graph.hpp"
#include "capforge/rng.hpp"
#include "capforge/tensor.hpp"
#include "capforge/vocab.hpp"

namespace capforge {

struct DecoderConfig {
    int n_layers = 1;   // 1, 2 or 4
    int hidden = 512;   // H
    int embed = 512;    // D, shared with the encoder output
    float dropout = 0.5f;
};

/// Word embedding + stacked LSTM + softmax head. Gate ordering inside each
/// layer's packed weight is i,f,g,o; checkpoints depend on it.
struct DecoderParams {
    DecoderConfig cfg;
    int vocab_size = 0;
    Tensor w_embed;  // (V, D)
    struct Layer {
        Tensor w;  // (4H, in + H), in = D for layer 0, H above
        Tensor b;  // (4H), forget slice initialized to 1
    };
    std::vector<Layer> layers;
    Tensor head_w;  // (V, H)
    Tensor head_b;  // (V)

    /// uniform(-0.08, 0.08) everywhere except the forget-gate bias.
    static DecoderParams init(const DecoderConfig& cfg, int vocab_size, Rng& rng);

    int layer_input_dim(int layer) const { return layer == 0 ? cfg.embed : cfg.hidden; }
    std::vector<std::pair<std::string, Tensor*>> named_tensors(const std::string& prefix);
};

/// Per-layer recurrent state, zero before the image step.
struct LstmState {
    std::vector<Tensor> h, c;  // one (H) pair per layer

    static LstmState zeros(const DecoderConfig& cfg);
};

/// One LSTM cell update on the graph: c' = f.c + i.g, h' = o.tanh(c').
std::pair<NodeId, NodeId> lstm_cell_step(Graph& g, NodeId w, NodeId b, NodeId x, NodeId h,
                                         NodeId c, int hidden);

/// Teacher-forced unroll. The image feature is consumed at the step before
/// the first word and emits no distribution; every following step consumes
/// the ground-truth token and emits the next-word softmax. All steps share
/// parameters. Dropout (train_mode only) applies to each layer's h output.
/// Returns one distribution node per prediction target.
std::vector<NodeId> decoder_forward(Graph& g, DecoderParams& p, NodeId image_feature,
                                    const std::vector<TokenId>& caption, bool train_mode,
                                    Rng* rng, bool trainable = true);

/// Sum over targets of -log p_t(S_t); probabilities below 1e-12 are clamped
/// (counted by nll_clamp_count).
NodeId sequence_nll(Graph& g, const std::vector<NodeId>& distributions,
                    const std::vector<TokenId>& caption);

long nll_clamp_count();
void reset_nll_clamp_count();

/// Incremental decoding step (no dropout). Input is either the image feature
/// or a token id. The distribution emitted for the image step is discarded
/// by callers per the decoding convention. Matches the unrolled forward to
/// float precision.
struct StepInput {
    const Tensor* feature = nullptr;  // set for the image step
    TokenId token = -1;               // otherwise
};
std::pair<Tensor, LstmState> step_distribution(const DecoderParams& p, const LstmState& state,
                                               const StepInput& input);

}  // namespace capforge
