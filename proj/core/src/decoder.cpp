#include "capforge/decoder.hpp"

#include <atomic>

#include "capforge/errors.hpp"

namespace capforge {

namespace {

std::atomic<long> g_nll_clamps{0};

constexpr float kProbFloor = 1e-12f;

}  // namespace

DecoderParams DecoderParams::init(const DecoderConfig& cfg, int vocab_size, Rng& rng) {
    if (cfg.n_layers != 1 && cfg.n_layers != 2 && cfg.n_layers != 4) {
        throw ConfigError("decoder depth must be 1, 2 or 4, got " + std::to_string(cfg.n_layers));
    }
    if (vocab_size < 3) throw ConfigError("vocabulary too small for a decoder");
    constexpr float kInit = 0.08f;
    DecoderParams p;
    p.cfg = cfg;
    p.vocab_size = vocab_size;
    p.w_embed = Tensor::uniform({vocab_size, cfg.embed}, rng, -kInit, kInit);
    const int h = cfg.hidden;
    for (int l = 0; l < cfg.n_layers; ++l) {
        const int in = l == 0 ? cfg.embed : h;
        Layer layer;
        layer.w = Tensor::uniform({4 * h, in + h}, rng, -kInit, kInit);
        layer.b = Tensor::uniform({4 * h}, rng, -kInit, kInit);
        for (int i = h; i < 2 * h; ++i) layer.b.values[static_cast<std::size_t>(i)] = 1.0f;
        p.layers.push_back(std::move(layer));
    }
    p.head_w = Tensor::uniform({vocab_size, h}, rng, -kInit, kInit);
    p.head_b = Tensor::uniform({vocab_size}, rng, -kInit, kInit);
    return p;
}

std::vector<std::pair<std::string, Tensor*>> DecoderParams::named_tensors(
    const std::string& prefix) {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back(prefix + "w_embed", &w_embed);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        out.emplace_back(prefix + "l" + std::to_string(l) + ".w", &layers[l].w);
        out.emplace_back(prefix + "l" + std::to_string(l) + ".b", &layers[l].b);
    }
    out.emplace_back(prefix + "head.w", &head_w);
    out.emplace_back(prefix + "head.b", &head_b);
    return out;
}

LstmState LstmState::zeros(const DecoderConfig& cfg) {
    LstmState s;
    for (int l = 0; l < cfg.n_layers; ++l) {
        s.h.push_back(Tensor::zeros({cfg.hidden}));
        s.c.push_back(Tensor::zeros({cfg.hidden}));
    }
    return s;
}

std::pair<NodeId, NodeId> lstm_cell_step(Graph& g, NodeId w, NodeId b, NodeId x, NodeId h,
                                         NodeId c, int hidden) {
    NodeId z = g.add(g.matmul(w, g.concat(x, h)), b);
    NodeId gi = g.sigmoid(g.slice(z, 0, hidden));
    NodeId gf = g.sigmoid(g.slice(z, hidden, hidden));
    NodeId gg = g.tanh(g.slice(z, 2 * hidden, hidden));
    NodeId go = g.sigmoid(g.slice(z, 3 * hidden, hidden));
    NodeId c_next = g.add(g.mul(gf, c), g.mul(gi, gg));
    NodeId h_next = g.mul(go, g.tanh(c_next));
    return {h_next, c_next};
}

namespace {

struct BoundDecoder {
    NodeId w_embed;
    std::vector<std::pair<NodeId, NodeId>> layers;  // (w, b)
    NodeId head_w, head_b;
};

BoundDecoder bind_decoder(Graph& g, DecoderParams& p, bool trainable) {
    auto leaf = [&](Tensor& t) { return trainable ? g.param(t) : g.ref_input(t); };
    BoundDecoder b;
    b.w_embed = leaf(p.w_embed);
    for (auto& layer : p.layers) b.layers.emplace_back(leaf(layer.w), leaf(layer.b));
    b.head_w = leaf(p.head_w);
    b.head_b = leaf(p.head_b);
    return b;
}

// One full stack update; returns the top h (post-dropout when training).
NodeId stack_step(Graph& g, const BoundDecoder& bd, const DecoderConfig& cfg, NodeId x,
                  std::vector<NodeId>& hs, std::vector<NodeId>& cs, bool train_mode,
                  float dropout, Rng* rng) {
    NodeId in = x;
    for (std::size_t l = 0; l < bd.layers.size(); ++l) {
        auto [h, c] = lstm_cell_step(g, bd.layers[l].first, bd.layers[l].second, in, hs[l],
                                     cs[l], cfg.hidden);
        hs[l] = h;
        cs[l] = c;
        NodeId out = h;
        if (train_mode && dropout > 0.0f) {
            out = g.mul(out, g.input(dropout_mask({cfg.hidden}, dropout, *rng)));
        }
        in = out;
    }
    return in;
}

}  // namespace

std::vector<NodeId> decoder_forward(Graph& g, DecoderParams& p, NodeId image_feature,
                                    const std::vector<TokenId>& caption, bool train_mode,
                                    Rng* rng, bool trainable) {
    if (caption.size() < 2 || caption.front() != Vocabulary::kStart) {
        throw IntegrityError("decoder_forward expects a START-bracketed caption");
    }
    if (train_mode && p.cfg.dropout > 0.0f && rng == nullptr) {
        throw ConfigError("train-mode forward with dropout needs an rng");
    }
    BoundDecoder bd = bind_decoder(g, p, trainable);
    std::vector<NodeId> hs, cs;
    for (int l = 0; l < p.cfg.n_layers; ++l) {
        hs.push_back(g.input(Tensor::zeros({p.cfg.hidden})));
        cs.push_back(g.input(Tensor::zeros({p.cfg.hidden})));
    }
    const float dropout = train_mode ? p.cfg.dropout : 0.0f;

    // Image step: state advances, no prediction is emitted.
    stack_step(g, bd, p.cfg, image_feature, hs, cs, train_mode, dropout, rng);

    std::vector<NodeId> dists;
    for (std::size_t t = 0; t + 1 < caption.size(); ++t) {
        NodeId x = g.embed_lookup(bd.w_embed, caption[t]);
        NodeId top = stack_step(g, bd, p.cfg, x, hs, cs, train_mode, dropout, rng);
        NodeId logits = g.add(g.matmul(bd.head_w, top), bd.head_b);
        dists.push_back(g.softmax(logits));
    }
    return dists;
}

NodeId sequence_nll(Graph& g, const std::vector<NodeId>& distributions,
                    const std::vector<TokenId>& caption) {
    if (distributions.size() + 1 != caption.size()) {
        throw DimensionError("need one distribution per prediction target: " +
                             std::to_string(distributions.size()) + " vs " +
                             std::to_string(caption.size() - 1) + " targets");
    }
    NodeId total = g.input(Tensor::scalar(0.0f));
    for (std::size_t t = 0; t < distributions.size(); ++t) {
        NodeId picked = g.pick(distributions[t], caption[t + 1]);
        if (g.value(picked).values[0] < kProbFloor) ++g_nll_clamps;
        NodeId lp = g.log(g.clamp_min(picked, kProbFloor));
        total = g.sub(total, lp);
    }
    return total;
}

long nll_clamp_count() { return g_nll_clamps.load(); }
void reset_nll_clamp_count() { g_nll_clamps.store(0); }

std::pair<Tensor, LstmState> step_distribution(const DecoderParams& p, const LstmState& state,
                                               const StepInput& input) {
    if (static_cast<int>(state.h.size()) != p.cfg.n_layers) {
        throw DimensionError("state layer count does not match decoder depth");
    }
    Graph g;
    DecoderParams& mp = const_cast<DecoderParams&>(p);
    BoundDecoder bd = bind_decoder(g, mp, false);
    std::vector<NodeId> hs, cs;
    for (int l = 0; l < p.cfg.n_layers; ++l) {
        hs.push_back(g.ref_input(state.h[static_cast<std::size_t>(l)]));
        cs.push_back(g.ref_input(state.c[static_cast<std::size_t>(l)]));
    }
    NodeId x;
    if (input.feature != nullptr) {
        if (input.feature->rank() != 1 || input.feature->dim(0) != p.cfg.embed) {
            throw DimensionError("image feature must be (" + std::to_string(p.cfg.embed) +
                                 "), got " + input.feature->shape_str());
        }
        x = g.ref_input(*input.feature);
    } else {
        x = g.embed_lookup(bd.w_embed, input.token);
    }
    NodeId top = stack_step(g, bd, p.cfg, x, hs, cs, false, 0.0f, nullptr);
    NodeId dist = g.softmax(g.add(g.matmul(bd.head_w, top), bd.head_b));

    LstmState next;
    for (int l = 0; l < p.cfg.n_layers; ++l) {
        next.h.push_back(g.value(hs[static_cast<std::size_t>(l)]));
        next.c.push_back(g.value(cs[static_cast<std::size_t>(l)]));
    }
    return {g.value(dist), std::move(next)};
}

}  // namespace capforge
