#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "capforge/dataset.hpp"
#include "capforge/decoder.hpp"
#include "capforge/errors.hpp"
#include "capforge/model.hpp"
#include "capforge/vocab.hpp"

namespace capforge {

/// A decodable model: `start` consumes the image feature, `step` consumes a
/// token and yields next-token log-probabilities plus the advanced state.
template <typename M>
concept SequenceScorer = requires(const M& m, const Tensor& f,
                                  const typename M::State& s, TokenId t) {
    { m.vocab_size() } -> std::convertible_to<int>;
    { m.start(f) } -> std::same_as<typename M::State>;
    { m.step(s, t).log_probs } -> std::convertible_to<std::vector<float>>;
    { m.step(s, t).state } -> std::convertible_to<typename M::State>;
};

struct BeamConfig {
    int k = 20;
    int max_len = kDefaultMaxSeqLen;       // interior tokens before STOP is forced
    bool length_normalize = false;         // plain summed log-prob by default
    bool keep_finished_in_beam = false;    // default: finished leave the beam
};

/// Decoded token sequence (STOP-terminated, no leading START) with its summed
/// log-probability.
struct DecodeResult {
    std::vector<TokenId> tokens;
    double logprob = 0.0;
};

namespace detail {

template <typename State>
struct Hyp {
    std::vector<TokenId> tokens;  // after START
    double logprob = 0.0;
    State state;
    bool finished = false;
};

template <typename State>
bool better(const Hyp<State>& a, const Hyp<State>& b, bool length_normalize) {
    const double sa = length_normalize && !a.tokens.empty()
                          ? a.logprob / static_cast<double>(a.tokens.size())
                          : a.logprob;
    const double sb = length_normalize && !b.tokens.empty()
                          ? b.logprob / static_cast<double>(b.tokens.size())
                          : b.logprob;
    if (sa != sb) return sa > sb;
    return a.tokens < b.tokens;  // deterministic tie-break
}

}  // namespace detail

/// Breadth-limited best-first decoding: expand every live hypothesis over the
/// whole vocabulary, keep the k best by summed log-probability. Emitting STOP
/// finishes a hypothesis; by default it leaves the beam, freeing its slot.
/// At max_len interior tokens STOP is forced. Ties break lexicographically.
template <SequenceScorer M>
DecodeResult beam_search(const M& model, const Tensor& image_feature,
                         const BeamConfig& cfg = {}) {
    if (cfg.k < 1) throw ConfigError("beam width must be >= 1");
    using Hyp = detail::Hyp<typename M::State>;
    const int v = model.vocab_size();

    std::vector<Hyp> live(1);
    live[0].state = model.start(image_feature);
    std::vector<Hyp> finished;

    auto by_score = [&](const Hyp& a, const Hyp& b) {
        return detail::better(a, b, cfg.length_normalize);
    };

    while (!live.empty()) {
        std::vector<Hyp> candidates;
        candidates.reserve(live.size() * static_cast<std::size_t>(v));
        for (Hyp& hyp : live) {
            if (hyp.finished) {  // parked in-beam (keep_finished_in_beam mode)
                candidates.push_back(std::move(hyp));
                continue;
            }
            const TokenId last = hyp.tokens.empty() ? Vocabulary::kStart : hyp.tokens.back();
            auto res = model.step(hyp.state, last);
            if (static_cast<int>(hyp.tokens.size()) >= cfg.max_len) {
                Hyp done = hyp;
                done.tokens.push_back(Vocabulary::kStop);
                done.logprob += res.log_probs[Vocabulary::kStop];
                done.finished = true;
                candidates.push_back(std::move(done));
                continue;
            }
            for (TokenId t = 0; t < v; ++t) {
                Hyp next = hyp;
                next.tokens.push_back(t);
                next.logprob += res.log_probs[static_cast<std::size_t>(t)];
                next.state = res.state;
                next.finished = t == Vocabulary::kStop;
                candidates.push_back(std::move(next));
            }
        }
        std::sort(candidates.begin(), candidates.end(), by_score);

        // Keep the k best; a finished candidate ranking above the cutoff moves
        // to the pool without consuming a slot (default mode).
        live.clear();
        for (Hyp& cand : candidates) {
            if (static_cast<int>(live.size()) >= cfg.k) break;
            if (cand.finished && !cfg.keep_finished_in_beam) {
                finished.push_back(std::move(cand));
            } else {
                live.push_back(std::move(cand));
            }
        }
        if (cfg.keep_finished_in_beam &&
            std::all_of(live.begin(), live.end(), [](const Hyp& h) { return h.finished; })) {
            for (Hyp& h : live) finished.push_back(std::move(h));
            break;
        }
        // Extending a hypothesis can only lower a summed score; once the best
        // finished one beats every live one, the search is decided.
        if (!cfg.length_normalize && !finished.empty() && !live.empty()) {
            const Hyp* best = &finished[0];
            for (const Hyp& f : finished) {
                if (by_score(f, *best)) best = &f;
            }
            if (std::none_of(live.begin(), live.end(),
                             [&](const Hyp& h) { return by_score(h, *best); })) {
                break;
            }
        }
    }

    if (finished.empty()) throw NumericError("beam search produced no finished hypothesis");
    std::sort(finished.begin(), finished.end(), by_score);
    return {finished[0].tokens, finished[0].logprob};
}

/// Argmax decoding; identical to beam_search with k = 1.
template <SequenceScorer M>
DecodeResult greedy_decode(const M& model, const Tensor& image_feature,
                           int max_len = kDefaultMaxSeqLen) {
    typename M::State state = model.start(image_feature);
    DecodeResult out;
    TokenId prev = Vocabulary::kStart;
    for (int t = 0; t <= max_len; ++t) {
        auto res = model.step(state, prev);
        TokenId pick = Vocabulary::kStop;
        if (t < max_len) {
            float best = res.log_probs[0];
            pick = 0;
            for (TokenId v = 1; v < model.vocab_size(); ++v) {
                if (res.log_probs[static_cast<std::size_t>(v)] > best) {
                    best = res.log_probs[static_cast<std::size_t>(v)];
                    pick = v;
                }
            }
        }
        out.tokens.push_back(pick);
        out.logprob += res.log_probs[static_cast<std::size_t>(pick)];
        if (pick == Vocabulary::kStop) break;
        state = res.state;
        prev = pick;
    }
    return out;
}

/// Sum of per-step target log-probabilities for a START...STOP caption,
/// STOP term included; the exact negation of sequence_nll.
template <SequenceScorer M>
double caption_log_prob(const M& model, const Tensor& image_feature,
                        const std::vector<TokenId>& caption) {
    if (caption.size() < 2 || caption.front() != Vocabulary::kStart ||
        caption.back() != Vocabulary::kStop) {
        throw IntegrityError("caption_log_prob expects START ... STOP tokens");
    }
    typename M::State state = model.start(image_feature);
    double total = 0.0;
    for (std::size_t t = 0; t + 1 < caption.size(); ++t) {
        auto res = model.step(state, caption[t]);
        total += res.log_probs[static_cast<std::size_t>(caption[t + 1])];
        state = res.state;
    }
    return total;
}

/// Adapter exposing a trained decoder as a SequenceScorer.
class DecoderStepper {
public:
    using State = LstmState;
    struct StepResult {
        std::vector<float> log_probs;
        State state;
    };

    explicit DecoderStepper(const DecoderParams& params) : params_(&params) {}

    int vocab_size() const { return params_->vocab_size; }

    State start(const Tensor& feature) const {
        StepInput in;
        in.feature = &feature;
        return step_distribution(*params_, LstmState::zeros(params_->cfg), in).second;
    }

    StepResult step(const State& state, TokenId token) const {
        StepInput in;
        in.token = token;
        auto [dist, next] = step_distribution(*params_, state, in);
        StepResult r;
        r.log_probs.reserve(dist.numel());
        for (float p : dist.values) {
            r.log_probs.push_back(std::log(std::max(p, 1e-12f)));
        }
        r.state = std::move(next);
        return r;
    }

private:
    const DecoderParams* params_;
};

/// Beam-decode one image entry of a dataset through the full model.
inline DecodeResult caption_entry(const CaptionModel& model, const ImageEntry& entry,
                                  const BeamConfig& cfg = {}) {
    const Tensor feature = model.encode_entry(entry);
    return beam_search(DecoderStepper(model.decoder), feature, cfg);
}

/// Render decoded tokens as words, dropping the trailing STOP.
std::string tokens_to_text(const Vocabulary& vocab, const std::vector<TokenId>& tokens);

}  // namespace capforge
