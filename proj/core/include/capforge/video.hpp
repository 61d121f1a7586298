#pragma once

#include <string>
#include <vector>

#include "capforge/errors.hpp"
#include "capforge/infer.hpp"

namespace capforge {

enum class StabilizeMode { kRaw, kHysteresis, kHysteresisEma };

std::string stabilize_mode_name(StabilizeMode m);
StabilizeMode stabilize_mode_from_name(const std::string& name);

struct StabilizerConfig {
    double margin = 1.0;   // nats of log-prob advantage a candidate must have
    float alpha = 0.3f;    // feature EMA weight (hysteresis+ema mode only)
    StabilizeMode mode = StabilizeMode::kHysteresis;

    void validate() const {
        if (margin < 0.0) throw ConfigError("stabilizer margin must be >= 0");
        if (alpha < 0.0f || alpha > 1.0f) throw ConfigError("stabilizer alpha must be in [0,1]");
    }
};

/// Carried across frames of one stream. `caption` is in decoded form (no
/// leading START, trailing STOP); `caption_logprob` is its score under the
/// frame it was last adopted or retained on.
struct StreamState {
    std::vector<TokenId> caption;
    double caption_logprob = 0.0;
    Tensor smoothed;       // empty until the first frame
    long frame_index = 0;  // frames consumed so far
};

/// s' = (1-alpha)*s + alpha*f; the first frame initializes s' = f. alpha = 1
/// disables smoothing, alpha = 0 freezes the feature at frame 0.
Tensor feature_ema(const StreamState& state, const Tensor& new_feature, float alpha);

/// Anything that can decode a caption for a feature and score a full
/// START...STOP caption against a feature.
template <typename M>
concept FrameCaptioner = requires(const M& m, const Tensor& f, const std::vector<TokenId>& c) {
    { m.decode(f) } -> std::convertible_to<DecodeResult>;
    { m.score(f, c) } -> std::convertible_to<double>;
};

struct StepOutcome {
    std::vector<TokenId> caption;
    bool switched = false;
};

namespace detail {

inline std::vector<TokenId> with_start(const std::vector<TokenId>& decoded) {
    std::vector<TokenId> full;
    full.reserve(decoded.size() + 1);
    full.push_back(Vocabulary::kStart);
    full.insert(full.end(), decoded.begin(), decoded.end());
    return full;
}

}  // namespace detail

/// One frame of stabilized captioning. Raw mode always adopts the fresh
/// candidate. Hysteresis modes keep the previous caption unless the
/// candidate's log-prob beats the previous caption's by more than `margin`,
/// both scored under the current (possibly smoothed) feature.
template <FrameCaptioner M>
StepOutcome stabilize_step(StreamState& state, const Tensor& frame_feature, const M& model,
                           const StabilizerConfig& cfg) {
    cfg.validate();
    const bool first = state.frame_index == 0;
    if (cfg.mode == StabilizeMode::kHysteresisEma) {
        state.smoothed = feature_ema(state, frame_feature, cfg.alpha);
    } else {
        state.smoothed = frame_feature;
    }
    const Tensor& feat = state.smoothed;

    DecodeResult cand = model.decode(feat);
    StepOutcome out;
    if (first || cfg.mode == StabilizeMode::kRaw) {
        out.switched = !first && cand.tokens != state.caption;
        out.caption = cand.tokens;
        state.caption = std::move(cand.tokens);
        state.caption_logprob = cand.logprob;
    } else {
        const double prev_score = model.score(feat, detail::with_start(state.caption));
        const double cand_score = model.score(feat, detail::with_start(cand.tokens));
        if (cand.tokens != state.caption && cand_score - prev_score > cfg.margin) {
            out.switched = true;
            state.caption = std::move(cand.tokens);
            state.caption_logprob = cand_score;
        } else {
            state.caption_logprob = prev_score;
        }
        out.caption = state.caption;
    }
    ++state.frame_index;
    return out;
}

struct FrameCaption {
    long frame_index = 0;
    std::vector<TokenId> caption;
    bool switched = false;
};

struct StreamResult {
    std::vector<FrameCaption> frames;
    long switch_count = 0;
};

/// Caption a whole feature stream, strictly in order (state carries across
/// frames). Hysteresis can only suppress changes, so its switch count never
/// exceeds raw mode's on the same stream.
template <FrameCaptioner M>
StreamResult caption_stream(const std::vector<Tensor>& features, const M& model,
                            const StabilizerConfig& cfg) {
    if (features.empty()) throw IntegrityError("frame stream is empty");
    StreamState state;
    StreamResult out;
    for (std::size_t i = 0; i < features.size(); ++i) {
        StepOutcome step = stabilize_step(state, features[i], model, cfg);
        if (step.switched) ++out.switch_count;
        out.frames.push_back({static_cast<long>(i), std::move(step.caption), step.switched});
    }
    return out;
}

/// Adapter running the full model's beam decoder over frame features.
class ModelFrameCaptioner {
public:
    ModelFrameCaptioner(const CaptionModel& model, const BeamConfig& beam = {})
        : stepper_(model.decoder), beam_(beam) {}

    DecodeResult decode(const Tensor& feature) const { return beam_search(stepper_, feature, beam_); }
    double score(const Tensor& feature, const std::vector<TokenId>& caption) const {
        return caption_log_prob(stepper_, feature, caption);
    }

private:
    DecoderStepper stepper_;
    BeamConfig beam_;
};

/// `frame_idx<TAB>caption<TAB>switched` lines, one per frame.
std::string render_stream(const StreamResult& result, const Vocabulary& vocab);

}  // namespace capforge
