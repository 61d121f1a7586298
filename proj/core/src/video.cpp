#include "capforge/video.hpp"

#include <sstream>

namespace capforge {

std::string stabilize_mode_name(StabilizeMode m) {
    switch (m) {
        case StabilizeMode::kRaw: return "raw";
        case StabilizeMode::kHysteresis: return "hysteresis";
        case StabilizeMode::kHysteresisEma: return "hysteresis+ema";
    }
    throw ConfigError("unknown stabilize mode");
}

StabilizeMode stabilize_mode_from_name(const std::string& name) {
    if (name == "raw") return StabilizeMode::kRaw;
    if (name == "hysteresis") return StabilizeMode::kHysteresis;
    if (name == "hysteresis+ema") return StabilizeMode::kHysteresisEma;
    throw ConfigError("unknown stabilize mode '" + name + "'");
}

Tensor feature_ema(const StreamState& state, const Tensor& new_feature, float alpha) {
    if (alpha < 0.0f || alpha > 1.0f) throw ConfigError("alpha must be in [0,1]");
    if (state.frame_index == 0 || state.smoothed.numel() == 0) return new_feature;
    if (state.smoothed.shape != new_feature.shape) {
        throw DimensionError("feature_ema: smoothed " + state.smoothed.shape_str() +
                             " vs frame " + new_feature.shape_str());
    }
    Tensor out = state.smoothed;
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out.values[i] = (1.0f - alpha) * state.smoothed.values[i] + alpha * new_feature.values[i];
    }
    return out;
}

std::string render_stream(const StreamResult& result, const Vocabulary& vocab) {
    std::ostringstream os;
    for (const FrameCaption& f : result.frames) {
        os << f.frame_index << '\t' << tokens_to_text(vocab, f.caption) << '\t'
           << (f.switched ? 1 : 0) << '\n';
    }
    return os.str();
}

}  // namespace capforge
