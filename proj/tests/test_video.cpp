#include <doctest.h>

#include "capforge/errors.hpp"
#include "capforge/video.hpp"

using namespace capforge;

namespace {

// Scripted two-caption world: frames are scalar features, < 0.5 means "A".
// Matching caption scores -1, mismatched -10, so the log-prob gap is 9.
struct ToyCaptioner {
    DecodeResult decode(const Tensor& f) const {
        const bool is_a = f.values[0] < 0.5f;
        return {{is_a ? 5 : 6, Vocabulary::kStop}, -1.0};
    }
    double score(const Tensor& f, const std::vector<TokenId>& caption) const {
        const bool is_a = f.values[0] < 0.5f;
        const bool cap_a = caption.at(1) == 5;
        return is_a == cap_a ? -1.0 : -10.0;
    }
};

std::vector<Tensor> ab_stream() {
    std::vector<Tensor> frames;
    for (float v : {0.0f, 0.0f, 0.0f, 1.0f, 1.0f}) frames.push_back(Tensor::scalar(v));
    return frames;
}

}  // namespace

TEST_CASE("stabilize mode names round trip") {
    for (StabilizeMode m :
         {StabilizeMode::kRaw, StabilizeMode::kHysteresis, StabilizeMode::kHysteresisEma}) {
        CHECK(stabilize_mode_from_name(stabilize_mode_name(m)) == m);
    }
    CHECK_THROWS_AS(stabilize_mode_from_name("kalman"), ConfigError);
}

TEST_CASE("feature_ema arithmetic") {
    StreamState fresh;
    Tensor f = Tensor({1}, {1.0f});
    // first frame adopts the feature wholesale
    CHECK(feature_ema(fresh, f, 0.3f).values[0] == 1.0f);

    StreamState state;
    state.frame_index = 1;
    state.smoothed = Tensor({1}, {0.0f});
    CHECK(feature_ema(state, f, 0.5f).values[0] == doctest::Approx(0.5f));
    CHECK(feature_ema(state, f, 1.0f).values[0] == 1.0f);   // no smoothing
    CHECK(feature_ema(state, f, 0.0f).values[0] == 0.0f);   // frozen at frame 0
    CHECK_THROWS_AS(feature_ema(state, Tensor::zeros({2}), 0.5f), DimensionError);
    CHECK_THROWS_AS(feature_ema(state, f, 1.5f), ConfigError);
}

TEST_CASE("stabilizer config validation") {
    StabilizerConfig bad;
    bad.margin = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.margin = 0.0;
    bad.alpha = 2.0f;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("identical frames are a fixed point in hysteresis mode") {
    ToyCaptioner m;
    std::vector<Tensor> frames(6, Tensor::scalar(0.0f));
    StabilizerConfig cfg;
    cfg.mode = StabilizeMode::kHysteresis;
    StreamResult r = caption_stream(frames, m, cfg);
    CHECK(r.switch_count == 0);
    for (const FrameCaption& f : r.frames) CHECK(f.caption == r.frames[0].caption);
}

TEST_CASE("single frame stream has one caption and no switches") {
    ToyCaptioner m;
    StabilizerConfig cfg;
    StreamResult r = caption_stream({Tensor::scalar(0.0f)}, m, cfg);
    CHECK(r.frames.size() == 1);
    CHECK(r.switch_count == 0);
    CHECK_FALSE(r.frames[0].switched);
    CHECK_THROWS_AS(caption_stream({}, m, cfg), IntegrityError);
}

TEST_CASE("A/B stream switch counts: raw >= tuned hysteresis = 1 >= infinite margin = 0") {
    ToyCaptioner m;
    const auto frames = ab_stream();

    StabilizerConfig raw;
    raw.mode = StabilizeMode::kRaw;
    StreamResult r_raw = caption_stream(frames, m, raw);

    StabilizerConfig tuned;
    tuned.mode = StabilizeMode::kHysteresis;
    tuned.margin = 1.0;  // well inside the (0, 9) gap
    StreamResult r_tuned = caption_stream(frames, m, tuned);

    StabilizerConfig huge;
    huge.mode = StabilizeMode::kHysteresis;
    huge.margin = 1e9;
    StreamResult r_huge = caption_stream(frames, m, huge);

    CHECK(r_raw.switch_count >= r_tuned.switch_count);
    CHECK(r_tuned.switch_count == 1);
    CHECK(r_huge.switch_count == 0);
    // The tuned stabilizer switches exactly on the first B frame.
    CHECK(r_tuned.frames[3].switched);
    CHECK(r_tuned.frames[3].caption == std::vector<TokenId>{6, Vocabulary::kStop});
    // The infinite margin keeps caption A to the end.
    CHECK(r_huge.frames[4].caption == std::vector<TokenId>{5, Vocabulary::kStop});
}

TEST_CASE("switch count is monotone non-increasing in the margin") {
    ToyCaptioner m;
    const auto frames = ab_stream();
    long prev = 1000;
    for (double margin : {0.0, 0.5, 2.0, 8.0, 9.5, 100.0}) {
        StabilizerConfig cfg;
        cfg.mode = StabilizeMode::kHysteresis;
        cfg.margin = margin;
        StreamResult r = caption_stream(frames, m, cfg);
        CHECK(r.switch_count <= prev);
        prev = r.switch_count;
    }
}

TEST_CASE("hysteresis never switches when the advantage is within the margin") {
    ToyCaptioner m;
    const auto frames = ab_stream();
    StabilizerConfig cfg;
    cfg.mode = StabilizeMode::kHysteresis;
    cfg.margin = 9.5;  // above the constructed gap of 9
    StreamResult r = caption_stream(frames, m, cfg);
    CHECK(r.switch_count == 0);
}

TEST_CASE("feature EMA delays the crossing") {
    ToyCaptioner m;
    const auto frames = ab_stream();
    StabilizerConfig ema;
    ema.mode = StabilizeMode::kHysteresisEma;
    ema.alpha = 0.3f;
    ema.margin = 1.0;
    StreamResult r = caption_stream(frames, m, ema);
    // smoothed feature after frame 3 is 0.3, after frame 4 is 0.51: the
    // candidate only flips on the final frame.
    CHECK(r.switch_count == 1);
    CHECK(r.frames[4].switched);
    CHECK_FALSE(r.frames[3].switched);
}

TEST_CASE("raw mode with a plain stream reproduces per-frame captioning") {
    ToyCaptioner m;
    const auto frames = ab_stream();
    StabilizerConfig raw;
    raw.mode = StabilizeMode::kRaw;
    StreamResult r = caption_stream(frames, m, raw);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        CHECK(r.frames[i].caption == m.decode(frames[i]).tokens);
    }
}

TEST_CASE("render_stream emits tab-separated lines") {
    Vocabulary v = Vocabulary::build({"cat dog"});
    StreamResult r;
    r.frames.push_back({0, {v.encode("cat"), Vocabulary::kStop}, false});
    r.frames.push_back({1, {v.encode("dog"), Vocabulary::kStop}, true});
    CHECK(render_stream(r, v) == "0\tcat\t0\n1\tdog\t1\n");
}
