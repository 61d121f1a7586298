#include <doctest.h>

#include <cmath>
#include <functional>

#include "capforge/infer.hpp"
#include "capforge/rng.hpp"

using namespace capforge;

namespace {

// Table-driven toy model: the next-token distribution is a pure function of
// the prefix (START included), so exhaustive enumeration is tractable.
struct ToyModel {
    struct State {
        std::vector<TokenId> prefix;
    };
    struct StepResult {
        std::vector<float> log_probs;
        State state;
    };

    int v = 3;
    std::function<std::vector<float>(const std::vector<TokenId>&)> logp;

    int vocab_size() const { return v; }
    State start(const Tensor&) const { return {}; }
    StepResult step(const State& s, TokenId t) const {
        State ns = s;
        ns.prefix.push_back(t);
        return {logp(ns.prefix), ns};
    }
};

std::vector<float> hashed_log_probs(const std::vector<TokenId>& prefix, int v,
                                    std::uint64_t salt) {
    std::uint64_t h = salt;
    for (TokenId t : prefix) h = h * 1000003ULL + static_cast<std::uint64_t>(t) + 1;
    Rng rng(h);
    std::vector<double> w(static_cast<std::size_t>(v));
    double z = 0.0;
    for (double& x : w) {
        x = 0.05 + rng.uniform();
        z += x;
    }
    std::vector<float> out;
    for (double x : w) out.push_back(static_cast<float>(std::log(x / z)));
    return out;
}

// Exhaustive search over every STOP-terminated sequence up to max_len
// interior tokens, mirroring the decoder's forced-STOP convention.
void enumerate(const ToyModel& m, const ToyModel::State& s, TokenId last,
               std::vector<TokenId>& tokens, double logprob, int max_len, DecodeResult& best,
               bool& has_best) {
    auto res = m.step(s, last);
    if (static_cast<int>(tokens.size()) >= max_len) {
        const double total = logprob + res.log_probs[Vocabulary::kStop];
        std::vector<TokenId> full = tokens;
        full.push_back(Vocabulary::kStop);
        if (!has_best || total > best.logprob ||
            (total == best.logprob && full < best.tokens)) {
            best = {full, total};
            has_best = true;
        }
        return;
    }
    for (TokenId t = 0; t < m.vocab_size(); ++t) {
        const double total = logprob + res.log_probs[static_cast<std::size_t>(t)];
        tokens.push_back(t);
        if (t == Vocabulary::kStop) {
            if (!has_best || total > best.logprob ||
                (total == best.logprob && tokens < best.tokens)) {
                best = {tokens, total};
                has_best = true;
            }
        } else {
            enumerate(m, res.state, t, tokens, total, max_len, best, has_best);
        }
        tokens.pop_back();
    }
}

DecodeResult exhaustive_best(const ToyModel& m, int max_len) {
    DecodeResult best;
    bool has_best = false;
    std::vector<TokenId> tokens;
    enumerate(m, m.start(Tensor::scalar(0.0f)), Vocabulary::kStart, tokens, 0.0, max_len, best,
              has_best);
    REQUIRE(has_best);
    return best;
}

}  // namespace

TEST_CASE("beam with full width matches exhaustive enumeration") {
    const Tensor feat = Tensor::scalar(0.0f);
    for (std::uint64_t salt : {1ULL, 2ULL, 3ULL, 99ULL, 12345ULL}) {
        ToyModel m;
        m.logp = [&](const std::vector<TokenId>& p) { return hashed_log_probs(p, 3, salt); };
        const DecodeResult oracle = exhaustive_best(m, 3);

        BeamConfig cfg;
        cfg.k = 27;  // V^max_len dominates every reachable frontier
        cfg.max_len = 3;
        const DecodeResult got = beam_search(m, feat, cfg);
        CHECK(got.tokens == oracle.tokens);
        CHECK(got.logprob == doctest::Approx(oracle.logprob).epsilon(1e-6));
    }
}

TEST_CASE("beam score is non-decreasing in k") {
    const Tensor feat = Tensor::scalar(0.0f);
    ToyModel m;
    m.logp = [](const std::vector<TokenId>& p) { return hashed_log_probs(p, 3, 77); };
    double prev = -1e30;
    for (int k = 1; k <= 27; ++k) {
        BeamConfig cfg;
        cfg.k = k;
        cfg.max_len = 3;
        const DecodeResult r = beam_search(m, feat, cfg);
        CHECK(r.logprob >= prev - 1e-9);
        prev = std::max(prev, r.logprob);
    }
}

TEST_CASE("beam k=1 equals greedy decoding") {
    const Tensor feat = Tensor::scalar(0.0f);
    for (std::uint64_t salt : {5ULL, 6ULL, 7ULL, 8ULL}) {
        ToyModel m;
        m.logp = [&](const std::vector<TokenId>& p) { return hashed_log_probs(p, 4, salt); };
        m.v = 4;
        BeamConfig cfg;
        cfg.k = 1;
        cfg.max_len = 4;
        const DecodeResult b = beam_search(m, feat, cfg);
        const DecodeResult g = greedy_decode(m, feat, 4);
        CHECK(b.tokens == g.tokens);
        CHECK(b.logprob == doctest::Approx(g.logprob).epsilon(1e-6));
    }
}

TEST_CASE("decoding always terminates with stop at max_len") {
    // STOP is prohibitive before max_len (a single early -100 would still beat
    // any longer path ending in the same -100, so the penalty must lift at the
    // forced step). prefix = START + interior tokens, so size 5 means 4
    // interior tokens, which only the forced STOP can reach.
    ToyModel m;
    m.logp = [](const std::vector<TokenId>& p) {
        std::vector<float> lp = hashed_log_probs(p, 3, 11);
        lp[Vocabulary::kStop] = p.size() < 5 ? -100.0f : -0.5f;
        return lp;
    };
    BeamConfig cfg;
    cfg.k = 5;
    cfg.max_len = 4;
    const DecodeResult r = beam_search(m, Tensor::scalar(0.0f), cfg);
    CHECK(r.tokens.size() == 5);  // 4 interior + forced STOP
    CHECK(r.tokens.back() == Vocabulary::kStop);
}

TEST_CASE("beam result score equals rescoring the caption") {
    ToyModel m;
    m.logp = [](const std::vector<TokenId>& p) { return hashed_log_probs(p, 3, 21); };
    BeamConfig cfg;
    cfg.k = 8;
    cfg.max_len = 3;
    const Tensor feat = Tensor::scalar(0.0f);
    const DecodeResult r = beam_search(m, feat, cfg);
    std::vector<TokenId> full = {Vocabulary::kStart};
    full.insert(full.end(), r.tokens.begin(), r.tokens.end());
    CHECK(caption_log_prob(m, feat, full) == doctest::Approx(r.logprob).epsilon(1e-6));
    CHECK_THROWS_AS(caption_log_prob(m, feat, {Vocabulary::kStart}), IntegrityError);
    CHECK_THROWS_AS(caption_log_prob(m, feat, r.tokens), IntegrityError);
}

TEST_CASE("keep_finished_in_beam and length_normalize modes still terminate") {
    ToyModel m;
    m.logp = [](const std::vector<TokenId>& p) { return hashed_log_probs(p, 3, 31); };
    const Tensor feat = Tensor::scalar(0.0f);
    BeamConfig keep;
    keep.k = 4;
    keep.max_len = 3;
    keep.keep_finished_in_beam = true;
    const DecodeResult rk = beam_search(m, feat, keep);
    CHECK(rk.tokens.back() == Vocabulary::kStop);

    BeamConfig norm;
    norm.k = 4;
    norm.max_len = 3;
    norm.length_normalize = true;
    const DecodeResult rn = beam_search(m, feat, norm);
    CHECK(rn.tokens.back() == Vocabulary::kStop);
    CHECK_THROWS_AS(beam_search(m, feat, BeamConfig{0, 3, false, false}), ConfigError);
}

TEST_CASE("beam on a real decoder agrees with greedy at k=1") {
    Rng rng(12);
    DecoderConfig cfg{1, 6, 4, 0.0f};
    DecoderParams p = DecoderParams::init(cfg, 6, rng);
    DecoderStepper stepper(p);
    Tensor feat = Tensor::uniform({4}, rng, -1.0f, 1.0f);
    BeamConfig bc;
    bc.k = 1;
    bc.max_len = 5;
    const DecodeResult b = beam_search(stepper, feat, bc);
    const DecodeResult g = greedy_decode(stepper, feat, 5);
    CHECK(b.tokens == g.tokens);

    BeamConfig wide;
    wide.k = 6;
    wide.max_len = 5;
    const DecodeResult w = beam_search(stepper, feat, wide);
    CHECK(w.logprob >= b.logprob - 1e-9);
}

TEST_CASE("tokens_to_text renders words and drops the stop token") {
    Vocabulary v = Vocabulary::build({"red square above"});
    std::vector<TokenId> toks = {v.encode("red"), v.encode("square"), Vocabulary::kStop};
    CHECK(tokens_to_text(v, toks) == "red square");
    CHECK(tokens_to_text(v, {Vocabulary::kStop}) == "");
}
