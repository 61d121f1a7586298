#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "capforge/errors.hpp"
#include "capforge/trainer.hpp"

using namespace capforge;
namespace fs = std::filesystem;

namespace {

// Tiny passthrough-encoder model and two-image corpus, enough to overfit.
struct Fixture {
    CaptionModel model;
    DatasetSplit split;
};

Fixture make_fixture(std::uint64_t seed = 7) {
    Fixture f;
    std::vector<std::string> texts = {"a red square", "a blue circle"};
    Vocabulary vocab = Vocabulary::build(texts);

    ModelConfig cfg;
    cfg.encoder = EncoderSpec::passthrough(4);
    cfg.decoder = DecoderConfig{1, 8, 4, 0.0f};
    f.model = CaptionModel::init(cfg, vocab, seed);

    Rng rng(seed + 100);
    for (int i = 0; i < 2; ++i) {
        ImageEntry e;
        e.id = i;
        e.feature = Tensor::uniform({4}, rng, -1.0f, 1.0f);
        f.split.images.push_back(std::move(e));
        CaptionRecord c;
        c.image_id = i;
        c.raw_text = texts[static_cast<std::size_t>(i)];
        c.tokens = encode_caption(c.raw_text, vocab);
        f.split.captions.push_back(std::move(c));
    }
    f.split.rebuild_index();
    return f;
}

TrainConfig tiny_config(long iters) {
    TrainConfig cfg;
    cfg.lr0 = 0.01f;
    cfg.batch = 2;
    cfg.dropout = 0.0f;
    cfg.max_iters = iters;
    cfg.checkpoint_every = 1000;
    cfg.seed = 5;
    return cfg;
}

}  // namespace

TEST_CASE("lr schedule steps down by the decay factor") {
    TrainConfig cfg;
    CHECK(lr_at(cfg, 0) == doctest::Approx(4e-4));
    CHECK(lr_at(cfg, 49999) == doctest::Approx(4e-4));
    CHECK(lr_at(cfg, 50000) == doctest::Approx(2e-4));
    CHECK(lr_at(cfg, 100000) == doctest::Approx(1e-4));
    cfg.decay_every = 10;
    cfg.decay_factor = 0.1f;
    CHECK(lr_at(cfg, 25) == doctest::Approx(4e-6));
    CHECK_THROWS_AS(lr_at(cfg, -1), ConfigError);
}

TEST_CASE("gradient clipping clamps elementwise") {
    std::vector<float> g = {-5.0f, -0.05f, 0.0f, 0.05f, 5.0f};
    clip_gradients(g, 0.1f);
    CHECK(g == std::vector<float>{-0.1f, -0.05f, 0.0f, 0.05f, 0.1f});
    CHECK_THROWS_AS(clip_gradients(g, 0.0f), ConfigError);
}

TEST_CASE("adam first step moves by about lr in the gradient direction") {
    TrainConfig cfg;
    Tensor w = Tensor::zeros({2});
    w.ensure_grad();
    w.grad = {0.5f, -2.0f};
    AdamState state;
    adam_step({{"w", &w}}, state, 0.1f, cfg);
    // bias-corrected t=1: update = lr * g / (|g| + eps) = lr * sign(g)
    CHECK(w.values[0] == doctest::Approx(-0.1).epsilon(1e-4));
    CHECK(w.values[1] == doctest::Approx(0.1).epsilon(1e-4));
    CHECK(state.t == 1);
}

TEST_CASE("adam with zero gradient from fresh state leaves weights alone") {
    TrainConfig cfg;
    Tensor w = Tensor({2}, {1.0f, -1.0f});
    w.zero_grad();
    AdamState state;
    adam_step({{"w", &w}}, state, 0.1f, cfg);
    CHECK(w.values[0] == 1.0f);
    CHECK(w.values[1] == -1.0f);
}

TEST_CASE("adam aborts on non-finite gradients naming the tensor") {
    TrainConfig cfg;
    Tensor w = Tensor::zeros({1});
    w.ensure_grad();
    w.grad[0] = std::nanf("");
    AdamState state;
    try {
        adam_step({{"dec.head.w", &w}}, state, 0.1f, cfg);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("dec.head.w") != std::string::npos);
    }
}

TEST_CASE("loss log round trips and rejects junk") {
    const fs::path dir = fs::temp_directory_path() / "capforge_losslog";
    fs::create_directories(dir);
    const std::string path = (dir / "loss.csv").string();
    std::vector<LossRecord> hist = {{0, 3.5f, 4e-4f}, {1, 2.25f, 4e-4f}, {2, 1.125f, 2e-4f}};
    write_loss_log(hist, path);
    auto back = read_loss_log(path);
    REQUIRE(back.size() == 3);
    CHECK(back[2].iteration == 2);
    CHECK(back[2].loss == doctest::Approx(1.125f));
    CHECK(back[2].lr == doctest::Approx(2e-4f));

    {
        std::ofstream f(path);
        f << "garbage line\n";
    }
    CHECK_THROWS_AS(read_loss_log(path), ParseError);
    CHECK_THROWS_AS(read_loss_log((dir / "missing.csv").string()), FileError);
    fs::remove_all(dir);
}

TEST_CASE("training reduces the loss on a tiny corpus") {
    Fixture f = make_fixture();
    TrainResult r = train(f.model, f.split, tiny_config(150));
    REQUIRE(r.history.size() == 150);
    const float first = r.history.front().loss;
    const float last = r.history.back().loss;
    CHECK(last < first * 0.5f);
    CHECK(std::isfinite(last));
}

TEST_CASE("training is bit-deterministic per seed") {
    Fixture a = make_fixture();
    Fixture b = make_fixture();
    TrainResult ra = train(a.model, a.split, tiny_config(40));
    TrainResult rb = train(b.model, b.split, tiny_config(40));
    for (std::size_t i = 0; i < ra.history.size(); ++i) {
        CHECK(ra.history[i].loss == rb.history[i].loss);
    }
    auto ta = a.model.named_tensors();
    auto tb = b.model.named_tensors();
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
        CHECK(ta[i].second->values == tb[i].second->values);
    }

    // Seed sensitivity needs a stochastic path: with the whole corpus in one
    // batch and dropout off, reordering two pairs commutes bitwise. Turn
    // dropout on and vary only the seed.
    Fixture c = make_fixture();
    Fixture d = make_fixture();
    TrainConfig noisy = tiny_config(40);
    noisy.dropout = 0.25f;
    TrainConfig other = noisy;
    other.seed = 6;
    train(c.model, c.split, noisy);
    train(d.model, d.split, other);
    bool any_diff = false;
    auto tc = c.model.named_tensors();
    auto td = d.model.named_tensors();
    for (std::size_t i = 0; i < tc.size(); ++i) {
        if (tc[i].second->values != td[i].second->values) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("target_mean_loss stops training early") {
    Fixture f = make_fixture();
    TrainConfig cfg = tiny_config(500);
    cfg.target_mean_loss = 1.0f;
    TrainResult r = train(f.model, f.split, cfg);
    CHECK(r.iterations_run < 500);
    CHECK(r.history.back().loss < 1.0f);
}

TEST_CASE("train validates config and data") {
    Fixture f = make_fixture();
    TrainConfig bad = tiny_config(10);
    bad.lr0 = -1.0f;
    CHECK_THROWS_AS(train(f.model, f.split, bad), ConfigError);
    DatasetSplit empty;
    CHECK_THROWS_AS(train(f.model, empty, tiny_config(10)), IntegrityError);
}
