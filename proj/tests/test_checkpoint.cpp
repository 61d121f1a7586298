#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "capforge/checkpoint.hpp"
#include "capforge/errors.hpp"
#include "capforge/trainer.hpp"

using namespace capforge;
namespace fs = std::filesystem;

namespace {

CaptionModel make_model(int n_layers, std::uint64_t seed = 3) {
    Vocabulary vocab = Vocabulary::build({"a red square", "a blue circle above"});
    ModelConfig cfg;
    cfg.encoder = EncoderSpec::passthrough(4);
    cfg.decoder = DecoderConfig{n_layers, 6, 4, 0.5f};
    return CaptionModel::init(cfg, vocab, seed);
}

fs::path workdir() {
    const fs::path dir = fs::temp_directory_path() / "capforge_ckpt_test";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
    const fs::path dir = workdir();
    const std::string path = (dir / "model.ckpt").string();
    CaptionModel m = make_model(2);
    TrainConfig tc;
    tc.seed = 42;
    std::vector<LossRecord> hist = {{0, 2.0f, 4e-4f}, {1, 1.5f, 4e-4f}};
    save_checkpoint(m, tc, 2, hist, path);

    CheckpointData back = load_checkpoint(path);
    CHECK(back.iteration == 2);
    REQUIRE(back.history.size() == 2);
    CHECK(back.history[1].loss == 1.5f);
    CHECK(back.train_cfg.seed == 42);
    CHECK(back.model.vocab.size() == m.vocab.size());
    for (TokenId id = 0; id < m.vocab.size(); ++id) {
        CHECK(back.model.vocab.decode(id) == m.vocab.decode(id));
    }

    auto orig = m.named_tensors();
    auto loaded = back.model.named_tensors();
    REQUIRE(orig.size() == loaded.size());
    for (std::size_t i = 0; i < orig.size(); ++i) {
        CHECK(orig[i].first == loaded[i].first);
        CHECK(orig[i].second->shape == loaded[i].second->shape);
        CHECK(orig[i].second->values == loaded[i].second->values);  // bitwise
    }
    fs::remove_all(dir);
}

TEST_CASE("saving twice yields byte-identical files") {
    const fs::path dir = workdir();
    const std::string p1 = (dir / "a.ckpt").string();
    const std::string p2 = (dir / "b.ckpt").string();
    CaptionModel m = make_model(1);
    TrainConfig tc;
    save_checkpoint(m, tc, 5, {}, p1);
    save_checkpoint(m, tc, 5, {}, p2);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK(!s1.empty());
    fs::remove_all(dir);
}

TEST_CASE("loading into an incompatible config names the differing tensors") {
    const fs::path dir = workdir();
    const std::string path = (dir / "two_layer.ckpt").string();
    CaptionModel m = make_model(2);
    TrainConfig tc;
    save_checkpoint(m, tc, 0, {}, path);

    CaptionModel one = make_model(1);
    try {
        load_checkpoint(path, &one.cfg);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("l1") != std::string::npos);  // the extra layer's tensors
        CHECK(msg.find("incompatible") != std::string::npos);
    }
    // The matching config loads fine.
    CaptionModel two = make_model(2, /*seed=*/99);
    CheckpointData ok = load_checkpoint(path, &two.cfg);
    CHECK(ok.model.decoder.cfg.n_layers == 2);
    fs::remove_all(dir);
}

TEST_CASE("corrupt checkpoints are rejected with context") {
    const fs::path dir = workdir();
    const std::string good = (dir / "good.ckpt").string();
    CaptionModel m = make_model(1);
    TrainConfig tc;
    save_checkpoint(m, tc, 0, {}, good);

    SUBCASE("bad magic") {
        const std::string bad = (dir / "bad_magic.ckpt").string();
        std::ofstream f(bad, std::ios::binary);
        f << "NOTACKPTxxxxxxxxxxxxxxxx";
        f.close();
        CHECK_THROWS_AS(load_checkpoint(bad), ParseError);
    }
    SUBCASE("truncated tensor data") {
        std::ifstream in(good, std::ios::binary);
        std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        const std::string cut = (dir / "cut.ckpt").string();
        std::ofstream out(cut, std::ios::binary);
        out.write(all.data(), static_cast<std::streamsize>(all.size() - 64));
        out.close();
        CHECK_THROWS_AS(load_checkpoint(cut), ParseError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_checkpoint((dir / "nope.ckpt").string()), FileError); }
    fs::remove_all(dir);
}

TEST_CASE("transfer_train restarts the schedule on a new corpus") {
    const fs::path dir = workdir();
    const std::string path = (dir / "pretrained.ckpt").string();

    CaptionModel m = make_model(1);
    DatasetSplit corpus_a;
    Rng rng(11);
    for (int i = 0; i < 2; ++i) {
        ImageEntry e;
        e.id = i;
        e.feature = Tensor::uniform({4}, rng, -1.0f, 1.0f);
        corpus_a.images.push_back(std::move(e));
        CaptionRecord c;
        c.image_id = i;
        c.raw_text = i == 0 ? "a red square" : "a blue circle";
        c.tokens = encode_caption(c.raw_text, m.vocab);
        corpus_a.captions.push_back(std::move(c));
    }
    corpus_a.rebuild_index();

    TrainConfig cfg;
    cfg.lr0 = 0.01f;
    cfg.batch = 2;
    cfg.dropout = 0.0f;
    cfg.max_iters = 30;
    cfg.checkpoint_every = 100;
    train(m, corpus_a, cfg, path);
    REQUIRE(fs::exists(path));

    // New corpus with an unseen word: it must encode as UNK, not extend the vocab.
    DatasetSplit corpus_b = corpus_a;
    corpus_b.captions[0].raw_text = "a green pentagon";
    for (auto& c : corpus_b.captions) c.tokens.clear();

    TrainResult result;
    CaptionModel transferred = transfer_train(path, corpus_b, cfg, "", &result);
    CHECK(result.iterations_run == 30);
    CHECK(result.history.front().iteration == 0);  // schedule restarted
    CHECK(transferred.vocab.size() == m.vocab.size());
    CHECK_FALSE(transferred.vocab.contains("pentagon"));
    fs::remove_all(dir);
}
