#include "capforge/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "capforge/errors.hpp"

namespace capforge {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'C', 'F', 'C', 'K', 'P', 'T', '0', '1'};
constexpr int kFormatVersion = 1;

json encoder_spec_json(const EncoderSpec& s) {
    return {{"kind", encoder_kind_name(s.kind)},
            {"image_size", s.image_size},
            {"in_channels", s.in_channels},
            {"channels", s.channels},
            {"embed_dim", s.embed_dim},
            {"finetune_top_only", s.finetune_top_only}};
}

EncoderSpec encoder_spec_from_json(const json& j) {
    EncoderSpec s;
    s.kind = encoder_kind_from_name(j.at("kind").get<std::string>());
    s.image_size = j.at("image_size").get<int>();
    s.in_channels = j.at("in_channels").get<int>();
    s.channels = j.at("channels").get<std::vector<int>>();
    s.embed_dim = j.at("embed_dim").get<int>();
    s.finetune_top_only = j.at("finetune_top_only").get<bool>();
    return s;
}

json train_cfg_json(const TrainConfig& c) {
    return {{"lr0", c.lr0},
            {"decay_factor", c.decay_factor},
            {"decay_every", c.decay_every},
            {"batch", c.batch},
            {"clip", c.clip},
            {"max_seq_len", c.max_seq_len},
            {"dropout", c.dropout},
            {"beam", c.beam},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_eps", c.adam_eps},
            {"max_iters", c.max_iters},
            {"seed", c.seed},
            {"checkpoint_every", c.checkpoint_every},
            {"target_mean_loss", c.target_mean_loss}};
}

TrainConfig train_cfg_from_json(const json& j) {
    TrainConfig c;
    c.lr0 = j.at("lr0").get<float>();
    c.decay_factor = j.at("decay_factor").get<float>();
    c.decay_every = j.at("decay_every").get<long>();
    c.batch = j.at("batch").get<int>();
    c.clip = j.at("clip").get<float>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.dropout = j.at("dropout").get<float>();
    c.beam = j.at("beam").get<int>();
    c.adam_beta1 = j.at("adam_beta1").get<float>();
    c.adam_beta2 = j.at("adam_beta2").get<float>();
    c.adam_eps = j.at("adam_eps").get<float>();
    c.max_iters = j.at("max_iters").get<long>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.checkpoint_every = j.at("checkpoint_every").get<long>();
    c.target_mean_loss = j.at("target_mean_loss").get<float>();
    return c;
}

}  // namespace

void save_checkpoint(CaptionModel& model, const TrainConfig& train_cfg, long iteration,
                     const std::vector<LossRecord>& history, const std::string& path) {
    json manifest;
    manifest["version"] = kFormatVersion;
    manifest["model"] = {{"encoder", encoder_spec_json(model.cfg.encoder)},
                         {"decoder",
                          {{"n_layers", model.cfg.decoder.n_layers},
                           {"hidden", model.cfg.decoder.hidden},
                           {"embed", model.cfg.decoder.embed},
                           {"dropout", model.cfg.decoder.dropout}}}};
    manifest["train"] = train_cfg_json(train_cfg);
    manifest["vocab"] = model.vocab.tokens();
    manifest["iteration"] = iteration;
    json hist = json::array();
    for (const LossRecord& r : history) {
        hist.push_back({{"iteration", r.iteration}, {"loss", r.loss}, {"lr", r.lr}});
    }
    manifest["history"] = std::move(hist);

    auto named = model.named_tensors();
    json dir = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : named) {
        dir.push_back({{"name", name}, {"shape", t->shape}, {"offset", offset}});
        offset += t->numel() * sizeof(float);
    }
    manifest["tensors"] = std::move(dir);

    const std::string header = manifest.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FileError("cannot open checkpoint " + path + " for writing");
    f.write(kMagic, sizeof(kMagic));
    const std::uint64_t header_len = header.size();
    f.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, t] : named) {
        f.write(reinterpret_cast<const char*>(t->values.data()),
                static_cast<std::streamsize>(t->numel() * sizeof(float)));
    }
    if (!f) throw FileError("short write to checkpoint " + path);
}

CheckpointData load_checkpoint(const std::string& path, const ModelConfig* expected) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FileError("cannot open checkpoint " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
        throw ParseError("not a checkpoint file (bad magic): " + path);
    }
    std::uint64_t header_len = 0;
    f.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    if (!f || header_len == 0 || header_len > (1ull << 30)) {
        throw ParseError("bad checkpoint header length in " + path);
    }
    std::string header(header_len, '\0');
    f.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!f) throw ParseError("truncated checkpoint manifest in " + path);

    json manifest;
    try {
        manifest = json::parse(header);
    } catch (const json::parse_error& e) {
        throw ParseError("checkpoint manifest: " + std::string(e.what()));
    }

    CheckpointData out;
    try {
        const int version = manifest.at("version").get<int>();
        if (version != kFormatVersion) {
            throw ParseError("unsupported checkpoint format version " + std::to_string(version));
        }
        ModelConfig cfg;
        cfg.encoder = encoder_spec_from_json(manifest.at("model").at("encoder"));
        const json& jd = manifest.at("model").at("decoder");
        cfg.decoder.n_layers = jd.at("n_layers").get<int>();
        cfg.decoder.hidden = jd.at("hidden").get<int>();
        cfg.decoder.embed = jd.at("embed").get<int>();
        cfg.decoder.dropout = jd.at("dropout").get<float>();
        Vocabulary vocab = Vocabulary::from_tokens(manifest.at("vocab").get<std::vector<std::string>>());
        out.model = CaptionModel::init(cfg, std::move(vocab), /*seed=*/0);
        out.train_cfg = train_cfg_from_json(manifest.at("train"));
        out.iteration = manifest.at("iteration").get<long>();
        for (const json& jr : manifest.at("history")) {
            out.history.push_back({jr.at("iteration").get<long>(), jr.at("loss").get<float>(),
                                   jr.at("lr").get<float>()});
        }

        // The tensor directory must match the config-implied skeleton exactly.
        auto named = out.model.named_tensors();
        const json& dir = manifest.at("tensors");
        std::string problems;
        if (dir.size() != named.size()) {
            problems += "tensor count " + std::to_string(dir.size()) + " != expected " +
                        std::to_string(named.size()) + "; ";
        }
        std::size_t matched = std::min<std::size_t>(dir.size(), named.size());
        for (std::size_t i = 0; i < matched; ++i) {
            const std::string name = dir[i].at("name").get<std::string>();
            const auto shape = dir[i].at("shape").get<std::vector<int>>();
            if (name != named[i].first) {
                problems += "tensor " + std::to_string(i) + ": name '" + name + "' != expected '" +
                            named[i].first + "'; ";
            } else if (shape != named[i].second->shape) {
                problems += "tensor '" + name + "': shape " + shape_str(shape) + " != expected " +
                            named[i].second->shape_str() + "; ";
            }
        }
        if (!problems.empty()) {
            throw ParseError("checkpoint " + path + " does not match its config: " + problems);
        }
        if (expected) {
            // Compare against the caller's skeleton tensor-by-tensor so the
            // error names what differs (e.g. extra LSTM layers).
            CaptionModel probe = CaptionModel::init(*expected, out.model.vocab, /*seed=*/0);
            auto want = probe.named_tensors();
            std::string diff;
            for (const auto& [name, t] : want) {
                bool found = false;
                for (const auto& [n2, t2] : named) {
                    if (n2 == name) {
                        found = true;
                        if (t2->shape != t->shape) {
                            diff += "tensor '" + name + "': shape " + t2->shape_str() +
                                    " != expected " + t->shape_str() + "; ";
                        }
                        break;
                    }
                }
                if (!found) diff += "missing tensor '" + name + "'; ";
            }
            for (const auto& [name, t] : named) {
                bool found = false;
                for (const auto& [n2, t2] : want) {
                    if (n2 == name) { found = true; break; }
                }
                if (!found) diff += "unexpected tensor '" + name + "'; ";
            }
            if (!diff.empty()) {
                throw ParseError("checkpoint " + path +
                                 " is incompatible with the requested model: " + diff);
            }
        }
        for (std::size_t i = 0; i < named.size(); ++i) {
            Tensor* t = named[i].second;
            f.read(reinterpret_cast<char*>(t->values.data()),
                   static_cast<std::streamsize>(t->numel() * sizeof(float)));
            if (!f) {
                throw ParseError("checkpoint " + path + " truncated at tensor '" +
                                 named[i].first + "'");
            }
        }
    } catch (const json::exception& e) {
        throw ParseError("checkpoint manifest: " + std::string(e.what()));
    }
    return out;
}

}  // namespace capforge
