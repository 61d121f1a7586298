#include "capforge/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "capforge/checkpoint.hpp"
#include "capforge/errors.hpp"

namespace capforge {

void TrainConfig::validate() const {
    if (lr0 <= 0.0f) throw ConfigError("lr0 must be positive");
    if (decay_factor <= 0.0f || decay_factor > 1.0f) throw ConfigError("decay_factor must be in (0,1]");
    if (decay_every < 1) throw ConfigError("decay_every must be >= 1");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (clip <= 0.0f) throw ConfigError("clip must be positive");
    if (max_seq_len < 1) throw ConfigError("max_seq_len must be >= 1");
    if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("dropout must be in [0,1)");
    if (beam < 1) throw ConfigError("beam must be >= 1");
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
}

float lr_at(const TrainConfig& cfg, long iteration) {
    if (iteration < 0) throw ConfigError("iteration must be >= 0");
    const long steps = iteration / cfg.decay_every;
    return cfg.lr0 * static_cast<float>(std::pow(static_cast<double>(cfg.decay_factor),
                                                 static_cast<double>(steps)));
}

void clip_gradients(std::vector<float>& grad, float clip) {
    if (clip <= 0.0f) throw ConfigError("clip must be positive");
    for (float& g : grad) {
        if (g > clip) g = clip;
        else if (g < -clip) g = -clip;
    }
}

void adam_step(const std::vector<std::pair<std::string, Tensor*>>& params, AdamState& state,
               float lr, const TrainConfig& cfg) {
    ++state.t;
    const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (const auto& [name, t] : params) {
        t->ensure_grad();
        AdamState::Slot& slot = state.slots[name];
        if (slot.m.size() != t->numel()) {
            slot.m.assign(t->numel(), 0.0f);
            slot.v.assign(t->numel(), 0.0f);
        }
        for (std::size_t i = 0; i < t->numel(); ++i) {
            const double g = t->grad[i];
            if (!std::isfinite(g)) {
                throw NumericError("non-finite gradient in tensor '" + name + "'");
            }
            const double m = b1 * slot.m[i] + (1.0 - b1) * g;
            const double v = b2 * slot.v[i] + (1.0 - b2) * g * g;
            slot.m[i] = static_cast<float>(m);
            slot.v[i] = static_cast<float>(v);
            const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.adam_eps);
            t->values[i] = static_cast<float>(t->values[i] - update);
        }
    }
}

void write_loss_log(const std::vector<LossRecord>& history, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw FileError("cannot open loss log " + path + " for writing");
    for (const LossRecord& r : history) {
        f << r.iteration << "," << r.loss << "," << r.lr << "\n";
    }
}

std::vector<LossRecord> read_loss_log(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FileError("cannot open loss log " + path);
    std::vector<LossRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        LossRecord r;
        char c1 = 0, c2 = 0;
        std::istringstream is(line);
        if (!(is >> r.iteration >> c1 >> r.loss >> c2 >> r.lr) || c1 != ',' || c2 != ',') {
            throw ParseError("loss log " + path + ": bad line " + std::to_string(lineno));
        }
        out.push_back(r);
    }
    return out;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    Rng r(seed ^ (salt * 0x9e3779b97f4a7c15ULL));
    return r.next_u64();
}

}  // namespace

TrainResult train(CaptionModel& model, const DatasetSplit& split, const TrainConfig& cfg,
                  const std::string& checkpoint_path, std::vector<LossRecord> prior_history,
                  long start_iteration) {
    cfg.validate();
    if (split.captions.empty() || split.images.empty()) {
        throw IntegrityError("training split is empty");
    }
    if (model.decoder.vocab_size != model.vocab.size()) {
        throw IntegrityError("model vocabulary size does not match decoder");
    }
    model.decoder.cfg.dropout = cfg.dropout;

    DatasetSplit local;
    const DatasetSplit* data = &split;
    bool encoded = true;
    for (const CaptionRecord& c : split.captions) {
        if (c.tokens.empty()) encoded = false;
    }
    if (!encoded) {
        local = split;
        encode_split(local, model.vocab, cfg.max_seq_len);
        local.rebuild_index();
        data = &local;
    }

    const std::vector<TrainPair> pairs = all_pairs(*data);
    const bool passthrough = model.cfg.encoder.kind == EncoderKind::kPassthrough;
    const bool frozen_conv = !passthrough && model.cfg.encoder.finetune_top_only;

    // Frozen conv features never change during training: compute once.
    std::vector<Tensor> cached_flat(data->images.size());
    for (std::size_t i = 0; i < data->images.size(); ++i) {
        const ImageEntry& img = data->images[i];
        if (passthrough) {
            if (!img.has_feature()) {
                throw ConfigError("passthrough encoder needs features, image " +
                                  std::to_string(img.id) + " has none");
            }
        } else {
            if (!img.has_pixels()) {
                throw ConfigError("conv encoder needs pixels, image " + std::to_string(img.id) +
                                  " has none");
            }
            if (frozen_conv) cached_flat[i] = conv_features(model.encoder, img.pixels);
        }
    }

    auto trainable = model.trainable_tensors();
    AdamState adam;
    TrainResult result;
    result.history = std::move(prior_history);

    std::vector<Batch> batches;
    std::size_t next_batch = 0;
    long epoch = 0;

    for (long iter = start_iteration; iter < cfg.max_iters; ++iter) {
        if (next_batch >= batches.size()) {
            batches = make_batches(pairs, cfg.batch, mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch) + 1));
            next_batch = 0;
            ++epoch;
        }
        const Batch& batch = batches[next_batch++];

        Rng drop_rng(mix_seed(cfg.seed, 0x5eedu + static_cast<std::uint64_t>(iter)));
        for (auto& [name, t] : trainable) t->zero_grad();

        Graph g;
        std::unordered_map<int, NodeId> feature_nodes;
        NodeId total = g.input(Tensor::scalar(0.0f));
        long targets = 0;
        for (const TrainPair& p : batch.pairs) {
            auto it = feature_nodes.find(p.image_index);
            NodeId feat;
            if (it != feature_nodes.end()) {
                feat = it->second;  // feature expansion: one encode per image
            } else {
                const ImageEntry& img = data->images[static_cast<std::size_t>(p.image_index)];
                if (passthrough) {
                    feat = g.ref_input(img.feature);
                } else if (frozen_conv) {
                    feat = project_on_graph(
                        g, model.encoder,
                        g.ref_input(cached_flat[static_cast<std::size_t>(p.image_index)]), true);
                } else {
                    feat = encode_on_graph(g, model.encoder, img.pixels, true);
                }
                feature_nodes.emplace(p.image_index, feat);
            }
            auto dists = decoder_forward(g, model.decoder, feat, p.caption->tokens,
                                         cfg.dropout > 0.0f, &drop_rng, true);
            total = g.add(total, sequence_nll(g, dists, p.caption->tokens));
            targets += static_cast<long>(p.caption->tokens.size()) - 1;
        }

        const float loss_sum = g.value(total).values[0];
        if (!std::isfinite(loss_sum)) {
            throw NumericError("non-finite training loss at iteration " + std::to_string(iter) +
                               "; last checkpoint preserved");
        }
        g.backward(total);
        for (auto& [name, t] : trainable) {
            t->ensure_grad();
            clip_gradients(t->grad, cfg.clip);
        }
        const float lr = lr_at(cfg, iter);
        adam_step(trainable, adam, lr, cfg);

        const float mean_loss = loss_sum / static_cast<float>(targets);
        result.history.push_back({iter, mean_loss, lr});
        ++result.iterations_run;

        if (!checkpoint_path.empty() && (iter + 1) % cfg.checkpoint_every == 0) {
            save_checkpoint(model, cfg, iter + 1, result.history, checkpoint_path);
        }
        if (cfg.target_mean_loss > 0.0f && mean_loss < cfg.target_mean_loss) break;
    }

    if (!checkpoint_path.empty()) {
        const long end_iter = result.history.empty() ? start_iteration
                                                     : result.history.back().iteration + 1;
        save_checkpoint(model, cfg, end_iter, result.history, checkpoint_path);
    }
    return result;
}

CaptionModel transfer_train(const std::string& checkpoint_path, const DatasetSplit& new_split,
                            const TrainConfig& cfg, const std::string& out_checkpoint,
                            TrainResult* result) {
    CheckpointData ckpt = load_checkpoint(checkpoint_path);
    CaptionModel model = std::move(ckpt.model);
    // The checkpoint's vocabulary is authoritative; corpus tokens outside it
    // fall back to UNK during encoding. Fresh optimizer, schedule restarted.
    DatasetSplit local = new_split;
    encode_split(local, model.vocab, cfg.max_seq_len);
    local.rebuild_index();
    TrainResult r = train(model, local, cfg, out_checkpoint);
    if (result) *result = std::move(r);
    return model;
}

}  // namespace capforge
