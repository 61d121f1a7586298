#include "capforge/model.hpp"

#include "capforge/dataset.hpp"
#include "capforge/errors.hpp"

namespace capforge {

void ModelConfig::validate() const {
    encoder.validate();
    if (encoder.embed_dim != decoder.embed) {
        throw ConfigError("encoder output dim " + std::to_string(encoder.embed_dim) +
                          " does not match decoder embed dim " + std::to_string(decoder.embed));
    }
}

CaptionModel CaptionModel::init(const ModelConfig& cfg, Vocabulary vocab, std::uint64_t seed) {
    cfg.validate();
    CaptionModel m;
    m.cfg = cfg;
    m.vocab = std::move(vocab);
    Rng root(seed);
    Rng enc_rng = root.split();
    Rng dec_rng = root.split();
    m.encoder = EncoderParams::init(cfg.encoder, enc_rng);
    m.decoder = DecoderParams::init(cfg.decoder, m.vocab.size(), dec_rng);
    return m;
}

std::vector<std::pair<std::string, Tensor*>> CaptionModel::named_tensors() {
    auto out = encoder.named_tensors("enc.");
    for (auto& p : decoder.named_tensors("dec.")) out.push_back(p);
    return out;
}

std::vector<std::pair<std::string, Tensor*>> CaptionModel::trainable_tensors() {
    auto out = encoder.trainable_tensors("enc.");
    for (auto& p : decoder.named_tensors("dec.")) out.push_back(p);
    return out;
}

void CaptionModel::zero_grads() {
    for (auto& [name, t] : named_tensors()) t->zero_grad();
}

Tensor CaptionModel::encode_entry(const ImageEntry& entry) const {
    if (cfg.encoder.kind == EncoderKind::kPassthrough) {
        if (!entry.has_feature()) {
            throw ConfigError("passthrough encoder needs precomputed features, image " +
                              std::to_string(entry.id) + " has pixels only");
        }
        return encode_image(encoder, entry.feature);
    }
    if (!entry.has_pixels()) {
        throw ConfigError("conv encoder needs pixel input, image " + std::to_string(entry.id) +
                          " has a feature only");
    }
    return encode_image(encoder, entry.pixels);
}

void swap_encoder(CaptionModel& model, const EncoderSpec& new_spec, std::uint64_t seed) {
    if (new_spec.embed_dim != model.cfg.decoder.embed) {
        throw ConfigError("replacement encoder output dim " + std::to_string(new_spec.embed_dim) +
                          " does not match decoder embed dim " +
                          std::to_string(model.cfg.decoder.embed));
    }
    new_spec.validate();
    Rng rng(seed);
    model.encoder = EncoderParams::init(new_spec, rng);
    model.cfg.encoder = new_spec;
}

}  // namespace capforge
