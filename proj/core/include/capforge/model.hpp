#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "capforge/decoder.hpp"
#include "capforge/encoder.hpp"
#include "capforge/vocab.hpp"

namespace capforge {

/// Everything needed to rebuild a model skeleton before loading weights.
struct ModelConfig {
    EncoderSpec encoder;
    DecoderConfig decoder;

    void validate() const;
};

struct CaptionModel {
    ModelConfig cfg;
    EncoderParams encoder;
    DecoderParams decoder;
    Vocabulary vocab;

    static CaptionModel init(const ModelConfig& cfg, Vocabulary vocab, std::uint64_t seed);

    std::vector<std::pair<std::string, Tensor*>> named_tensors();
    std::vector<std::pair<std::string, Tensor*>> trainable_tensors();
    void zero_grads();

    /// Feature for an image entry (pixels or passthrough feature).
    Tensor encode_entry(const struct ImageEntry& entry) const;
};

/// Replace the encoder (fresh init, projection included); decoder weights are
/// untouched. The new spec's output dimension must match the decoder
/// embedding size.
void swap_encoder(CaptionModel& model, const EncoderSpec& new_spec, std::uint64_t seed);

}  // namespace capforge
