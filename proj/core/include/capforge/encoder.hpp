#pragma once

#include <string>
#include <utility>
#include <vector>

#include "capforge/graph.hpp"
#include "capforge/rng.hpp"
#include "capforge/tensor.hpp"

namespace capforge {

enum class EncoderKind { kPlainConv, kResidualConv, kPassthrough };

const char* encoder_kind_name(EncoderKind k);
EncoderKind encoder_kind_from_name(const std::string& name);

/// Structural description of the image encoder. Output dimension always
/// equals the decoder embedding size. Plain stacks are conv+relu+maxpool
/// stages; residual stacks are a stem followed by identity-skip blocks with a
/// maxpool after each.
struct EncoderSpec {
    EncoderKind kind = EncoderKind::kPassthrough;
    int image_size = 32;   // square inputs
    int in_channels = 3;
    std::vector<int> channels;  // per stage (plain) / per block (residual)
    int embed_dim = 512;
    bool finetune_top_only = true;

    static EncoderSpec passthrough(int embed_dim);
    // Desk-scale defaults: four stages/blocks on 32x32 input.
    static EncoderSpec plain_desk(int embed_dim, int width = 16);
    static EncoderSpec residual_desk(int embed_dim, int width = 16);

    int n_stages() const { return static_cast<int>(channels.size()); }
    // Flattened conv output size feeding the projection.
    int flat_dim() const;
    void validate() const;
};

struct ResidualBlockParams {
    Tensor conv1_w, conv1_b;
    Tensor conv2_w, conv2_b;  // zero-initialized: the block starts as identity
};

struct EncoderParams {
    EncoderSpec spec;
    // plain: one conv per stage. residual: stem conv + blocks.
    std::vector<Tensor> conv_w, conv_b;          // plain stages / residual stem (index 0)
    std::vector<ResidualBlockParams> blocks;     // residual only
    Tensor proj_w;  // (D, F)
    Tensor proj_b;  // (D)

    static EncoderParams init(const EncoderSpec& spec, Rng& rng);

    std::vector<std::pair<std::string, Tensor*>> named_tensors(const std::string& prefix);
    // Tensors that receive gradients; honors finetune_top_only.
    std::vector<std::pair<std::string, Tensor*>> trainable_tensors(const std::string& prefix);
};

/// out = branch(x) + x where branch = conv2(relu(conv1(x))).
NodeId residual_block(Graph& g, const ResidualBlockParams& p, NodeId x, bool trainable);

/// Conv stack output (flattened, pre-projection) as a plain value; used to
/// cache frozen features. Pixel-input kinds only.
Tensor conv_features(const EncoderParams& p, const Tensor& image);

/// Projection (and bias) applied to a flat feature node.
NodeId project_on_graph(Graph& g, EncoderParams& p, NodeId flat, bool trainable);

/// Full on-graph encode from pixels or a passthrough feature. With
/// finetune_top_only the conv stack runs detached and only the projection is
/// bound as a parameter.
NodeId encode_on_graph(Graph& g, EncoderParams& p, const Tensor& image, bool trainable);

/// Value-path encode (inference).
Tensor encode_image(const EncoderParams& p, const Tensor& image);

}  // namespace capforge
