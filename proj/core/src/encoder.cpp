#include "capforge/encoder.hpp"

#include <cmath>

#include "capforge/errors.hpp"

namespace capforge {

const char* encoder_kind_name(EncoderKind k) {
    switch (k) {
        case EncoderKind::kPlainConv: return "plain_conv";
        case EncoderKind::kResidualConv: return "residual_conv";
        case EncoderKind::kPassthrough: return "passthrough";
    }
    return "?";
}

EncoderKind encoder_kind_from_name(const std::string& name) {
    if (name == "plain_conv") return EncoderKind::kPlainConv;
    if (name == "residual_conv") return EncoderKind::kResidualConv;
    if (name == "passthrough") return EncoderKind::kPassthrough;
    throw ConfigError("unknown encoder kind: " + name);
}

EncoderSpec EncoderSpec::passthrough(int embed_dim) {
    EncoderSpec s;
    s.kind = EncoderKind::kPassthrough;
    s.embed_dim = embed_dim;
    return s;
}

EncoderSpec EncoderSpec::plain_desk(int embed_dim, int width) {
    EncoderSpec s;
    s.kind = EncoderKind::kPlainConv;
    s.channels = {width, width, width, width};
    s.embed_dim = embed_dim;
    return s;
}

EncoderSpec EncoderSpec::residual_desk(int embed_dim, int width) {
    EncoderSpec s;
    s.kind = EncoderKind::kResidualConv;
    s.channels = {width, width, width, width};
    s.embed_dim = embed_dim;
    return s;
}

int EncoderSpec::flat_dim() const {
    const int side = image_size >> n_stages();
    return side * side * channels.back();
}

void EncoderSpec::validate() const {
    if (embed_dim < 1) throw ConfigError("encoder embed_dim must be positive");
    if (kind == EncoderKind::kPassthrough) return;
    if (channels.empty()) throw ConfigError("conv encoder needs at least one stage");
    for (int c : channels) {
        if (c < 1) throw ConfigError("conv channel counts must be positive");
        if (kind == EncoderKind::kResidualConv && c != channels.front()) {
            throw ConfigError("residual encoder uses a constant channel width");
        }
    }
    if (image_size % (1 << n_stages()) != 0) {
        throw ConfigError("image size " + std::to_string(image_size) +
                          " not divisible by 2^" + std::to_string(n_stages()));
    }
}

namespace {

Tensor he_conv_init(int cout, int cin, Rng& rng) {
    const float limit = std::sqrt(6.0f / (9.0f * static_cast<float>(cin)));
    return Tensor::uniform({cout, 3, 3, cin}, rng, -limit, limit);
}

}  // namespace

EncoderParams EncoderParams::init(const EncoderSpec& spec, Rng& rng) {
    spec.validate();
    EncoderParams p;
    p.spec = spec;
    if (spec.kind == EncoderKind::kPassthrough) return p;

    if (spec.kind == EncoderKind::kPlainConv) {
        int cin = spec.in_channels;
        for (int c : spec.channels) {
            p.conv_w.push_back(he_conv_init(c, cin, rng));
            p.conv_b.push_back(Tensor::zeros({c}));
            cin = c;
        }
    } else {
        const int c = spec.channels.front();
        p.conv_w.push_back(he_conv_init(c, spec.in_channels, rng));  // stem
        p.conv_b.push_back(Tensor::zeros({c}));
        for (std::size_t i = 0; i < spec.channels.size(); ++i) {
            ResidualBlockParams b;
            b.conv1_w = he_conv_init(c, c, rng);
            b.conv1_b = Tensor::zeros({c});
            b.conv2_w = Tensor::zeros({c, 3, 3, c});  // identity at init
            b.conv2_b = Tensor::zeros({c});
            p.blocks.push_back(std::move(b));
        }
    }
    const int f = spec.flat_dim();
    const float limit = std::sqrt(6.0f / static_cast<float>(f));
    p.proj_w = Tensor::uniform({spec.embed_dim, f}, rng, -limit, limit);
    p.proj_b = Tensor::zeros({spec.embed_dim});
    return p;
}

std::vector<std::pair<std::string, Tensor*>> EncoderParams::named_tensors(
    const std::string& prefix) {
    std::vector<std::pair<std::string, Tensor*>> out;
    if (spec.kind == EncoderKind::kPassthrough) return out;
    for (std::size_t i = 0; i < conv_w.size(); ++i) {
        const std::string stem = prefix + "conv" + std::to_string(i);
        out.emplace_back(stem + ".w", &conv_w[i]);
        out.emplace_back(stem + ".b", &conv_b[i]);
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::string stem = prefix + "block" + std::to_string(i);
        out.emplace_back(stem + ".conv1.w", &blocks[i].conv1_w);
        out.emplace_back(stem + ".conv1.b", &blocks[i].conv1_b);
        out.emplace_back(stem + ".conv2.w", &blocks[i].conv2_w);
        out.emplace_back(stem + ".conv2.b", &blocks[i].conv2_b);
    }
    out.emplace_back(prefix + "proj.w", &proj_w);
    out.emplace_back(prefix + "proj.b", &proj_b);
    return out;
}

std::vector<std::pair<std::string, Tensor*>> EncoderParams::trainable_tensors(
    const std::string& prefix) {
    if (spec.kind == EncoderKind::kPassthrough) return {};
    if (!spec.finetune_top_only) return named_tensors(prefix);
    return {{prefix + "proj.w", &proj_w}, {prefix + "proj.b", &proj_b}};
}

NodeId residual_block(Graph& g, const ResidualBlockParams& p, NodeId x, bool trainable) {
    auto leaf = [&](const Tensor& t) {
        return trainable ? g.param(const_cast<Tensor&>(t)) : g.ref_input(t);
    };
    NodeId b = g.conv2d(x, leaf(p.conv1_w), leaf(p.conv1_b), 1);
    b = g.relu(b);
    b = g.conv2d(b, leaf(p.conv2_w), leaf(p.conv2_b), 1);
    return g.add(b, x);
}

namespace {

NodeId conv_stack_on_graph(Graph& g, const EncoderParams& p, NodeId x, bool bind) {
    auto leaf = [&](const Tensor& t) {
        return bind ? g.param(const_cast<Tensor&>(t)) : g.ref_input(t);
    };
    if (p.spec.kind == EncoderKind::kPlainConv) {
        for (std::size_t i = 0; i < p.conv_w.size(); ++i) {
            x = g.maxpool2(g.relu(g.conv2d(x, leaf(p.conv_w[i]), leaf(p.conv_b[i]), 1)));
        }
    } else {
        x = g.relu(g.conv2d(x, leaf(p.conv_w[0]), leaf(p.conv_b[0]), 1));
        for (const ResidualBlockParams& b : p.blocks) {
            x = g.maxpool2(residual_block(g, b, x, bind));
        }
    }
    return g.reshape(x, {p.spec.flat_dim()});
}

void check_image(const EncoderSpec& spec, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != spec.image_size || image.dim(1) != spec.image_size ||
        image.dim(2) != spec.in_channels) {
        throw DimensionError("encoder expects image (" + std::to_string(spec.image_size) + "," +
                             std::to_string(spec.image_size) + "," +
                             std::to_string(spec.in_channels) + "), got " + image.shape_str());
    }
}

}  // namespace

Tensor conv_features(const EncoderParams& p, const Tensor& image) {
    if (p.spec.kind == EncoderKind::kPassthrough) {
        throw ConfigError("passthrough encoder has no conv stack");
    }
    check_image(p.spec, image);
    Graph g;
    NodeId flat = conv_stack_on_graph(g, p, g.ref_input(image), false);
    return g.value(flat);
}

NodeId project_on_graph(Graph& g, EncoderParams& p, NodeId flat, bool trainable) {
    NodeId w = trainable ? g.param(p.proj_w) : g.ref_input(p.proj_w);
    NodeId b = trainable ? g.param(p.proj_b) : g.ref_input(p.proj_b);
    return g.add(g.matmul(w, flat), b);
}

NodeId encode_on_graph(Graph& g, EncoderParams& p, const Tensor& image, bool trainable) {
    if (p.spec.kind == EncoderKind::kPassthrough) {
        if (image.rank() != 1 || image.dim(0) != p.spec.embed_dim) {
            throw DimensionError("passthrough feature must be (" +
                                 std::to_string(p.spec.embed_dim) + "), got " +
                                 image.shape_str());
        }
        return g.input(image);
    }
    check_image(p.spec, image);
    NodeId flat;
    if (p.spec.finetune_top_only || !trainable) {
        // Conv stack detached: it never receives gradients.
        flat = g.input(conv_features(p, image));
    } else {
        flat = conv_stack_on_graph(g, p, g.input(image), true);
    }
    return project_on_graph(g, p, flat, trainable);
}

Tensor encode_image(const EncoderParams& p, const Tensor& image) {
    Graph g;
    EncoderParams& mut = const_cast<EncoderParams&>(p);
    return g.value(encode_on_graph(g, mut, image, false));
}

}  // namespace capforge
