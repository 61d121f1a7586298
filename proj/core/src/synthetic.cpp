#include "capforge/synthetic.hpp"

#include <cmath>

#include "capforge/errors.hpp"

namespace capforge {

namespace {

constexpr float kBackground = 0.05f;
constexpr int kHalf = 3;  // shapes occupy a 7x7 box

int rand_range(Rng& rng, int lo, int hi) {  // inclusive
    return lo + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
}

bool inside_shape(Shape s, int dx, int dy) {
    switch (s) {
        case Shape::kSquare:
            return std::abs(dx) <= kHalf && std::abs(dy) <= kHalf;
        case Shape::kCircle:
            return dx * dx + dy * dy <= 12;  // radius 3.5
        case Shape::kTriangle: {
            if (std::abs(dy) > kHalf) return false;
            const int row = dy + kHalf;  // 0 at apex
            return std::abs(dx) <= row / 2;  // row widths 1,1,3,3,5,5,7
        }
    }
    return false;
}

Relation inverse(Relation r) {
    switch (r) {
        case Relation::kAbove: return Relation::kBelow;
        case Relation::kBelow: return Relation::kAbove;
        case Relation::kLeftOf: return Relation::kRightOf;
        case Relation::kRightOf: return Relation::kLeftOf;
    }
    return Relation::kAbove;
}

std::string noun(const PlacedShape& p) {
    return std::string(color_word(p.color)) + " " + shape_word(p.shape);
}

std::vector<std::string> caption_templates(const SceneDesc& scene) {
    if (scene.shapes.size() == 1) {
        const std::string n = noun(scene.shapes[0]);
        // Every template has >= 4 tokens so BLEU_4 is never trivially zero.
        return {
            "a single " + n,
            "there is a " + n,
            "a picture of a " + n,
            "the image shows a " + n,
            "a " + n + " on its own",
        };
    }
    const std::string n1 = noun(scene.shapes[0]);
    const std::string n2 = noun(scene.shapes[1]);
    const std::string rel = relation_phrase(scene.relation);
    const std::string inv = relation_phrase(inverse(scene.relation));
    return {
        "a " + n1 + " " + rel + " a " + n2,
        "there is a " + n1 + " " + rel + " a " + n2,
        "a " + n2 + " " + inv + " a " + n1,
        "the image shows a " + n1 + " " + rel + " a " + n2,
        "a picture of a " + n1 + " " + rel + " a " + n2,
    };
}

}  // namespace

const char* shape_word(Shape s) {
    switch (s) {
        case Shape::kSquare: return "square";
        case Shape::kCircle: return "circle";
        case Shape::kTriangle: return "triangle";
    }
    return "?";
}

const char* color_word(Color c) {
    switch (c) {
        case Color::kRed: return "red";
        case Color::kGreen: return "green";
        case Color::kBlue: return "blue";
    }
    return "?";
}

std::string relation_phrase(Relation r) {
    switch (r) {
        case Relation::kAbove: return "above";
        case Relation::kBelow: return "below";
        case Relation::kLeftOf: return "left of";
        case Relation::kRightOf: return "right of";
    }
    return "?";
}

void render_shape(Tensor& image, const PlacedShape& p) {
    const int h = image.dim(0), w = image.dim(1);
    float rgb[3] = {0.0f, 0.0f, 0.0f};
    rgb[static_cast<int>(p.color)] = 1.0f;
    for (int dy = -kHalf; dy <= kHalf; ++dy) {
        for (int dx = -kHalf; dx <= kHalf; ++dx) {
            if (!inside_shape(p.shape, dx, dy)) continue;
            const int y = p.cy + dy, x = p.cx + dx;
            if (y < 0 || y >= h || x < 0 || x >= w) continue;
            for (int c = 0; c < 3; ++c) {
                image.values[(static_cast<std::size_t>(y) * w + x) * 3 + c] = rgb[c];
            }
        }
    }
}

SyntheticDataset gen_synthetic(int n_images, std::uint64_t rng_seed) {
    if (n_images < 1) throw ConfigError("gen_synthetic needs n_images >= 1");
    constexpr int kLo = kHalf;                          // center bounds
    constexpr int kHi = kSyntheticImageSize - kHalf - 1;
    constexpr int kNearHi = 11, kFarLo = 20;            // relation-constrained axis

    SyntheticDataset out;
    out.split.role = DatasetSplit::Role::kTrain;
    Rng root(rng_seed);
    for (int i = 0; i < n_images; ++i) {
        Rng rng = root.split();
        SceneDesc scene;
        const bool two = rng.next_u64() % 2 == 1;

        PlacedShape a;
        a.shape = static_cast<Shape>(rng.next_u64() % 3);
        a.color = static_cast<Color>(rng.next_u64() % 3);
        if (!two) {
            a.cx = rand_range(rng, kLo, kHi);
            a.cy = rand_range(rng, kLo, kHi);
            scene.shapes = {a};
        } else {
            PlacedShape b;
            b.shape = static_cast<Shape>(rng.next_u64() % 3);
            // Distinct colors keep the scene unambiguous.
            b.color = static_cast<Color>((static_cast<int>(a.color) +
                                          1 + static_cast<int>(rng.next_u64() % 2)) % 3);
            scene.relation = static_cast<Relation>(rng.next_u64() % 4);
            switch (scene.relation) {
                case Relation::kAbove:
                    a.cy = rand_range(rng, kLo, kNearHi);
                    b.cy = rand_range(rng, kFarLo, kHi);
                    a.cx = rand_range(rng, kLo, kHi);
                    b.cx = rand_range(rng, kLo, kHi);
                    break;
                case Relation::kBelow:
                    a.cy = rand_range(rng, kFarLo, kHi);
                    b.cy = rand_range(rng, kLo, kNearHi);
                    a.cx = rand_range(rng, kLo, kHi);
                    b.cx = rand_range(rng, kLo, kHi);
                    break;
                case Relation::kLeftOf:
                    a.cx = rand_range(rng, kLo, kNearHi);
                    b.cx = rand_range(rng, kFarLo, kHi);
                    a.cy = rand_range(rng, kLo, kHi);
                    b.cy = rand_range(rng, kLo, kHi);
                    break;
                case Relation::kRightOf:
                    a.cx = rand_range(rng, kFarLo, kHi);
                    b.cx = rand_range(rng, kLo, kNearHi);
                    a.cy = rand_range(rng, kLo, kHi);
                    b.cy = rand_range(rng, kLo, kHi);
                    break;
            }
            scene.shapes = {a, b};
        }

        ImageEntry img;
        img.id = i;
        img.pixels = Tensor::full({kSyntheticImageSize, kSyntheticImageSize, 3}, kBackground);
        for (const PlacedShape& p : scene.shapes) render_shape(img.pixels, p);
        out.split.images.push_back(std::move(img));
        out.scenes.push_back(scene);

        for (const std::string& text : caption_templates(scene)) {
            CaptionRecord rec;
            rec.image_id = i;
            rec.raw_text = text;
            out.split.captions.push_back(std::move(rec));
        }
    }
    out.split.rebuild_index();
    return out;
}

}  // namespace capforge
