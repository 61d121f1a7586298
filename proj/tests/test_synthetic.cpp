#include <doctest.h>

#include <map>
#include <set>

#include "capforge/synthetic.hpp"
#include "capforge/vocab.hpp"

using namespace capforge;

namespace {

// Independent pixel oracle: each shape type covers a distinct number of
// pixels in its 7x7 box (square 49, circle 37, triangle 25), and every
// rendered pixel is a pure primary color, so counting saturated pixels per
// channel recovers (color -> shape) without consulting the renderer.
std::map<Color, int> pure_pixel_counts(const Tensor& img) {
    std::map<Color, int> counts;
    const int h = img.shape[0], w = img.shape[1];
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t base = (static_cast<std::size_t>(y) * w + x) * 3;
            const float r = img.values[base], g = img.values[base + 1], b = img.values[base + 2];
            if (r == 1.0f && g == 0.0f && b == 0.0f) ++counts[Color::kRed];
            else if (r == 0.0f && g == 1.0f && b == 0.0f) ++counts[Color::kGreen];
            else if (r == 0.0f && g == 0.0f && b == 1.0f) ++counts[Color::kBlue];
        }
    }
    return counts;
}

Shape shape_from_count(int n) {
    if (n == 49) return Shape::kSquare;
    if (n == 37) return Shape::kCircle;
    if (n == 25) return Shape::kTriangle;
    FAIL("unexpected pixel count ", n);
    return Shape::kSquare;
}

// Center of mass of one color's pixels.
std::pair<double, double> centroid(const Tensor& img, Color color) {
    double sx = 0, sy = 0;
    int n = 0;
    const int h = img.shape[0], w = img.shape[1];
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t base = (static_cast<std::size_t>(y) * w + x) * 3;
            float ch[3] = {img.values[base], img.values[base + 1], img.values[base + 2]};
            const int ci = static_cast<int>(color);
            bool pure = ch[ci] == 1.0f;
            for (int k = 0; k < 3; ++k) {
                if (k != ci && ch[k] != 0.0f) pure = false;
            }
            if (pure) {
                sx += x;
                sy += y;
                ++n;
            }
        }
    }
    REQUIRE(n > 0);
    return {sx / n, sy / n};
}

}  // namespace

TEST_CASE("synthetic scenes match a pixel-level geometry oracle") {
    SyntheticDataset ds = gen_synthetic(60, 2024);
    REQUIRE(ds.scenes.size() == 60);
    REQUIRE(ds.split.images.size() == 60);
    REQUIRE(ds.split.captions.size() == 60 * kCaptionsPerImage);

    for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
        const SceneDesc& scene = ds.scenes[i];
        const Tensor& img = ds.split.images[i].pixels;
        REQUIRE((scene.shapes.size() == 1 || scene.shapes.size() == 2));

        auto counts = pure_pixel_counts(img);
        REQUIRE(counts.size() == scene.shapes.size());
        for (const PlacedShape& p : scene.shapes) {
            REQUIRE(counts.count(p.color) == 1);
            CHECK(shape_from_count(counts[p.color]) == p.shape);
        }

        if (scene.shapes.size() == 2) {
            CHECK(scene.shapes[0].color != scene.shapes[1].color);
            auto [ax, ay] = centroid(img, scene.shapes[0].color);
            auto [bx, by] = centroid(img, scene.shapes[1].color);
            switch (scene.relation) {
                case Relation::kAbove: CHECK(ay < by); break;
                case Relation::kBelow: CHECK(ay > by); break;
                case Relation::kLeftOf: CHECK(ax < bx); break;
                case Relation::kRightOf: CHECK(ax > bx); break;
            }
        }
    }
}

TEST_CASE("synthetic captions name the right shapes and relations") {
    SyntheticDataset ds = gen_synthetic(40, 7);
    for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
        const SceneDesc& scene = ds.scenes[i];
        int found = 0;
        for (const CaptionRecord& c : ds.split.captions) {
            if (c.image_id != static_cast<std::int64_t>(i)) continue;
            ++found;
            auto words = tokenize(c.raw_text);
            std::set<std::string> bag(words.begin(), words.end());
            for (const PlacedShape& p : scene.shapes) {
                CHECK(bag.count(shape_word(p.shape)) == 1);
                CHECK(bag.count(color_word(p.color)) == 1);
            }
            // No stray shape or color words beyond the scene's.
            for (const char* w : {"square", "circle", "triangle", "red", "green", "blue"}) {
                bool in_scene = false;
                for (const PlacedShape& p : scene.shapes) {
                    if (w == std::string(shape_word(p.shape)) ||
                        w == std::string(color_word(p.color))) {
                        in_scene = true;
                    }
                }
                if (!in_scene) CHECK(bag.count(w) == 0);
            }
        }
        CHECK(found == kCaptionsPerImage);
    }
}

TEST_CASE("synthetic generation is deterministic per seed") {
    SyntheticDataset a = gen_synthetic(10, 99);
    SyntheticDataset b = gen_synthetic(10, 99);
    SyntheticDataset c = gen_synthetic(10, 100);
    for (int i = 0; i < 10; ++i) {
        CHECK(a.split.images[static_cast<std::size_t>(i)].pixels.values ==
              b.split.images[static_cast<std::size_t>(i)].pixels.values);
    }
    bool any_diff = false;
    for (int i = 0; i < 10; ++i) {
        if (a.split.images[static_cast<std::size_t>(i)].pixels.values !=
            c.split.images[static_cast<std::size_t>(i)].pixels.values) {
            any_diff = true;
        }
    }
    CHECK(any_diff);
    for (std::size_t i = 0; i < a.split.captions.size(); ++i) {
        CHECK(a.split.captions[i].raw_text == b.split.captions[i].raw_text);
    }
}

TEST_CASE("captions use a small closed vocabulary") {
    SyntheticDataset ds = gen_synthetic(80, 1);
    Vocabulary v = Vocabulary::build(ds.split.raw_texts());
    // 3 shapes + 3 colors + relation words + template filler; far below 40.
    CHECK(v.size() < 40);
    CHECK(v.contains("square"));
    CHECK(v.contains("above"));
}
