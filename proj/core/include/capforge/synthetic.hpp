#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capforge/dataset.hpp"

namespace capforge {

// Desk-scale captioned corpus: 32x32x3 scenes of one or two colored shapes
// with five paraphrased template captions each, fully deterministic per seed.

enum class Shape { kSquare, kCircle, kTriangle };
enum class Color { kRed, kGreen, kBlue };
enum class Relation { kAbove, kBelow, kLeftOf, kRightOf };

struct PlacedShape {
    Shape shape;
    Color color;
    int cx = 0, cy = 0;  // pixel center
};

struct SceneDesc {
    std::vector<PlacedShape> shapes;    // 1 or 2; when 2, colors differ
    Relation relation = Relation::kAbove;  // shapes[0] relation shapes[1]
};

struct SyntheticDataset {
    DatasetSplit split;
    std::vector<SceneDesc> scenes;  // parallel to split.images
};

constexpr int kSyntheticImageSize = 32;
constexpr int kCaptionsPerImage = 5;

const char* shape_word(Shape s);
const char* color_word(Color c);
std::string relation_phrase(Relation r);

/// Render one shape into an image grid (background untouched elsewhere).
void render_shape(Tensor& image, const PlacedShape& p);

SyntheticDataset gen_synthetic(int n_images, std::uint64_t rng_seed);

}  // namespace capforge
