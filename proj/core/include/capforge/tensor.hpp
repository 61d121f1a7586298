#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "capforge/rng.hpp"

namespace capforge {

/// Dense row-major float tensor. Values are 32-bit; reductions accumulate in
/// 64-bit. `grad` is empty until a backward pass (or explicit allocation)
/// fills it, and always matches `values` in length when present.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> values;
    std::vector<float> grad;

    Tensor() = default;
    Tensor(std::vector<int> shape, std::vector<float> values);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, float v);
    static Tensor scalar(float v) { return Tensor({1}, {v}); }
    // Uniform(lo, hi) init, deterministic per rng state.
    static Tensor uniform(std::vector<int> shape, Rng& rng, float lo, float hi);

    std::size_t numel() const { return values.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    void ensure_grad();
    void zero_grad();

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;

    std::string shape_str() const;
};

std::string shape_str(const std::vector<int>& shape);
std::size_t shape_numel(const std::vector<int>& shape);

/// Inverted-dropout mask: entries are 0 with probability `rate`, otherwise
/// 1/(1-rate), so the mask has unit expectation and inference needs no
/// rescale. rate must be in [0, 1).
Tensor dropout_mask(const std::vector<int>& shape, float rate, Rng& rng);

}  // namespace capforge
