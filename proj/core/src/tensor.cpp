#include "capforge/tensor.hpp"

#include <cmath>
#include <sstream>

#include "capforge/errors.hpp"

namespace capforge {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_str(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> shape_in, std::vector<float> values_in)
    : shape(std::move(shape_in)), values(std::move(values_in)) {
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("value count " + std::to_string(values.size()) +
                             " does not match shape " + capforge::shape_str(shape));
    }
}

Tensor Tensor::zeros(std::vector<int> shape) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
}

Tensor Tensor::full(std::vector<int> shape, float v) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<float>(n, v));
}

Tensor Tensor::uniform(std::vector<int> shape, Rng& rng, float lo, float hi) {
    std::size_t n = shape_numel(shape);
    std::vector<float> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = static_cast<float>(rng.uniform(lo, hi));
    }
    return Tensor(std::move(shape), std::move(v));
}

void Tensor::ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0f);
}

void Tensor::zero_grad() { grad.assign(values.size(), 0.0f); }

bool Tensor::all_finite() const {
    for (float v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const { return capforge::shape_str(shape); }

Tensor dropout_mask(const std::vector<int>& shape, float rate, Rng& rng) {
    if (rate < 0.0f || rate >= 1.0f) {
        throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(rate));
    }
    Tensor m = Tensor::zeros(shape);
    const float keep_scale = 1.0f / (1.0f - rate);
    for (float& v : m.values) {
        v = rng.uniform() < rate ? 0.0f : keep_scale;
    }
    return m;
}

}  // namespace capforge
