#include "capforge/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "capforge/errors.hpp"

namespace capforge {

namespace {

// Broadcast classes for binary elementwise ops.
enum class Bcast { kSame, kTrailingVec, kScalar };

Bcast classify(const Tensor& a, const Tensor& b) {
    if (a.shape == b.shape) return Bcast::kSame;
    if (b.numel() == 1) return Bcast::kScalar;
    if (b.rank() == 1 && a.rank() >= 1 && b.dim(0) == a.shape.back()) return Bcast::kTrailingVec;
    throw DimensionError("elementwise shapes incompatible: " + a.shape_str() + " vs " +
                         b.shape_str());
}

std::size_t b_index(Bcast bc, std::size_t i, std::size_t last_dim) {
    switch (bc) {
        case Bcast::kSame: return i;
        case Bcast::kScalar: return 0;
        case Bcast::kTrailingVec: return i % last_dim;
    }
    return 0;
}

float stable_exp(float x) { return std::exp(std::min(x, 88.0f)); }

}  // namespace

NodeId Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::input(Tensor t) {
    Node n;
    n.op = Op::kInput;
    n.value = std::move(t);
    return push(std::move(n));
}

NodeId Graph::ref_input(const Tensor& t) {
    Node n;
    n.op = Op::kInput;
    n.borrow = &t;
    return push(std::move(n));
}

NodeId Graph::param(Tensor& t) {
    Node n;
    n.op = Op::kParam;
    n.borrow = &t;
    n.bound = &t;
    return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.rank() != 2 || (tb.rank() != 2 && tb.rank() != 1)) {
        throw DimensionError("matmul expects (m,k)x(k,n) or (m,k)x(k), got " + ta.shape_str() +
                             " x " + tb.shape_str());
    }
    const int m = ta.dim(0), k = ta.dim(1);
    const int kb = tb.dim(0);
    const int ncols = tb.rank() == 2 ? tb.dim(1) : 1;
    if (k != kb) {
        throw DimensionError("matmul inner dimensions disagree: " + ta.shape_str() + " x " +
                             tb.shape_str());
    }
    Node n;
    n.op = Op::kMatmul;
    n.inputs = {a, b};
    n.value = tb.rank() == 2 ? Tensor::zeros({m, ncols}) : Tensor::zeros({m});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < ncols; ++j) {
            double acc = 0.0;
            const float* arow = ta.values.data() + static_cast<std::size_t>(i) * k;
            for (int p = 0; p < k; ++p) {
                acc += static_cast<double>(arow[p]) *
                       static_cast<double>(tb.values[static_cast<std::size_t>(p) * ncols + j]);
            }
            n.value.values[static_cast<std::size_t>(i) * ncols + j] = static_cast<float>(acc);
        }
    }
    return push(std::move(n));
}

NodeId Graph::binary(Op op, NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    const Bcast bc = classify(ta, tb);
    const std::size_t last = static_cast<std::size_t>(ta.shape.back());
    Node n;
    n.op = op;
    n.inputs = {a, b};
    n.value = Tensor::zeros(ta.shape);
    for (std::size_t i = 0; i < ta.numel(); ++i) {
        const float x = ta.values[i];
        const float y = tb.values[b_index(bc, i, last)];
        float r = 0.0f;
        switch (op) {
            case Op::kAdd: r = x + y; break;
            case Op::kSub: r = x - y; break;
            case Op::kMul: r = x * y; break;
            default: break;
        }
        n.value.values[i] = r;
    }
    return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) { return binary(Op::kAdd, a, b); }
NodeId Graph::sub(NodeId a, NodeId b) { return binary(Op::kSub, a, b); }
NodeId Graph::mul(NodeId a, NodeId b) { return binary(Op::kMul, a, b); }

NodeId Graph::sigmoid(NodeId x) {
    Node n;
    n.op = Op::kSigmoid;
    n.inputs = {x};
    n.value = value(x);
    for (float& v : n.value.values) v = 1.0f / (1.0f + stable_exp(-v));
    return push(std::move(n));
}

NodeId Graph::tanh(NodeId x) {
    Node n;
    n.op = Op::kTanh;
    n.inputs = {x};
    n.value = value(x);
    for (float& v : n.value.values) v = std::tanh(v);
    return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
    Node n;
    n.op = Op::kRelu;
    n.inputs = {x};
    n.value = value(x);
    for (float& v : n.value.values) v = std::max(v, 0.0f);
    return push(std::move(n));
}

NodeId Graph::exp(NodeId x) {
    Node n;
    n.op = Op::kExp;
    n.inputs = {x};
    n.value = value(x);
    for (float& v : n.value.values) v = stable_exp(v);
    return push(std::move(n));
}

NodeId Graph::log(NodeId x) {
    Node n;
    n.op = Op::kLog;
    n.inputs = {x};
    n.value = value(x);
    for (float& v : n.value.values) {
        if (v <= 0.0f) {
            throw NumericError("log of non-positive value " + std::to_string(v));
        }
        v = std::log(v);
    }
    return push(std::move(n));
}

NodeId Graph::softmax(NodeId logits) {
    const Tensor& t = value(logits);
    if (t.rank() < 1 || t.shape.back() < 1) {
        throw DimensionError("softmax needs a non-empty last axis, got " + t.shape_str());
    }
    const std::size_t v = static_cast<std::size_t>(t.shape.back());
    Node n;
    n.op = Op::kSoftmax;
    n.inputs = {logits};
    n.value = t;
    for (std::size_t base = 0; base < t.numel(); base += v) {
        float mx = -std::numeric_limits<float>::infinity();
        for (std::size_t i = 0; i < v; ++i) mx = std::max(mx, t.values[base + i]);
        double total = 0.0;
        for (std::size_t i = 0; i < v; ++i) {
            const float e = stable_exp(t.values[base + i] - mx);
            n.value.values[base + i] = e;
            total += e;
        }
        for (std::size_t i = 0; i < v; ++i) {
            n.value.values[base + i] = static_cast<float>(n.value.values[base + i] / total);
        }
    }
    return push(std::move(n));
}

NodeId Graph::embed_lookup(NodeId table, int id) {
    const Tensor& t = value(table);
    if (t.rank() != 2) throw DimensionError("embed_lookup table must be rank 2, got " + t.shape_str());
    if (id < 0 || id >= t.dim(0)) {
        throw IntegrityError("token id " + std::to_string(id) + " outside vocabulary of size " +
                             std::to_string(t.dim(0)));
    }
    const int d = t.dim(1);
    Node n;
    n.op = Op::kEmbed;
    n.inputs = {table};
    n.i0 = id;
    n.value = Tensor::zeros({d});
    std::copy_n(t.values.begin() + static_cast<std::size_t>(id) * d, d, n.value.values.begin());
    return push(std::move(n));
}

NodeId Graph::concat(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.rank() != 1 || tb.rank() != 1) {
        throw DimensionError("concat expects rank-1 operands, got " + ta.shape_str() + " and " +
                             tb.shape_str());
    }
    Node n;
    n.op = Op::kConcat;
    n.inputs = {a, b};
    n.i0 = ta.dim(0);
    n.value = Tensor::zeros({ta.dim(0) + tb.dim(0)});
    std::copy(ta.values.begin(), ta.values.end(), n.value.values.begin());
    std::copy(tb.values.begin(), tb.values.end(), n.value.values.begin() + ta.dim(0));
    return push(std::move(n));
}

NodeId Graph::reshape(NodeId x, std::vector<int> shape) {
    const Tensor& t = value(x);
    if (shape_numel(shape) != t.numel()) {
        throw DimensionError("reshape from " + t.shape_str() + " to " + shape_str(shape) +
                             " changes element count");
    }
    Node n;
    n.op = Op::kReshape;
    n.inputs = {x};
    n.value = Tensor(std::move(shape), t.values);
    return push(std::move(n));
}

NodeId Graph::slice(NodeId x, int start, int len) {
    const Tensor& t = value(x);
    if (t.rank() != 1 || start < 0 || len < 1 || start + len > t.dim(0)) {
        throw DimensionError("bad slice [" + std::to_string(start) + "," +
                             std::to_string(start + len) + ") of " + t.shape_str());
    }
    Node n;
    n.op = Op::kSlice;
    n.inputs = {x};
    n.i0 = start;
    n.i1 = len;
    n.value = Tensor::zeros({len});
    std::copy_n(t.values.begin() + start, len, n.value.values.begin());
    return push(std::move(n));
}

NodeId Graph::pick(NodeId x, int index) {
    const Tensor& t = value(x);
    if (t.rank() != 1 || index < 0 || index >= t.dim(0)) {
        throw DimensionError("pick index " + std::to_string(index) + " out of range for " +
                             t.shape_str());
    }
    Node n;
    n.op = Op::kPick;
    n.inputs = {x};
    n.i0 = index;
    n.value = Tensor::scalar(t.values[static_cast<std::size_t>(index)]);
    return push(std::move(n));
}

NodeId Graph::sum(NodeId x) {
    const Tensor& t = value(x);
    double acc = 0.0;
    for (float v : t.values) acc += v;
    Node n;
    n.op = Op::kSum;
    n.inputs = {x};
    n.value = Tensor::scalar(static_cast<float>(acc));
    return push(std::move(n));
}

NodeId Graph::scale(NodeId x, float c) {
    Node n;
    n.op = Op::kScale;
    n.inputs = {x};
    n.c = c;
    n.value = value(x);
    for (float& v : n.value.values) v *= c;
    return push(std::move(n));
}

NodeId Graph::clamp_min(NodeId x, float floor) {
    Node n;
    n.op = Op::kClampMin;
    n.inputs = {x};
    n.c = floor;
    n.value = value(x);
    for (float& v : n.value.values) v = std::max(v, floor);
    return push(std::move(n));
}

NodeId Graph::conv2d(NodeId image, NodeId weight, NodeId bias, int stride) {
    const Tensor& img = value(image);
    const Tensor& w = value(weight);
    const Tensor& b = value(bias);
    if (img.rank() != 3) throw DimensionError("conv2d image must be (H,W,C), got " + img.shape_str());
    if (w.rank() != 4 || w.dim(1) != 3 || w.dim(2) != 3 || w.dim(3) != img.dim(2)) {
        throw DimensionError("conv2d weight must be (Cout,3,3," + std::to_string(img.dim(2)) +
                             "), got " + w.shape_str());
    }
    if (b.rank() != 1 || b.dim(0) != w.dim(0)) {
        throw DimensionError("conv2d bias must be (" + std::to_string(w.dim(0)) + "), got " +
                             b.shape_str());
    }
    if (stride < 1) throw ConfigError("conv2d stride must be >= 1");
    const int h = img.dim(0), wd = img.dim(1), cin = img.dim(2), cout = w.dim(0);
    const int ho = (h - 1) / stride + 1, wo = (wd - 1) / stride + 1;
    Node n;
    n.op = Op::kConv2d;
    n.inputs = {image, weight, bias};
    n.i0 = stride;
    n.value = Tensor::zeros({ho, wo, cout});
    for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
            for (int o = 0; o < cout; ++o) {
                double acc = b.values[static_cast<std::size_t>(o)];
                for (int ky = 0; ky < 3; ++ky) {
                    const int iy = oy * stride + ky - 1;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const int ix = ox * stride + kx - 1;
                        if (ix < 0 || ix >= wd) continue;
                        const std::size_t ib = (static_cast<std::size_t>(iy) * wd + ix) * cin;
                        const std::size_t wb =
                            ((static_cast<std::size_t>(o) * 3 + ky) * 3 + kx) * cin;
                        for (int ci = 0; ci < cin; ++ci) {
                            acc += static_cast<double>(img.values[ib + ci]) *
                                   static_cast<double>(w.values[wb + ci]);
                        }
                    }
                }
                n.value.values[(static_cast<std::size_t>(oy) * wo + ox) * cout + o] =
                    static_cast<float>(acc);
            }
        }
    }
    return push(std::move(n));
}

NodeId Graph::maxpool2(NodeId image) {
    const Tensor& img = value(image);
    if (img.rank() != 3 || img.dim(0) % 2 != 0 || img.dim(1) % 2 != 0) {
        throw DimensionError("maxpool2 needs (H,W,C) with even H and W, got " + img.shape_str());
    }
    const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
    Node n;
    n.op = Op::kMaxpool2;
    n.inputs = {image};
    n.value = Tensor::zeros({h / 2, w / 2, c});
    n.arg_idx.assign(n.value.numel(), 0);
    for (int oy = 0; oy < h / 2; ++oy) {
        for (int ox = 0; ox < w / 2; ++ox) {
            for (int ci = 0; ci < c; ++ci) {
                float best = -std::numeric_limits<float>::infinity();
                int best_idx = 0;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const int idx =
                            ((oy * 2 + dy) * w + (ox * 2 + dx)) * c + ci;
                        const float v = img.values[static_cast<std::size_t>(idx)];
                        if (v > best) {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                const std::size_t oi = (static_cast<std::size_t>(oy) * (w / 2) + ox) * c + ci;
                n.value.values[oi] = best;
                n.arg_idx[oi] = best_idx;
            }
        }
    }
    return push(std::move(n));
}

void Graph::backprop(Node& n) {
    auto& g = n.grad;
    auto gin = [&](int which) -> std::vector<float>& {
        return nodes_[static_cast<std::size_t>(n.inputs[static_cast<std::size_t>(which)])].grad;
    };
    auto vin = [&](int which) -> const Tensor& {
        return value(n.inputs[static_cast<std::size_t>(which)]);
    };
    switch (n.op) {
        case Op::kInput:
        case Op::kParam:
            break;
        case Op::kMatmul: {
            const Tensor& a = vin(0);
            const Tensor& b = vin(1);
            const int m = a.dim(0), k = a.dim(1);
            const int ncols = b.rank() == 2 ? b.dim(1) : 1;
            auto& ga = gin(0);
            auto& gb = gin(1);
            for (int i = 0; i < m; ++i) {
                for (int p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (int j = 0; j < ncols; ++j) {
                        acc += static_cast<double>(g[static_cast<std::size_t>(i) * ncols + j]) *
                               static_cast<double>(b.values[static_cast<std::size_t>(p) * ncols + j]);
                    }
                    ga[static_cast<std::size_t>(i) * k + p] += static_cast<float>(acc);
                }
            }
            for (int p = 0; p < k; ++p) {
                for (int j = 0; j < ncols; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < m; ++i) {
                        acc += static_cast<double>(a.values[static_cast<std::size_t>(i) * k + p]) *
                               static_cast<double>(g[static_cast<std::size_t>(i) * ncols + j]);
                    }
                    gb[static_cast<std::size_t>(p) * ncols + j] += static_cast<float>(acc);
                }
            }
            break;
        }
        case Op::kAdd:
        case Op::kSub:
        case Op::kMul: {
            const Tensor& a = vin(0);
            const Tensor& b = vin(1);
            const Bcast bc = classify(a, b);
            const std::size_t last = static_cast<std::size_t>(a.shape.back());
            auto& ga = gin(0);
            auto& gb = gin(1);
            for (std::size_t i = 0; i < a.numel(); ++i) {
                const std::size_t bi = b_index(bc, i, last);
                switch (n.op) {
                    case Op::kAdd:
                        ga[i] += g[i];
                        gb[bi] += g[i];
                        break;
                    case Op::kSub:
                        ga[i] += g[i];
                        gb[bi] -= g[i];
                        break;
                    case Op::kMul:
                        ga[i] += g[i] * b.values[bi];
                        gb[bi] += g[i] * a.values[i];
                        break;
                    default: break;
                }
            }
            break;
        }
        case Op::kSigmoid: {
            auto& ga = gin(0);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const float s = n.value.values[i];
                ga[i] += g[i] * s * (1.0f - s);
            }
            break;
        }
        case Op::kTanh: {
            auto& ga = gin(0);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const float t = n.value.values[i];
                ga[i] += g[i] * (1.0f - t * t);
            }
            break;
        }
        case Op::kRelu: {
            auto& ga = gin(0);
            const Tensor& x = vin(0);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (x.values[i] > 0.0f) ga[i] += g[i];
            }
            break;
        }
        case Op::kExp: {
            auto& ga = gin(0);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value.values[i];
            break;
        }
        case Op::kLog: {
            auto& ga = gin(0);
            const Tensor& x = vin(0);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x.values[i];
            break;
        }
        case Op::kSoftmax: {
            auto& ga = gin(0);
            const std::size_t v = static_cast<std::size_t>(n.value.shape.back());
            for (std::size_t base = 0; base < g.size(); base += v) {
                double dot = 0.0;
                for (std::size_t i = 0; i < v; ++i) {
                    dot += static_cast<double>(g[base + i]) *
                           static_cast<double>(n.value.values[base + i]);
                }
                for (std::size_t i = 0; i < v; ++i) {
                    ga[base + i] += n.value.values[base + i] *
                                    (g[base + i] - static_cast<float>(dot));
                }
            }
            break;
        }
        case Op::kEmbed: {
            auto& ga = gin(0);
            const int d = n.value.dim(0);
            const std::size_t base = static_cast<std::size_t>(n.i0) * d;
            for (int i = 0; i < d; ++i) ga[base + i] += g[static_cast<std::size_t>(i)];
            break;
        }
        case Op::kConcat: {
            auto& ga = gin(0);
            auto& gb = gin(1);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[static_cast<std::size_t>(n.i0) + i];
            break;
        }
        case Op::kReshape: {
            auto& ga = gin(0);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            break;
        }
        case Op::kSlice: {
            auto& ga = gin(0);
            for (int i = 0; i < n.i1; ++i) {
                ga[static_cast<std::size_t>(n.i0 + i)] += g[static_cast<std::size_t>(i)];
            }
            break;
        }
        case Op::kPick:
            gin(0)[static_cast<std::size_t>(n.i0)] += g[0];
            break;
        case Op::kSum: {
            auto& ga = gin(0);
            for (float& v : ga) v += g[0];
            break;
        }
        case Op::kScale: {
            auto& ga = gin(0);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.c;
            break;
        }
        case Op::kClampMin: {
            auto& ga = gin(0);
            const Tensor& x = vin(0);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (x.values[i] > n.c) ga[i] += g[i];
            }
            break;
        }
        case Op::kConv2d: {
            const Tensor& img = vin(0);
            const Tensor& w = vin(1);
            auto& gimg = gin(0);
            auto& gw = gin(1);
            auto& gb = gin(2);
            const int stride = n.i0;
            const int h = img.dim(0), wd = img.dim(1), cin = img.dim(2), cout = w.dim(0);
            const int ho = n.value.dim(0), wo = n.value.dim(1);
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox) {
                    for (int o = 0; o < cout; ++o) {
                        const float go =
                            g[(static_cast<std::size_t>(oy) * wo + ox) * cout + o];
                        if (go == 0.0f) continue;
                        gb[static_cast<std::size_t>(o)] += go;
                        for (int ky = 0; ky < 3; ++ky) {
                            const int iy = oy * stride + ky - 1;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int ix = ox * stride + kx - 1;
                                if (ix < 0 || ix >= wd) continue;
                                const std::size_t ib =
                                    (static_cast<std::size_t>(iy) * wd + ix) * cin;
                                const std::size_t wb =
                                    ((static_cast<std::size_t>(o) * 3 + ky) * 3 + kx) * cin;
                                for (int ci = 0; ci < cin; ++ci) {
                                    gimg[ib + ci] += go * w.values[wb + ci];
                                    gw[wb + ci] += go * img.values[ib + ci];
                                }
                            }
                        }
                    }
                }
            }
            break;
        }
        case Op::kMaxpool2: {
            auto& ga = gin(0);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[static_cast<std::size_t>(n.arg_idx[i])] += g[i];
            }
            break;
        }
    }
}

void Graph::backward(NodeId loss) {
    Node& ln = nodes_[static_cast<std::size_t>(loss)];
    if (value(loss).numel() != 1) {
        throw DimensionError("backward requires a scalar loss node, got " +
                             value(loss).shape_str());
    }
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        nodes_[i].grad.assign(value(static_cast<NodeId>(i)).numel(), 0.0f);
    }
    ln.grad[0] = 1.0f;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        backprop(nodes_[i]);
    }
    for (Node& n : nodes_) {
        if (n.op == Op::kParam) {
            n.bound->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.bound->grad[i] += n.grad[i];
        }
    }
}

}  // namespace capforge
