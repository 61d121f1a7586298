#pragma once

#include <cstddef>
#include <vector>

#include "capforge/tensor.hpp"

namespace capforge {

using NodeId = int;

/// Append-only reverse-mode tape. Nodes reference only earlier nodes, so the
/// append order is already topological and `backward` walks it in exact
/// reverse. A Graph is confined to one thread; tensors it produces are plain
/// values and may be shared freely.
class Graph {
public:
    /// Constant leaf. Receives a gradient buffer like any node but is not
    /// flushed anywhere.
    NodeId input(Tensor t);

    /// Constant leaf that borrows the caller's tensor instead of copying it.
    /// The tensor must outlive the graph.
    NodeId ref_input(const Tensor& t);

    /// Parameter leaf bound to an external tensor; `backward` accumulates the
    /// node gradient into `t.grad`. The tensor must outlive the graph.
    NodeId param(Tensor& t);

    // (m,k)x(k,n)->(m,n); a rank-1 right operand (k) yields (m).
    NodeId matmul(NodeId a, NodeId b);

    // Binary elementwise; equal shapes, or b broadcast as a trailing vector
    // (b.shape == {last dim of a}) or scalar.
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);

    NodeId sigmoid(NodeId x);
    NodeId tanh(NodeId x);
    NodeId relu(NodeId x);
    NodeId exp(NodeId x);
    NodeId log(NodeId x);  // throws on non-positive values

    // Softmax over the last axis, max-subtracted for stability.
    NodeId softmax(NodeId logits);

    // Row selection from a (V,D) table; gradient accumulates into that row only.
    NodeId embed_lookup(NodeId table, int id);

    NodeId concat(NodeId a, NodeId b);               // rank-1 operands
    NodeId reshape(NodeId x, std::vector<int> shape);  // same element count
    NodeId slice(NodeId x, int start, int len);      // rank-1
    NodeId pick(NodeId x, int index);                // rank-1 -> scalar
    NodeId sum(NodeId x);                            // -> scalar
    NodeId scale(NodeId x, float c);
    NodeId clamp_min(NodeId x, float floor);         // gradient passes only where x > floor

    // 3x3 convolution, padding 1, given stride. Image layout (H,W,Cin),
    // weights (Cout,3,3,Cin), bias (Cout).
    NodeId conv2d(NodeId image, NodeId weight, NodeId bias, int stride);
    // 2x2/stride-2 max pooling on (H,W,C); H and W must be even.
    NodeId maxpool2(NodeId image);

    const Tensor& value(NodeId id) const {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        return n.borrow ? *n.borrow : n.value;
    }
    /// Gradient buffer of a node; populated by `backward`.
    const std::vector<float>& grad_of(NodeId id) const {
        return nodes_[static_cast<std::size_t>(id)].grad;
    }

    /// Reverse sweep from a scalar loss node. Populates node gradients and
    /// flushes parameter-leaf gradients into their bound tensors
    /// (accumulating, so zero_grad first when reusing parameters).
    void backward(NodeId loss);

    std::size_t size() const { return nodes_.size(); }

private:
    enum class Op {
        kInput, kParam, kMatmul, kAdd, kSub, kMul, kSigmoid, kTanh, kRelu,
        kExp, kLog, kSoftmax, kEmbed, kConcat, kReshape, kSlice, kPick, kSum,
        kScale, kClampMin, kConv2d, kMaxpool2,
    };

    struct Node {
        Op op;
        std::vector<NodeId> inputs;
        Tensor value;
        std::vector<float> grad;  // sized lazily by backward()
        const Tensor* borrow = nullptr;  // leaf value lives outside the graph
        Tensor* bound = nullptr;  // kParam only: gradient flush target
        int i0 = 0, i1 = 0;       // op-specific (id/start/len/stride/index)
        float c = 0.0f;           // op-specific scalar
        std::vector<int> arg_idx; // kMaxpool2: source index per output element
    };

    NodeId push(Node n);
    NodeId binary(Op op, NodeId a, NodeId b);
    void backprop(Node& n);

    std::vector<Node> nodes_;
};

}  // namespace capforge
