#pragma once

#include <functional>
#include <vector>

#include "capforge/graph.hpp"
#include "capforge/tensor.hpp"

namespace capforge {

/// Central-difference gradient verification.
///
/// `build` must construct a scalar loss on the given graph, binding each
/// tensor in `params` via Graph::param. The builder is invoked repeatedly and
/// must be deterministic. Returns the worst per-coordinate error
/// |fd - analytic| / max(1, |fd|, |analytic|) over all parameter entries.
double finite_diff_check(const std::function<NodeId(Graph&)>& build,
                         const std::vector<Tensor*>& params, float eps = 1e-3f);

/// Single-tensor convenience: `f` maps (graph, leaf node of x) to a scalar
/// loss node.
double finite_diff_check(const std::function<NodeId(Graph&, NodeId)>& f, Tensor x,
                         float eps = 1e-3f);

}  // namespace capforge
