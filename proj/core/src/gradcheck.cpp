#include "capforge/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace capforge {

namespace {

double eval_loss(const std::function<NodeId(Graph&)>& build) {
    Graph g;
    NodeId loss = build(g);
    return static_cast<double>(g.value(loss).values[0]);
}

}  // namespace

double finite_diff_check(const std::function<NodeId(Graph&)>& build,
                         const std::vector<Tensor*>& params, float eps) {
    for (Tensor* p : params) p->zero_grad();
    {
        Graph g;
        NodeId loss = build(g);
        g.backward(loss);
    }
    double worst = 0.0;
    for (Tensor* p : params) {
        for (std::size_t i = 0; i < p->numel(); ++i) {
            const float orig = p->values[i];
            // Use the actually representable perturbations so the divisor
            // matches what the forward pass saw.
            const float xp = orig + eps;
            const float xm = orig - eps;
            p->values[i] = xp;
            const double fp = eval_loss(build);
            p->values[i] = xm;
            const double fm = eval_loss(build);
            p->values[i] = orig;
            const double fd = (fp - fm) / (static_cast<double>(xp) - static_cast<double>(xm));
            const double an = static_cast<double>(p->grad[i]);
            const double err = std::abs(fd - an) /
                               std::max({1.0, std::abs(fd), std::abs(an)});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

double finite_diff_check(const std::function<NodeId(Graph&, NodeId)>& f, Tensor x, float eps) {
    auto build = [&](Graph& g) { return f(g, g.param(x)); };
    return finite_diff_check(build, {&x}, eps);
}

}  // namespace capforge
