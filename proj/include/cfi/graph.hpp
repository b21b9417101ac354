#pragma once

#include "cfi/flow.hpp"

namespace cfi {

// Flat computation-graph export of a flow's latent->data map, for consumption by
// external optimization tooling. Ops are limited to a small named set; anything a
// coupling block does is expressed through them:
//   matmul  out = W * stack(inputs) (+ b). "select" marks pure 0/1 row-selection.
//   relu / softplus              elementwise
//   add-const                    out = in + value
//   clip                         out = min(max(in, lo), hi)
//   scatter                      out = fill * ones(size); out[idx[j]] = in[j]
//   elementwise-mul              out = in0 .* in1
//   add                          out = in0; out[idx[j]] += in1[j] (plain in0+in1 if idx empty)
//   affine                       out = in / scale - shift  (the fixed data de-scaling)
// The input masking (A1) is folded into the first conditioner matmul's weights and the
// scale/translation split off the conditioner output is done by two selection matmuls,
// so each block lowers to: 2 selections + one matmul per dense layer + one relu per
// hidden layer + softplus + add-const + clip + scatter + mul + add.
struct GraphNode {
    std::string op;
    std::vector<std::string> inputs;
    std::string output;
    // Payload; which fields apply depends on op.
    Mat W;
    Vec b;
    bool has_b = false;
    bool select = false;
    double value = 0.0;
    double lo = 0.0, hi = 0.0;
    std::vector<int> idx;
    int size = 0;
    double fill = 0.0;
    double scale = 1.0;
    Vec shift;
};

struct GraphVar {
    std::string name;
    int dim = 0;
};

struct ConstraintGraph {
    std::vector<GraphVar> vars;   // first "l", then "c" when the flow is conditional
    std::vector<GraphNode> nodes; // topological order; last node writes "y"
};

ConstraintGraph export_graph(const ConditionalFlow& f);

// Reference interpreter; must reproduce flow_forward within 1e-10.
Vec eval_graph(const ConstraintGraph& g, const Vec& l, const Vec& c);

std::string graph_to_json(const ConstraintGraph& g);
void save_graph(const ConstraintGraph& g, const std::string& path);

}  // namespace cfi
