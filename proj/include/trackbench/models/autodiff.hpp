#pragma once

#include "trackbench/core/tensor.hpp"
#include "trackbench/core/types.hpp"
#include "trackbench/models/param_store.hpp"

#include <functional>
#include <string>
#include <vector>

namespace trackbench::models::ad {

/// Handle to a node of a Graph.
struct Var {
    int id = -1;
};

/// Tape for one forward pass. Nodes are appended in evaluation order, so reverse
/// insertion order is a valid reverse topological order. backward() may run once.
class Graph {
public:
    explicit Graph(ParamStore * params = nullptr) : params_(params) {}

    Var constant(Tensor value);
    /// Leaf bound to a stored parameter; backward() accumulates into its gradient buffer.
    Var param(std::string const & name);

    [[nodiscard]] Tensor const & value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
    [[nodiscard]] bool requires_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).requires_grad; }
    /// Gradient buffer of a node, allocated on first use.
    Tensor & grad(Var v);

    using Backward = std::function<void(Graph &, Var self)>;
    /// Appends an op result. `backward` reads grad(self) and accumulates into its inputs.
    Var record(Tensor value, std::vector<Var> const & inputs, Backward backward);

    /// Seeds d(loss)/d(loss) = 1 and propagates. Throws StateError when called twice.
    void backward(Var loss);

    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        Backward backward;
        std::string param_name;
        bool requires_grad = false;
    };

    ParamStore * params_;
    std::vector<Node> nodes_;
    bool consumed_ = false;
};

/// 2-D convolution on a (C x H x W) input with (O x C x k x k) weights, zero padding.
Var conv2d(Graph & g, Var input, Var weight, Var bias, int stride, int padding);
/// 1x1 convolution: (O x C) weights applied at every cell of a (C x H x W) input; bias optional.
Var conv1x1(Graph & g, Var input, Var weight, Var bias);
/// Rows x = (N x I) -> (N x O) with (O x I) weights and optional bias (pass Var{} for none).
Var linear(Graph & g, Var x, Var weight, Var bias);

Var relu(Graph & g, Var x);
Var sigmoid(Graph & g, Var x);
Var tanh(Graph & g, Var x);
Var add(Graph & g, Var a, Var b);
Var mul(Graph & g, Var a, Var b);
Var sum(Graph & g, Var x);

/// Feature vectors of the given cells of a (C x H x W) tensor, as an (N x C) matrix.
Var gather_cells(Graph & g, Var x, std::vector<GridIndex> const & cells);
/// Channel-axis concatenation of (A x H x W) and (B x H x W).
Var concat_channels(Graph & g, Var a, Var b);
/// Column-wise concatenation of (N x A) and (N x B).
Var concat_cols(Graph & g, Var a, Var b);
/// Columns [begin, begin + count) of an (N x C) matrix.
Var slice_cols(Graph & g, Var x, int begin, int count);

/// Exponentiates the diversity entries of a prediction layout with 4 values per horizon
/// (dx, dy, b_at, b_ct). `axis` 0: channel axis of (4H x S x S); axis 1: columns of (N x 4H).
Var positive_diversity(Graph & g, Var x, int axis);

} // namespace trackbench::models::ad
