#pragma once

#include <cstddef>
#include <vector>

#include "qase/tensor.hpp"

namespace qase {

// Reverse-mode autodiff over a recorded op sequence. A Tape owns the whole
// graph of one forward pass; nodes are appended in topological order and one
// backward() walk fills gradients for every node that requires them.
class Tape {
public:
    struct Var {
        int id = -1;
    };

    // Leaves. leaf() honors t.requires_grad; constant() never tracks.
    Var leaf(Tensor t);
    Var constant(Tensor t);

    // (m,k) x (k,n) -> (m,n)
    Var matmul(Var a, Var b);
    // elementwise, same shape
    Var add(Var a, Var b);
    Var mul(Var a, Var b);
    // (m,n) + (1,n), bias broadcast over rows
    Var add_row(Var a, Var bias);
    Var scale(Var a, double c);
    Var relu(Var a);
    // softmax along the last axis, max-subtracted
    Var softmax_rows(Var a);
    // -(1/N) sum_i log(max(p[i,t_i], 1e-12)); probs rows must sum to ~1
    Var cross_entropy(Var probs, const std::vector<int>& targets);
    Var sum(Var a);
    Var mean_rows(Var a);                   // (m,n) -> (1,n)
    Var replicate_row(Var a, std::size_t m);  // (1,n) -> (m,n)
    Var slice_rows(Var a, std::size_t r0, std::size_t r1);
    Var slice_cols(Var a, std::size_t c0, std::size_t c1);
    Var concat_cols(const std::vector<Var>& parts);
    Var transpose(Var a);
    Var gather_rows(Var table, std::vector<int> ids);
    // rowwise layer norm with affine gain/bias, both (1,n); eps = 1e-5
    Var layer_norm(Var x, Var gain, Var bias);

    const Tensor& value(Var v) const;
    const Tensor& grad(Var v) const;  // valid after backward()

    // Populates gradients of everything reachable from loss. loss must be
    // scalar; a second call without reset_grads() is rejected.
    void backward(Var loss);
    void reset_grads();

    std::size_t size() const { return nodes_.size(); }

private:
    enum class Op {
        Leaf,
        MatMul,
        Add,
        Mul,
        AddRow,
        Scale,
        Relu,
        Softmax,
        CrossEntropy,
        Sum,
        MeanRows,
        ReplicateRow,
        SliceRows,
        SliceCols,
        ConcatCols,
        Transpose,
        GatherRows,
        LayerNorm,
    };
    struct Node {
        Op op;
        std::vector<int> in;
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        double c = 0.0;            // Scale factor / slice bounds
        std::size_t a = 0, b = 0;  // op-specific extents
        std::vector<int> ids;      // CrossEntropy targets / GatherRows indices
        std::vector<double> aux;   // cached stats (layer norm mean & inv-std)
    };

    Var push(Node n);
    Node& node(Var v);
    const Node& node(Var v) const;
    void backward_node(Node& n);

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

using Var = Tape::Var;

}  // namespace qase
