#pragma once

#include "mom/tensor.hpp"

#include <functional>
#include <vector>

namespace mom
{

class Rng;

/// Handle to a node of a Graph.
struct Var
{
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the tape itself is a
/// topological order and `backward` simply walks it in reverse. A Graph is single-use
/// and single-threaded; build one per sequence.
class Graph
{
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Constant input; receives no gradient.
    Var constant(Tensor value);
    /// Leaf that reads `value` in place (must outlive the graph). Frozen leaves take part in
    /// the forward pass but accumulate no gradient.
    Var leaf(const Tensor& value, bool trainable = true);

    const Tensor& value(Var v) const;
    /// Gradient of the last `backward` target w.r.t. `v` (zero tensor if unreached).
    const Tensor& grad(Var v);
    double scalar(Var v) const { return value(v).data.at(0); }

    /// Seeds d(out)/d(out) = 1 for a 1×1 `out` and propagates to every node.
    void backward(Var out);

    // Shape-preserving elementwise ops.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var add_const(Var a, const Tensor& c);
    Var mul_const(Var a, const Tensor& c);
    Var exp(Var a);
    Var log(Var a);
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var relu(Var a);
    Var gelu(Var a);
    Var minimum(Var a, Var b);
    /// Clamp with zero gradient outside [lo, hi].
    Var clamp(Var a, double lo, double hi);
    Var dropout(Var a, double p, Rng& rng);

    // Linear algebra.
    Var matmul(Var a, Var b);
    /// a · bᵀ
    Var matmul_nt(Var a, Var b);
    /// x · w + bias (bias is 1×n, broadcast over rows).
    Var linear(Var x, Var w, Var bias);
    Var add_row(Var a, Var row);
    /// Multiplies row r of `a` by w(r, 0).
    Var scale_rows(Var a, Var w);

    // Shape manipulation and reductions.
    Var slice_rows(Var a, int start, int count);
    Var slice_cols(Var a, int start, int count);
    Var concat_rows(const std::vector<Var>& parts);
    Var gather_rows(Var table, const std::vector<int>& rows);
    Var sum(Var a);
    Var mean(Var a);
    Var mean_rows(Var a); // 1×cols average over rows
    Var mean_cols(Var a); // rows×1 average over cols
    Var sum_cols(Var a);  // rows×1

    // Normalisation and probability.
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
    Var softmax_rows(Var a);
    Var log_softmax_rows(Var a);
    /// Row-wise softmax restricted to entries where mask is non-zero; others output 0.
    Var masked_softmax_rows(Var a, const Tensor& mask);
    Var l2_normalize_rows(Var a, double eps = 1e-12);

    /// Multi-head causal self-attention over packed [q | k | v] columns (T × 3d) → T × d.
    Var causal_attention(Var qkv, int n_heads);

    /// Σ_t weight[t] · (−log softmax(logits_t)[target[t]]) as a 1×1 node.
    Var weighted_nll(Var logits, const std::vector<int>& targets, const std::vector<double>& weights);
    /// log softmax(logits_{rows[i]})[targets[i]] for each i, as an n×1 column.
    Var token_logprobs(Var logits, const std::vector<int>& rows, const std::vector<int>& targets);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node
    {
        Tensor own;
        const Tensor* external = nullptr;
        Tensor grad;
        bool needs_grad = false;
        std::function<void(Graph&, int)> backward;
        const Tensor& value() const { return external ? *external : own; }
    };

    Var push(Tensor value, bool needs_grad, std::function<void(Graph&, int)> backward);
    Tensor& grad_ref(int id);
    bool needs(Var v) const { return nodes_[v.id].needs_grad; }

    std::vector<Node> nodes_;
};

} // namespace mom
