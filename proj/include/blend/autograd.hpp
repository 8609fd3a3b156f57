#pragma once

// Tape-based reverse-mode differentiation over single-sample tensors.
//
// A Graph owns every intermediate produced during one forward pass. Ops append
// nodes; backward() walks the tape in reverse. Parameter leaves reference the
// tensors of a ParamSet directly, so the ParamSet must outlive the Graph.

#include "blend/params.hpp"
#include "blend/tensor.hpp"

#include <deque>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace blend {

struct Var {
    int id = -1;
    bool valid() const noexcept { return id >= 0; }
};

class Graph {
public:
    using BackwardFn = std::function<void(Graph&, int self)>;

    Var constant(Tensor value);
    Var leaf(Tensor value); // differentiable input, not bound to a ParamSet
    Var param(const ParamSet& ps, const std::string& name, bool trainable = true);

    const Tensor& value(Var v) const { return node(v.id).value(); }
    bool requires_grad(Var v) const { return v.valid() && node(v.id).requires_grad; }
    bool requires_grad(int id) const { return id >= 0 && node(id).requires_grad; }

    /// Gradient of the last backward() target w.r.t. v (zeros when v was unreachable).
    Tensor grad(Var v) const;

    /// Seeds d(target)/d(target) = 1 for a one-element target and propagates.
    void backward(Var target);

    /// Adds gradients of trainable parameters owned by `ps` into `out`.
    void collect_grads(const ParamSet& ps, GradMap& out) const;

    std::size_t size() const noexcept { return nodes_.size(); }

    /// Multiply-accumulates executed by conv and linear forwards so far.
    long long macs() const noexcept { return macs_; }
    void add_macs(long long n) noexcept { macs_ += n; }

    // op-construction interface
    Var record(Tensor value, bool requires_grad, BackwardFn fn);
    const Tensor& value(int id) const { return node(id).value(); }
    Tensor& grad_mut(int id);
    const Tensor& grad_ref(int id) const { return node(id).grad; }

private:
    struct Node {
        Tensor owned;
        const Tensor* external = nullptr;
        Tensor grad;
        bool requires_grad = false;
        BackwardFn backward;
        const ParamSet* owner = nullptr;
        std::string name;

        const Tensor& value() const { return external ? *external : owned; }
    };

    const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
    Node& node(int id) { return nodes_.at(static_cast<std::size_t>(id)); }

    std::deque<Node> nodes_;
    std::map<std::pair<const ParamSet*, std::string>, int> param_nodes_;
    long long macs_ = 0;
};

struct ConvSpec {
    int stride = 1;
    int pad_begin = -1; // -1: "same" padding for stride 1
    int pad_end = -1;
    int dilation = 1;
};

namespace ops {

Var conv2d(Graph& g, Var x, Var weight, Var bias, ConvSpec spec = {});
/// Transposed convolution; weight layout (in_c, out_c, k, k). Output size is
/// (in - 1) * stride - 2 * pad + k + output_padding.
Var conv_transpose2d(Graph& g, Var x, Var weight, Var bias, int stride, int pad, int output_padding);

Var add(Graph& g, Var a, Var b);
Var sub(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var add_n(Graph& g, const std::vector<Var>& xs);
Var scale(Graph& g, Var a, double s);
Var affine(Graph& g, Var a, double s, double shift); // s * a + shift

Var leaky_relu(Graph& g, Var a, double slope);
Var sigmoid(Graph& g, Var a);
Var tanh(Graph& g, Var a);
Var softplus(Graph& g, Var a);
Var square(Graph& g, Var a);

/// map (1, H, W) broadcast over the channels of feat (C, H, W)
Var broadcast_mul(Graph& g, Var map, Var feat);
/// feat (C, H, W) with channel c scaled by vec[offset + c]
Var channel_scale(Graph& g, Var feat, Var vec, int offset);
/// every element of feat scaled by vec[index]
Var scale_by_entry(Graph& g, Var feat, Var vec, int index);

Var concat(Graph& g, const std::vector<Var>& xs);
Var pixel_shuffle(Graph& g, Var x, int r);
Var bilinear_resize(Graph& g, Var x, int out_h, int out_w);
Var global_avg_pool(Graph& g, Var x); // (C, H, W) -> (C)
Var linear(Graph& g, Var x, Var weight, Var bias);
/// x holds a rows x cols matrix row-major; softmax runs down each column
Var softmax_columns(Graph& g, Var x, int rows, int cols);

Var mean(Graph& g, Var a);                    // -> (1)
Var l1_loss(Graph& g, Var a, Var b);          // mean |a - b|
Var weighted_sum(Graph& g, Var a, const Tensor& w); // sum a * w, -> (1)

} // namespace ops

} // namespace blend
