#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "refpaint/tensor.hpp"

// Minimal reverse-mode autodiff over dense double tensors. A Graph records
// every op in creation order; backward() walks the tape in reverse.
namespace refpaint::ag {

class Graph;

class Var {
public:
    Var() = default;

    bool defined() const noexcept { return graph_ != nullptr; }
    int id() const noexcept { return id_; }
    Graph& graph() const noexcept { return *graph_; }

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;

private:
    friend class Graph;
    Var(Graph* g, int id) : graph_(g), id_(id) {}

    Graph* graph_ = nullptr;
    int id_ = -1;
};

class Graph {
public:
    using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

    /// With `grad_enabled == false` nothing is retained for backward.
    explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool grad_enabled() const noexcept { return grad_enabled_; }

    /// Constant input; never receives a gradient.
    Var constant(Tensor value);
    /// Leaf that accumulates a gradient (when gradients are enabled).
    Var leaf(Tensor value);

    /// Seeds d(out)/d(out) = 1 for a single-element `out` and propagates.
    void backward(const Var& out);

    /// Accumulated gradient; an all-zero tensor if nothing flowed in.
    Tensor grad(const Var& v) const;

    // Op-author interface.
    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    Tensor& grad_buffer(int id);
    bool any_requires_grad(std::initializer_list<Var> inputs) const;
    Var record(Tensor value, bool requires_grad, BackwardFn fn);

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    bool grad_enabled_;
};

// Elementwise / structural ops.
Var add(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var silu(const Var& x);
Var reshape(const Var& x, Shape shape);

/// x[N,C,H,W] * m, with constant m of shape [N|1, 1, H, W] broadcast over channels.
Var mul_spatial(const Var& x, const Tensor& m);
/// Concatenate [N,Ca,H,W] and [N,Cb,H,W] along channels.
Var concat_channels(const Var& a, const Var& b);
/// x[N,C,H,W] + v[N,C] broadcast over space.
Var add_channel_bias(const Var& x, const Var& v);
Var upsample_nearest2x(const Var& x);

/// y = x W^T + b for x[N,in], w[out,in], b[out] (b may be undefined).
Var linear(const Var& x, const Var& w, const Var& b);

/// 2-D convolution, x[N,Ci,H,W], w[Co,Ci,k,k], b[Co] (b may be undefined).
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps = 1e-5);

/// Tokens ctx[N,D,L] scaled per token by constant keep[N*L].
Var mul_tokens(const Var& ctx, std::span<const double> keep);

/// Single-head cross-attention with residual:
///   out = h + Wv ctx softmax_valid((Wq q)^T (Wk ctx) / sqrt(dk))^T
/// h,q: [N,C,H,W]; ctx: [N,D,L]; valid: N*L flags; wq,wk: [dk,C],[dk,D]; wv: [C,D].
/// Rows with no valid token contribute nothing (out == h).
Var cross_attention(const Var& h, const Var& q, const Var& ctx, std::span<const std::uint8_t> valid,
                    const Var& wq, const Var& wk, const Var& wv);

/// Mean squared difference against a constant target; returns a [1] tensor.
Var mse(const Var& pred, const Tensor& target);

}  // namespace refpaint::ag
