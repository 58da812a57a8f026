#include "refpaint/autograd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "refpaint/error.hpp"

namespace refpaint::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;

void add_into(Tensor& dst, const Tensor& src) {
    MapVec(dst.ptr(), static_cast<Eigen::Index>(dst.size())) +=
        CMapVec(src.ptr(), static_cast<Eigen::Index>(src.size()));
}

void expect_rank(const Var& v, int rank, const char* op) {
    require(v.value().rank() == rank, ErrorKind::shape,
            std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(v.shape()));
}

struct ConvGeom {
    std::int64_t ci, h, w, k, stride, pad, ho, wo;
};

void im2col(const double* x, const ConvGeom& g, double* cols) {
    const std::int64_t hw_out = g.ho * g.wo;
    for (std::int64_t c = 0; c < g.ci; ++c) {
        const double* xc = x + c * g.h * g.w;
        for (std::int64_t ki = 0; ki < g.k; ++ki) {
            for (std::int64_t kj = 0; kj < g.k; ++kj) {
                double* row = cols + ((c * g.k + ki) * g.k + kj) * hw_out;
                for (std::int64_t oy = 0; oy < g.ho; ++oy) {
                    const std::int64_t iy = oy * g.stride - g.pad + ki;
                    double* out = row + oy * g.wo;
                    if (iy < 0 || iy >= g.h) {
                        std::fill(out, out + g.wo, 0.0);
                        continue;
                    }
                    const double* xr = xc + iy * g.w;
                    if (g.stride == 1) {
                        const std::int64_t shift = kj - g.pad;
                        const std::int64_t lo = std::min<std::int64_t>(std::max<std::int64_t>(0, -shift), g.wo);
                        const std::int64_t hi = std::min<std::int64_t>(g.wo, g.w - shift);
                        std::fill(out, out + lo, 0.0);
                        for (std::int64_t ox = lo; ox < hi; ++ox) {
                            out[ox] = xr[ox + shift];
                        }
                        std::fill(out + std::max(hi, lo), out + g.wo, 0.0);
                    } else {
                        for (std::int64_t ox = 0; ox < g.wo; ++ox) {
                            const std::int64_t ix = ox * g.stride - g.pad + kj;
                            out[ox] = (ix >= 0 && ix < g.w) ? xr[ix] : 0.0;
                        }
                    }
                }
            }
        }
    }
}

void col2im_add(const double* cols, const ConvGeom& g, double* dx) {
    const std::int64_t hw_out = g.ho * g.wo;
    for (std::int64_t c = 0; c < g.ci; ++c) {
        double* dxc = dx + c * g.h * g.w;
        for (std::int64_t ki = 0; ki < g.k; ++ki) {
            for (std::int64_t kj = 0; kj < g.k; ++kj) {
                const double* row = cols + ((c * g.k + ki) * g.k + kj) * hw_out;
                for (std::int64_t oy = 0; oy < g.ho; ++oy) {
                    const std::int64_t iy = oy * g.stride - g.pad + ki;
                    if (iy < 0 || iy >= g.h) {
                        continue;
                    }
                    double* dr = dxc + iy * g.w;
                    const double* in = row + oy * g.wo;
                    for (std::int64_t ox = 0; ox < g.wo; ++ox) {
                        const std::int64_t ix = ox * g.stride - g.pad + kj;
                        if (ix >= 0 && ix < g.w) {
                            dr[ix] += in[ox];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

const Tensor& Var::value() const {
    return graph_->value(id_);
}

bool Var::requires_grad() const {
    return graph_->needs_grad(id_);
}

Var Graph::constant(Tensor value) {
    return record(std::move(value), false, nullptr);
}

Var Graph::leaf(Tensor value) {
    return record(std::move(value), grad_enabled_, nullptr);
}

Var Graph::record(Tensor value, bool requires_grad, BackwardFn fn) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad && grad_enabled_;
    if (node.requires_grad) {
        node.backward = std::move(fn);
    }
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

bool Graph::any_requires_grad(std::initializer_list<Var> inputs) const {
    if (!grad_enabled_) {
        return false;
    }
    return std::any_of(inputs.begin(), inputs.end(),
                       [this](const Var& v) { return v.defined() && needs_grad(v.id()); });
}

Tensor& Graph::grad_buffer(int id) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (node.grad.size() != node.value.size() || node.grad.shape() != node.value.shape()) {
        node.grad = Tensor::zeros(node.value.shape());
    }
    return node.grad;
}

void Graph::backward(const Var& out) {
    require(grad_enabled_, ErrorKind::parameter, "backward on a graph without gradients");
    require(out.value().size() == 1, ErrorKind::shape, "backward expects a scalar output");
    if (!needs_grad(out.id())) {
        return;
    }
    grad_buffer(out.id())[0] += 1.0;
    for (int id = out.id(); id >= 0; --id) {
        auto& node = nodes_[static_cast<std::size_t>(id)];
        if (!node.requires_grad || !node.backward || node.grad.empty()) {
            continue;
        }
        node.backward(*this, node.grad);
    }
}

Tensor Graph::grad(const Var& v) const {
    const auto& node = nodes_[static_cast<std::size_t>(v.id())];
    if (node.grad.empty() && !node.value.empty()) {
        return Tensor::zeros(node.value.shape());
    }
    return node.grad;
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "add");
    Graph& g = a.graph();
    Tensor out = a.value();
    add_into(out, b.value());
    const int ia = a.id(), ib = b.id();
    return g.record(std::move(out), g.any_requires_grad({a, b}), [ia, ib](Graph& gr, const Tensor& og) {
        if (gr.needs_grad(ia)) add_into(gr.grad_buffer(ia), og);
        if (gr.needs_grad(ib)) add_into(gr.grad_buffer(ib), og);
    });
}

Var scale(const Var& a, double s) {
    Graph& g = a.graph();
    Tensor out = a.value();
    for (auto& v : out.storage()) v *= s;
    const int ia = a.id();
    return g.record(std::move(out), g.any_requires_grad({a}), [ia, s](Graph& gr, const Tensor& og) {
        Tensor& ga = gr.grad_buffer(ia);
        for (std::size_t i = 0; i < og.size(); ++i) ga[i] += s * og[i];
    });
}

Var silu(const Var& x) {
    Graph& g = x.graph();
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = xv[i] / (1.0 + std::exp(-xv[i]));
    }
    const int ix = x.id();
    return g.record(std::move(out), g.any_requires_grad({x}), [ix](Graph& gr, const Tensor& og) {
        const Tensor& xv = gr.value(ix);
        Tensor& gx = gr.grad_buffer(ix);
        for (std::size_t i = 0; i < og.size(); ++i) {
            const double s = 1.0 / (1.0 + std::exp(-xv[i]));
            gx[i] += og[i] * s * (1.0 + xv[i] * (1.0 - s));
        }
    });
}

Var reshape(const Var& x, Shape shape) {
    Graph& g = x.graph();
    Tensor out = x.value().reshaped(std::move(shape));
    const int ix = x.id();
    return g.record(std::move(out), g.any_requires_grad({x}), [ix](Graph& gr, const Tensor& og) {
        Tensor& gx = gr.grad_buffer(ix);
        for (std::size_t i = 0; i < og.size(); ++i) gx[i] += og[i];
    });
}

Var mul_spatial(const Var& x, const Tensor& m) {
    expect_rank(x, 4, "mul_spatial");
    const auto& s = x.shape();
    const std::int64_t n = s[0], c = s[1], hw = s[2] * s[3];
    require(m.rank() == 4 && m.dim(1) == 1 && m.dim(2) == s[2] && m.dim(3) == s[3] &&
                (m.dim(0) == n || m.dim(0) == 1),
            ErrorKind::shape, "mul_spatial: mask " + shape_str(m.shape()) + " vs features " + shape_str(s));
    const bool per_item = m.dim(0) == n;
    Graph& g = x.graph();
    Tensor out(s);
    const Tensor& xv = x.value();
    for (std::int64_t b = 0; b < n; ++b) {
        const double* mb = m.ptr() + (per_item ? b * hw : 0);
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const std::int64_t off = (b * c + ch) * hw;
            for (std::int64_t i = 0; i < hw; ++i) out[static_cast<std::size_t>(off + i)] = xv[static_cast<std::size_t>(off + i)] * mb[i];
        }
    }
    const int ix = x.id();
    return g.record(std::move(out), g.any_requires_grad({x}),
                    [ix, m, n, c, hw, per_item](Graph& gr, const Tensor& og) {
                        Tensor& gx = gr.grad_buffer(ix);
                        for (std::int64_t b = 0; b < n; ++b) {
                            const double* mb = m.ptr() + (per_item ? b * hw : 0);
                            for (std::int64_t ch = 0; ch < c; ++ch) {
                                const std::int64_t off = (b * c + ch) * hw;
                                for (std::int64_t i = 0; i < hw; ++i) {
                                    gx[static_cast<std::size_t>(off + i)] += og[static_cast<std::size_t>(off + i)] * mb[i];
                                }
                            }
                        }
                    });
}

Var concat_channels(const Var& a, const Var& b) {
    expect_rank(a, 4, "concat_channels");
    expect_rank(b, 4, "concat_channels");
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    require(sa[0] == sb[0] && sa[2] == sb[2] && sa[3] == sb[3], ErrorKind::shape,
            "concat_channels: " + shape_str(sa) + " vs " + shape_str(sb));
    const std::int64_t n = sa[0], ca = sa[1], cb = sb[1], hw = sa[2] * sa[3];
    Tensor out({n, ca + cb, sa[2], sa[3]});
    for (std::int64_t i = 0; i < n; ++i) {
        std::copy_n(a.value().ptr() + i * ca * hw, ca * hw, out.ptr() + i * (ca + cb) * hw);
        std::copy_n(b.value().ptr() + i * cb * hw, cb * hw, out.ptr() + i * (ca + cb) * hw + ca * hw);
    }
    Graph& g = a.graph();
    const int ia = a.id(), ib = b.id();
    return g.record(std::move(out), g.any_requires_grad({a, b}), [=](Graph& gr, const Tensor& og) {
        for (std::int64_t i = 0; i < n; ++i) {
            const double* src = og.ptr() + i * (ca + cb) * hw;
            if (gr.needs_grad(ia)) {
                double* d = gr.grad_buffer(ia).ptr() + i * ca * hw;
                for (std::int64_t j = 0; j < ca * hw; ++j) d[j] += src[j];
            }
            if (gr.needs_grad(ib)) {
                double* d = gr.grad_buffer(ib).ptr() + i * cb * hw;
                for (std::int64_t j = 0; j < cb * hw; ++j) d[j] += src[ca * hw + j];
            }
        }
    });
}

Var add_channel_bias(const Var& x, const Var& v) {
    expect_rank(x, 4, "add_channel_bias");
    expect_rank(v, 2, "add_channel_bias");
    const auto& s = x.shape();
    require(v.shape()[0] == s[0] && v.shape()[1] == s[1], ErrorKind::shape, "add_channel_bias: shape mismatch");
    const std::int64_t n = s[0], c = s[1], hw = s[2] * s[3];
    Tensor out = x.value();
    for (std::int64_t i = 0; i < n * c; ++i) {
        const double b = v.value()[static_cast<std::size_t>(i)];
        double* o = out.ptr() + i * hw;
        for (std::int64_t j = 0; j < hw; ++j) o[j] += b;
    }
    Graph& g = x.graph();
    const int ix = x.id(), iv = v.id();
    return g.record(std::move(out), g.any_requires_grad({x, v}), [=](Graph& gr, const Tensor& og) {
        if (gr.needs_grad(ix)) add_into(gr.grad_buffer(ix), og);
        if (gr.needs_grad(iv)) {
            Tensor& gv = gr.grad_buffer(iv);
            for (std::int64_t i = 0; i < n * c; ++i) {
                const double* o = og.ptr() + i * hw;
                double acc = 0.0;
                for (std::int64_t j = 0; j < hw; ++j) acc += o[j];
                gv[static_cast<std::size_t>(i)] += acc;
            }
        }
    });
}

Var upsample_nearest2x(const Var& x) {
    expect_rank(x, 4, "upsample_nearest2x");
    const auto& s = x.shape();
    const std::int64_t nc = s[0] * s[1], h = s[2], w = s[3];
    Tensor out({s[0], s[1], 2 * h, 2 * w});
    const Tensor& xv = x.value();
    for (std::int64_t p = 0; p < nc; ++p) {
        for (std::int64_t y = 0; y < 2 * h; ++y) {
            for (std::int64_t z = 0; z < 2 * w; ++z) {
                out[static_cast<std::size_t>((p * 2 * h + y) * 2 * w + z)] =
                    xv[static_cast<std::size_t>((p * h + y / 2) * w + z / 2)];
            }
        }
    }
    Graph& g = x.graph();
    const int ix = x.id();
    return g.record(std::move(out), g.any_requires_grad({x}), [=](Graph& gr, const Tensor& og) {
        Tensor& gx = gr.grad_buffer(ix);
        for (std::int64_t p = 0; p < nc; ++p) {
            for (std::int64_t y = 0; y < 2 * h; ++y) {
                for (std::int64_t z = 0; z < 2 * w; ++z) {
                    gx[static_cast<std::size_t>((p * h + y / 2) * w + z / 2)] +=
                        og[static_cast<std::size_t>((p * 2 * h + y) * 2 * w + z)];
                }
            }
        }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    expect_rank(x, 2, "linear");
    expect_rank(w, 2, "linear");
    const std::int64_t n = x.shape()[0], in = x.shape()[1], out_dim = w.shape()[0];
    require(w.shape()[1] == in, ErrorKind::shape, "linear: weight " + shape_str(w.shape()) + " vs input " + shape_str(x.shape()));
    if (b.defined()) {
        require(b.value().size() == static_cast<std::size_t>(out_dim), ErrorKind::shape, "linear: bias size");
    }
    Tensor out({n, out_dim});
    MapMat(out.ptr(), n, out_dim).noalias() =
        CMapMat(x.value().ptr(), n, in) * CMapMat(w.value().ptr(), out_dim, in).transpose();
    if (b.defined()) {
        MapMat(out.ptr(), n, out_dim).rowwise() += CMapVec(b.value().ptr(), out_dim).transpose();
    }
    Graph& g = x.graph();
    const int ix = x.id(), iw = w.id(), ib = b.defined() ? b.id() : -1;
    const bool rg = g.any_requires_grad({x, w}) || (b.defined() && g.any_requires_grad({b}));
    return g.record(std::move(out), rg, [=](Graph& gr, const Tensor& og) {
        CMapMat dy(og.ptr(), n, out_dim);
        if (gr.needs_grad(ix)) {
            MapMat(gr.grad_buffer(ix).ptr(), n, in).noalias() += dy * CMapMat(gr.value(iw).ptr(), out_dim, in);
        }
        if (gr.needs_grad(iw)) {
            MapMat(gr.grad_buffer(iw).ptr(), out_dim, in).noalias() += dy.transpose() * CMapMat(gr.value(ix).ptr(), n, in);
        }
        if (ib >= 0 && gr.needs_grad(ib)) {
            MapVec(gr.grad_buffer(ib).ptr(), out_dim) += dy.colwise().sum().transpose();
        }
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    expect_rank(x, 4, "conv2d");
    expect_rank(w, 4, "conv2d");
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    require(ws[1] == xs[1] && ws[2] == ws[3], ErrorKind::shape,
            "conv2d: weight " + shape_str(ws) + " vs input " + shape_str(xs));
    require(stride >= 1 && pad >= 0, ErrorKind::parameter, "conv2d: bad stride/pad");
    ConvGeom geom{xs[1], xs[2], xs[3], ws[2], stride, pad, 0, 0};
    geom.ho = (geom.h + 2 * pad - geom.k) / stride + 1;
    geom.wo = (geom.w + 2 * pad - geom.k) / stride + 1;
    require(geom.ho > 0 && geom.wo > 0, ErrorKind::shape, "conv2d: kernel larger than input");
    const std::int64_t n = xs[0], co = ws[0];
    const std::int64_t kdim = geom.ci * geom.k * geom.k;
    const std::int64_t hw_out = geom.ho * geom.wo;
    const std::int64_t in_size = geom.ci * geom.h * geom.w;
    const bool direct = geom.k == 1 && stride == 1 && pad == 0;
    if (b.defined()) {
        require(b.value().size() == static_cast<std::size_t>(co), ErrorKind::shape, "conv2d: bias size");
    }

    Tensor out({n, co, geom.ho, geom.wo});
    std::vector<double> cols(direct ? 0 : static_cast<std::size_t>(kdim * hw_out));
    CMapMat wm(w.value().ptr(), co, kdim);
    for (std::int64_t i = 0; i < n; ++i) {
        const double* xi = x.value().ptr() + i * in_size;
        const double* colp = xi;
        if (!direct) {
            im2col(xi, geom, cols.data());
            colp = cols.data();
        }
        MapMat oi(out.ptr() + i * co * hw_out, co, hw_out);
        oi.noalias() = wm * CMapMat(colp, kdim, hw_out);
        if (b.defined()) {
            oi.colwise() += CMapVec(b.value().ptr(), co);
        }
    }

    Graph& g = x.graph();
    const int ix = x.id(), iw = w.id(), ib = b.defined() ? b.id() : -1;
    const bool rg = g.any_requires_grad({x, w}) || (b.defined() && g.any_requires_grad({b}));
    return g.record(std::move(out), rg, [=](Graph& gr, const Tensor& og) {
        const bool gx = gr.needs_grad(ix);
        const bool gw = gr.needs_grad(iw);
        const bool gb = ib >= 0 && gr.needs_grad(ib);
        std::vector<double> colbuf(direct ? 0 : static_cast<std::size_t>(kdim * hw_out));
        std::vector<double> dcols(direct || !gx ? 0 : static_cast<std::size_t>(kdim * hw_out));
        CMapMat wmat(gr.value(iw).ptr(), co, kdim);
        for (std::int64_t i = 0; i < n; ++i) {
            CMapMat dy(og.ptr() + i * co * hw_out, co, hw_out);
            const double* xi = gr.value(ix).ptr() + i * in_size;
            if (gw) {
                const double* colp = xi;
                if (!direct) {
                    im2col(xi, geom, colbuf.data());
                    colp = colbuf.data();
                }
                MapMat(gr.grad_buffer(iw).ptr(), co, kdim).noalias() += dy * CMapMat(colp, kdim, hw_out).transpose();
            }
            if (gb) {
                MapVec(gr.grad_buffer(ib).ptr(), co) += dy.rowwise().sum();
            }
            if (gx) {
                double* dxi = gr.grad_buffer(ix).ptr() + i * in_size;
                if (direct) {
                    MapMat(dxi, kdim, hw_out).noalias() += wmat.transpose() * dy;
                } else {
                    MapMat(dcols.data(), kdim, hw_out).noalias() = wmat.transpose() * dy;
                    col2im_add(dcols.data(), geom, dxi);
                }
            }
        }
    });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps) {
    expect_rank(x, 4, "group_norm");
    const auto& s = x.shape();
    const std::int64_t n = s[0], c = s[1], hw = s[2] * s[3];
    require(groups >= 1 && c % groups == 0, ErrorKind::shape,
            "group_norm: " + std::to_string(c) + " channels not divisible into " + std::to_string(groups) + " groups");
    require(gamma.value().size() == static_cast<std::size_t>(c) && beta.value().size() == static_cast<std::size_t>(c),
            ErrorKind::shape, "group_norm: affine size");
    const std::int64_t cg = c / groups;
    const std::int64_t m = cg * hw;
    Tensor xhat(s);
    std::vector<double> rstd(static_cast<std::size_t>(n * groups));
    const Tensor& xv = x.value();
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t gi = 0; gi < groups; ++gi) {
            const std::int64_t off = (i * c + gi * cg) * hw;
            const double* p = xv.ptr() + off;
            double mean = 0.0;
            for (std::int64_t j = 0; j < m; ++j) mean += p[j];
            mean /= static_cast<double>(m);
            double var = 0.0;
            for (std::int64_t j = 0; j < m; ++j) var += (p[j] - mean) * (p[j] - mean);
            var /= static_cast<double>(m);
            const double r = 1.0 / std::sqrt(var + eps);
            rstd[static_cast<std::size_t>(i * groups + gi)] = r;
            double* q = xhat.ptr() + off;
            for (std::int64_t j = 0; j < m; ++j) q[j] = (p[j] - mean) * r;
        }
    }
    Tensor out(s);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const double ga = gamma.value()[static_cast<std::size_t>(ch)];
            const double be = beta.value()[static_cast<std::size_t>(ch)];
            const std::int64_t off = (i * c + ch) * hw;
            for (std::int64_t j = 0; j < hw; ++j) out[static_cast<std::size_t>(off + j)] = ga * xhat[static_cast<std::size_t>(off + j)] + be;
        }
    }
    Graph& g = x.graph();
    const int ix = x.id(), ig = gamma.id(), ibt = beta.id();
    return g.record(std::move(out), g.any_requires_grad({x, gamma, beta}),
                    [=, xhat = std::move(xhat), rstd = std::move(rstd)](Graph& gr, const Tensor& og) {
                        const Tensor& gam = gr.value(ig);
                        if (gr.needs_grad(ig) || gr.needs_grad(ibt)) {
                            for (std::int64_t i = 0; i < n; ++i) {
                                for (std::int64_t ch = 0; ch < c; ++ch) {
                                    const std::int64_t off = (i * c + ch) * hw;
                                    double sg = 0.0, sb = 0.0;
                                    for (std::int64_t j = 0; j < hw; ++j) {
                                        sg += og[static_cast<std::size_t>(off + j)] * xhat[static_cast<std::size_t>(off + j)];
                                        sb += og[static_cast<std::size_t>(off + j)];
                                    }
                                    if (gr.needs_grad(ig)) gr.grad_buffer(ig)[static_cast<std::size_t>(ch)] += sg;
                                    if (gr.needs_grad(ibt)) gr.grad_buffer(ibt)[static_cast<std::size_t>(ch)] += sb;
                                }
                            }
                        }
                        if (!gr.needs_grad(ix)) {
                            return;
                        }
                        Tensor& gx = gr.grad_buffer(ix);
                        std::vector<double> dxh(static_cast<std::size_t>(m));
                        for (std::int64_t i = 0; i < n; ++i) {
                            for (std::int64_t gi = 0; gi < groups; ++gi) {
                                const std::int64_t off = (i * c + gi * cg) * hw;
                                double mean_d = 0.0, mean_dx = 0.0;
                                for (std::int64_t cc = 0; cc < cg; ++cc) {
                                    const double ga = gam[static_cast<std::size_t>(gi * cg + cc)];
                                    for (std::int64_t j = 0; j < hw; ++j) {
                                        const std::int64_t k = cc * hw + j;
                                        const double d = og[static_cast<std::size_t>(off + k)] * ga;
                                        dxh[static_cast<std::size_t>(k)] = d;
                                        mean_d += d;
                                        mean_dx += d * xhat[static_cast<std::size_t>(off + k)];
                                    }
                                }
                                mean_d /= static_cast<double>(m);
                                mean_dx /= static_cast<double>(m);
                                const double r = rstd[static_cast<std::size_t>(i * groups + gi)];
                                for (std::int64_t k = 0; k < m; ++k) {
                                    gx[static_cast<std::size_t>(off + k)] +=
                                        r * (dxh[static_cast<std::size_t>(k)] - mean_d - xhat[static_cast<std::size_t>(off + k)] * mean_dx);
                                }
                            }
                        }
                    });
}

Var mul_tokens(const Var& ctx, std::span<const double> keep) {
    expect_rank(ctx, 3, "mul_tokens");
    const std::int64_t n = ctx.shape()[0], d = ctx.shape()[1], l = ctx.shape()[2];
    require(keep.size() == static_cast<std::size_t>(n * l), ErrorKind::shape, "mul_tokens: keep size");
    std::vector<double> k(keep.begin(), keep.end());
    Tensor out = ctx.value();
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < d; ++j)
            for (std::int64_t t = 0; t < l; ++t) out[static_cast<std::size_t>((i * d + j) * l + t)] *= k[static_cast<std::size_t>(i * l + t)];
    Graph& g = ctx.graph();
    const int ic = ctx.id();
    return g.record(std::move(out), g.any_requires_grad({ctx}), [=, k = std::move(k)](Graph& gr, const Tensor& og) {
        Tensor& gc = gr.grad_buffer(ic);
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < d; ++j)
                for (std::int64_t t = 0; t < l; ++t) {
                    const auto idx = static_cast<std::size_t>((i * d + j) * l + t);
                    gc[idx] += og[idx] * k[static_cast<std::size_t>(i * l + t)];
                }
    });
}

Var cross_attention(const Var& h, const Var& q, const Var& ctx, std::span<const std::uint8_t> valid,
                    const Var& wq, const Var& wk, const Var& wv) {
    expect_rank(h, 4, "cross_attention");
    expect_rank(ctx, 3, "cross_attention");
    check_same_shape(h.value(), q.value(), "cross_attention query");
    const auto& hs = h.shape();
    const std::int64_t n = hs[0], c = hs[1], hw = hs[2] * hs[3];
    const std::int64_t d = ctx.shape()[1], l = ctx.shape()[2];
    const std::int64_t dk = wq.shape()[0];
    require(ctx.shape()[0] == n, ErrorKind::shape, "cross_attention: batch mismatch");
    require(wq.shape() == Shape{dk, c} && wk.shape() == Shape{dk, d} && wv.shape() == Shape{c, d}, ErrorKind::shape,
            "cross_attention: projection shapes");
    require(valid.size() == static_cast<std::size_t>(n * l), ErrorKind::shape, "cross_attention: validity size");
    std::vector<std::uint8_t> vflags(valid.begin(), valid.end());
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

    // Cached per item: Q [dk,hw], K [dk,l], V [c,l], A [hw,l].
    std::vector<RowMat> qs(static_cast<std::size_t>(n)), ks(qs.size()), vs(qs.size()), as(qs.size());
    Tensor out = h.value();
    CMapMat wqm(wq.value().ptr(), dk, c), wkm(wk.value().ptr(), dk, d), wvm(wv.value().ptr(), c, d);
    for (std::int64_t i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        CMapMat qi(q.value().ptr() + i * c * hw, c, hw);
        CMapMat ci(ctx.value().ptr() + i * d * l, d, l);
        qs[ui] = wqm * qi;
        ks[ui] = wkm * ci;
        vs[ui] = wvm * ci;
        RowMat s = (qs[ui].transpose() * ks[ui]) * inv_sqrt;
        RowMat a = RowMat::Zero(hw, l);
        bool any = false;
        for (std::int64_t t = 0; t < l; ++t) any = any || vflags[static_cast<std::size_t>(i * l + t)];
        if (any) {
            for (std::int64_t r = 0; r < hw; ++r) {
                double mx = -INFINITY;
                for (std::int64_t t = 0; t < l; ++t)
                    if (vflags[static_cast<std::size_t>(i * l + t)]) mx = std::max(mx, s(r, t));
                double z = 0.0;
                for (std::int64_t t = 0; t < l; ++t) {
                    if (vflags[static_cast<std::size_t>(i * l + t)]) {
                        a(r, t) = std::exp(s(r, t) - mx);
                        z += a(r, t);
                    }
                }
                a.row(r) /= z;
            }
            MapMat(out.ptr() + i * c * hw, c, hw).noalias() += vs[ui] * a.transpose();
        }
        as[ui] = std::move(a);
    }

    Graph& g = h.graph();
    const int ih = h.id(), iq = q.id(), ic = ctx.id(), iwq = wq.id(), iwk = wk.id(), iwv = wv.id();
    return g.record(std::move(out), g.any_requires_grad({h, q, ctx, wq, wk, wv}),
                    [=, qs = std::move(qs), ks = std::move(ks), vs = std::move(vs), as = std::move(as)](
                        Graph& gr, const Tensor& og) {
                        if (gr.needs_grad(ih)) add_into(gr.grad_buffer(ih), og);
                        CMapMat wqmat(gr.value(iwq).ptr(), dk, c), wkmat(gr.value(iwk).ptr(), dk, d),
                            wvmat(gr.value(iwv).ptr(), c, d);
                        for (std::int64_t i = 0; i < n; ++i) {
                            const auto ui = static_cast<std::size_t>(i);
                            CMapMat dout(og.ptr() + i * c * hw, c, hw);
                            const RowMat& a = as[ui];
                            const RowMat dv = dout * a;                   // [c,l]
                            const RowMat da = dout.transpose() * vs[ui];  // [hw,l]
                            RowMat ds(hw, l);
                            for (std::int64_t r = 0; r < hw; ++r) {
                                const double dot = a.row(r).dot(da.row(r));
                                for (std::int64_t t = 0; t < l; ++t) ds(r, t) = a(r, t) * (da(r, t) - dot);
                            }
                            ds *= inv_sqrt;
                            const RowMat dq = ks[ui] * ds.transpose();  // [dk,hw]
                            const RowMat dkm = qs[ui] * ds;             // [dk,l]
                            CMapMat qi(gr.value(iq).ptr() + i * c * hw, c, hw);
                            CMapMat ci(gr.value(ic).ptr() + i * d * l, d, l);
                            if (gr.needs_grad(iwq)) MapMat(gr.grad_buffer(iwq).ptr(), dk, c).noalias() += dq * qi.transpose();
                            if (gr.needs_grad(iq)) MapMat(gr.grad_buffer(iq).ptr() + i * c * hw, c, hw).noalias() += wqmat.transpose() * dq;
                            if (gr.needs_grad(iwk)) MapMat(gr.grad_buffer(iwk).ptr(), dk, d).noalias() += dkm * ci.transpose();
                            if (gr.needs_grad(iwv)) MapMat(gr.grad_buffer(iwv).ptr(), c, d).noalias() += dv * ci.transpose();
                            if (gr.needs_grad(ic)) {
                                MapMat gc(gr.grad_buffer(ic).ptr() + i * d * l, d, l);
                                gc.noalias() += wkmat.transpose() * dkm;
                                gc.noalias() += wvmat.transpose() * dv;
                            }
                        }
                    });
}

Var mse(const Var& pred, const Tensor& target) {
    check_same_shape(pred.value(), target, "mse");
    const Tensor& p = pred.value();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double r = p[i] - target[i];
        acc += r * r;
    }
    const double count = static_cast<double>(p.size());
    Graph& g = pred.graph();
    const int ip = pred.id();
    return g.record(Tensor({1}, {acc / count}), g.any_requires_grad({pred}),
                    [ip, target, count](Graph& gr, const Tensor& og) {
                        const Tensor& pv = gr.value(ip);
                        Tensor& gp = gr.grad_buffer(ip);
                        const double k = 2.0 * og[0] / count;
                        for (std::size_t i = 0; i < pv.size(); ++i) gp[i] += k * (pv[i] - target[i]);
                    });
}

}  // namespace refpaint::ag
