#include "blend/autograd.hpp"

#include "blend/error.hpp"
#include "blend/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace blend {

Var Graph::constant(Tensor value) { return record(std::move(value), false, {}); }

Var Graph::leaf(Tensor value) { return record(std::move(value), true, {}); }

Var Graph::param(const ParamSet& ps, const std::string& name, bool trainable)
{
    auto key = std::make_pair(&ps, name);
    if (auto it = param_nodes_.find(key); it != param_nodes_.end())
        return Var{it->second};
    Node n;
    n.external = &ps.get(name);
    n.requires_grad = trainable;
    n.owner = &ps;
    n.name = name;
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    param_nodes_.emplace(key, id);
    return Var{id};
}

Var Graph::record(Tensor value, bool requires_grad, BackwardFn fn)
{
    Node n;
    n.owned = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad)
        n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad_mut(int id)
{
    Node& n = node(id);
    if (n.grad.empty())
        n.grad = Tensor::like(n.value());
    return n.grad;
}

Tensor Graph::grad(Var v) const
{
    const Node& n = node(v.id);
    return n.grad.empty() ? Tensor::like(n.value()) : n.grad;
}

void Graph::backward(Var target)
{
    require(value(target).size() == 1, ErrorKind::shape, "backward target must hold one element");
    for (auto& n : nodes_)
        n.grad = Tensor();
    if (!node(target.id).requires_grad)
        return;
    grad_mut(target.id)[0] = 1.0;
    for (int id = target.id; id >= 0; --id) {
        Node& n = node(id);
        if (n.requires_grad && n.backward && !n.grad.empty())
            n.backward(*this, id);
    }
}

void Graph::collect_grads(const ParamSet& ps, GradMap& out) const
{
    for (const auto& [key, id] : param_nodes_) {
        if (key.first != &ps)
            continue;
        const Node& n = node(id);
        if (!n.requires_grad || n.grad.empty())
            continue;
        auto it = out.find(key.second);
        if (it == out.end()) {
            out.emplace(key.second, n.grad);
        } else {
            Tensor& acc = it->second;
            for (std::size_t i = 0; i < acc.size(); ++i)
                acc[i] += n.grad[i];
        }
    }
}

namespace ops {

namespace {

bool any_grad(const Graph& g, std::initializer_list<Var> vs)
{
    for (Var v : vs)
        if (g.requires_grad(v))
            return true;
    return false;
}

void check_same(const Tensor& a, const Tensor& b, const char* op)
{
    require(a.same_shape(b), ErrorKind::shape,
            std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

void accumulate(Tensor& dst, const Tensor& src, double s = 1.0)
{
    for (std::size_t i = 0; i < dst.size(); ++i)
        dst[i] += s * src[i];
}

template <class F>
Var unary(Graph& g, Var a, F f, std::function<double(double x, double y)> dydx)
{
    const Tensor& x = g.value(a);
    Tensor y = Tensor::like(x);
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = f(x[i]);
    return g.record(std::move(y), g.requires_grad(a), [a, dydx](Graph& g, int self) {
        const Tensor& x = g.value(a.id);
        const Tensor& y = g.value(self);
        const Tensor& go = g.grad_ref(self);
        Tensor& gx = g.grad_mut(a.id);
        for (std::size_t i = 0; i < x.size(); ++i)
            gx[i] += go[i] * dydx(x[i], y[i]);
    });
}

double stable_sigmoid(double x)
{
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

kernels::ConvGeometry geometry(const Tensor& x, const Tensor& w, const ConvSpec& spec)
{
    require(x.rank() == 3 && w.rank() == 4, ErrorKind::shape, "conv2d expects (C,H,W) input and 4-d kernel");
    require(w.dim(1) == x.channels(), ErrorKind::shape,
            "conv2d channel mismatch: input " + shape_string(x.shape()) + " kernel " + shape_string(w.shape()));
    kernels::ConvGeometry geo;
    geo.in_c = x.channels();
    geo.in_h = x.height();
    geo.in_w = x.width();
    geo.out_c = w.dim(0);
    geo.kernel = w.dim(2);
    geo.stride = spec.stride;
    geo.dilation = spec.dilation;
    const int span = spec.dilation * (geo.kernel - 1);
    geo.pad_begin = spec.pad_begin >= 0 ? spec.pad_begin : span / 2;
    geo.pad_end = spec.pad_end >= 0 ? spec.pad_end : span - span / 2;
    require(geo.out_h() > 0 && geo.out_w() > 0, ErrorKind::shape, "conv2d output would be empty");
    return geo;
}

} // namespace

Var conv2d(Graph& g, Var x, Var weight, Var bias, ConvSpec spec)
{
    const Tensor& in = g.value(x);
    const Tensor& w = g.value(weight);
    const auto geo = geometry(in, w, spec);
    const double* b = nullptr;
    if (bias.valid()) {
        require(g.value(bias).size() == static_cast<std::size_t>(geo.out_c), ErrorKind::shape, "conv2d bias size");
        b = g.value(bias).data();
    }
    Tensor out({geo.out_c, geo.out_h(), geo.out_w()});
    kernels::conv2d_forward(in.data(), w.data(), b, out.data(), geo);
    g.add_macs(geo.macs());
    return g.record(std::move(out), any_grad(g, {x, weight, bias}), [x, weight, bias, geo](Graph& g, int self) {
        const Tensor& go = g.grad_ref(self);
        if (g.requires_grad(x))
            kernels::conv2d_backward_input(go.data(), g.value(weight.id).data(), g.grad_mut(x.id).data(), geo);
        const bool gb = bias.valid() && g.requires_grad(bias);
        if (g.requires_grad(weight)) {
            kernels::conv2d_backward_weight(g.value(x.id).data(), go.data(), g.grad_mut(weight.id).data(),
                                            gb ? g.grad_mut(bias.id).data() : nullptr, geo);
        } else if (gb) {
            Tensor& gbias = g.grad_mut(bias.id);
            const std::size_t plane = go.plane();
            for (int c = 0; c < go.channels(); ++c)
                for (std::size_t i = 0; i < plane; ++i)
                    gbias[c] += go.channel(c)[i];
        }
    });
}

Var conv_transpose2d(Graph& g, Var x, Var weight, Var bias, int stride, int pad, int output_padding)
{
    const Tensor& in = g.value(x);
    const Tensor& w = g.value(weight);
    require(in.rank() == 3 && w.rank() == 4 && w.dim(0) == in.channels(), ErrorKind::shape,
            "conv_transpose2d channel mismatch");
    require(pad >= output_padding, ErrorKind::shape, "conv_transpose2d needs pad >= output_padding");
    const int k = w.dim(2);
    const int oh = (in.height() - 1) * stride - 2 * pad + k + output_padding;
    const int ow = (in.width() - 1) * stride - 2 * pad + k + output_padding;
    // geometry of the forward convolution this op is the adjoint of
    kernels::ConvGeometry geo;
    geo.in_c = w.dim(1);
    geo.in_h = oh;
    geo.in_w = ow;
    geo.out_c = in.channels();
    geo.kernel = k;
    geo.stride = stride;
    geo.pad_begin = pad;
    geo.pad_end = pad - output_padding;
    geo.dilation = 1;
    require(geo.out_h() == in.height() && geo.out_w() == in.width(), ErrorKind::shape,
            "conv_transpose2d geometry mismatch");

    Tensor out({geo.in_c, oh, ow});
    kernels::conv2d_backward_input(in.data(), w.data(), out.data(), geo);
    g.add_macs(geo.macs());
    if (bias.valid()) {
        const Tensor& b = g.value(bias);
        for (int c = 0; c < out.channels(); ++c) {
            double* p = out.channel(c);
            for (std::size_t i = 0; i < out.plane(); ++i)
                p[i] += b[c];
        }
    }
    return g.record(std::move(out), any_grad(g, {x, weight, bias}), [x, weight, bias, geo](Graph& g, int self) {
        const Tensor& go = g.grad_ref(self);
        if (g.requires_grad(x)) {
            Tensor tmp = Tensor::like(g.value(x.id));
            kernels::conv2d_forward(go.data(), g.value(weight.id).data(), nullptr, tmp.data(), geo);
            accumulate(g.grad_mut(x.id), tmp);
        }
        if (g.requires_grad(weight))
            kernels::conv2d_backward_weight(go.data(), g.value(x.id).data(), g.grad_mut(weight.id).data(), nullptr,
                                            geo);
        if (bias.valid() && g.requires_grad(bias)) {
            Tensor& gbias = g.grad_mut(bias.id);
            for (int c = 0; c < go.channels(); ++c)
                for (std::size_t i = 0; i < go.plane(); ++i)
                    gbias[c] += go.channel(c)[i];
        }
    });
}

Var add(Graph& g, Var a, Var b)
{
    const Tensor& x = g.value(a);
    const Tensor& y = g.value(b);
    check_same(x, y, "add");
    Tensor out = x;
    accumulate(out, y);
    return g.record(std::move(out), any_grad(g, {a, b}), [a, b](Graph& g, int self) {
        const Tensor& go = g.grad_ref(self);
        if (g.requires_grad(a))
            accumulate(g.grad_mut(a.id), go);
        if (g.requires_grad(b))
            accumulate(g.grad_mut(b.id), go);
    });
}

Var sub(Graph& g, Var a, Var b)
{
    const Tensor& x = g.value(a);
    const Tensor& y = g.value(b);
    check_same(x, y, "sub");
    Tensor out = x;
    accumulate(out, y, -1.0);
    return g.record(std::move(out), any_grad(g, {a, b}), [a, b](Graph& g, int self) {
        const Tensor& go = g.grad_ref(self);
        if (g.requires_grad(a))
            accumulate(g.grad_mut(a.id), go);
        if (g.requires_grad(b))
            accumulate(g.grad_mut(b.id), go, -1.0);
    });
}

Var mul(Graph& g, Var a, Var b)
{
    const Tensor& x = g.value(a);
    const Tensor& y = g.value(b);
    check_same(x, y, "mul");
    Tensor out = Tensor::like(x);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = x[i] * y[i];
    return g.record(std::move(out), any_grad(g, {a, b}), [a, b](Graph& g, int self) {
        const Tensor& go = g.grad_ref(self);
        if (g.requires_grad(a)) {
            Tensor& ga = g.grad_mut(a.id);
            const Tensor& y = g.value(b.id);
            for (std::size_t i = 0; i < ga.size(); ++i)
                ga[i] += go[i] * y[i];
        }
        if (g.requires_grad(b)) {
            Tensor& gb = g.grad_mut(b.id);
            const Tensor& x = g.value(a.id);
            for (std::size_t i = 0; i < gb.size(); ++i)
                gb[i] += go[i] * x[i];
        }
    });
}

Var add_n(Graph& g, const std::vector<Var>& xs)
{
    require(!xs.empty(), ErrorKind::invalid_input, "add_n of empty list");
    Tensor out = g.value(xs[0]);
    bool rg = g.requires_grad(xs[0]);
    for (std::size_t i = 1; i < xs.size(); ++i) {
        check_same(out, g.value(xs[i]), "add_n");
        accumulate(out, g.value(xs[i]));
        rg = rg || g.requires_grad(xs[i]);
    }
    return g.record(std::move(out), rg, [xs](Graph& g, int self) {
        const Tensor& go = g.grad_ref(self);
        for (Var v : xs)
            if (g.requires_grad(v))
                accumulate(g.grad_mut(v.id), go);
    });
}

Var scale(Graph& g, Var a, double s) { return affine(g, a, s, 0.0); }

Var affine(Graph& g, Var a, double s, double shift)
{
    return unary(g, a, [s, shift](double x) { return s * x + shift; }, [s](double, double) { return s; });
}

Var leaky_relu(Graph& g, Var a, double slope)
{
    return unary(g, a, [slope](double x) { return x > 0.0 ? x : slope * x; },
                 [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var sigmoid(Graph& g, Var a)
{
    return unary(g, a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Graph& g, Var a)
{
    return unary(g, a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var softplus(Graph& g, Var a)
{
    return unary(g, a, [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
                 [](double x, double) { return stable_sigmoid(x); });
}

Var square(Graph& g, Var a)
{
    return unary(g, a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var broadcast_mul(Graph& g, Var map, Var feat)
{
    const Tensor& m = g.value(map);
    const Tensor& f = g.value(feat);
    require(m.rank() == 3 && f.rank() == 3 && m.channels() == 1 && m.height() == f.height()
                && m.width() == f.width(),
            ErrorKind::shape, "broadcast_mul " + shape_string(m.shape()) + " vs " + shape_string(f.shape()));
    Tensor out = Tensor::like(f);
    const std::size_t plane = f.plane();
    for (int c = 0; c < f.channels(); ++c)
        for (std::size_t i = 0; i < plane; ++i)
            out.channel(c)[i] = m[i] * f.channel(c)[i];
    return g.record(std::move(out), any_grad(g, {map, feat}), [map, feat](Graph& g, int self) {
        const Tensor& go = g.grad_ref(self);
        const Tensor& m = g.value(map.id);
        const Tensor& f = g.value(feat.id);
        const std::size_t plane = f.plane();
        if (g.requires_grad(map)) {
            Tensor& gm = g.grad_mut(map.id);
            for (int c = 0; c < f.channels(); ++c)
                for (std::size_t i = 0; i < plane; ++i)
                    gm[i] += go.channel(c)[i] * f.channel(c)[i];
        }
        if (g.requires_grad(feat)) {
            Tensor& gf = g.grad_mut(feat.id);
            for (int c = 0; c < f.channels(); ++c)
                for (std::size_t i = 0; i < plane; ++i)
                    gf.channel(c)[i] += go.channel(c)[i] * m[i];
        }
    });
}

Var channel_scale(Graph& g, Var feat, Var vec, int offset)
{
    const Tensor& f = g.value(feat);
    const Tensor& v = g.value(vec);
    require(f.rank() == 3 && offset >= 0 && static_cast<std::size_t>(offset + f.channels()) <= v.size(),
            ErrorKind::shape, "channel_scale out of range");
    Tensor out = Tensor::like(f);
    const std::size_t plane = f.plane();
    for (int c = 0; c < f.channels(); ++c)
        for (std::size_t i = 0; i < plane; ++i)
            out.channel(c)[i] = v[offset + c] * f.channel(c)[i];
    return g.record(std::move(out), any_grad(g, {feat, vec}), [feat, vec, offset](Graph& g, int self) {
        const Tensor& go = g.grad_ref(self);
        const Tensor& f = g.value(feat.id);
        const Tensor& v = g.value(vec.id);
        const std::size_t plane = f.plane();
        if (g.requires_grad(vec)) {
            Tensor& gv = g.grad_mut(vec.id);
            for (int c = 0; c < f.channels(); ++c) {
                double s = 0.0;
                for (std::size_t i = 0; i < plane; ++i)
                    s += go.channel(c)[i] * f.channel(c)[i];
                gv[offset + c] += s;
            }
        }
        if (g.requires_grad(feat)) {
            Tensor& gf = g.grad_mut(feat.id);
            for (int c = 0; c < f.channels(); ++c)
                for (std::size_t i = 0; i < plane; ++i)
                    gf.channel(c)[i] += go.channel(c)[i] * v[offset + c];
        }
    });
}

Var scale_by_entry(Graph& g, Var feat, Var vec, int index)
{
    const Tensor& f = g.value(feat);
    const Tensor& v = g.value(vec);
    require(index >= 0 && static_cast<std::size_t>(index) < v.size(), ErrorKind::shape, "scale_by_entry index");
    Tensor out = Tensor::like(f);
    const double s = v[index];
    for (std::size_t i = 0; i < f.size(); ++i)
        out[i] = s * f[i];
    return g.record(std::move(out), any_grad(g, {feat, vec}), [feat, vec, index](Graph& g, int self) {
        const Tensor& go = g.grad_ref(self);
        const Tensor& f = g.value(feat.id);
        if (g.requires_grad(vec)) {
            double s = 0.0;
            for (std::size_t i = 0; i < f.size(); ++i)
                s += go[i] * f[i];
            g.grad_mut(vec.id)[index] += s;
        }
        if (g.requires_grad(feat)) {
            const double s = g.value(vec.id)[index];
            accumulate(g.grad_mut(feat.id), go, s);
        }
    });
}

Var concat(Graph& g, const std::vector<Var>& xs)
{
    require(!xs.empty(), ErrorKind::invalid_input, "concat of empty list");
    const Tensor& first = g.value(xs[0]);
    require(first.rank() == 3, ErrorKind::shape, "concat expects (C,H,W)");
    int channels = 0;
    bool rg = false;
    for (Var v : xs) {
        const Tensor& t = g.value(v);
        require(t.rank() == 3 && t.height() == first.height() && t.width() == first.width(), ErrorKind::shape,
                "concat spatial mismatch " + shape_string(t.shape()) + " vs " + shape_string(first.shape()));
        channels += t.channels();
        rg = rg || g.requires_grad(v);
    }
    Tensor out({channels, first.height(), first.width()});
    std::size_t off = 0;
    for (Var v : xs) {
        const Tensor& t = g.value(v);
        std::copy(t.data(), t.data() + t.size(), out.data() + off);
        off += t.size();
    }
    return g.record(std::move(out), rg, [xs](Graph& g, int self) {
        const Tensor& go = g.grad_ref(self);
        std::size_t off = 0;
        for (Var v : xs) {
            const std::size_t n = g.value(v.id).size();
            if (g.requires_grad(v)) {
                Tensor& gv = g.grad_mut(v.id);
                for (std::size_t i = 0; i < n; ++i)
                    gv[i] += go[off + i];
            }
            off += n;
        }
    });
}

Var pixel_shuffle(Graph& g, Var x, int r)
{
    const Tensor& in = g.value(x);
    require(in.rank() == 3 && in.channels() % (r * r) == 0, ErrorKind::shape,
            "pixel_shuffle needs channels divisible by r^2, got " + shape_string(in.shape()));
    const int oc = in.channels() / (r * r), h = in.height(), w = in.width();
    Tensor out({oc, h * r, w * r});
    kernels::pixel_shuffle_forward(in.data(), out.data(), oc, h, w, r);
    return g.record(std::move(out), g.requires_grad(x), [x, oc, h, w, r](Graph& g, int self) {
        kernels::pixel_shuffle_backward(g.grad_ref(self).data(), g.grad_mut(x.id).data(), oc, h, w, r);
    });
}

Var bilinear_resize(Graph& g, Var x, int out_h, int out_w)
{
    const Tensor& in = g.value(x);
    require(in.rank() == 3, ErrorKind::shape, "bilinear_resize expects (C,H,W)");
    const int c = in.channels(), h = in.height(), w = in.width();
    Tensor out({c, out_h, out_w});
    kernels::bilinear_forward(in.data(), out.data(), c, h, w, out_h, out_w);
    return g.record(std::move(out), g.requires_grad(x), [x, c, h, w, out_h, out_w](Graph& g, int self) {
        kernels::bilinear_backward(g.grad_ref(self).data(), g.grad_mut(x.id).data(), c, h, w, out_h, out_w);
    });
}

Var global_avg_pool(Graph& g, Var x)
{
    const Tensor& in = g.value(x);
    require(in.rank() == 3, ErrorKind::shape, "global_avg_pool expects (C,H,W)");
    Tensor out({in.channels()});
    const std::size_t plane = in.plane();
    for (int c = 0; c < in.channels(); ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i)
            s += in.channel(c)[i];
        out[c] = s / static_cast<double>(plane);
    }
    return g.record(std::move(out), g.requires_grad(x), [x](Graph& g, int self) {
        const Tensor& go = g.grad_ref(self);
        Tensor& gx = g.grad_mut(x.id);
        const std::size_t plane = gx.plane();
        for (int c = 0; c < gx.channels(); ++c)
            for (std::size_t i = 0; i < plane; ++i)
                gx.channel(c)[i] += go[c] / static_cast<double>(plane);
    });
}

Var linear(Graph& g, Var x, Var weight, Var bias)
{
    const Tensor& in = g.value(x);
    const Tensor& w = g.value(weight);
    require(w.rank() == 2 && static_cast<std::size_t>(w.dim(1)) == in.size(), ErrorKind::shape,
            "linear: input " + shape_string(in.shape()) + " weight " + shape_string(w.shape()));
    const int of = w.dim(0), inf = w.dim(1);
    g.add_macs(static_cast<long long>(of) * inf);
    Tensor out({of});
    for (int o = 0; o < of; ++o) {
        double s = bias.valid() ? g.value(bias)[o] : 0.0;
        for (int i = 0; i < inf; ++i)
            s += w[static_cast<std::size_t>(o) * inf + i] * in[i];
        out[o] = s;
    }
    return g.record(std::move(out), any_grad(g, {x, weight, bias}), [x, weight, bias, of, inf](Graph& g, int self) {
        const Tensor& go = g.grad_ref(self);
        const Tensor& in = g.value(x.id);
        const Tensor& w = g.value(weight.id);
        if (g.requires_grad(x)) {
            Tensor& gx = g.grad_mut(x.id);
            for (int o = 0; o < of; ++o)
                for (int i = 0; i < inf; ++i)
                    gx[i] += go[o] * w[static_cast<std::size_t>(o) * inf + i];
        }
        if (g.requires_grad(weight)) {
            Tensor& gw = g.grad_mut(weight.id);
            for (int o = 0; o < of; ++o)
                for (int i = 0; i < inf; ++i)
                    gw[static_cast<std::size_t>(o) * inf + i] += go[o] * in[i];
        }
        if (bias.valid() && g.requires_grad(bias))
            accumulate(g.grad_mut(bias.id), go);
    });
}

Var softmax_columns(Graph& g, Var x, int rows, int cols)
{
    const Tensor& in = g.value(x);
    require(rows >= 1 && cols >= 1 && in.size() == static_cast<std::size_t>(rows) * cols, ErrorKind::shape,
            "softmax_columns size mismatch");
    Tensor out({rows * cols});
    for (int j = 0; j < cols; ++j) {
        double mx = in[j];
        for (int i = 1; i < rows; ++i)
            mx = std::max(mx, in[i * cols + j]);
        double s = 0.0;
        for (int i = 0; i < rows; ++i)
            s += (out[i * cols + j] = std::exp(in[i * cols + j] - mx));
        for (int i = 0; i < rows; ++i)
            out[i * cols + j] /= s;
    }
    return g.record(std::move(out), g.requires_grad(x), [x, rows, cols](Graph& g, int self) {
        const Tensor& go = g.grad_ref(self);
        const Tensor& y = g.value(self);
        Tensor& gx = g.grad_mut(x.id);
        for (int j = 0; j < cols; ++j) {
            double s = 0.0;
            for (int i = 0; i < rows; ++i)
                s += go[i * cols + j] * y[i * cols + j];
            for (int i = 0; i < rows; ++i)
                gx[i * cols + j] += y[i * cols + j] * (go[i * cols + j] - s);
        }
    });
}

Var mean(Graph& g, Var a)
{
    const Tensor& x = g.value(a);
    double s = 0.0;
    for (double v : x.values())
        s += v;
    Tensor out({1}, s / static_cast<double>(x.size()));
    return g.record(std::move(out), g.requires_grad(a), [a](Graph& g, int self) {
        const double go = g.grad_ref(self)[0];
        Tensor& gx = g.grad_mut(a.id);
        const double d = go / static_cast<double>(gx.size());
        for (auto& v : gx.values())
            v += d;
    });
}

Var l1_loss(Graph& g, Var a, Var b)
{
    const Tensor& x = g.value(a);
    const Tensor& y = g.value(b);
    check_same(x, y, "l1_loss");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        s += std::abs(x[i] - y[i]);
    Tensor out({1}, s / static_cast<double>(x.size()));
    return g.record(std::move(out), any_grad(g, {a, b}), [a, b](Graph& g, int self) {
        const Tensor& x = g.value(a.id);
        const Tensor& y = g.value(b.id);
        const double d = g.grad_ref(self)[0] / static_cast<double>(x.size());
        auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
        if (g.requires_grad(a)) {
            Tensor& ga = g.grad_mut(a.id);
            for (std::size_t i = 0; i < x.size(); ++i)
                ga[i] += d * sign(x[i] - y[i]);
        }
        if (g.requires_grad(b)) {
            Tensor& gb = g.grad_mut(b.id);
            for (std::size_t i = 0; i < x.size(); ++i)
                gb[i] -= d * sign(x[i] - y[i]);
        }
    });
}

Var weighted_sum(Graph& g, Var a, const Tensor& w)
{
    const Tensor& x = g.value(a);
    require(x.size() == w.size(), ErrorKind::shape, "weighted_sum size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        s += x[i] * w[i];
    return g.record(Tensor({1}, s), g.requires_grad(a), [a, w](Graph& g, int self) {
        accumulate(g.grad_mut(a.id), w, g.grad_ref(self)[0]);
    });
}

} // namespace ops

} // namespace blend
