#include "blend/blocks.hpp"

#include "blend/error.hpp"

#include <algorithm>

namespace blend {

namespace {

// output layers of residual paths start small so deep stacks begin near identity
constexpr double kResidualGain = 0.1;

} // namespace

Var conv(const Scope& s, const std::string& name, Var x, ConvSpec spec)
{
    return ops::conv2d(s.g(), x, s.p(name + ".w"), s.p(name + ".b"), spec);
}

int sk_hidden(int channels) { return std::max(channels / 4, 8); }

void init_sk_unit(ParamSet& ps, Rng& rng, const std::string& prefix, int channels)
{
    init_conv(ps, rng, prefix + "/branch0", channels, channels, 3, kResidualGain);
    init_conv(ps, rng, prefix + "/branch1", channels, channels, 3, kResidualGain);
    const int hidden = sk_hidden(channels);
    init_linear(ps, rng, prefix + "/fc1", hidden, channels);
    init_linear(ps, rng, prefix + "/fc2", 2 * channels, hidden);
}

SkOutput sk_unit(const Scope& s, const std::string& prefix, Var feat, const BlockOptions& opt)
{
    Graph& g = s.g();
    const int c = g.value(feat).channels();
    require(s.params->get(prefix + "/branch0.w").dim(1) == c, ErrorKind::shape,
            "sk_unit " + prefix + ": channel mismatch");
    Var b0 = ops::leaky_relu(g, conv(s, prefix + "/branch0", feat, {1, -1, -1, 1}), opt.slope);
    Var b1 = ops::leaky_relu(g, conv(s, prefix + "/branch1", feat, {1, -1, -1, 2}), opt.slope);
    Var pooled = ops::global_avg_pool(g, ops::add(g, b0, b1));
    Var z = ops::leaky_relu(g, ops::linear(g, pooled, s.p(prefix + "/fc1.w"), s.p(prefix + "/fc1.b")), opt.slope);
    Var logits = ops::linear(g, z, s.p(prefix + "/fc2.w"), s.p(prefix + "/fc2.b"));
    Var w = ops::softmax_columns(g, logits, 2, c);
    Var out = ops::add(g, ops::channel_scale(g, b0, w, 0), ops::channel_scale(g, b1, w, c));
    return {out, w};
}

void init_se_unit(ParamSet& ps, Rng& rng, const std::string& prefix, int channels)
{
    init_conv(ps, rng, prefix + "/conv1", channels, channels, 3);
    init_conv(ps, rng, prefix + "/conv2", channels, channels, 3, kResidualGain);
    const int hidden = sk_hidden(channels);
    init_linear(ps, rng, prefix + "/fc1", hidden, channels);
    init_linear(ps, rng, prefix + "/fc2", channels, hidden);
}

Var se_unit(const Scope& s, const std::string& prefix, Var feat, const BlockOptions& opt)
{
    Graph& g = s.g();
    Var t = ops::leaky_relu(g, conv(s, prefix + "/conv1", feat), opt.slope);
    t = conv(s, prefix + "/conv2", t);
    Var pooled = ops::global_avg_pool(g, t);
    Var z = ops::leaky_relu(g, ops::linear(g, pooled, s.p(prefix + "/fc1.w"), s.p(prefix + "/fc1.b")), opt.slope);
    Var w = ops::sigmoid(g, ops::linear(g, z, s.p(prefix + "/fc2.w"), s.p(prefix + "/fc2.b")));
    return ops::channel_scale(g, t, w, 0);
}

void init_sk_durb(ParamSet& ps, Rng& rng, const std::string& prefix, int channels, bool use_se)
{
    init_conv(ps, rng, prefix + "/conv_in", channels, channels, 3);
    if (use_se)
        init_se_unit(ps, rng, prefix + "/se", channels);
    else
        init_sk_unit(ps, rng, prefix + "/sk", channels);
    init_conv(ps, rng, prefix + "/down", 2 * channels, channels, 3);
    init_conv(ps, rng, prefix + "/conv_p", 2 * channels, 2 * channels, 3, kResidualGain);
}

std::pair<Var, Var> sk_durb(const Scope& s, const std::string& prefix, Var u_prev, Var p_prev,
                            const BlockOptions& opt)
{
    Graph& g = s.g();
    const Tensor& u0 = g.value(u_prev);
    const Tensor& p0 = g.value(p_prev);
    require(u0.rank() == 3 && p0.rank() == 3 && p0.channels() == 2 * u0.channels()
                && 2 * p0.height() == u0.height() && 2 * p0.width() == u0.width(),
            ErrorKind::shape,
            "sk_durb " + prefix + ": u " + shape_string(u0.shape()) + " / p " + shape_string(p0.shape()));

    Var t = ops::leaky_relu(g, conv(s, prefix + "/conv_in", u_prev), opt.slope);
    Var refined = opt.use_se ? se_unit(s, prefix + "/se", t, opt) : sk_unit(s, prefix + "/sk", t, opt).out;
    Var u = ops::add(g, u_prev, refined);

    Var d = conv(s, prefix + "/down", u, {2, 1, 1, 1});
    Var z = ops::leaky_relu(g, ops::add(g, d, p_prev), opt.slope);
    Var p = ops::add(g, p_prev, conv(s, prefix + "/conv_p", z));
    return {u, p};
}

namespace {

int gate_hidden(int feat_channels) { return std::max(4, feat_channels / 2); }

} // namespace

void init_gate(ParamSet& ps, Rng& rng, const std::string& prefix, int global_channels, int feat_channels)
{
    const int hidden = gate_hidden(feat_channels);
    init_conv(ps, rng, prefix + "/conv1", hidden, global_channels + 3 + feat_channels, 3);
    init_conv(ps, rng, prefix + "/conv2", 1, hidden, 1);
}

GateOutput gate(const Scope& s, const std::string& prefix, Var global_feat, Var image, Var feat,
                const BlockOptions& opt)
{
    Graph& g = s.g();
    const Tensor& gf = g.value(global_feat);
    const Tensor& f = g.value(feat);
    require(gf.rank() == 3 && f.rank() == 3 && gf.height() == f.height() && gf.width() == f.width(),
            ErrorKind::shape,
            "gate " + prefix + ": global " + shape_string(gf.shape()) + " vs feature " + shape_string(f.shape()));
    Var img = ops::bilinear_resize(g, image, f.height(), f.width());
    Var cat = ops::concat(g, {global_feat, img, feat});
    Var hdn = ops::leaky_relu(g, conv(s, prefix + "/conv1", cat), opt.slope);
    Var map = ops::sigmoid(g, conv(s, prefix + "/conv2", hdn));
    return {ops::broadcast_mul(g, map, feat), map};
}

void init_attention(ParamSet& ps, Rng& rng, const std::string& prefix, int global_channels, int rows, int cols)
{
    init_linear(ps, rng, prefix + "/fc1", rows * cols, global_channels);
    init_linear(ps, rng, prefix + "/fc2", rows * cols, rows * cols);
}

Var attention(const Scope& s, const std::string& prefix, Var global_feat, int rows, int cols,
              const BlockOptions& opt)
{
    require(rows >= 1 && cols >= 1, ErrorKind::shape, "attention needs rows, cols >= 1");
    Graph& g = s.g();
    Var pooled = ops::global_avg_pool(g, global_feat);
    Var z = ops::leaky_relu(g, ops::linear(g, pooled, s.p(prefix + "/fc1.w"), s.p(prefix + "/fc1.b")), opt.slope);
    Var logits = ops::linear(g, z, s.p(prefix + "/fc2.w"), s.p(prefix + "/fc2.b"));
    require(g.value(logits).size() == static_cast<std::size_t>(rows * cols), ErrorKind::shape,
            "attention " + prefix + ": parameters sized for a different matrix");
    return ops::softmax_columns(g, logits, rows, cols);
}

std::vector<Var> aggregate(Graph& g, const std::vector<std::vector<Var>>& gated, Var attn)
{
    require(!gated.empty(), ErrorKind::shape, "aggregate over zero experts");
    const std::size_t rows = gated.size();
    const std::size_t cols = gated[0].size();
    require(g.value(attn).size() == rows * cols, ErrorKind::shape, "aggregate: attention size mismatch");
    std::vector<Var> out;
    out.reserve(cols);
    for (std::size_t j = 0; j < cols; ++j) {
        std::vector<Var> terms;
        for (std::size_t i = 0; i < rows; ++i) {
            require(gated[i].size() == cols, ErrorKind::shape, "aggregate: ragged expert lists");
            terms.push_back(ops::scale_by_entry(g, gated[i][j], attn, static_cast<int>(i * cols + j)));
        }
        out.push_back(ops::add_n(g, terms));
    }
    return out;
}

void init_sgu(ParamSet& ps, Rng& rng, const std::string& prefix, int channels, bool shared_gate)
{
    init_conv(ps, rng, prefix + "/gate_a", channels, channels, 3);
    if (!shared_gate)
        init_conv(ps, rng, prefix + "/gate_b", channels, channels, 3);
}

Var sgu(const Scope& s, const std::string& prefix, Var fa, Var fb, const BlockOptions& opt)
{
    Graph& g = s.g();
    require(g.value(fa).same_shape(g.value(fb)), ErrorKind::shape,
            "sgu " + prefix + ": " + shape_string(g.value(fa).shape()) + " vs " + shape_string(g.value(fb).shape()));
    Var ga = ops::sigmoid(g, conv(s, prefix + "/gate_a", fa));
    Var gb = (opt.shared_sgu_gate || !s.has(prefix + "/gate_b.w")) ? ga
                                                                    : ops::sigmoid(g, conv(s, prefix + "/gate_b", fa));
    return ops::add(g, ops::mul(g, ga, fa), ops::mul(g, gb, fb));
}

void init_bi_sgu(ParamSet& ps, Rng& rng, const std::string& prefix, int length, int channels, bool shared_gate)
{
    for (int k = 1; k < length; ++k) {
        init_sgu(ps, rng, prefix + "/fwd" + std::to_string(k), channels, shared_gate);
        init_sgu(ps, rng, prefix + "/bwd" + std::to_string(k), channels, shared_gate);
    }
    init_conv(ps, rng, prefix + "/fuse", channels, 2 * channels, 3);
}

namespace {

// fold(v_1..v_n) = SGU(v_n, fold(v_1..v_{n-1})), fold(v) = v
Var fold(const Scope& s, const std::string& prefix, const std::vector<Var>& seq, const BlockOptions& opt)
{
    Var acc = seq[0];
    for (std::size_t k = 1; k < seq.size(); ++k)
        acc = sgu(s, prefix + std::to_string(k), seq[k], acc, opt);
    return acc;
}

} // namespace

Var bi_sgu(const Scope& s, const std::string& prefix, const std::vector<Var>& seq, const BlockOptions& opt)
{
    require(!seq.empty(), ErrorKind::invalid_input, "bi_sgu of empty sequence");
    for (Var v : seq)
        require(s.g().value(v).same_shape(s.g().value(seq[0])), ErrorKind::shape, "bi_sgu: non-uniform shapes");
    Var forward = fold(s, prefix + "/fwd", seq, opt);
    std::vector<Var> rev(seq.rbegin(), seq.rend());
    Var backward = fold(s, prefix + "/bwd", rev, opt);
    return conv(s, prefix + "/fuse", ops::concat(s.g(), {forward, backward}));
}

void init_concat_fuse(ParamSet& ps, Rng& rng, const std::string& prefix, int length, int channels)
{
    init_conv(ps, rng, prefix + "/fuse_cat", channels, length * channels, 3);
}

Var concat_fuse(const Scope& s, const std::string& prefix, const std::vector<Var>& seq)
{
    require(!seq.empty(), ErrorKind::invalid_input, "concat_fuse of empty sequence");
    return conv(s, prefix + "/fuse_cat", ops::concat(s.g(), seq));
}

void init_extractor(ParamSet& ps, Rng& rng, const std::string& prefix, int channels)
{
    init_conv(ps, rng, prefix + "/conv0", channels, 3, 3);
    init_conv(ps, rng, prefix + "/conv1", channels, channels, 3);
    init_conv(ps, rng, prefix + "/conv2", 2 * channels, channels, 3);
}

GlobalFeatures extractor(const Scope& s, const std::string& prefix, Var image, const BlockOptions& opt)
{
    const Tensor& x = s.g().value(image);
    require(x.rank() == 3 && x.height() % 4 == 0 && x.width() % 4 == 0, ErrorKind::shape,
            "extractor input must have dims divisible by 4, got " + shape_string(x.shape()));
    Var t = ops::leaky_relu(s.g(), conv(s, prefix + "/conv0", image), opt.slope);
    Var h = conv(s, prefix + "/conv1", t, {2, 1, 1, 1});
    Var g = conv(s, prefix + "/conv2", h, {2, 1, 1, 1});
    return {h, g};
}

void init_upsampler(ParamSet& ps, Rng& rng, const std::string& prefix, int in_channels, int out_channels)
{
    init_conv(ps, rng, prefix, 4 * out_channels, in_channels, 3);
}

Var upsampler(const Scope& s, const std::string& prefix, Var x)
{
    return ops::pixel_shuffle(s.g(), conv(s, prefix, x), 2);
}

void init_decoder(ParamSet& ps, Rng& rng, const std::string& prefix, int channels)
{
    init_upsampler(ps, rng, prefix + "/up", channels, channels);
    init_conv(ps, rng, prefix + "/out", 3, channels, 3, kResidualGain);
}

Var decoder(const Scope& s, const std::string& prefix, Var fused, Var image, const BlockOptions& opt)
{
    Graph& g = s.g();
    const Tensor& f = g.value(fused);
    const Tensor& x = g.value(image);
    require(f.rank() == 3 && 2 * f.height() == x.height() && 2 * f.width() == x.width(), ErrorKind::shape,
            "decoder expects features at half the image resolution: " + shape_string(f.shape()) + " vs "
                + shape_string(x.shape()));
    Var t = ops::leaky_relu(g, upsampler(s, prefix + "/up", fused), opt.slope);
    return ops::add(g, conv(s, prefix + "/out", t), image);
}

} // namespace blend
