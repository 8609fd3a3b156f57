#include "blend/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace blend::kernels {

namespace {

// Parallel regions below this many multiply-adds cost more than they save.
constexpr long long kParallelThreshold = 1 << 15;

// Range of output columns [lo, hi) whose input column ox*stride + offset is inside [0, in_w).
inline void valid_range(int offset, int stride, int in_w, int out_w, int& lo, int& hi)
{
    lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
    int last = in_w - 1 - offset; // ox*stride <= last
    hi = last < 0 ? 0 : std::min(out_w, last / stride + 1);
    if (hi < lo)
        hi = lo;
}

} // namespace

void conv2d_forward(const double* in, const double* weight, const double* bias, double* out, const ConvGeometry& g)
{
    const int oh = g.out_h(), ow = g.out_w();
    const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
    const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
    const int kk = g.kernel * g.kernel;

#pragma omp parallel for schedule(static) if (g.macs() > kParallelThreshold)
    for (int co = 0; co < g.out_c; ++co) {
        double* o = out + co * out_plane;
        std::fill(o, o + out_plane, bias ? bias[co] : 0.0);
        for (int ci = 0; ci < g.in_c; ++ci) {
            const double* src = in + ci * in_plane;
            const double* wk = weight + (static_cast<std::size_t>(co) * g.in_c + ci) * kk;
            for (int ky = 0; ky < g.kernel; ++ky) {
                for (int kx = 0; kx < g.kernel; ++kx) {
                    const double wv = wk[ky * g.kernel + kx];
                    if (wv == 0.0)
                        continue;
                    const int xoff = kx * g.dilation - g.pad_begin;
                    int lo, hi;
                    valid_range(xoff, g.stride, g.in_w, ow, lo, hi);
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * g.stride - g.pad_begin + ky * g.dilation;
                        if (iy < 0 || iy >= g.in_h)
                            continue;
                        const double* irow = src + static_cast<std::size_t>(iy) * g.in_w + xoff;
                        double* orow = o + static_cast<std::size_t>(oy) * ow;
                        if (g.stride == 1) {
                            for (int ox = lo; ox < hi; ++ox)
                                orow[ox] += wv * irow[ox];
                        } else {
                            for (int ox = lo; ox < hi; ++ox)
                                orow[ox] += wv * irow[ox * g.stride];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_input(const double* grad_out, const double* weight, double* grad_in, const ConvGeometry& g)
{
    const int oh = g.out_h(), ow = g.out_w();
    const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
    const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
    const int kk = g.kernel * g.kernel;

#pragma omp parallel for schedule(static) if (g.macs() > kParallelThreshold)
    for (int ci = 0; ci < g.in_c; ++ci) {
        double* dst = grad_in + ci * in_plane;
        for (int co = 0; co < g.out_c; ++co) {
            const double* go = grad_out + co * out_plane;
            const double* wk = weight + (static_cast<std::size_t>(co) * g.in_c + ci) * kk;
            for (int ky = 0; ky < g.kernel; ++ky) {
                for (int kx = 0; kx < g.kernel; ++kx) {
                    const double wv = wk[ky * g.kernel + kx];
                    if (wv == 0.0)
                        continue;
                    const int xoff = kx * g.dilation - g.pad_begin;
                    int lo, hi;
                    valid_range(xoff, g.stride, g.in_w, ow, lo, hi);
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * g.stride - g.pad_begin + ky * g.dilation;
                        if (iy < 0 || iy >= g.in_h)
                            continue;
                        double* irow = dst + static_cast<std::size_t>(iy) * g.in_w + xoff;
                        const double* orow = go + static_cast<std::size_t>(oy) * ow;
                        if (g.stride == 1) {
                            for (int ox = lo; ox < hi; ++ox)
                                irow[ox] += wv * orow[ox];
                        } else {
                            for (int ox = lo; ox < hi; ++ox)
                                irow[ox * g.stride] += wv * orow[ox];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_weight(const double* in, const double* grad_out, double* grad_weight, double* grad_bias,
                            const ConvGeometry& g)
{
    const int oh = g.out_h(), ow = g.out_w();
    const std::size_t in_plane = static_cast<std::size_t>(g.in_h) * g.in_w;
    const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
    const int kk = g.kernel * g.kernel;

#pragma omp parallel for schedule(static) if (g.macs() > kParallelThreshold)
    for (int co = 0; co < g.out_c; ++co) {
        const double* go = grad_out + co * out_plane;
        if (grad_bias) {
            double s = 0.0;
            for (std::size_t i = 0; i < out_plane; ++i)
                s += go[i];
            grad_bias[co] += s;
        }
        for (int ci = 0; ci < g.in_c; ++ci) {
            const double* src = in + ci * in_plane;
            double* gw = grad_weight + (static_cast<std::size_t>(co) * g.in_c + ci) * kk;
            for (int ky = 0; ky < g.kernel; ++ky) {
                for (int kx = 0; kx < g.kernel; ++kx) {
                    const int xoff = kx * g.dilation - g.pad_begin;
                    int lo, hi;
                    valid_range(xoff, g.stride, g.in_w, ow, lo, hi);
                    double acc = 0.0;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * g.stride - g.pad_begin + ky * g.dilation;
                        if (iy < 0 || iy >= g.in_h)
                            continue;
                        const double* irow = src + static_cast<std::size_t>(iy) * g.in_w + xoff;
                        const double* orow = go + static_cast<std::size_t>(oy) * ow;
                        if (g.stride == 1) {
                            for (int ox = lo; ox < hi; ++ox)
                                acc += orow[ox] * irow[ox];
                        } else {
                            for (int ox = lo; ox < hi; ++ox)
                                acc += orow[ox] * irow[ox * g.stride];
                        }
                    }
                    gw[ky * g.kernel + kx] += acc;
                }
            }
        }
    }
}

void pixel_shuffle_forward(const double* in, double* out, int out_c, int h, int w, int r)
{
    const std::size_t in_plane = static_cast<std::size_t>(h) * w;
    const int ow = w * r;
#pragma omp parallel for schedule(static) if (static_cast<long long>(out_c) * in_plane * r * r > kParallelThreshold)
    for (int c = 0; c < out_c; ++c) {
        double* o = out + static_cast<std::size_t>(c) * in_plane * r * r;
        for (int sy = 0; sy < r; ++sy)
            for (int sx = 0; sx < r; ++sx) {
                const double* src = in + (static_cast<std::size_t>(c) * r * r + sy * r + sx) * in_plane;
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        o[static_cast<std::size_t>(y * r + sy) * ow + x * r + sx] = src[y * w + x];
            }
    }
}

void pixel_shuffle_backward(const double* grad_out, double* grad_in, int out_c, int h, int w, int r)
{
    const std::size_t in_plane = static_cast<std::size_t>(h) * w;
    const int ow = w * r;
#pragma omp parallel for schedule(static) if (static_cast<long long>(out_c) * in_plane * r * r > kParallelThreshold)
    for (int c = 0; c < out_c; ++c) {
        const double* go = grad_out + static_cast<std::size_t>(c) * in_plane * r * r;
        for (int sy = 0; sy < r; ++sy)
            for (int sx = 0; sx < r; ++sx) {
                double* dst = grad_in + (static_cast<std::size_t>(c) * r * r + sy * r + sx) * in_plane;
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        dst[y * w + x] += go[static_cast<std::size_t>(y * r + sy) * ow + x * r + sx];
            }
    }
}

namespace {

struct Tap {
    int i0, i1;
    double w0, w1;
};

Tap bilinear_tap(int o, int in_size, int out_size)
{
    const double scale = static_cast<double>(in_size) / out_size;
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0.0)
        src = 0.0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in_size - 1)
        i0 = in_size - 1;
    const int i1 = std::min(i0 + 1, in_size - 1);
    const double frac = src - i0;
    return {i0, i1, 1.0 - frac, frac};
}

} // namespace

void bilinear_forward(const double* in, double* out, int c, int h, int w, int oh, int ow)
{
    std::vector<Tap> ty(oh), tx(ow);
    for (int y = 0; y < oh; ++y)
        ty[y] = bilinear_tap(y, h, oh);
    for (int x = 0; x < ow; ++x)
        tx[x] = bilinear_tap(x, w, ow);
    for (int ch = 0; ch < c; ++ch) {
        const double* src = in + static_cast<std::size_t>(ch) * h * w;
        double* dst = out + static_cast<std::size_t>(ch) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            const Tap& a = ty[y];
            for (int x = 0; x < ow; ++x) {
                const Tap& b = tx[x];
                dst[y * ow + x] = a.w0 * (b.w0 * src[a.i0 * w + b.i0] + b.w1 * src[a.i0 * w + b.i1])
                                  + a.w1 * (b.w0 * src[a.i1 * w + b.i0] + b.w1 * src[a.i1 * w + b.i1]);
            }
        }
    }
}

void bilinear_backward(const double* grad_out, double* grad_in, int c, int h, int w, int oh, int ow)
{
    std::vector<Tap> ty(oh), tx(ow);
    for (int y = 0; y < oh; ++y)
        ty[y] = bilinear_tap(y, h, oh);
    for (int x = 0; x < ow; ++x)
        tx[x] = bilinear_tap(x, w, ow);
    for (int ch = 0; ch < c; ++ch) {
        const double* go = grad_out + static_cast<std::size_t>(ch) * oh * ow;
        double* dst = grad_in + static_cast<std::size_t>(ch) * h * w;
        for (int y = 0; y < oh; ++y) {
            const Tap& a = ty[y];
            for (int x = 0; x < ow; ++x) {
                const Tap& b = tx[x];
                const double gv = go[y * ow + x];
                dst[a.i0 * w + b.i0] += gv * a.w0 * b.w0;
                dst[a.i0 * w + b.i1] += gv * a.w0 * b.w1;
                dst[a.i1 * w + b.i0] += gv * a.w1 * b.w0;
                dst[a.i1 * w + b.i1] += gv * a.w1 * b.w1;
            }
        }
    }
}

} // namespace blend::kernels
