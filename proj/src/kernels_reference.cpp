#include "blend/kernels.hpp"

#include <cmath>
#include <cstddef>

namespace blend::kernels::reference {

namespace {

inline bool input_index(const ConvGeometry& g, int oy, int ox, int ky, int kx, int& iy, int& ix)
{
    iy = oy * g.stride - g.pad_begin + ky * g.dilation;
    ix = ox * g.stride - g.pad_begin + kx * g.dilation;
    return iy >= 0 && iy < g.in_h && ix >= 0 && ix < g.in_w;
}

inline std::size_t widx(const ConvGeometry& g, int co, int ci, int ky, int kx)
{
    return ((static_cast<std::size_t>(co) * g.in_c + ci) * g.kernel + ky) * g.kernel + kx;
}

} // namespace

void conv2d_forward(const double* in, const double* weight, const double* bias, double* out, const ConvGeometry& g)
{
    const int oh = g.out_h(), ow = g.out_w();
    for (int co = 0; co < g.out_c; ++co)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double s = bias ? bias[co] : 0.0;
                for (int ci = 0; ci < g.in_c; ++ci)
                    for (int ky = 0; ky < g.kernel; ++ky)
                        for (int kx = 0; kx < g.kernel; ++kx) {
                            int iy, ix;
                            if (input_index(g, oy, ox, ky, kx, iy, ix))
                                s += weight[widx(g, co, ci, ky, kx)]
                                     * in[(static_cast<std::size_t>(ci) * g.in_h + iy) * g.in_w + ix];
                        }
                out[(static_cast<std::size_t>(co) * oh + oy) * ow + ox] = s;
            }
}

void conv2d_backward_input(const double* grad_out, const double* weight, double* grad_in, const ConvGeometry& g)
{
    const int oh = g.out_h(), ow = g.out_w();
    for (int co = 0; co < g.out_c; ++co)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const double go = grad_out[(static_cast<std::size_t>(co) * oh + oy) * ow + ox];
                for (int ci = 0; ci < g.in_c; ++ci)
                    for (int ky = 0; ky < g.kernel; ++ky)
                        for (int kx = 0; kx < g.kernel; ++kx) {
                            int iy, ix;
                            if (input_index(g, oy, ox, ky, kx, iy, ix))
                                grad_in[(static_cast<std::size_t>(ci) * g.in_h + iy) * g.in_w + ix]
                                    += go * weight[widx(g, co, ci, ky, kx)];
                        }
            }
}

void conv2d_backward_weight(const double* in, const double* grad_out, double* grad_weight, double* grad_bias,
                            const ConvGeometry& g)
{
    const int oh = g.out_h(), ow = g.out_w();
    for (int co = 0; co < g.out_c; ++co)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const double go = grad_out[(static_cast<std::size_t>(co) * oh + oy) * ow + ox];
                if (grad_bias)
                    grad_bias[co] += go;
                for (int ci = 0; ci < g.in_c; ++ci)
                    for (int ky = 0; ky < g.kernel; ++ky)
                        for (int kx = 0; kx < g.kernel; ++kx) {
                            int iy, ix;
                            if (input_index(g, oy, ox, ky, kx, iy, ix))
                                grad_weight[widx(g, co, ci, ky, kx)]
                                    += go * in[(static_cast<std::size_t>(ci) * g.in_h + iy) * g.in_w + ix];
                        }
            }
}

void pixel_shuffle_forward(const double* in, double* out, int out_c, int h, int w, int r)
{
    const int oh = h * r, ow = w * r;
    for (int c = 0; c < out_c; ++c)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                const int src_c = c * r * r + (y % r) * r + (x % r);
                out[(static_cast<std::size_t>(c) * oh + y) * ow + x]
                    = in[(static_cast<std::size_t>(src_c) * h + y / r) * w + x / r];
            }
}

void bilinear_forward(const double* in, double* out, int c, int h, int w, int oh, int ow)
{
    auto coord = [](int o, int in_size, int out_size, int& i0, int& i1, double& f) {
        double src = (o + 0.5) * in_size / out_size - 0.5;
        src = std::max(src, 0.0);
        i0 = std::min(static_cast<int>(std::floor(src)), in_size - 1);
        i1 = std::min(i0 + 1, in_size - 1);
        f = src - i0;
    };
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                int y0, y1, x0, x1;
                double fy, fx;
                coord(y, h, oh, y0, y1, fy);
                coord(x, w, ow, x0, x1, fx);
                auto at = [&](int yy, int xx) { return in[(static_cast<std::size_t>(ch) * h + yy) * w + xx]; };
                const double top = at(y0, x0) + fx * (at(y0, x1) - at(y0, x0));
                const double bot = at(y1, x0) + fx * (at(y1, x1) - at(y1, x0));
                out[(static_cast<std::size_t>(ch) * oh + y) * ow + x] = top + fy * (bot - top);
            }
}

} // namespace blend::kernels::reference
