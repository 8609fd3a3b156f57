#pragma once

// Raw compute kernels over contiguous (C, H, W) planes.
//
// Every kernel has two implementations: the OpenMP one in namespace
// `kernels`, used by the autograd layer, and a plain serial loop nest in
// `kernels::reference` that the tests use as an oracle. The parallel versions
// split work only over output channels (or input channels for the data
// gradient), so each output element is summed by one thread in a fixed order
// and results do not depend on the thread count.
//
// Backward kernels accumulate into their outputs.

namespace blend::kernels {

struct ConvGeometry {
    int in_c = 0, in_h = 0, in_w = 0;
    int out_c = 0;
    int kernel = 3;
    int stride = 1;
    int pad_begin = 1; // top and left
    int pad_end = 1;   // bottom and right
    int dilation = 1;

    int out_h() const { return (in_h + pad_begin + pad_end - dilation * (kernel - 1) - 1) / stride + 1; }
    int out_w() const { return (in_w + pad_begin + pad_end - dilation * (kernel - 1) - 1) / stride + 1; }
    long long macs() const
    {
        return static_cast<long long>(out_c) * in_c * kernel * kernel * out_h() * out_w();
    }
};

// weight layout: (out_c, in_c, k, k); bias may be null
void conv2d_forward(const double* in, const double* weight, const double* bias, double* out, const ConvGeometry& g);
void conv2d_backward_input(const double* grad_out, const double* weight, double* grad_in, const ConvGeometry& g);
void conv2d_backward_weight(const double* in, const double* grad_out, double* grad_weight, double* grad_bias,
                            const ConvGeometry& g);

void pixel_shuffle_forward(const double* in, double* out, int out_c, int h, int w, int r);
void pixel_shuffle_backward(const double* grad_out, double* grad_in, int out_c, int h, int w, int r);

// half-pixel bilinear resampling with edge clamping
void bilinear_forward(const double* in, double* out, int c, int h, int w, int oh, int ow);
void bilinear_backward(const double* grad_out, double* grad_in, int c, int h, int w, int oh, int ow);

namespace reference {

void conv2d_forward(const double* in, const double* weight, const double* bias, double* out, const ConvGeometry& g);
void conv2d_backward_input(const double* grad_out, const double* weight, double* grad_in, const ConvGeometry& g);
void conv2d_backward_weight(const double* in, const double* grad_out, double* grad_weight, double* grad_bias,
                            const ConvGeometry& g);
void pixel_shuffle_forward(const double* in, double* out, int out_c, int h, int w, int r);
void bilinear_forward(const double* in, double* out, int c, int h, int w, int oh, int ow);

} // namespace reference

} // namespace blend::kernels
