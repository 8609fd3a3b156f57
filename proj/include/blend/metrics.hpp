#pragma once

#include "blend/tensor.hpp"

namespace blend {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) over all channels, capped at 100 dB.
double psnr(const Tensor& a, const Tensor& b);

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03 and unit dynamic range. Statistics are taken over every window
/// that fits inside the image; the per-channel means are averaged.
double ssim(const Tensor& a, const Tensor& b);

} // namespace blend
