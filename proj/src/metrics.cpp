#include "blend/metrics.hpp"

#include "blend/error.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace blend {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

void check_pair(const Tensor& a, const Tensor& b, const char* what)
{
    require(a.rank() == 3 && a.same_shape(b), ErrorKind::shape,
            std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

std::array<double, kWindow> gaussian_window()
{
    std::array<double, kWindow> w{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - kWindow / 2;
        w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        sum += w[i];
    }
    for (double& v : w)
        v /= sum;
    return w;
}

// separable "valid" filtering of one plane
std::vector<double> filter_valid(const double* src, int h, int w, const std::array<double, kWindow>& k)
{
    const int ow = w - kWindow + 1, oh = h - kWindow + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < kWindow; ++i)
                s += k[i] * src[y * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < kWindow; ++i)
                s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

} // namespace

double psnr(const Tensor& a, const Tensor& b)
{
    check_pair(a, b, "psnr");
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.size());
    if (mse == 0.0)
        return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Tensor& a, const Tensor& b)
{
    check_pair(a, b, "ssim");
    require(a.height() >= kWindow && a.width() >= kWindow, ErrorKind::invalid_input,
            "ssim needs images of at least 11x11, got " + shape_string(a.shape()));
    constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    const auto k = gaussian_window();
    const int h = a.height(), w = a.width();
    const std::size_t plane = a.plane();
    double total = 0.0;
    std::vector<double> xx(plane), yy(plane), xy(plane);
    for (int c = 0; c < a.channels(); ++c) {
        const double* x = a.channel(c);
        const double* y = b.channel(c);
        for (std::size_t i = 0; i < plane; ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = filter_valid(x, h, w, k);
        const auto my = filter_valid(y, h, w, k);
        const auto sxx = filter_valid(xx.data(), h, w, k);
        const auto syy = filter_valid(yy.data(), h, w, k);
        const auto sxy = filter_valid(xy.data(), h, w, k);
        double sum = 0.0;
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = sxx[i] - mx[i] * mx[i];
            const double vy = syy[i] - my[i] * my[i];
            const double cxy = sxy[i] - mx[i] * my[i];
            sum += ((2.0 * mx[i] * my[i] + C1) * (2.0 * cxy + C2))
                 / ((mx[i] * mx[i] + my[i] * my[i] + C1) * (vx + vy + C2));
        }
        total += sum / static_cast<double>(mx.size());
    }
    return total / a.channels();
}

} // namespace blend
