#include "blend/scenes.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace blend {

ImagePatch synthetic_scene(int height, int width, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ImagePatch img(height, width, 0.0, "scene" + std::to_string(seed));

    double base[3], grad_x[3], grad_y[3];
    for (int c = 0; c < 3; ++c) {
        base[c] = 0.25 + 0.5 * u(rng);
        grad_x[c] = (u(rng) - 0.5) * 0.4;
        grad_y[c] = (u(rng) - 0.5) * 0.4;
    }
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                img.at(c, y, x) = base[c] + grad_x[c] * x / width + grad_y[c] * y / height;

    const double diag = std::hypot(height, width);
    const int shapes = 6 + static_cast<int>(u(rng) * 8);
    for (int s = 0; s < shapes; ++s) {
        double color[3];
        for (double& v : color)
            v = u(rng);
        const double cy = u(rng) * height, cx = u(rng) * width;
        const double size = (0.05 + 0.25 * u(rng)) * diag;
        const bool circle = u(rng) < 0.5;
        const bool striped = u(rng) < 0.4;
        const double freq = 0.3 + 1.2 * u(rng);
        const double angle = u(rng) * 3.14159265358979;
        const double ca = std::cos(angle), sa = std::sin(angle);
        const double aspect = 0.4 + 1.2 * u(rng);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const double dy = y - cy, dx = x - cx;
                const double ry = (-sa * dx + ca * dy) / aspect, rx = ca * dx + sa * dy;
                const bool inside = circle ? (rx * rx + ry * ry < size * size * 0.25)
                                           : (std::abs(rx) < size * 0.5 && std::abs(ry) < size * 0.5);
                if (!inside)
                    continue;
                const double tex = striped ? 0.5 + 0.5 * std::sin(freq * rx) : 1.0;
                for (int c = 0; c < 3; ++c)
                    img.at(c, y, x) = color[c] * (0.6 + 0.4 * tex);
            }
    }

    // fine detail everywhere
    const double fy = 0.5 + u(rng), fx = 0.5 + u(rng), amp = 0.03 + 0.04 * u(rng);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                img.at(c, y, x) = std::clamp(img.at(c, y, x) + amp * std::sin(fy * y + c) * std::cos(fx * x), 0.0, 1.0);
    return img;
}

} // namespace blend
