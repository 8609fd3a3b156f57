#pragma once

#include "blend/tensor.hpp"

#include <filesystem>
#include <string>

namespace blend {

/// RGB image in planar (3, H, W) layout with values in [0, 1].
struct ImagePatch {
    Tensor pixels;
    std::string id;

    ImagePatch() = default;
    ImagePatch(int height, int width, double fill = 0.0, std::string id_ = {})
        : pixels({3, height, width}, fill), id(std::move(id_)) {}
    explicit ImagePatch(Tensor t, std::string id_ = {});

    int height() const { return pixels.height(); }
    int width() const { return pixels.width(); }
    double& at(int c, int y, int x) { return pixels.at(c, y, x); }
    double at(int c, int y, int x) const { return pixels.at(c, y, x); }
};

void clamp01(Tensor& t);
ImagePatch clamped(const ImagePatch& img);
/// Rounds to the 8-bit grid, the exact values a PNG round trip yields.
ImagePatch quantized(const ImagePatch& img);
ImagePatch crop(const ImagePatch& img, int y, int x, int h, int w);

ImagePatch read_png(const std::filesystem::path& path);
/// Clamps and writes 8-bit RGB. Output bytes depend only on pixel values.
void write_png(const std::filesystem::path& path, const ImagePatch& img);

} // namespace blend
