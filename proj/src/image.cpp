#include "blend/image.hpp"

#include "blend/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace blend {

ImagePatch::ImagePatch(Tensor t, std::string id_) : pixels(std::move(t)), id(std::move(id_))
{
    require(pixels.rank() == 3 && pixels.channels() == 3, ErrorKind::shape,
            "image must be (3,H,W), got " + shape_string(pixels.shape()));
}

void clamp01(Tensor& t)
{
    for (auto& v : t.values())
        v = std::clamp(v, 0.0, 1.0);
}

ImagePatch clamped(const ImagePatch& img)
{
    ImagePatch out = img;
    clamp01(out.pixels);
    return out;
}

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

} // namespace

ImagePatch quantized(const ImagePatch& img)
{
    ImagePatch out = img;
    for (auto& v : out.pixels.values())
        v = to_byte(v) / 255.0;
    return out;
}

ImagePatch crop(const ImagePatch& img, int y, int x, int h, int w)
{
    require(y >= 0 && x >= 0 && y + h <= img.height() && x + w <= img.width(), ErrorKind::shape,
            "crop window outside image");
    ImagePatch out(h, w);
    for (int c = 0; c < 3; ++c)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx)
                out.at(c, yy, xx) = img.at(c, y + yy, x + xx);
    return out;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const
    {
        if (f)
            std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace

ImagePatch read_png(const std::filesystem::path& path)
{
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    require(fp != nullptr, ErrorKind::io, "cannot open " + path.string());
    unsigned char sig[8];
    require(std::fread(sig, 1, 8, fp.get()) == 8 && png_sig_cmp(sig, 0, 8) == 0, ErrorKind::io,
            "not a PNG file: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    std::vector<png_bytep> rows;
    std::vector<unsigned char> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::io, "corrupt PNG: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16)
        png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA)
        png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const std::size_t stride = png_get_rowbytes(png, info);
    buffer.resize(stride * static_cast<std::size_t>(h));
    rows.resize(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<std::size_t>(y)] = buffer.data() + stride * static_cast<std::size_t>(y);
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    ImagePatch img(h, w, 0.0, path.stem().string());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = rows[static_cast<std::size_t>(y)][x * 3 + c] / 255.0;
    return img;
}

void write_png(const std::filesystem::path& path, const ImagePatch& img)
{
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    require(fp != nullptr, ErrorKind::io, "cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    const int h = img.height(), w = img.width();
    std::vector<unsigned char> buffer(static_cast<std::size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                buffer[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_byte(img.at(c, y, x));
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<std::size_t>(y)] = buffer.data() + static_cast<std::size_t>(y) * w * 3;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::io, "PNG encode failed: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace blend
