#include "blend/distortion.hpp"

#include "blend/error.hpp"

#include <jpeglib.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <random>

namespace blend {

const char* to_string(DistortionKind k)
{
    switch (k) {
    case DistortionKind::blur: return "blur";
    case DistortionKind::noise: return "noise";
    case DistortionKind::jpeg: return "jpeg";
    case DistortionKind::haze: return "haze";
    case DistortionKind::darkness: return "darkness";
    }
    return "?";
}

const char* to_string(Severity s)
{
    switch (s) {
    case Severity::mild: return "mild";
    case Severity::moderate: return "moderate";
    case Severity::severe: return "severe";
    }
    return "?";
}

DistortionKind parse_kind(const std::string& s)
{
    for (auto k : {DistortionKind::blur, DistortionKind::noise, DistortionKind::jpeg, DistortionKind::haze,
                   DistortionKind::darkness})
        if (s == to_string(k))
            return k;
    fail(ErrorKind::invalid_parameter, "unknown distortion kind '" + s + "'");
}

Severity parse_severity(const std::string& s)
{
    for (auto v : {Severity::mild, Severity::moderate, Severity::severe})
        if (s == to_string(v))
            return v;
    fail(ErrorKind::invalid_parameter, "unknown severity '" + s + "'");
}

std::optional<DistortionKind> parse_new_factor(const std::string& s)
{
    if (s.empty() || s == "none")
        return std::nullopt;
    const auto k = parse_kind(s);
    require(k == DistortionKind::haze || k == DistortionKind::darkness, ErrorKind::invalid_parameter,
            "new factor must be none, haze or darkness");
    return k;
}

ParamRange full_range(DistortionKind k)
{
    switch (k) {
    case DistortionKind::blur: return {0.0, 5.0, true};
    case DistortionKind::noise: return {0.0, 50.0, true};
    case DistortionKind::jpeg: return {10.0, 100.0, true};
    case DistortionKind::haze: return {0.05, 0.25, true};
    case DistortionKind::darkness: return {1.5, 2.5, true};
    }
    return {0, 0, true};
}

ParamRange severity_range(DistortionKind k, Severity s)
{
    const ParamRange r = full_range(k);
    const double third = (r.hi - r.lo) / 3.0;
    int slot = static_cast<int>(s);
    if (k == DistortionKind::jpeg)
        slot = 2 - slot; // low quality is severe
    const double lo = r.lo + slot * third;
    if (slot == 2)
        return {lo, r.hi, true};
    return {lo, r.lo + (slot + 1) * third, false};
}

std::string format_stage(const DistortionStage& s)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s:%.17g", to_string(s.kind), s.parameter);
    return buf;
}

DistortionStage parse_stage(const std::string& s)
{
    const auto colon = s.find(':');
    require(colon != std::string::npos, ErrorKind::invalid_input, "bad stage '" + s + "'");
    DistortionStage st{parse_kind(s.substr(0, colon)), 0.0};
    try {
        st.parameter = std::stod(s.substr(colon + 1));
    } catch (const std::exception&) {
        fail(ErrorKind::invalid_input, "bad stage parameter '" + s + "'");
    }
    return st;
}

void validate(const DegradationChain& chain)
{
    int last_base = -1;
    bool seen_new = false;
    for (const auto& st : chain.stages) {
        require(!seen_new, ErrorKind::invalid_parameter, "new-factor stage must be last");
        const int order = static_cast<int>(st.kind);
        if (st.kind == DistortionKind::haze || st.kind == DistortionKind::darkness) {
            seen_new = true;
        } else {
            require(order > last_base, ErrorKind::invalid_parameter, "base stages must run blur -> noise -> jpeg");
            last_base = order;
        }
        require(full_range(st.kind).contains(st.parameter), ErrorKind::invalid_parameter,
                format_stage(st) + " outside the kind's range");
        require(severity_range(st.kind, chain.severity).contains(st.parameter), ErrorKind::invalid_parameter,
                format_stage(st) + " outside the " + std::string(to_string(chain.severity)) + " sub-range");
    }
}

namespace {

int mirror(int i, int n)
{
    if (n == 1)
        return 0;
    const int period = 2 * n;
    int m = i % period;
    if (m < 0)
        m += period;
    return m < n ? m : period - 1 - m;
}

} // namespace

ImagePatch gaussian_blur(const ImagePatch& img, double sigma)
{
    require(sigma >= 0.0 && std::isfinite(sigma), ErrorKind::invalid_parameter, "blur sigma must be >= 0");
    if (sigma == 0.0)
        return img;
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    double sum = 0.0;
    for (int i = -r; i <= r; ++i)
        sum += (k[static_cast<std::size_t>(i + r)] = std::exp(-(i * i) / (2.0 * sigma * sigma)));
    for (auto& v : k)
        v /= sum;

    const int h = img.height(), w = img.width();
    ImagePatch tmp(h, w), out(h, w, 0.0, img.id);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double s = 0.0;
                for (int i = -r; i <= r; ++i)
                    s += k[static_cast<std::size_t>(i + r)] * img.at(c, y, mirror(x + i, w));
                tmp.at(c, y, x) = s;
            }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double s = 0.0;
                for (int i = -r; i <= r; ++i)
                    s += k[static_cast<std::size_t>(i + r)] * tmp.at(c, mirror(y + i, h), x);
                out.at(c, y, x) = s;
            }
    }
    clamp01(out.pixels);
    return out;
}

ImagePatch add_gaussian_noise(const ImagePatch& img, double sigma, std::uint64_t seed)
{
    require(sigma >= 0.0 && std::isfinite(sigma), ErrorKind::invalid_parameter, "noise sigma must be >= 0");
    if (sigma == 0.0)
        return img;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, sigma / 255.0);
    ImagePatch out = img;
    for (auto& v : out.pixels.values())
        v += dist(rng);
    clamp01(out.pixels);
    return out;
}

namespace {

struct JpegErrorManager {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo)
{
    auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    std::longjmp(err->jump, 1);
}

} // namespace

ImagePatch jpeg_compress(const ImagePatch& img, int quality)
{
    require(quality >= 1 && quality <= 100, ErrorKind::invalid_parameter,
            "jpeg quality must be in [1,100], got " + std::to_string(quality));
    const int h = img.height(), w = img.width();
    std::vector<unsigned char> rgb(static_cast<std::size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c]
                    = static_cast<unsigned char>(std::lround(std::clamp(img.at(c, y, x), 0.0, 1.0) * 255.0));

    unsigned char* encoded = nullptr;
    unsigned long encoded_size = 0;
    {
        jpeg_compress_struct cinfo;
        JpegErrorManager jerr;
        cinfo.err = jpeg_std_error(&jerr.pub);
        jerr.pub.error_exit = jpeg_error_exit;
        if (setjmp(jerr.jump)) {
            jpeg_destroy_compress(&cinfo);
            std::free(encoded);
            fail(ErrorKind::io, "jpeg encode failed");
        }
        jpeg_create_compress(&cinfo);
        jpeg_mem_dest(&cinfo, &encoded, &encoded_size);
        cinfo.image_width = static_cast<JDIMENSION>(w);
        cinfo.image_height = static_cast<JDIMENSION>(h);
        cinfo.input_components = 3;
        cinfo.in_color_space = JCS_RGB;
        jpeg_set_defaults(&cinfo);
        jpeg_set_quality(&cinfo, quality, TRUE);
        jpeg_start_compress(&cinfo, TRUE);
        while (cinfo.next_scanline < cinfo.image_height) {
            JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.next_scanline) * w * 3;
            jpeg_write_scanlines(&cinfo, &row, 1);
        }
        jpeg_finish_compress(&cinfo);
        jpeg_destroy_compress(&cinfo);
    }

    ImagePatch out(h, w, 0.0, img.id);
    {
        jpeg_decompress_struct dinfo;
        JpegErrorManager jerr;
        dinfo.err = jpeg_std_error(&jerr.pub);
        jerr.pub.error_exit = jpeg_error_exit;
        if (setjmp(jerr.jump)) {
            jpeg_destroy_decompress(&dinfo);
            std::free(encoded);
            fail(ErrorKind::io, "jpeg decode failed");
        }
        jpeg_create_decompress(&dinfo);
        jpeg_mem_src(&dinfo, encoded, encoded_size);
        jpeg_read_header(&dinfo, TRUE);
        dinfo.out_color_space = JCS_RGB;
        jpeg_start_decompress(&dinfo);
        std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
        while (dinfo.output_scanline < dinfo.output_height) {
            const int y = static_cast<int>(dinfo.output_scanline);
            JSAMPROW rp = row.data();
            jpeg_read_scanlines(&dinfo, &rp, 1);
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c)
                    out.at(c, y, x) = row[static_cast<std::size_t>(x) * 3 + c] / 255.0;
        }
        jpeg_finish_decompress(&dinfo);
        jpeg_destroy_decompress(&dinfo);
    }
    std::free(encoded);
    return out;
}

ImagePatch apply_haze(const ImagePatch& img, double beta)
{
    require(beta >= 0.0 && std::isfinite(beta), ErrorKind::invalid_parameter, "haze beta must be >= 0");
    if (beta == 0.0)
        return img;
    const double t = std::exp(-beta * kHazeDepth);
    ImagePatch out = img;
    for (auto& v : out.pixels.values())
        v = v * t + kHazeAirlight * (1.0 - t);
    clamp01(out.pixels);
    return out;
}

ImagePatch apply_darkness(const ImagePatch& img, double gamma)
{
    require(gamma > 0.0 && std::isfinite(gamma), ErrorKind::invalid_parameter, "gamma must be > 0");
    if (gamma == 1.0)
        return img;
    ImagePatch out = img;
    for (auto& v : out.pixels.values())
        v = std::pow(std::clamp(v, 0.0, 1.0), gamma);
    return out;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b)
{
    // splitmix64 finalizer over the combined state
    std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

namespace {

double draw(DistortionKind k, Severity s, std::mt19937_64& rng)
{
    const ParamRange r = severity_range(k, s);
    if (k == DistortionKind::jpeg) {
        const int lo = static_cast<int>(std::ceil(r.lo));
        const int hi = r.hi_inclusive ? static_cast<int>(std::floor(r.hi)) : static_cast<int>(std::ceil(r.hi)) - 1;
        return std::uniform_int_distribution<int>(lo, hi)(rng);
    }
    const double v = std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
    // uniform_real_distribution is half-open; keep open upper bounds open under rounding
    return r.contains(v) ? v : r.lo;
}

} // namespace

DegradationChain sample_chain(Severity severity, std::optional<DistortionKind> new_factor, std::uint64_t seed)
{
    require(!new_factor || *new_factor == DistortionKind::haze || *new_factor == DistortionKind::darkness,
            ErrorKind::invalid_parameter, "new factor must be haze or darkness");
    std::mt19937_64 rng(seed);
    DegradationChain chain;
    chain.severity = severity;
    chain.seed = seed;
    for (auto k : {DistortionKind::blur, DistortionKind::noise, DistortionKind::jpeg})
        chain.stages.push_back({k, draw(k, severity, rng)});
    if (new_factor)
        chain.stages.push_back({*new_factor, draw(*new_factor, severity, rng)});
    return chain;
}

DegradationChain sample_single(DistortionKind kind, Severity severity, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    DegradationChain chain;
    chain.severity = severity;
    chain.seed = seed;
    chain.stages.push_back({kind, draw(kind, severity, rng)});
    return chain;
}

ImagePatch apply_stage(const ImagePatch& img, const DistortionStage& stage, std::uint64_t noise_seed)
{
    switch (stage.kind) {
    case DistortionKind::blur: return gaussian_blur(img, stage.parameter);
    case DistortionKind::noise: return add_gaussian_noise(img, stage.parameter, noise_seed);
    case DistortionKind::jpeg: {
        const double q = stage.parameter;
        require(q == std::floor(q), ErrorKind::invalid_parameter, "jpeg quality must be an integer");
        return jpeg_compress(img, static_cast<int>(q));
    }
    case DistortionKind::haze: return apply_haze(img, stage.parameter);
    case DistortionKind::darkness: return apply_darkness(img, stage.parameter);
    }
    return img;
}

ImagePatch apply_chain(const ImagePatch& img, const DegradationChain& chain)
{
    ImagePatch cur = img;
    for (std::size_t i = 0; i < chain.stages.size(); ++i)
        cur = apply_stage(cur, chain.stages[i], mix_seed(chain.seed, 1000 + i));
    return cur;
}

} // namespace blend
