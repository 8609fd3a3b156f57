#pragma once

// Synthetic degradations and the severity-grouped chains that compose them.

#include "blend/image.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace blend {

enum class DistortionKind { blur, noise, jpeg, haze, darkness };
enum class Severity { mild, moderate, severe };

const char* to_string(DistortionKind k);
const char* to_string(Severity s);
DistortionKind parse_kind(const std::string& s);
Severity parse_severity(const std::string& s);
/// "none" -> nullopt; otherwise haze or darkness
std::optional<DistortionKind> parse_new_factor(const std::string& s);

struct ParamRange {
    double lo, hi;
    bool hi_inclusive;
    bool contains(double v) const { return v >= lo && (hi_inclusive ? v <= hi : v < hi); }
};

/// Full closed range of each kind's parameter.
ParamRange full_range(DistortionKind k);
/// Sub-range of `k` assigned to `s`: contiguous thirds, inverted for JPEG quality.
ParamRange severity_range(DistortionKind k, Severity s);

struct DistortionStage {
    DistortionKind kind;
    double parameter;
};

struct DegradationChain {
    std::vector<DistortionStage> stages;
    Severity severity = Severity::moderate;
    std::uint64_t seed = 0;
};

/// Throws invalid_parameter when stage order or parameter ranges are violated.
void validate(const DegradationChain& chain);

std::string format_stage(const DistortionStage& s); // "blur:1.25"
DistortionStage parse_stage(const std::string& s);

ImagePatch gaussian_blur(const ImagePatch& img, double sigma);
ImagePatch add_gaussian_noise(const ImagePatch& img, double sigma, std::uint64_t seed);
ImagePatch jpeg_compress(const ImagePatch& img, int quality);
ImagePatch apply_haze(const ImagePatch& img, double beta);
ImagePatch apply_darkness(const ImagePatch& img, double gamma);

inline constexpr double kHazeDepth = 10.0;
inline constexpr double kHazeAirlight = 1.0;

/// Blur, noise and JPEG stages drawn from the severity sub-ranges, optionally
/// followed by one haze or darkness stage.
DegradationChain sample_chain(Severity severity, std::optional<DistortionKind> new_factor, std::uint64_t seed);
/// A one-stage chain for training a single-distortion expert.
DegradationChain sample_single(DistortionKind kind, Severity severity, std::uint64_t seed);

ImagePatch apply_stage(const ImagePatch& img, const DistortionStage& stage, std::uint64_t noise_seed);
ImagePatch apply_chain(const ImagePatch& img, const DegradationChain& chain);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

} // namespace blend
