#pragma once

#include "blend/image.hpp"

#include <cstdint>

namespace blend {

/// Deterministic synthetic "natural" image: smooth illumination, flat and
/// textured shapes with hard edges, and fine sinusoidal detail. Stands in for
/// photographic training data in tests and demos.
ImagePatch synthetic_scene(int height, int width, std::uint64_t seed);

} // namespace blend
