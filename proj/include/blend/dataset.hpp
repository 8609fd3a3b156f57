#pragma once

// Patch datasets on disk: PNG pairs plus a line-delimited manifest.
//
// manifest.jsonl layout, one JSON object per line:
//   line 1   header  {"format":"blend-manifest","version":1,"task":...,
//                     "severity":...,"new_factor":...,"only":...,"seed":...,
//                     "patch":...,"stride":...,"count":N}
//   N lines  entries {"clean":...,"distorted":...,"chain":["blur:1.5",...],
//                     "severity":...,"seed":...[,"provenance":...]}
//   rest     errors  {"error":"<path>: <reason>"}
// Paths are relative to the manifest's directory.

#include "blend/distortion.hpp"
#include "blend/image.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace blend {

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kManifestName = "manifest.jsonl";

struct ManifestEntry {
    std::string clean_path;
    std::string distorted_path;
    DegradationChain chain;
    std::string provenance; // pseudo pairs only
};

struct DatasetManifest {
    std::string task = "blended"; // blended | single | pseudo
    Severity severity = Severity::moderate;
    std::optional<DistortionKind> new_factor;
    std::optional<DistortionKind> only; // single-distortion expert data
    std::uint64_t seed = 0;
    int patch = 64;
    int stride = 64;
    std::vector<ManifestEntry> entries;
    std::vector<std::string> errors;
    std::filesystem::path root; // directory of manifest.jsonl; not serialized
};

struct BuildOptions {
    int patch = 64;
    int stride = 64;
    Severity severity = Severity::moderate;
    std::optional<DistortionKind> new_factor;
    std::optional<DistortionKind> only;
    std::uint64_t seed = 0;
    std::size_t max_patches = 0; // 0: no cap
};

std::string manifest_text(const DatasetManifest& m);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& dir);
/// Reads `dir/manifest.jsonl` (or a direct file path) and checks the declared count.
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Sorted list of *.png files in a directory.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Grid-crops every clean image, degrades each crop with its own chain and
/// writes clean/ and distorted/ PNGs plus the manifest under out_dir.
/// Per-patch seeds derive from (seed, patch index). Unreadable inputs are
/// recorded as manifest errors.
DatasetManifest build_dataset(const std::vector<std::filesystem::path>& clean_images, const BuildOptions& opt,
                              const std::filesystem::path& out_dir);

struct SamplePair {
    ImagePatch distorted;
    ImagePatch clean;
};

std::vector<SamplePair> load_pairs(const DatasetManifest& m);
std::vector<ImagePatch> load_clean(const DatasetManifest& m);
std::vector<ImagePatch> load_distorted(const DatasetManifest& m);

/// Every referenced file exists and decodes; throws invalid_input otherwise.
void verify_manifest(const DatasetManifest& m);

} // namespace blend
