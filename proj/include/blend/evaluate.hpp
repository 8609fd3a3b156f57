#pragma once

// Grouped PSNR/SSIM evaluation and plot-ready curve export.

#include "blend/checkpoint.hpp"
#include "blend/dataset.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace blend {

enum class ForwardKind { fork, base, expanded };

ForwardKind default_forward(const ModelCheckpoint& model);
ForwardKind parse_forward(const std::string& s);
const char* to_string(ForwardKind k);

/// Model output clamped to [0, 1]. `expert` selects the column of a fork-stage model.
Tensor restore(const ModelCheckpoint& model, ForwardKind kind, const Tensor& x, int expert = 1);

struct SampleRecord {
    std::string id;
    std::string group;
    double psnr = 0, ssim = 0;             // restored vs clean
    double input_psnr = 0, input_ssim = 0; // distorted vs clean
};

struct GroupSummary {
    std::size_t count = 0;
    double psnr = 0, ssim = 0;
    double input_psnr = 0, input_ssim = 0;
};

struct EvalReport {
    std::string model_id;
    std::string dataset_id;
    std::string forward;
    std::vector<SampleRecord> samples; // ordered by (group, id)
    std::map<std::string, GroupSummary> groups;
    double wall_seconds = 0;
};

struct EvalSet {
    std::string group;
    std::vector<SamplePair> pairs;
};

EvalReport evaluate(const ModelCheckpoint& model, ForwardKind kind, const std::vector<EvalSet>& sets, int expert = 1);
/// One group per manifest, named by its severity.
EvalReport evaluate(const ModelCheckpoint& model, ForwardKind kind, const std::vector<DatasetManifest>& manifests,
                    int expert = 1);

/// Mean restored PSNR/SSIM over pairs (no grouping, no timing).
std::pair<double, double> mean_quality(const ModelCheckpoint& model, ForwardKind kind,
                                       const std::vector<SamplePair>& pairs, int expert = 1);

nlohmann::json to_json(const EvalReport& r, bool with_samples = true);
/// Structured text: one "group <name> count <n> psnr <x> ssim <y> input_psnr ... input_ssim ..." line per group.
std::string report_text(const EvalReport& r);

struct CurveSource {
    std::string label;              // column prefix, e.g. the setting
    std::filesystem::path history;  // line-delimited epoch records
};

/// Comma-separated table: epoch, then <label>_old_psnr, <label>_old_ssim,
/// <label>_new_psnr, <label>_new_ssim per source. All sources must cover the
/// same epochs; otherwise throws alignment error.
std::string export_curves(const std::vector<CurveSource>& sources);

} // namespace blend
