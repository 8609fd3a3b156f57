#pragma once

// Fork (experts), join (base network), warm-up and incremental phases.

#include "blend/checkpoint.hpp"
#include "blend/dataset.hpp"
#include "blend/network.hpp"
#include "blend/optim.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace blend {

struct TrainConfig {
    double mu = 1e-4;
    double rho = 1e-3; // 0 freezes theta_S and theta_P1
    double lambda2 = 0.2;
    int warmup_epochs = 5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    int epochs = 30;
    int batch = 16;
    double period_epochs = 0; // cosine period; 0 means `epochs`
    std::uint64_t seed = 1;

    void validate() const;
    double period() const { return period_epochs > 0 ? period_epochs : epochs; }
};

nlohmann::json to_json(const TrainConfig& cfg);

/// Optional on-disk side effects of a training phase. With an empty `dir`
/// nothing is written.
struct PhaseOutput {
    std::filesystem::path dir;
    bool checkpoint_every_epoch = true;
};

// --- fork stage ----------------------------------------------------------------------

struct ExpertsResult {
    ModelCheckpoint fork;                 // E1, D1, fork head, all experts
    std::vector<ModelCheckpoint> experts; // one single-expert checkpoint per kind
    std::vector<nlohmann::json> history;
};

/// Manifest k must hold single-distortion data (its `only` field) and trains
/// expert k only. `val` holds matching held-out manifests (may be empty).
ExpertsResult train_experts(const std::vector<DatasetManifest>& train, const std::vector<DatasetManifest>& val,
                            const NetworkConfig& net, const TrainConfig& cfg, const PhaseOutput& io = {});

/// One optimisation step of the fork model on a batch of kind k; exposed for
/// routing tests.
void fork_step(ModelCheckpoint& fork, Adam& opt, int expert, const std::vector<SamplePair>& batch, double lr);

// --- join stage ----------------------------------------------------------------------

struct BaseResult {
    ModelCheckpoint best; // base_R, best by validation PSNR
    int best_epoch = 0;
    std::vector<nlohmann::json> history;
};

BaseResult train_base(const DatasetManifest& train, const DatasetManifest& val, ModelCheckpoint init,
                      const TrainConfig& cfg, const PhaseOutput& io = {});

// --- warm-up ------------------------------------------------------------------------

struct WarmupResult {
    ModelCheckpoint expanded; // expanded_H
    std::vector<nlohmann::json> history;
};

/// Trains theta_P2 for cfg.warmup_epochs at a constant mu with theta_S frozen.
WarmupResult warmup_expanded(const DatasetManifest& train_new, const DatasetManifest& val_new,
                             const ModelCheckpoint& base, const TrainConfig& cfg, const PhaseOutput& io = {});

// --- incremental stage ----------------------------------------------------------------

enum class Setting { A_new_only, B_joint, C_pseudo, finetune };
const char* to_string(Setting s);
Setting parse_setting(const std::string& s);

enum class HandleKind { new_train, new_val, old_val, old_real_train, old_pseudo_train };
const char* to_string(HandleKind k);

struct DataHandle {
    HandleKind kind;
    std::filesystem::path manifest;
};

/// The data a setting may read. Construction validates the handle set: a
/// real old-task training handle under C_pseudo is an access violation.
class SettingSpec {
public:
    SettingSpec(Setting setting, std::vector<DataHandle> handles);

    Setting setting() const { return setting_; }
    bool has(HandleKind k) const;
    /// Reads the manifest behind a permitted handle.
    DatasetManifest open(HandleKind k) const;

private:
    Setting setting_;
    std::vector<DataHandle> handles_;
};

struct IncrementalResult {
    ModelCheckpoint best;  // role incremental
    ModelCheckpoint last;
    int best_epoch = 0;
    double initial_old_psnr = 0, initial_old_ssim = 0; // base_R on the old validation set
    double initial_new_psnr = 0, initial_new_ssim = 0; // warm expanded_H on the new validation set
    std::vector<nlohmann::json> history;
};

IncrementalResult train_incremental(const SettingSpec& spec, const ModelCheckpoint& base,
                                    const ModelCheckpoint& expanded, const TrainConfig& cfg,
                                    const PhaseOutput& io = {});

} // namespace blend
