#pragma once

// Clean -> distorted generator, its discriminator, the adversarial + cycle
// objective and pseudo old-task pair synthesis.

#include "blend/blocks.hpp"
#include "blend/checkpoint.hpp"
#include "blend/dataset.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace blend {

struct GanConfig {
    double lambda1 = 10.0; // cycle weight
    double lr = 2e-4;
    double beta1 = 0.5;
    int batch = 16;
    int epochs = 5;
    int ngf = 64;         // generator base width
    int ndf = 64;         // discriminator base width
    int resblocks = 9;
    int input_size = 64;  // discriminator input side
    bool least_squares = true;
    int buffer_size = 50; // history of generated images shown to the discriminator
    double holdout = 0.1; // fraction of the clean pool kept for model selection
    std::uint64_t seed = 1;

    void validate() const;
};

nlohmann::json to_json(const GanConfig& cfg);
GanConfig gan_config_from_json(const nlohmann::json& j);

ModelCheckpoint init_generator(const GanConfig& cfg, std::uint64_t seed);
ModelCheckpoint init_discriminator(const GanConfig& cfg, std::uint64_t seed);

struct GeneratorTrace {
    Var output;                  // (3, H, W) in [0, 1]
    std::vector<Var> stages;     // conv1, conv2, conv3, resblocks, up1, up2, conv4
};
GeneratorTrace generator_graph(const Scope& s, const GanConfig& cfg, Var y);
/// Raw scalar score (1); `stages` gets conv1..conv5 when non-null.
Var discriminator_graph(const Scope& s, const GanConfig& cfg, Var x, std::vector<Var>* stages = nullptr);

Tensor generator_forward(const ModelCheckpoint& g, const Tensor& y);
double discriminator_forward(const ModelCheckpoint& d, const Tensor& x);

// --- objective ----------------------------------------------------------------------

using Module = std::function<Var(Graph&, Var)>;

struct GanLosses {
    Var generator;     // adversarial + lambda1 * cycle
    Var adversarial;   // generator's adversarial term
    Var cycle;         // mean |R(G(y1)) - y1|
    Var discriminator; // least-squares (or cross-entropy) discriminator loss
    Var fake;          // G(y1)
};

/// Builds every loss term for one (x1, y1) draw. The discriminator term sees a
/// detached fake: `fake_for_d` when valid, else the current G(y1).
GanLosses gan_losses(Graph& g, Var x1, Var y1, const Module& G, const Module& D, const Module& R, double lambda1,
                     bool least_squares, Var fake_for_d = {});

/// Frozen restorer as a Module: base_forward's graph with constant parameters.
Module frozen_restorer(const ModelCheckpoint& r);

struct GanEpochLog {
    int epoch = 0;
    double d_loss = 0, g_adv = 0, cycle = 0; // epoch means
    double cycle_median = 0;
    double d_real = 0, d_fake = 0;           // mean raw scores
    double holdout_cycle = 0;
};

struct GanResult {
    ModelCheckpoint generator;     // best by held-out cycle loss
    ModelCheckpoint discriminator; // final
    int best_epoch = 0;
    std::vector<GanEpochLog> history;
};

/// Unpaired alternating training on an old-task clean pool and distorted pool.
GanResult train_gan(const std::vector<Tensor>& clean, const std::vector<Tensor>& distorted,
                    const ModelCheckpoint& r_frozen, const GanConfig& cfg);

nlohmann::json to_json(const GanEpochLog& log);

// --- pseudo pairs ------------------------------------------------------------------------

struct PseudoPair {
    ImagePatch x1_prime; // quantized clamp(G(y2))
    ImagePatch y2_prime; // quantized clamp(R(x1'))
    std::string provenance;
};

std::vector<PseudoPair> synthesize_pseudo(const std::vector<ImagePatch>& y2, const ModelCheckpoint& g_star,
                                          const ModelCheckpoint& r_frozen);

/// Writes PNGs and a manifest (task "pseudo") mirroring the dataset layout.
DatasetManifest write_pseudo_store(const std::vector<PseudoPair>& pairs, const std::filesystem::path& dir,
                                   std::uint64_t seed);

/// Number of stored pairs whose y2' differs from R re-run on the stored x1'.
std::size_t verify_pseudo_store(const DatasetManifest& store, const ModelCheckpoint& r_frozen);

} // namespace blend
