#pragma once

// Restorer assemblies: the fork-stage expert model, the base network and the
// expanded network, plus the parameter partition used by lifelong training.
//
// Parameter names start with a component tag that decides the partition:
//
//   shared (old expert)   expert1..N  gate_s  gate_q  attn_v  attn_f
//   base private          E1  D1  bisgu_v  bisgu_f  up_f  fuse
//   expanded private      E2  D2  expert{N+1}  xgate_s  xgate_q  xattn_v  xattn_f
//                         xbisgu_v  xbisgu_f  xup_f  xfuse
//   fork stage only       fork

#include "blend/blocks.hpp"
#include "blend/checkpoint.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace blend {

struct NetworkConfig {
    int experts = 3;   // N
    int blocks = 6;    // M, SK-DuRBs per expert
    int channels = 32; // C at the 1/2 scale; 2C at the 1/4 scale
    double slope = 0.2;
    bool shared_sgu_gate = false;

    // ablation toggles
    bool no_expert_init = false;
    bool use_se_instead_of_sk = false;
    bool no_s_gates = false;
    bool no_gates = false;
    bool uniform_attention = false;
    bool concat_instead_of_bisgu = false;

    int positions() const { return blocks / 2; }
    BlockOptions block_options() const;
    void validate() const;
    bool operator==(const NetworkConfig&) const = default;
};

nlohmann::json to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const nlohmann::json& j);
NetworkConfig network_config(const ModelCheckpoint& ckpt);

// --- initialisation ------------------------------------------------------------

/// E1, D1, the fork head and experts 1..N (role single_expert).
ModelCheckpoint init_fork_model(const NetworkConfig& cfg, std::uint64_t seed);
/// Single-expert checkpoint k (1-based): the shared fork parts plus expert k.
ModelCheckpoint extract_expert(const ModelCheckpoint& fork, int k);

/// Fresh base network (role base_R), every parameter newly initialised.
ModelCheckpoint init_base(const NetworkConfig& cfg, std::uint64_t seed);
/// Base network whose experts come from the single-expert checkpoints and whose
/// extractor and decoder come from the shared fork stage. With no_expert_init
/// this is init_base.
ModelCheckpoint assemble_base(const std::vector<ModelCheckpoint>& expert_ckpts, const NetworkConfig& cfg,
                              std::uint64_t seed);

/// Expanded network H (role expanded_H): the old expert of `base` plus fresh
/// expanded-private parameters.
ModelCheckpoint init_expanded(const ModelCheckpoint& base, std::uint64_t seed);
/// Union of a base and an expanded checkpoint (role incremental).
ModelCheckpoint merge_incremental(const ModelCheckpoint& base, const ModelCheckpoint& expanded);
/// Restriction of an incremental checkpoint to base_R or expanded_H.
ModelCheckpoint restrict_to(const ModelCheckpoint& model, Role role);

// --- partition -----------------------------------------------------------------

enum class ParamGroup { shared, base_private, expanded_private };

struct ParameterPartition {
    std::set<std::string> shared;           // theta_S
    std::set<std::string> base_private;     // theta_P1
    std::set<std::string> expanded_private; // theta_P2
};

/// Throws partition error for names outside the incremental model.
ParamGroup classify_param(const std::string& name, int experts);
ParameterPartition partition_params(const ModelCheckpoint& model);

// --- graph-level forwards --------------------------------------------------------

struct ForwardTrace {
    Var output;
    std::vector<Var> v; // aggregated 1/2-scale features (V or Theta)
    std::vector<Var> f; // aggregated 1/4-scale features (F or Phi)
    std::map<std::string, Var> attention; // "attn_v", "attn_f", "xattn_v", "xattn_f"
    std::map<std::string, Var> gate_maps; // "gate_s/e1_2" etc.
};

Var fork_graph(const Scope& s, const NetworkConfig& cfg, int expert, Var image);
ForwardTrace base_graph(const Scope& s, const NetworkConfig& cfg, Var image);
ForwardTrace expanded_graph(const Scope& s, const NetworkConfig& cfg, Var image);

// --- tensor-level forwards ---------------------------------------------------------

struct Diagnostics {
    std::map<std::string, Tensor> attention;
    std::map<std::string, Tensor> gate_maps;
};

struct Restored {
    Tensor output; // not clamped
    Diagnostics diagnostics;
};

Tensor fork_forward(const ModelCheckpoint& model, int expert, const Tensor& x);
Restored base_forward(const ModelCheckpoint& model, const Tensor& x);
Restored expanded_forward(const ModelCheckpoint& model, const Tensor& x);

// --- complexity ------------------------------------------------------------------

enum class Architecture { fork_expert, base, expanded };

long long count_params(const ModelCheckpoint& model);
/// 2 x multiply-accumulates of every conv and FC layer at an h x w input.
double count_flops(const NetworkConfig& cfg, Architecture arch, int h, int w);
/// Architecture chosen by role: base_R -> base, expanded_H/incremental -> expanded.
double count_flops(const ModelCheckpoint& model, int h, int w);
/// Multiply-accumulates actually executed by one forward pass.
long long measured_macs(const ModelCheckpoint& model, Architecture arch, int h, int w);

} // namespace blend
