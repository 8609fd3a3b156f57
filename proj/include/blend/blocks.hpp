#pragma once

// Differentiable building blocks of the restorer. Each block is a pure
// function of its inputs and a ParamSet; parameters live under a path-like
// prefix and are created by the matching init_* function.

#include "blend/autograd.hpp"
#include "blend/params.hpp"

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace blend {

using TrainablePredicate = std::function<bool(const std::string&)>;

/// Binds a Graph to a ParamSet. Parameters for which `trainable` returns
/// false enter the graph as constants (gradients still flow through them).
struct Scope {
    Graph* graph;
    const ParamSet* params;
    TrainablePredicate trainable;

    Graph& g() const { return *graph; }
    Var p(const std::string& name) const
    {
        return graph->param(*params, name, !trainable || trainable(name));
    }
    bool has(const std::string& name) const { return params->contains(name); }
};

struct BlockOptions {
    double slope = 0.2;           // leaky-rectifier slope
    bool shared_sgu_gate = false; // one gate conv for both SGU terms
    bool use_se = false;          // SE residual unit instead of the SK unit
};

Var conv(const Scope& s, const std::string& name, Var x, ConvSpec spec = {});

// --- selective-kernel unit ---------------------------------------------------

int sk_hidden(int channels);
void init_sk_unit(ParamSet& ps, Rng& rng, const std::string& prefix, int channels);

struct SkOutput {
    Var out;
    Var branch_weights; // 2 x C, softmax over the two branches per channel
};
/// Two 3x3 branches (dilation 1 and 2, i.e. 3x3 and 5x5 receptive fields)
/// fused by per-channel softmax weights from a pooled bottleneck.
SkOutput sk_unit(const Scope& s, const std::string& prefix, Var feat, const BlockOptions& opt = {});

void init_se_unit(ParamSet& ps, Rng& rng, const std::string& prefix, int channels);
Var se_unit(const Scope& s, const std::string& prefix, Var feat, const BlockOptions& opt = {});

// --- dual residual block over the (u, p) feature pair --------------------------

void init_sk_durb(ParamSet& ps, Rng& rng, const std::string& prefix, int channels, bool use_se = false);
/// u = u_prev + sk(conv(u_prev));  p = p_prev + conv(act(down(u) + p_prev))
std::pair<Var, Var> sk_durb(const Scope& s, const std::string& prefix, Var u_prev, Var p_prev,
                            const BlockOptions& opt = {});

// --- gate layer ----------------------------------------------------------------

void init_gate(ParamSet& ps, Rng& rng, const std::string& prefix, int global_channels, int feat_channels);

struct GateOutput {
    Var gated;
    Var map; // (1, H, W) in [0, 1]
};
GateOutput gate(const Scope& s, const std::string& prefix, Var global_feat, Var image, Var feat,
                const BlockOptions& opt = {});

// --- attention over experts ------------------------------------------------------

void init_attention(ParamSet& ps, Rng& rng, const std::string& prefix, int global_channels, int rows, int cols);
/// rows x cols matrix (row-major); each column is a probability vector over rows.
Var attention(const Scope& s, const std::string& prefix, Var global_feat, int rows, int cols,
              const BlockOptions& opt = {});

/// out[j] = sum_i attn[i, j] * gated[i][j]
std::vector<Var> aggregate(Graph& g, const std::vector<std::vector<Var>>& gated, Var attn);

// --- sequential gating ---------------------------------------------------------------

void init_sgu(ParamSet& ps, Rng& rng, const std::string& prefix, int channels, bool shared_gate = false);
/// sigmoid(conv_a(fa)) * fa + sigmoid(conv_b(fa)) * fb
Var sgu(const Scope& s, const std::string& prefix, Var fa, Var fb, const BlockOptions& opt = {});

void init_bi_sgu(ParamSet& ps, Rng& rng, const std::string& prefix, int length, int channels,
                 bool shared_gate = false);
Var bi_sgu(const Scope& s, const std::string& prefix, const std::vector<Var>& seq, const BlockOptions& opt = {});

void init_concat_fuse(ParamSet& ps, Rng& rng, const std::string& prefix, int length, int channels);
Var concat_fuse(const Scope& s, const std::string& prefix, const std::vector<Var>& seq);

// --- extractor / decoder ---------------------------------------------------------------

void init_extractor(ParamSet& ps, Rng& rng, const std::string& prefix, int channels);
struct GlobalFeatures {
    Var h; // C channels, 1/2 resolution
    Var g; // 2C channels, 1/4 resolution
};
GlobalFeatures extractor(const Scope& s, const std::string& prefix, Var image, const BlockOptions& opt = {});

void init_upsampler(ParamSet& ps, Rng& rng, const std::string& prefix, int in_channels, int out_channels);
/// conv to 4*out channels then PixelShuffle x2
Var upsampler(const Scope& s, const std::string& prefix, Var x);

void init_decoder(ParamSet& ps, Rng& rng, const std::string& prefix, int channels);
/// upsample x2, conv to RGB, add the input image
Var decoder(const Scope& s, const std::string& prefix, Var fused, Var image, const BlockOptions& opt = {});

} // namespace blend
