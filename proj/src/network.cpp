#include "blend/network.hpp"

#include "blend/distortion.hpp"
#include "blend/error.hpp"

#include <algorithm>

namespace blend {

namespace {

std::string expert_name(int i) { return "expert" + std::to_string(i); }
std::string block_name(int i, int j) { return expert_name(i) + "/block" + std::to_string(j); }
std::string gate_name(const std::string& bank, int i, int j)
{
    return bank + "/e" + std::to_string(i) + "_" + std::to_string(j);
}

std::string component(const std::string& name) { return name.substr(0, name.find('/')); }

const TrainablePredicate kFrozen = [](const std::string&) { return false; };

} // namespace

BlockOptions NetworkConfig::block_options() const
{
    BlockOptions o;
    o.slope = slope;
    o.shared_sgu_gate = shared_sgu_gate;
    o.use_se = use_se_instead_of_sk;
    return o;
}

void NetworkConfig::validate() const
{
    require(experts >= 1, ErrorKind::invalid_parameter, "N must be >= 1");
    require(blocks >= 2 && blocks % 2 == 0, ErrorKind::invalid_parameter, "M must be even and >= 2");
    require(channels >= 4, ErrorKind::invalid_parameter, "C must be >= 4");
    require(slope >= 0.0 && slope < 1.0, ErrorKind::invalid_parameter, "leaky slope must lie in [0, 1)");
}

nlohmann::json to_json(const NetworkConfig& c)
{
    return {{"experts", c.experts},
            {"blocks", c.blocks},
            {"channels", c.channels},
            {"slope", c.slope},
            {"shared_sgu_gate", c.shared_sgu_gate},
            {"no_expert_init", c.no_expert_init},
            {"use_se_instead_of_sk", c.use_se_instead_of_sk},
            {"no_s_gates", c.no_s_gates},
            {"no_gates", c.no_gates},
            {"uniform_attention", c.uniform_attention},
            {"concat_instead_of_bisgu", c.concat_instead_of_bisgu}};
}

NetworkConfig network_config_from_json(const nlohmann::json& j)
{
    NetworkConfig c;
    try {
        c.experts = j.at("experts").get<int>();
        c.blocks = j.at("blocks").get<int>();
        c.channels = j.at("channels").get<int>();
        c.slope = j.at("slope").get<double>();
        c.shared_sgu_gate = j.at("shared_sgu_gate").get<bool>();
        c.no_expert_init = j.at("no_expert_init").get<bool>();
        c.use_se_instead_of_sk = j.at("use_se_instead_of_sk").get<bool>();
        c.no_s_gates = j.at("no_s_gates").get<bool>();
        c.no_gates = j.at("no_gates").get<bool>();
        c.uniform_attention = j.at("uniform_attention").get<bool>();
        c.concat_instead_of_bisgu = j.at("concat_instead_of_bisgu").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::invalid_checkpoint, std::string("network config: ") + e.what());
    }
    c.validate();
    return c;
}

NetworkConfig network_config(const ModelCheckpoint& model)
{
    require(model.role != Role::generator_G && model.role != Role::discriminator_D, ErrorKind::invalid_checkpoint,
            "checkpoint role " + to_string(model.role) + " holds no restorer");
    return network_config_from_json(model.config);
}

// --- initialisation -------------------------------------------------------------------

namespace {

void init_expert(ParamSet& ps, Rng& rng, const NetworkConfig& cfg, int i)
{
    for (int j = 1; j <= cfg.blocks; ++j)
        init_sk_durb(ps, rng, block_name(i, j), cfg.channels, cfg.use_se_instead_of_sk);
}

void init_fusion_head(ParamSet& ps, Rng& rng, const NetworkConfig& cfg, const std::string& up, const std::string& fuse)
{
    init_upsampler(ps, rng, up, 2 * cfg.channels, cfg.channels);
    init_conv(ps, rng, fuse, cfg.channels, 2 * cfg.channels, 3);
}

// gates, attention and the per-scale sequence fusers of one amalgamator
void init_amalgamator(ParamSet& ps, Rng& rng, const NetworkConfig& cfg, const std::string& tag, int rows,
                      bool with_gates_and_attention, bool with_fusers)
{
    const int C = cfg.channels, K = cfg.positions();
    if (with_gates_and_attention) {
        if (!cfg.no_gates) {
            for (int i = 1; i <= rows; ++i)
                for (int j = 1; j <= K; ++j) {
                    if (!cfg.no_s_gates)
                        init_gate(ps, rng, gate_name(tag + "gate_s", i, j), C, C);
                    init_gate(ps, rng, gate_name(tag + "gate_q", i, j), 2 * C, 2 * C);
                }
        }
        if (!cfg.uniform_attention) {
            init_attention(ps, rng, tag + "attn_v", 2 * C, rows, K);
            init_attention(ps, rng, tag + "attn_f", 2 * C, rows, K);
        }
    }
    if (with_fusers) {
        if (cfg.concat_instead_of_bisgu) {
            init_concat_fuse(ps, rng, tag + "bisgu_v", K, C);
            init_concat_fuse(ps, rng, tag + "bisgu_f", K, 2 * C);
        } else {
            init_bi_sgu(ps, rng, tag + "bisgu_v", K, C, cfg.shared_sgu_gate);
            init_bi_sgu(ps, rng, tag + "bisgu_f", K, 2 * C, cfg.shared_sgu_gate);
        }
        init_fusion_head(ps, rng, cfg, tag + "up_f/conv", tag + "fuse/conv");
    }
}

ModelCheckpoint make(Role role, const NetworkConfig& cfg)
{
    ModelCheckpoint m;
    m.role = role;
    m.config = to_json(cfg);
    return m;
}

} // namespace

ModelCheckpoint init_fork_model(const NetworkConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    ModelCheckpoint m = make(Role::single_expert, cfg);
    Rng rng(seed);
    init_extractor(m.params, rng, "E1", cfg.channels);
    for (int i = 1; i <= cfg.experts; ++i)
        init_expert(m.params, rng, cfg, i);
    init_fusion_head(m.params, rng, cfg, "fork/up", "fork/fuse");
    init_decoder(m.params, rng, "D1", cfg.channels);
    return m;
}

ModelCheckpoint extract_expert(const ModelCheckpoint& fork, int k)
{
    require_role(fork, {Role::single_expert}, "extract_expert");
    const NetworkConfig cfg = network_config(fork);
    require(k >= 1 && k <= cfg.experts, ErrorKind::invalid_parameter, "expert index out of range");
    ModelCheckpoint m = fork;
    m.params = ParamSet{};
    for (const auto& [name, t] : fork.params) {
        const std::string c = component(name);
        if (c == "E1" || c == "D1" || c == "fork" || c == expert_name(k))
            m.params.add(name, t);
    }
    m.config["expert_index"] = k;
    return m;
}

ModelCheckpoint init_base(const NetworkConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    ModelCheckpoint m = make(Role::base_R, cfg);
    Rng rng(seed);
    init_extractor(m.params, rng, "E1", cfg.channels);
    for (int i = 1; i <= cfg.experts; ++i)
        init_expert(m.params, rng, cfg, i);
    init_amalgamator(m.params, rng, cfg, "", cfg.experts, true, true);
    init_decoder(m.params, rng, "D1", cfg.channels);
    return m;
}

ModelCheckpoint assemble_base(const std::vector<ModelCheckpoint>& expert_ckpts, const NetworkConfig& cfg,
                              std::uint64_t seed)
{
    ModelCheckpoint m = init_base(cfg, seed);
    if (cfg.no_expert_init)
        return m;
    require(static_cast<int>(expert_ckpts.size()) == cfg.experts, ErrorKind::invalid_checkpoint,
            "assemble_base needs " + std::to_string(cfg.experts) + " expert checkpoints, got "
                + std::to_string(expert_ckpts.size()));
    for (std::size_t k = 0; k < expert_ckpts.size(); ++k) {
        const ModelCheckpoint& e = expert_ckpts[k];
        require_role(e, {Role::single_expert}, "assemble_base");
        NetworkConfig ec = network_config(e);
        // ablation flags of the join stage do not constrain the fork stage
        NetworkConfig arch = cfg;
        arch.no_expert_init = ec.no_expert_init;
        arch.no_s_gates = ec.no_s_gates;
        arch.no_gates = ec.no_gates;
        arch.uniform_attention = ec.uniform_attention;
        arch.concat_instead_of_bisgu = ec.concat_instead_of_bisgu;
        arch.shared_sgu_gate = ec.shared_sgu_gate;
        require(ec == arch, ErrorKind::invalid_checkpoint,
                "expert checkpoint " + std::to_string(k + 1) + " was trained with a different network config");
        const int idx = static_cast<int>(k) + 1;
        const auto expert_params = e.params.names_with_prefix(expert_name(idx) + "/");
        require(!expert_params.empty(), ErrorKind::invalid_checkpoint,
                "checkpoint " + std::to_string(idx) + " does not hold " + expert_name(idx));
        for (const auto& name : expert_params) {
            require(m.params.contains(name), ErrorKind::invalid_checkpoint, "unexpected expert parameter " + name);
            require(e.params.get(name).same_shape(m.params.get(name)), ErrorKind::invalid_checkpoint,
                    "shape mismatch for " + name);
            m.params.set(name, e.params.get(name));
        }
        if (k == 0) {
            for (const char* part : {"E1/", "D1/"})
                for (const auto& name : e.params.names_with_prefix(part))
                    m.params.set(name, e.params.get(name));
        } else {
            for (const char* part : {"E1/", "D1/"})
                for (const auto& name : e.params.names_with_prefix(part))
                    require(max_abs_diff(e.params.get(name), expert_ckpts[0].params.get(name)) == 0.0,
                            ErrorKind::invalid_checkpoint,
                            "expert checkpoints disagree on the shared fork-stage parameter " + name);
        }
    }
    return m;
}

ModelCheckpoint init_expanded(const ModelCheckpoint& base, std::uint64_t seed)
{
    require_role(base, {Role::base_R, Role::incremental}, "init_expanded");
    const NetworkConfig cfg = network_config(base);
    ModelCheckpoint m = make(Role::expanded_H, cfg);
    for (const auto& [name, t] : base.params)
        if (classify_param(name, cfg.experts) == ParamGroup::shared)
            m.params.add(name, t);
    Rng rng(seed);
    init_extractor(m.params, rng, "E2", cfg.channels);
    init_expert(m.params, rng, cfg, cfg.experts + 1);
    init_amalgamator(m.params, rng, cfg, "x", 2, true, true);
    init_decoder(m.params, rng, "D2", cfg.channels);
    return m;
}

ModelCheckpoint merge_incremental(const ModelCheckpoint& base, const ModelCheckpoint& expanded)
{
    require_role(base, {Role::base_R}, "merge_incremental (base)");
    require_role(expanded, {Role::expanded_H}, "merge_incremental (expanded)");
    const NetworkConfig cfg = network_config(base);
    require(network_config(expanded) == cfg, ErrorKind::invalid_checkpoint, "base and expanded configs differ");
    ModelCheckpoint m = make(Role::incremental, cfg);
    m.step = expanded.step;
    for (const auto& [name, t] : expanded.params)
        m.params.add(name, t);
    for (const auto& [name, t] : base.params)
        if (classify_param(name, cfg.experts) == ParamGroup::base_private)
            m.params.add(name, t);
    return m;
}

ModelCheckpoint restrict_to(const ModelCheckpoint& model, Role role)
{
    require_role(model, {Role::incremental}, "restrict_to");
    require(role == Role::base_R || role == Role::expanded_H, ErrorKind::invalid_parameter,
            "restrict_to supports base_R and expanded_H");
    const NetworkConfig cfg = network_config(model);
    const ParamGroup drop = role == Role::base_R ? ParamGroup::expanded_private : ParamGroup::base_private;
    ModelCheckpoint m = make(role, cfg);
    m.step = model.step;
    for (const auto& [name, t] : model.params)
        if (classify_param(name, cfg.experts) != drop)
            m.params.add(name, t);
    return m;
}

// --- partition ---------------------------------------------------------------------

ParamGroup classify_param(const std::string& name, int experts)
{
    const std::string c = component(name);
    static const std::set<std::string> shared = {"gate_s", "gate_q", "attn_v", "attn_f"};
    static const std::set<std::string> base = {"E1", "D1", "bisgu_v", "bisgu_f", "up_f", "fuse"};
    static const std::set<std::string> expanded = {"E2",      "D2",       "xgate_s",  "xgate_q", "xattn_v",
                                                   "xattn_f", "xbisgu_v", "xbisgu_f", "xup_f",   "xfuse"};
    if (shared.count(c))
        return ParamGroup::shared;
    if (base.count(c))
        return ParamGroup::base_private;
    if (expanded.count(c))
        return ParamGroup::expanded_private;
    if (starts_with(c, "expert")) {
        const std::string digits = c.substr(6);
        if (!digits.empty() && std::all_of(digits.begin(), digits.end(), ::isdigit)) {
            const int i = std::stoi(digits);
            if (i >= 1 && i <= experts)
                return ParamGroup::shared;
            if (i == experts + 1)
                return ParamGroup::expanded_private;
        }
    }
    fail(ErrorKind::partition, "parameter '" + name + "' belongs to no partition set");
}

ParameterPartition partition_params(const ModelCheckpoint& model)
{
    require_role(model, {Role::incremental}, "partition_params");
    const NetworkConfig cfg = network_config(model);
    ParameterPartition p;
    for (const auto& [name, t] : model.params) {
        switch (classify_param(name, cfg.experts)) {
        case ParamGroup::shared: p.shared.insert(name); break;
        case ParamGroup::base_private: p.base_private.insert(name); break;
        case ParamGroup::expanded_private: p.expanded_private.insert(name); break;
        }
    }
    return p;
}

// --- graph-level forwards ---------------------------------------------------------------

namespace {

struct Selected {
    std::vector<Var> s; // u^{2j}
    std::vector<Var> q; // p^{2j}
};

Selected expert_column(const Scope& s, const NetworkConfig& cfg, int i, Var h, Var g, Var* last_u = nullptr,
                       Var* last_p = nullptr)
{
    const BlockOptions opt = cfg.block_options();
    Selected out;
    Var u = h, p = g;
    for (int j = 1; j <= cfg.blocks; ++j) {
        std::tie(u, p) = sk_durb(s, block_name(i, j), u, p, opt);
        if (j % 2 == 0) {
            out.s.push_back(u);
            out.q.push_back(p);
        }
    }
    if (last_u)
        *last_u = u;
    if (last_p)
        *last_p = p;
    return out;
}

Var fusion_head(const Scope& s, const NetworkConfig& cfg, const std::string& up, const std::string& fuse, Var v,
                Var f)
{
    (void)cfg;
    Var f_up = upsampler(s, up, f);
    return conv(s, fuse, ops::concat(s.g(), {v, f_up}));
}

// gates over every (row, position), attention from g, attention-weighted sums
void amalgamate(const Scope& s, const NetworkConfig& cfg, const std::string& tag, const std::vector<Selected>& rows,
                Var h, Var g, Var image, ForwardTrace& trace)
{
    Graph& G = s.g();
    const BlockOptions opt = cfg.block_options();
    const int R = static_cast<int>(rows.size()), K = cfg.positions();
    std::vector<std::vector<Var>> gs(R), gq(R);
    for (int i = 0; i < R; ++i) {
        require(static_cast<int>(rows[i].s.size()) == K && static_cast<int>(rows[i].q.size()) == K,
                ErrorKind::shape, "amalgamate: expert produced the wrong number of features");
        for (int j = 0; j < K; ++j) {
            if (cfg.no_gates || cfg.no_s_gates) {
                gs[i].push_back(rows[i].s[j]);
            } else {
                const std::string n = gate_name(tag + "gate_s", i + 1, j + 1);
                GateOutput o = gate(s, n, h, image, rows[i].s[j], opt);
                gs[i].push_back(o.gated);
                trace.gate_maps[n] = o.map;
            }
            if (cfg.no_gates) {
                gq[i].push_back(rows[i].q[j]);
            } else {
                const std::string n = gate_name(tag + "gate_q", i + 1, j + 1);
                GateOutput o = gate(s, n, g, image, rows[i].q[j], opt);
                gq[i].push_back(o.gated);
                trace.gate_maps[n] = o.map;
            }
        }
    }
    Var av, af;
    if (cfg.uniform_attention) {
        av = G.constant(Tensor({R * K}, 1.0));
        af = G.constant(Tensor({R * K}, 1.0));
    } else {
        av = attention(s, tag + "attn_v", g, R, K, opt);
        af = attention(s, tag + "attn_f", g, R, K, opt);
    }
    trace.attention[tag + "attn_v"] = av;
    trace.attention[tag + "attn_f"] = af;
    trace.v = aggregate(G, gs, av);
    trace.f = aggregate(G, gq, af);
}

Var sequence_fuser(const Scope& s, const NetworkConfig& cfg, const std::string& prefix, const std::vector<Var>& seq)
{
    return cfg.concat_instead_of_bisgu ? concat_fuse(s, prefix, seq) : bi_sgu(s, prefix, seq, cfg.block_options());
}

Var reconstruct(const Scope& s, const NetworkConfig& cfg, const std::string& tag, const std::string& decoder_name,
                const ForwardTrace& trace, Var image)
{
    Var bv = sequence_fuser(s, cfg, tag + "bisgu_v", trace.v);
    Var bf = sequence_fuser(s, cfg, tag + "bisgu_f", trace.f);
    Var fused = fusion_head(s, cfg, tag + "up_f/conv", tag + "fuse/conv", bv, bf);
    return decoder(s, decoder_name, fused, image, cfg.block_options());
}

// the old expert: experts 1..N with the base gates and attention
void old_expert(const Scope& s, const NetworkConfig& cfg, const GlobalFeatures& gf, Var image, ForwardTrace& trace)
{
    std::vector<Selected> rows;
    for (int i = 1; i <= cfg.experts; ++i)
        rows.push_back(expert_column(s, cfg, i, gf.h, gf.g));
    amalgamate(s, cfg, "", rows, gf.h, gf.g, image, trace);
}

} // namespace

Var fork_graph(const Scope& s, const NetworkConfig& cfg, int expert, Var image)
{
    require(expert >= 1 && expert <= cfg.experts, ErrorKind::invalid_parameter, "expert index out of range");
    const BlockOptions opt = cfg.block_options();
    GlobalFeatures gf = extractor(s, "E1", image, opt);
    Var u, p;
    expert_column(s, cfg, expert, gf.h, gf.g, &u, &p);
    Var fused = fusion_head(s, cfg, "fork/up", "fork/fuse", u, p);
    return decoder(s, "D1", fused, image, opt);
}

ForwardTrace base_graph(const Scope& s, const NetworkConfig& cfg, Var image)
{
    ForwardTrace trace;
    GlobalFeatures gf = extractor(s, "E1", image, cfg.block_options());
    old_expert(s, cfg, gf, image, trace);
    trace.output = reconstruct(s, cfg, "", "D1", trace, image);
    return trace;
}

ForwardTrace expanded_graph(const Scope& s, const NetworkConfig& cfg, Var image)
{
    ForwardTrace trace;
    GlobalFeatures gf = extractor(s, "E2", image, cfg.block_options());

    ForwardTrace old;
    old_expert(s, cfg, gf, image, old);
    trace.attention = old.attention;
    trace.gate_maps = old.gate_maps;

    std::vector<Selected> rows(2);
    rows[0].s = old.v;
    rows[0].q = old.f;
    rows[1] = expert_column(s, cfg, cfg.experts + 1, gf.h, gf.g);
    amalgamate(s, cfg, "x", rows, gf.h, gf.g, image, trace);
    trace.output = reconstruct(s, cfg, "x", "D2", trace, image);
    return trace;
}

// --- tensor-level forwards -------------------------------------------------------------

namespace {

Diagnostics snapshot(const Graph& g, const ForwardTrace& t)
{
    Diagnostics d;
    for (const auto& [k, v] : t.attention)
        d.attention[k] = g.value(v);
    for (const auto& [k, v] : t.gate_maps)
        d.gate_maps[k] = g.value(v);
    return d;
}

void check_input(const Tensor& x)
{
    require(x.rank() == 3 && x.channels() == 3, ErrorKind::shape, "restorer input must be (3, H, W)");
    require(x.height() % 4 == 0 && x.width() % 4 == 0, ErrorKind::shape,
            "restorer input dims must be divisible by 4, got " + shape_string(x.shape()));
}

} // namespace

Tensor fork_forward(const ModelCheckpoint& model, int expert, const Tensor& x)
{
    require_role(model, {Role::single_expert}, "fork_forward");
    check_input(x);
    Graph g;
    Scope s{&g, &model.params, kFrozen};
    return g.value(fork_graph(s, network_config(model), expert, g.constant(x)));
}

Restored base_forward(const ModelCheckpoint& model, const Tensor& x)
{
    require_role(model, {Role::base_R, Role::incremental}, "base_forward");
    check_input(x);
    Graph g;
    Scope s{&g, &model.params, kFrozen};
    ForwardTrace t = base_graph(s, network_config(model), g.constant(x));
    return {g.value(t.output), snapshot(g, t)};
}

Restored expanded_forward(const ModelCheckpoint& model, const Tensor& x)
{
    require_role(model, {Role::expanded_H, Role::incremental}, "expanded_forward");
    check_input(x);
    Graph g;
    Scope s{&g, &model.params, kFrozen};
    ForwardTrace t = expanded_graph(s, network_config(model), g.constant(x));
    return {g.value(t.output), snapshot(g, t)};
}

// --- complexity ------------------------------------------------------------------------

long long count_params(const ModelCheckpoint& model)
{
    return static_cast<long long>(model.params.scalar_count());
}

namespace {

struct Tally {
    const NetworkConfig& cfg;
    int h0, w0, h1, w1, h2, w2;
    double macs = 0.0;

    Tally(const NetworkConfig& c, int h, int w) : cfg(c), h0(h), w0(w)
    {
        h1 = (h0 - 1) / 2 + 1;
        w1 = (w0 - 1) / 2 + 1;
        h2 = (h1 - 1) / 2 + 1;
        w2 = (w1 - 1) / 2 + 1;
    }

    void conv(int in, int out, int k, int h, int w) { macs += double(in) * out * k * k * h * w; }
    void fc(int in, int out) { macs += double(in) * out; }

    void extractor()
    {
        const int C = cfg.channels;
        conv(3, C, 3, h0, w0);
        conv(C, C, 3, h1, w1);
        conv(C, 2 * C, 3, h2, w2);
    }
    void expert()
    {
        const int C = cfg.channels, hid = sk_hidden(C);
        for (int j = 0; j < cfg.blocks; ++j) {
            conv(C, C, 3, h1, w1);
            conv(C, C, 3, h1, w1);
            conv(C, C, 3, h1, w1);
            fc(C, hid);
            fc(hid, cfg.use_se_instead_of_sk ? C : 2 * C);
            conv(C, 2 * C, 3, h2, w2);
            conv(2 * C, 2 * C, 3, h2, w2);
        }
    }
    void gate(int global_c, int feat_c, int h, int w)
    {
        const int hid = std::max(4, feat_c / 2);
        conv(global_c + 3 + feat_c, hid, 3, h, w);
        conv(hid, 1, 1, h, w);
    }
    void amalgamator(int rows)
    {
        const int C = cfg.channels, K = cfg.positions();
        if (!cfg.no_gates)
            for (int i = 0; i < rows * K; ++i) {
                if (!cfg.no_s_gates)
                    gate(C, C, h1, w1);
                gate(2 * C, 2 * C, h2, w2);
            }
        if (!cfg.uniform_attention)
            for (int a = 0; a < 2; ++a) {
                fc(2 * C, rows * K);
                fc(rows * K, rows * K);
            }
    }
    void fuser(int c, int h, int w)
    {
        const int K = cfg.positions();
        if (cfg.concat_instead_of_bisgu) {
            conv(K * c, c, 3, h, w);
            return;
        }
        const int gates_per_sgu = cfg.shared_sgu_gate ? 1 : 2;
        for (int i = 0; i < 2 * (K - 1) * gates_per_sgu; ++i)
            conv(c, c, 3, h, w);
        conv(2 * c, c, 3, h, w);
    }
    void fusion_head()
    {
        const int C = cfg.channels;
        conv(2 * C, 4 * C, 3, h2, w2);
        conv(2 * C, C, 3, h1, w1);
    }
    void decoder()
    {
        const int C = cfg.channels;
        conv(C, 4 * C, 3, h1, w1);
        conv(C, 3, 3, 2 * h1, 2 * w1);
    }
    void reconstruct()
    {
        fuser(cfg.channels, h1, w1);
        fuser(2 * cfg.channels, h2, w2);
        fusion_head();
        decoder();
    }
};

} // namespace

double count_flops(const NetworkConfig& cfg, Architecture arch, int h, int w)
{
    cfg.validate();
    require(h >= 1 && w >= 1, ErrorKind::invalid_parameter, "count_flops needs a positive size");
    Tally t(cfg, h, w);
    t.extractor();
    switch (arch) {
    case Architecture::fork_expert:
        t.expert();
        t.fusion_head();
        t.decoder();
        break;
    case Architecture::base:
        for (int i = 0; i < cfg.experts; ++i)
            t.expert();
        t.amalgamator(cfg.experts);
        t.reconstruct();
        break;
    case Architecture::expanded:
        for (int i = 0; i < cfg.experts + 1; ++i)
            t.expert();
        t.amalgamator(cfg.experts);
        t.amalgamator(2);
        t.reconstruct();
        break;
    }
    return 2.0 * t.macs;
}

double count_flops(const ModelCheckpoint& model, int h, int w)
{
    const NetworkConfig cfg = network_config(model);
    switch (model.role) {
    case Role::single_expert: return count_flops(cfg, Architecture::fork_expert, h, w);
    case Role::base_R: return count_flops(cfg, Architecture::base, h, w);
    default: return count_flops(cfg, Architecture::expanded, h, w);
    }
}

long long measured_macs(const ModelCheckpoint& model, Architecture arch, int h, int w)
{
    const NetworkConfig cfg = network_config(model);
    Tensor x({3, h, w}, 0.5);
    check_input(x);
    Graph g;
    Scope s{&g, &model.params, kFrozen};
    Var in = g.constant(x);
    switch (arch) {
    case Architecture::fork_expert: fork_graph(s, cfg, 1, in); break;
    case Architecture::base: base_graph(s, cfg, in); break;
    case Architecture::expanded: expanded_graph(s, cfg, in); break;
    }
    return g.macs();
}

} // namespace blend
