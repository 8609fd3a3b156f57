// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance --blendctl PATH --work DIR [--only 1,2,...]
//
// Criteria 5-7 and 9 drive the command-line tool end to end; the rest call
// the library directly.

#include "blend/blocks.hpp"
#include "blend/checkpoint.hpp"
#include "blend/dataset.hpp"
#include "blend/distortion.hpp"
#include "blend/error.hpp"
#include "blend/gan.hpp"
#include "blend/image.hpp"
#include "blend/kernels.hpp"
#include "blend/metrics.hpp"
#include "blend/network.hpp"
#include "blend/scenes.hpp"
#include "support.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>

using namespace blend;
namespace fs = std::filesystem;
using testing::check_gradients;
using testing::project;
using testing::random_tensor;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

struct Env {
    std::string blendctl;
    fs::path work;
};

int sh(const Env& env, const std::string& args, const fs::path& log)
{
    const std::string cmd = env.blendctl + " " + args + " >>" + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void run_or_throw(const Env& env, const std::string& args, const fs::path& log)
{
    const int code = sh(env, args, log);
    if (code != 0)
        throw std::runtime_error("blendctl " + args + " exited " + std::to_string(code) + " (see " + log.string() + ")");
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

// --- 1: gradient suite -------------------------------------------------------------------

Outcome gradient_suite()
{
    constexpr int C = 3;
    struct Case {
        std::string name;
        std::function<void(ParamSet&, Rng&)> init;
        std::vector<int> input;
        testing::LossBuilder loss;
    };
    auto with_inputs = [](std::vector<std::pair<std::string, std::vector<int>>> extra) {
        return [extra](ParamSet& ps, Rng& rng) {
            for (const auto& [n, shape] : extra)
                ps.add(n, random_tensor(shape, rng));
        };
    };
    auto chain = [](auto a, auto b) {
        return [a, b](ParamSet& ps, Rng& rng) {
            a(ps, rng);
            b(ps, rng);
        };
    };
    GanConfig gan;
    gan.ngf = 2;
    gan.ndf = 2;
    gan.resblocks = 1;
    gan.input_size = 8;

    std::vector<Case> cases = {
        {"sk_unit", [](ParamSet& ps, Rng& rng) { init_sk_unit(ps, rng, "sk", C); }, {C, 6, 6},
         [](const Scope& s, Var x) { return project(s.g(), sk_unit(s, "sk", x).out, 1); }},
        {"sk_durb",
         chain([](ParamSet& ps, Rng& rng) { init_sk_durb(ps, rng, "b", C); }, with_inputs({{"in/p", {2 * C, 4, 4}}})),
         {C, 8, 8},
         [](const Scope& s, Var u) {
             auto [u2, p2] = sk_durb(s, "b", u, s.p("in/p"));
             return ops::add(s.g(), project(s.g(), u2, 2), project(s.g(), p2, 3));
         }},
        {"gate",
         chain([](ParamSet& ps, Rng& rng) { init_gate(ps, rng, "gt", C, C); },
               with_inputs({{"in/glob", {C, 4, 4}}, {"in/img", {3, 8, 8}}})),
         {C, 4, 4},
         [](const Scope& s, Var f) {
             const auto o = gate(s, "gt", s.p("in/glob"), s.p("in/img"), f);
             return ops::add(s.g(), project(s.g(), o.gated, 4), project(s.g(), o.map, 5));
         }},
        {"attention", [](ParamSet& ps, Rng& rng) { init_attention(ps, rng, "at", 2 * C, 3, 2); }, {2 * C, 2, 2},
         [](const Scope& s, Var g) { return project(s.g(), attention(s, "at", g, 3, 2), 6); }},
        {"sgu", chain([](ParamSet& ps, Rng& rng) { init_sgu(ps, rng, "sg", C); }, with_inputs({{"in/fb", {C, 4, 4}}})),
         {C, 4, 4}, [](const Scope& s, Var fa) { return project(s.g(), sgu(s, "sg", fa, s.p("in/fb")), 7); }},
        {"bi_sgu",
         chain([](ParamSet& ps, Rng& rng) { init_bi_sgu(ps, rng, "bs", 3, C); },
               with_inputs({{"in/s2", {C, 4, 4}}, {"in/s3", {C, 4, 4}}})),
         {C, 4, 4},
         [](const Scope& s, Var a) {
             return project(s.g(), bi_sgu(s, "bs", {a, s.p("in/s2"), s.p("in/s3")}), 8);
         }},
        {"extractor", [](ParamSet& ps, Rng& rng) { init_extractor(ps, rng, "E", C); }, {3, 8, 8},
         [](const Scope& s, Var x) {
             const auto gf = extractor(s, "E", x);
             return ops::add(s.g(), project(s.g(), gf.h, 9), project(s.g(), gf.g, 10));
         }},
        {"decoder", chain([](ParamSet& ps, Rng& rng) { init_decoder(ps, rng, "D", C); }, with_inputs({{"in/img", {3, 8, 8}}})),
         {C, 4, 4}, [](const Scope& s, Var f) { return project(s.g(), decoder(s, "D", f, s.p("in/img")), 11); }},
        {"generator", [gan](ParamSet& ps, Rng&) { ps = init_generator(gan, 3).params; }, {3, 8, 8},
         [gan](const Scope& s, Var y) { return project(s.g(), generator_graph(s, gan, y).output, 12); }},
        {"discriminator", [gan](ParamSet& ps, Rng&) { ps = init_discriminator(gan, 4).params; }, {3, 8, 8},
         [gan](const Scope& s, Var x) { return discriminator_graph(s, gan, x); }},
    };

    NetworkConfig net;
    net.blocks = 2;
    net.channels = 4;
    const ModelCheckpoint base = init_base(net, 5);
    const ModelCheckpoint expanded = init_expanded(base, 6);
    const ModelCheckpoint fork = init_fork_model(net, 7);
    const std::vector<Case> end_to_end = {
        {"base network", [&](ParamSet& ps, Rng&) { ps = base.params; }, {3, 8, 8},
         [&](const Scope& s, Var x) { return project(s.g(), base_graph(s, net, x).output, 13); }},
        {"expanded network", [&](ParamSet& ps, Rng&) { ps = expanded.params; }, {3, 8, 8},
         [&](const Scope& s, Var x) { return project(s.g(), expanded_graph(s, net, x).output, 14); }},
        {"fork expert 2", [&](ParamSet& ps, Rng&) { ps = fork.params; }, {3, 8, 8},
         [&](const Scope& s, Var x) { return project(s.g(), fork_graph(s, net, 2, x), 15); }},
    };

    bool ok = true;
    std::string detail;
    double worst_block = 0, worst_e2e = 0;
    auto run = [&](const Case& c, double tol, std::size_t cap, double& worst) {
        ParamSet ps;
        Rng rng(std::hash<std::string>{}(c.name));
        c.init(ps, rng);
        // zero-initialised biases put pre-activations exactly on rectifier kinks
        for (auto& [name, t] : ps)
            if (name.ends_with(".b"))
                t = random_tensor(t.shape(), rng, -0.2, 0.2);
        const Tensor x = random_tensor(c.input, rng, 0.0, 1.0);
        const auto r = check_gradients(ps, x, c.loss, 1e-4, cap, 17);
        worst = std::max(worst, r.rel_error);
        if (!(r.rel_error < tol)) {
            ok = false;
            detail += fmt(" %s=%.2e (worst tensor %s %.2e)", c.name.c_str(), r.rel_error, r.worst.c_str(),
                          r.worst_error);
        }
    };
    for (const auto& c : cases)
        run(c, 1e-4, 0, worst_block);
    for (const auto& c : end_to_end)
        run(c, 1e-3, 24, worst_e2e);
    return {ok, fmt("max rel error per block %.2e (< 1e-4), end-to-end %.2e (< 1e-3)", worst_block, worst_e2e)
                    + detail};
}

// --- 2: algebraic invariants ------------------------------------------------------------

Outcome algebraic_invariants()
{
    constexpr int trials = 100;
    Rng rng(2024);
    std::uniform_int_distribution<int> pick(1, 4);
    double col_err = 0, gate_lo = 1, gate_hi = 0, identity_err = 0, onehot_err = 0, sgu_err = 0;

    for (int t = 0; t < trials; ++t) {
        const int rows = 1 + pick(rng), cols = pick(rng), ch = pick(rng) * 2;
        ParamSet ps;
        init_attention(ps, rng, "a", ch, rows, cols);
        for (auto& [n, w] : ps)
            for (auto& v : w.values())
                v *= 4.0; // sharpen the softmax
        Graph g;
        Scope s{&g, &ps, {}};
        const Tensor a = g.value(attention(s, "a", g.constant(random_tensor({ch, 3, 3}, rng, -3, 3)), rows, cols));
        for (int j = 0; j < cols; ++j) {
            double sum = 0;
            for (int i = 0; i < rows; ++i)
                sum += a[static_cast<std::size_t>(i * cols + j)];
            col_err = std::max(col_err, std::abs(sum - 1.0));
        }
    }
    for (int t = 0; t < trials; ++t) {
        const int ch = pick(rng);
        ParamSet ps;
        init_gate(ps, rng, "g", ch, ch);
        for (auto& [n, w] : ps)
            for (auto& v : w.values())
                v *= 10.0; // push the sigmoid into saturation
        Graph g;
        Scope s{&g, &ps, {}};
        const auto o = gate(s, "g", g.constant(random_tensor({ch, 4, 4}, rng, -5, 5)),
                            g.constant(random_tensor({3, 8, 8}, rng, 0, 1)),
                            g.constant(random_tensor({ch, 4, 4}, rng, -5, 5)));
        for (double v : g.value(o.map).values()) {
            gate_lo = std::min(gate_lo, v);
            gate_hi = std::max(gate_hi, v);
        }
    }
    NetworkConfig net;
    net.blocks = 2;
    net.channels = 4;
    for (int t = 0; t < trials; ++t) {
        ModelCheckpoint m = init_base(net, static_cast<std::uint64_t>(t));
        zero_params(m.params, "D1/out");
        const Tensor x = random_tensor({3, 8, 12}, rng, 0, 1);
        identity_err = std::max(identity_err, max_abs_diff(base_forward(m, x).output, x));
    }
    for (int t = 0; t < trials; ++t) {
        const int rows = 1 + pick(rng), cols = pick(rng);
        std::vector<std::vector<Var>> gated(static_cast<std::size_t>(rows));
        Graph g;
        for (auto& row : gated)
            for (int j = 0; j < cols; ++j)
                row.push_back(g.constant(random_tensor({2, 3, 3}, rng, -10, 10)));
        Tensor attn({rows * cols}, 0.0);
        std::vector<int> sel(static_cast<std::size_t>(cols));
        for (int j = 0; j < cols; ++j) {
            sel[static_cast<std::size_t>(j)] = std::uniform_int_distribution<int>(0, rows - 1)(rng);
            attn[static_cast<std::size_t>(sel[static_cast<std::size_t>(j)] * cols + j)] = 1.0;
        }
        const auto out = aggregate(g, gated, g.constant(attn));
        for (int j = 0; j < cols; ++j)
            onehot_err = std::max(onehot_err, max_abs_diff(g.value(out[static_cast<std::size_t>(j)]),
                                                           g.value(gated[static_cast<std::size_t>(sel[static_cast<std::size_t>(j)])][static_cast<std::size_t>(j)])));
    }
    for (int t = 0; t < trials; ++t) {
        ParamSet ps;
        init_sgu(ps, rng, "s", 1);
        for (const char* n : {"s/gate_a.w", "s/gate_a.b", "s/gate_b.w", "s/gate_b.b"})
            ps.set(n, random_tensor(ps.get(n).shape(), rng, -2, 2));
        const double fa = std::uniform_real_distribution<double>(-3, 3)(rng);
        const double fb = std::uniform_real_distribution<double>(-3, 3)(rng);
        Graph g;
        Scope s{&g, &ps, {}};
        const double got = g.value(sgu(s, "s", g.constant(Tensor({1, 1, 1}, fa)), g.constant(Tensor({1, 1, 1}, fb))))[0];
        auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
        // 3x3 kernel on a 1x1 map with zero padding: only the centre tap sees data
        const double wa = ps.get("s/gate_a.w")[4], ba = ps.get("s/gate_a.b")[0];
        const double wb = ps.get("s/gate_b.w")[4], bb = ps.get("s/gate_b.b")[0];
        const double expect = sig(wa * fa + ba) * fa + sig(wb * fa + bb) * fb;
        sgu_err = std::max(sgu_err, std::abs(got - expect));
    }
    const bool ok = col_err <= 1e-5 && gate_lo >= 0.0 && gate_hi <= 1.0 && identity_err == 0.0 && onehot_err == 0.0
                    && sgu_err < 1e-6;
    return {ok, fmt("attention column error %.1e, gate range [%.3g, %.3g], zero-head identity error %g, "
                    "one-hot selection error %g, SGU scalar error %.1e",
                    col_err, gate_lo, gate_hi, identity_err, onehot_err, sgu_err)};
}

// --- 3: distortion oracles ---------------------------------------------------------------

Outcome distortion_oracles()
{
    double blur_err = 0;
    for (double sigma : {0.5, 1.0, 1.7, 2.0, 2.5}) {
        ImagePatch img(41, 41, 0.0);
        for (int c = 0; c < 3; ++c)
            img.at(c, 20, 20) = 1.0;
        const ImagePatch out = gaussian_blur(img, sigma);
        const int r = static_cast<int>(std::ceil(3 * sigma));
        double z = 0;
        for (int i = -r; i <= r; ++i)
            z += std::exp(-i * i / (2 * sigma * sigma));
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 41; ++y)
                for (int x = 0; x < 41; ++x) {
                    const int dy = y - 20, dx = x - 20;
                    const double k = (std::abs(dx) <= r && std::abs(dy) <= r)
                                         ? std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)) / (z * z)
                                         : 0.0;
                    blur_err = std::max(blur_err, std::abs(out.at(c, y, x) - k));
                }
    }
    const double haze = apply_haze(ImagePatch(4, 4, 0.0), 0.25).at(0, 0, 0);
    const double haze_closed = 1.0 - std::exp(-2.5);

    bool fixed = true;
    const ImagePatch scene = synthetic_scene(32, 32, 5);
    for (double gamma : {0.5, 1.5, 2.2, 3.0}) {
        fixed &= apply_darkness(ImagePatch(4, 4, 0.0), gamma).at(1, 1, 1) == 0.0;
        fixed &= apply_darkness(ImagePatch(4, 4, 1.0), gamma).at(1, 1, 1) == 1.0;
    }
    fixed &= max_abs_diff(apply_darkness(scene, 1.0).pixels, scene.pixels) == 0.0;
    fixed &= max_abs_diff(apply_haze(scene, 0.0).pixels, scene.pixels) == 0.0;
    fixed &= max_abs_diff(gaussian_blur(scene, 0.0).pixels, scene.pixels) == 0.0;
    fixed &= max_abs_diff(add_gaussian_noise(scene, 0.0, 1).pixels, scene.pixels) == 0.0;

    double mean_psnr[3] = {0, 0, 0};
    const Severity sev[3] = {Severity::mild, Severity::moderate, Severity::severe};
    for (int s = 0; s < 3; ++s) {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            const ImagePatch clean = synthetic_scene(48, 48, 1000 + seed);
            const ImagePatch d = apply_chain(clean, sample_chain(sev[s], std::nullopt, seed));
            mean_psnr[s] += psnr(d.pixels, clean.pixels) / 50;
        }
    }
    const bool ordered = mean_psnr[2] < mean_psnr[1] && mean_psnr[1] < mean_psnr[0];
    const bool ok = blur_err < 1e-6 && std::abs(haze - haze_closed) < 1e-6 && std::abs(haze - 0.9179) < 5e-5 && fixed
                    && ordered;
    return {ok, fmt("blur impulse error %.1e, haze(0) = %.7f (1 - e^-2.5 = %.7f), fixed points %s, "
                    "mean PSNR mild %.2f > moderate %.2f > severe %.2f",
                    blur_err, haze, haze_closed, fixed ? "exact" : "BROKEN", mean_psnr[0], mean_psnr[1],
                    mean_psnr[2])};
}

// --- 4: metric oracles ---------------------------------------------------------------------

Outcome metric_oracles(const fs::path& fixtures)
{
    const auto records = read_json(fixtures / "metrics.json");
    double psnr_err = 0, ssim_err = 0, ssim_frozen = 0;
    int n = 0;
    for (const auto& r : records) {
        const Tensor a = read_png(fixtures / r["a"].get<std::string>()).pixels;
        const Tensor b = read_png(fixtures / r["b"].get<std::string>()).pixels;
        if (!r["psnr"].is_null())
            psnr_err = std::max(psnr_err, std::abs(psnr(a, b) - testing::psnr_bruteforce(a, b)));
        ssim_err = std::max(ssim_err, std::abs(ssim(a, b) - testing::ssim_bruteforce(a, b)));
        ssim_frozen = std::max(ssim_frozen, std::abs(ssim(a, b) - r["ssim"].get<double>()));
        ++n;
    }
    const double twenty = psnr(Tensor({3, 16, 16}, 0.5), Tensor({3, 16, 16}, 0.6));
    const bool ok = n == 10 && psnr_err < 1e-6 && ssim_err < 1e-4 && ssim_frozen < 1e-4 && std::abs(twenty - 20) < 1e-9;
    return {ok, fmt("%d fixture pairs: PSNR error %.1e dB, SSIM error %.1e (brute force) / %.1e (frozen "
                    "scikit-image); PSNR(0.5, 0.6) = %.12f dB",
                    n, psnr_err, ssim_err, ssim_frozen, twenty)};
}

// --- 5-7: desk-scale pipeline ------------------------------------------------------------------

struct Desk {
    fs::path dir, log;
    double base_psnr = 0, base_input = 0, ablation_psnr = 0;
    double pre_old = 0, c_old = 0, ft_old = 0, a_old = 0, c_new = 0, ft_new = 0, a_new = 0;
    bool c_ran = false, old_removed = false;
    std::size_t pseudo_pairs = 0, pseudo_bad = 0;
    bool theta_s_kept = false;
    std::string error;
};

constexpr const char* kDeskConfig = R"(experts = 3
blocks = 6
channels = 8
batch = 8
mu = 2e-3
rho = 1e-3
lambda2 = 0.2
warmup_epochs = 3
gan.ngf = 8
gan.ndf = 8
gan.resblocks = 3
gan.input_size = 32
gan.epochs = 3
gan.batch = 8
)";

double group_psnr(const fs::path& report, const char* field = "psnr")
{
    return read_json(report / "report.json")["groups"]["moderate"][field].get<double>();
}

Desk run_desk(const Env& env)
{
    Desk d;
    d.dir = env.work / "desk";
    d.log = d.dir / "log.txt";
    fs::remove_all(d.dir);
    fs::create_directories(d.dir);
    const auto p = [&](const char* sub) { return (d.dir / sub).string(); };
    {
        std::ofstream(d.dir / "desk.cfg") << kDeskConfig;
        std::ofstream(d.dir / "experts.cfg") << kDeskConfig << "epochs = 6\n";
        std::ofstream(d.dir / "base.cfg") << kDeskConfig << "epochs = 10\n";
        std::ofstream(d.dir / "ablation.cfg") << kDeskConfig << "epochs = 10\nno_expert_init = true\n";
        std::ofstream(d.dir / "incremental.cfg") << kDeskConfig << "epochs = 5\n";
    }
    const std::string patch = " --patch 32 --stride 32";
    try {
        auto run = [&](const std::string& args) { run_or_throw(env, args, d.log); };
        run("--seed 11 --out " + p("scenes_train") + " gen-scenes --count 32 --size 128");
        run("--seed 12 --out " + p("scenes_val") + " gen-scenes --count 4 --size 128");
        run("--seed 13 --out " + p("scenes_test") + " gen-scenes --count 4 --size 128");
        const std::string train = " --clean-dir " + p("scenes_train") + patch + " --max-patches 500";
        run("--seed 21 --out " + p("old_train") + " gen-data" + train);
        run("--seed 22 --out " + p("old_val") + " gen-data --clean-dir " + p("scenes_val") + patch);
        run("--seed 28 --out " + p("old_test") + " gen-data --clean-dir " + p("scenes_test") + patch);
        run("--seed 23 --out " + p("new_train") + " gen-data" + train + " --new-factor haze");
        run("--seed 27 --out " + p("new_val") + " gen-data --clean-dir " + p("scenes_val") + patch + " --new-factor haze");
        run("--seed 24 --out " + p("expert_blur") + " gen-data" + train + " --only blur");
        run("--seed 25 --out " + p("expert_noise") + " gen-data" + train + " --only noise");
        run("--seed 26 --out " + p("expert_jpeg") + " gen-data" + train + " --only jpeg");

        const std::string cfg = " --config " + p("");
        run(cfg + "experts.cfg --seed 1 --out " + p("experts") + " train-experts --data " + p("expert_blur") + ","
            + p("expert_noise") + "," + p("expert_jpeg"));
        run(cfg + "base.cfg --seed 1 --out " + p("base") + " train-base --data " + p("old_train") + " --val "
            + p("old_val") + " --experts " + p("experts"));
        run(cfg + "ablation.cfg --seed 1 --out " + p("ablation") + " train-base --data " + p("old_train")
            + " --val " + p("old_val"));
        run("--out " + p("eval_base") + " eval --model " + p("base/base.ckpt") + " --data " + p("old_test"));
        run("--out " + p("eval_ablation") + " eval --model " + p("ablation/base.ckpt") + " --data " + p("old_test"));
        d.base_psnr = group_psnr(d.dir / "eval_base");
        d.base_input = group_psnr(d.dir / "eval_base", "input_psnr");
        d.ablation_psnr = group_psnr(d.dir / "eval_ablation");
        d.pre_old = d.base_psnr;

        // The generator is the last consumer of real old-task training data.
        run(cfg + "desk.cfg --seed 1 --out " + p("gan") + " train-gan --data " + p("old_train") + " --base "
            + p("base/base.ckpt"));
        for (const char* gone : {"old_train", "expert_blur", "expert_noise", "expert_jpeg"})
            fs::remove_all(d.dir / gone);
        d.old_removed = !fs::exists(d.dir / "old_train");

        run(cfg + "desk.cfg --seed 1 --out " + p("pseudo") + " synth-pseudo --data " + p("new_train")
            + " --generator " + p("gan/generator.ckpt") + " --base " + p("base/base.ckpt"));
        run(cfg + "incremental.cfg --seed 1 --out " + p("warm") + " warmup --data " + p("new_train") + " --val "
            + p("new_val") + " --base " + p("base/base.ckpt"));
        const std::string common = " --base " + p("base/base.ckpt") + " --expanded " + p("warm/expanded.ckpt")
                                   + " --data " + p("new_train") + " --val " + p("new_val") + " --old-val "
                                   + p("old_val");
        run(cfg + "incremental.cfg --seed 1 --out " + p("setting_C") + " train-incremental --setting C" + common
            + " --pseudo " + p("pseudo"));
        d.c_ran = true;
        run(cfg + "incremental.cfg --seed 1 --out " + p("setting_finetune") + " train-incremental --setting finetune"
            + common);
        run(cfg + "incremental.cfg --seed 1 --out " + p("setting_A") + " train-incremental --setting A" + common);
        for (const char* s : {"C", "finetune", "A"}) {
            const std::string dir = std::string("eval_") + s;
            run("--out " + p(dir.c_str()) + " eval --forward base --model " + p(("setting_" + std::string(s)).c_str())
                + "/incremental.ckpt --data " + p("old_test"));
        }
        d.c_old = group_psnr(d.dir / "eval_C");
        d.ft_old = group_psnr(d.dir / "eval_finetune");
        d.a_old = group_psnr(d.dir / "eval_A");
        d.c_new = read_json(d.dir / "setting_C/summary.json")["best"]["new_psnr"].get<double>();
        d.ft_new = read_json(d.dir / "setting_finetune/summary.json")["best"]["new_psnr"].get<double>();
        d.a_new = read_json(d.dir / "setting_A/summary.json")["best"]["new_psnr"].get<double>();
        run("--out " + p("curves.csv") + " export-curves --history C=" + p("setting_C/history.jsonl") + " --history A="
            + p("setting_A/history.jsonl") + " --history finetune=" + p("setting_finetune/history.jsonl"));

        const ModelCheckpoint base = load_checkpoint(d.dir / "base/base.ckpt");
        const DatasetManifest store = read_manifest(d.dir / "pseudo");
        d.pseudo_pairs = store.entries.size();
        d.pseudo_bad = verify_pseudo_store(store, base);
        const int experts = network_config(base).experts;
        const auto shared = [experts](const std::string& n) { return classify_param(n, experts) == ParamGroup::shared; };
        d.theta_s_kept = parameter_hash(base.params, shared)
                         == parameter_hash(load_checkpoint(d.dir / "warm/expanded.ckpt").params, shared);
    } catch (const std::exception& e) {
        d.error = e.what();
    }
    return d;
}

Outcome fork_join(const Desk& d)
{
    if (!d.error.empty() && d.base_psnr == 0)
        return {false, d.error};
    const double gain = d.base_psnr - d.base_input;
    return {gain >= 1.0 && d.ablation_psnr < d.base_psnr,
            fmt("held-out moderate PSNR: input %.3f, base %.3f (+%.3f dB, need >= 1.0), no_expert_init %.3f "
                "(%.3f dB lower)",
                d.base_input, d.base_psnr, gain, d.ablation_psnr, d.base_psnr - d.ablation_psnr)};
}

Outcome forgetting(const Desk& d)
{
    if (!d.error.empty() && d.c_old == 0)
        return {false, d.error};
    const double spread = std::max({d.c_new, d.ft_new, d.a_new}) - std::min({d.c_new, d.ft_new, d.a_new});
    const bool ok = d.c_old - d.ft_old >= 0.5 && d.c_old >= d.pre_old - 0.3 && spread <= 0.5;
    return {ok, fmt("held-out old-task PSNR: before %.3f, setting C %.3f, fine-tuning %.3f (C - FT = %.3f, need "
                    ">= 0.5), setting A %.3f; new-task val PSNR C %.3f, FT %.3f, A %.3f (spread %.3f, need <= 0.5)",
                    d.pre_old, d.c_old, d.ft_old, d.c_old - d.ft_old, d.a_old, d.c_new, d.ft_new, d.a_new, spread)};
}

Outcome pseudo_integrity(const Desk& d)
{
    const bool ok = d.error.empty() && d.old_removed && d.c_ran && d.pseudo_pairs > 0 && d.pseudo_bad == 0
                    && d.theta_s_kept;
    return {ok, fmt("old training data removed: %s; setting C completed: %s; %zu pseudo pairs, %zu mismatches; "
                    "theta_S hash unchanged across warm-up: %s%s",
                    d.old_removed ? "yes" : "no", d.c_ran ? "yes" : "no", d.pseudo_pairs, d.pseudo_bad,
                    d.theta_s_kept ? "yes" : "no", d.error.empty() ? "" : (" [" + d.error + "]").c_str())};
}

// --- 8: complexity ------------------------------------------------------------------------------

Outcome complexity()
{
    const NetworkConfig full;
    const double b = count_flops(full, Architecture::base, 63, 63);
    const double e = count_flops(full, Architecture::expanded, 63, 63);
    const double ratio = e / b;

    // single 3x3 conv, 5 -> 7 channels, stride 2 on 63x63: output 32x32
    ParamSet ps;
    Rng rng(1);
    init_conv(ps, rng, "c", 7, 5, 3);
    Graph g;
    Scope s{&g, &ps, {}};
    conv(s, "c", g.constant(Tensor({5, 63, 63}, 0.5)), ConvSpec{2, 1, 1, 1});
    const long long closed = 7LL * 5 * 3 * 3 * 32 * 32;

    NetworkConfig small;
    small.channels = 4;
    small.blocks = 2;
    const auto base = init_base(small, 1);
    const bool analytic_matches = count_flops(small, Architecture::base, 64, 64)
                                      == 2.0 * measured_macs(base, Architecture::base, 64, 64)
                                  && count_flops(small, Architecture::expanded, 64, 64)
                                         == 2.0 * measured_macs(init_expanded(base, 2), Architecture::expanded, 64, 64);
    const bool ok = ratio >= 1.18 && ratio <= 1.48 && g.macs() == closed && analytic_matches;
    return {ok, fmt("FLOPs at 63x63: base %.4g, expanded %.4g, ratio %.4f (range [1.18, 1.48]); single conv MACs %lld "
                    "vs closed form %lld; analytic count equals executed MACs: %s",
                    b, e, ratio, g.macs(), closed, analytic_matches ? "yes" : "no")};
}

// --- 9: determinism ----------------------------------------------------------------------------

constexpr const char* kTinyConfig = R"(experts = 3
blocks = 2
channels = 4
epochs = 2
warmup_epochs = 1
batch = 4
mu = 1e-3
gan.ngf = 4
gan.ndf = 4
gan.resblocks = 1
gan.input_size = 16
gan.epochs = 2
gan.batch = 4
)";

std::map<std::string, std::string> tree_bytes(const fs::path& root)
{
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && e.path().filename() != "log.txt")
            out[fs::relative(e.path(), root).string()] = slurp(e.path());
    return out;
}

void tiny_pipeline(const Env& env, const fs::path& dir)
{
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "tiny.cfg") << kTinyConfig;
    const fs::path log = dir / "log.txt";
    const auto p = [&](const char* sub) { return (dir / sub).string(); };
    auto run = [&](const std::string& args) { run_or_throw(env, "--config " + p("tiny.cfg") + " " + args, log); };
    const std::string pt = " --patch 16 --stride 16";
    run("--seed 3 --out " + p("scenes") + " gen-scenes --count 2 --size 32");
    run("--seed 4 --out " + p("old") + " gen-data --clean-dir " + p("scenes") + pt);
    run("--seed 5 --out " + p("new") + " gen-data --clean-dir " + p("scenes") + pt + " --new-factor haze");
    for (const char* k : {"blur", "noise", "jpeg"})
        run("--seed 6 --out " + p(("e_" + std::string(k)).c_str()) + " gen-data --clean-dir " + p("scenes") + pt
            + " --only " + k);
    run("--seed 7 --out " + p("experts") + " train-experts --data " + p("e_blur") + "," + p("e_noise") + ","
        + p("e_jpeg"));
    run("--seed 7 --out " + p("base") + " train-base --data " + p("old") + " --val " + p("old") + " --experts "
        + p("experts"));
    run("--seed 7 --out " + p("gan") + " train-gan --data " + p("old") + " --base " + p("base/base.ckpt"));
    run("--seed 7 --out " + p("pseudo") + " synth-pseudo --data " + p("new") + " --generator "
        + p("gan/generator.ckpt") + " --base " + p("base/base.ckpt"));
    run("--seed 7 --out " + p("warm") + " warmup --data " + p("new") + " --val " + p("new") + " --base "
        + p("base/base.ckpt"));
    const std::string common = " --base " + p("base/base.ckpt") + " --expanded " + p("warm/expanded.ckpt")
                               + " --data " + p("new") + " --val " + p("new") + " --old-val " + p("old");
    run("--seed 7 --out " + p("inc_A") + " train-incremental --setting A" + common);
    run("--seed 7 --out " + p("inc_B") + " train-incremental --setting B" + common + " --old-data " + p("old"));
    run("--seed 7 --out " + p("inc_C") + " train-incremental --setting C" + common + " --pseudo " + p("pseudo"));
    run("--seed 7 --out " + p("inc_F") + " train-incremental --setting finetune" + common);
}

Outcome determinism(const Env& env)
{
    try {
        tiny_pipeline(env, env.work / "det_a");
        tiny_pipeline(env, env.work / "det_b");
    } catch (const std::exception& e) {
        return {false, e.what()};
    }
    const auto a = tree_bytes(env.work / "det_a"), b = tree_bytes(env.work / "det_b");
    std::size_t differ = 0, ckpts = 0;
    std::string first;
    for (const auto& [name, bytes] : a) {
        if (name.ends_with(".ckpt"))
            ++ckpts;
        const auto it = b.find(name);
        if (it == b.end() || it->second != bytes) {
            if (first.empty())
                first = name;
            ++differ;
        }
    }
    const bool ok = differ == 0 && a.size() == b.size() && ckpts > 0;
    return {ok, fmt("%zu artifacts (%zu checkpoints) from gen-data and every training subcommand compared across two "
                    "same-seed runs: %zu differ%s",
                    a.size(), ckpts, differ, first.empty() ? "" : (" (first: " + first + ")").c_str())};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"acceptance suite"};
    Env env;
    std::string work = (fs::temp_directory_path() / "blend_acceptance").string();
    std::string fixtures = BLEND_FIXTURE_DIR;
    std::vector<int> only;
    app.add_option("--blendctl", env.blendctl, "path of the command-line tool")->required();
    app.add_option("--work", work, "scratch directory for generated data and models");
    app.add_option("--fixtures", fixtures);
    app.add_option("--only", only, "criteria to run")->delimiter(',');
    CLI11_PARSE(app, argc, argv);
    env.work = work;
    fs::create_directories(env.work);

    auto wanted = [&](int k) { return only.empty() || std::find(only.begin(), only.end(), k) != only.end(); };
    int failures = 0;
    auto report = [&](int k, const char* title, auto&& fn) {
        if (!wanted(k))
            return;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += !o.pass;
        std::printf("criterion %d %s: %s [%.1fs] %s\n", k, o.pass ? "PASS" : "FAIL", title, secs, o.detail.c_str());
        std::fflush(stdout);
    };

    report(1, "gradient suite", gradient_suite);
    report(2, "algebraic invariants", algebraic_invariants);
    report(3, "distortion oracles", distortion_oracles);
    report(4, "metric oracles", [&] { return metric_oracles(fixtures); });
    std::optional<Desk> desk;
    auto get_desk = [&]() -> const Desk& {
        if (!desk)
            desk = run_desk(env);
        return *desk;
    };
    report(5, "desk-scale fork-join training", [&] { return fork_join(get_desk()); });
    report(6, "forgetting ordering", [&] { return forgetting(get_desk()); });
    report(7, "pseudo-rehearsal integrity", [&] { return pseudo_integrity(get_desk()); });
    report(8, "complexity report", complexity);
    report(9, "determinism", [&] { return determinism(env); });
    return failures == 0 ? 0 : 1;
}
