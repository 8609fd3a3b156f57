// Command-line front end: data generation, the training phases, evaluation
// and reporting. Exit codes: 0 success, 2 invalid input, 3 invariant violation.

#include "blend/config.hpp"
#include "blend/dataset.hpp"
#include "blend/error.hpp"
#include "blend/evaluate.hpp"
#include "blend/gan.hpp"
#include "blend/network.hpp"
#include "blend/scenes.hpp"
#include "blend/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace blend;

namespace {

struct Globals {
    std::string config_file;
    std::optional<std::uint64_t> seed;
    std::string out;
};

const std::set<std::string> kConfigKeys = {
    "seed",          "experts",      "blocks",        "channels",      "slope",
    "shared_sgu_gate", "no_expert_init", "use_se_instead_of_sk", "no_s_gates", "no_gates",
    "uniform_attention", "concat_instead_of_bisgu", "mu", "rho",        "lambda2",
    "warmup_epochs", "beta1",        "beta2",         "epochs",        "batch",
    "period_epochs", "gan.lambda1",  "gan.lr",        "gan.beta1",     "gan.batch",
    "gan.epochs",    "gan.ngf",      "gan.ndf",       "gan.resblocks", "gan.input_size",
    "gan.least_squares", "gan.buffer_size", "gan.holdout"};

KeyValueConfig load_config(const Globals& g)
{
    KeyValueConfig c = g.config_file.empty() ? KeyValueConfig{} : KeyValueConfig::load(g.config_file);
    c.check_known(kConfigKeys);
    return c;
}

std::uint64_t seed_of(const Globals& g, const KeyValueConfig& c)
{
    return g.seed ? *g.seed : static_cast<std::uint64_t>(c.get_int("seed", 1));
}

NetworkConfig network_from(const KeyValueConfig& c)
{
    NetworkConfig n;
    n.experts = static_cast<int>(c.get_int("experts", n.experts));
    n.blocks = static_cast<int>(c.get_int("blocks", n.blocks));
    n.channels = static_cast<int>(c.get_int("channels", n.channels));
    n.slope = c.get_double("slope", n.slope);
    n.shared_sgu_gate = c.get_bool("shared_sgu_gate", n.shared_sgu_gate);
    n.no_expert_init = c.get_bool("no_expert_init", n.no_expert_init);
    n.use_se_instead_of_sk = c.get_bool("use_se_instead_of_sk", n.use_se_instead_of_sk);
    n.no_s_gates = c.get_bool("no_s_gates", n.no_s_gates);
    n.no_gates = c.get_bool("no_gates", n.no_gates);
    n.uniform_attention = c.get_bool("uniform_attention", n.uniform_attention);
    n.concat_instead_of_bisgu = c.get_bool("concat_instead_of_bisgu", n.concat_instead_of_bisgu);
    n.validate();
    return n;
}

TrainConfig train_from(const KeyValueConfig& c, std::uint64_t seed)
{
    TrainConfig t;
    t.mu = c.get_double("mu", t.mu);
    t.rho = c.get_double("rho", t.rho);
    t.lambda2 = c.get_double("lambda2", t.lambda2);
    t.warmup_epochs = static_cast<int>(c.get_int("warmup_epochs", t.warmup_epochs));
    t.beta1 = c.get_double("beta1", t.beta1);
    t.beta2 = c.get_double("beta2", t.beta2);
    t.epochs = static_cast<int>(c.get_int("epochs", t.epochs));
    t.batch = static_cast<int>(c.get_int("batch", t.batch));
    t.period_epochs = c.get_double("period_epochs", t.period_epochs);
    t.seed = seed;
    t.validate();
    // rho = 0 (frozen shared parameters) is a library-level diagnostic only
    require(t.rho > 0.0, ErrorKind::invalid_parameter, "rho must lie in (0, 1]");
    return t;
}

GanConfig gan_from(const KeyValueConfig& c, std::uint64_t seed)
{
    GanConfig g;
    g.lambda1 = c.get_double("gan.lambda1", g.lambda1);
    g.lr = c.get_double("gan.lr", g.lr);
    g.beta1 = c.get_double("gan.beta1", g.beta1);
    g.batch = static_cast<int>(c.get_int("gan.batch", g.batch));
    g.epochs = static_cast<int>(c.get_int("gan.epochs", g.epochs));
    g.ngf = static_cast<int>(c.get_int("gan.ngf", g.ngf));
    g.ndf = static_cast<int>(c.get_int("gan.ndf", g.ndf));
    g.resblocks = static_cast<int>(c.get_int("gan.resblocks", g.resblocks));
    g.input_size = static_cast<int>(c.get_int("gan.input_size", g.input_size));
    g.least_squares = c.get_bool("gan.least_squares", g.least_squares);
    g.buffer_size = static_cast<int>(c.get_int("gan.buffer_size", g.buffer_size));
    g.holdout = c.get_double("gan.holdout", g.holdout);
    g.seed = seed;
    g.validate();
    return g;
}

fs::path out_dir(const Globals& g)
{
    require(!g.out.empty(), ErrorKind::invalid_input, "--out is required");
    fs::create_directories(g.out);
    return g.out;
}

void write_text(const fs::path& file, const std::string& text)
{
    std::ofstream os(file, std::ios::trunc);
    require(static_cast<bool>(os), ErrorKind::io, "cannot write " + file.string());
    os << text;
}

std::vector<DatasetManifest> read_manifests(const std::vector<std::string>& dirs)
{
    std::vector<DatasetManifest> out;
    for (const auto& d : dirs)
        out.push_back(read_manifest(d));
    return out;
}

std::string partition_summary(const ModelCheckpoint& m)
{
    const auto p = partition_params(m);
    auto scalars = [&](const std::set<std::string>& names) {
        std::size_t n = 0;
        for (const auto& k : names)
            n += m.params.get(k).size();
        return n;
    };
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "partition theta_S tensors %zu scalars %zu\npartition theta_P1 tensors %zu scalars %zu\n"
                  "partition theta_P2 tensors %zu scalars %zu\n",
                  p.shared.size(), scalars(p.shared), p.base_private.size(), scalars(p.base_private),
                  p.expanded_private.size(), scalars(p.expanded_private));
    return buf;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Blended-distortion restoration: data synthesis, fork-join and lifelong training, evaluation"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config_file, "key = value configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "global seed (overrides the config)");
    app.add_option("--out", g.out, "output directory or file");

    // gen-scenes
    auto* scenes = app.add_subcommand("gen-scenes", "write synthetic clean images");
    int scene_count = 8, scene_size = 128;
    scenes->add_option("--count", scene_count)->check(CLI::PositiveNumber);
    scenes->add_option("--size", scene_size)->check(CLI::Range(8, 4096));

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "crop and degrade clean images into a patch dataset");
    std::string clean_dir, severity = "moderate", new_factor = "none", only;
    int patch = 64, stride = 64;
    std::size_t max_patches = 0;
    gen->add_option("--clean-dir", clean_dir)->required()->check(CLI::ExistingDirectory);
    gen->add_option("--patch", patch)->check(CLI::Range(8, 4096));
    gen->add_option("--stride", stride)->check(CLI::PositiveNumber);
    gen->add_option("--severity", severity);
    gen->add_option("--new-factor", new_factor, "none | haze | darkness");
    gen->add_option("--only", only, "single distortion kind (expert data)");
    gen->add_option("--max-patches", max_patches);

    // train-experts
    auto* tex = app.add_subcommand("train-experts", "fork stage: one expert per distortion kind");
    std::vector<std::string> ex_data, ex_val;
    tex->add_option("--data", ex_data, "one manifest directory per expert, in expert order")->required()->delimiter(',');
    tex->add_option("--val", ex_val)->delimiter(',');

    // train-base
    auto* tba = app.add_subcommand("train-base", "join stage: base network on blended distortions");
    std::string data_dir, val_dir, experts_dir;
    tba->add_option("--data", data_dir)->required();
    tba->add_option("--val", val_dir)->required();
    tba->add_option("--experts", experts_dir, "directory holding expert_<k>.ckpt");

    // train-gan
    auto* tgan = app.add_subcommand("train-gan", "clean-to-distorted generator against a frozen base network");
    std::string base_ckpt;
    tgan->add_option("--data", data_dir, "old-task manifest (clean and distorted pools)")->required();
    tgan->add_option("--base", base_ckpt)->required()->check(CLI::ExistingFile);

    // synth-pseudo
    auto* tps = app.add_subcommand("synth-pseudo", "pseudo old-task pairs from new-task clean images");
    std::string gen_ckpt;
    tps->add_option("--data", data_dir, "new-task manifest supplying y2")->required();
    tps->add_option("--generator", gen_ckpt)->required()->check(CLI::ExistingFile);
    tps->add_option("--base", base_ckpt)->required()->check(CLI::ExistingFile);

    // warmup
    auto* twu = app.add_subcommand("warmup", "train the expanded-private parameters with the old expert frozen");
    twu->add_option("--data", data_dir)->required();
    twu->add_option("--val", val_dir)->required();
    twu->add_option("--base", base_ckpt)->required()->check(CLI::ExistingFile);

    // train-incremental
    auto* tin = app.add_subcommand("train-incremental", "joint old/new training under a lifelong setting");
    std::string setting, expanded_ckpt, new_val, old_val, old_data, pseudo_dir;
    tin->add_option("--setting", setting, "A | B | C | finetune")->required();
    tin->add_option("--base", base_ckpt)->required()->check(CLI::ExistingFile);
    tin->add_option("--expanded", expanded_ckpt)->required()->check(CLI::ExistingFile);
    tin->add_option("--data", data_dir, "new-task training manifest")->required();
    tin->add_option("--val", new_val, "new-task validation manifest")->required();
    tin->add_option("--old-val", old_val, "old-task validation manifest")->required();
    tin->add_option("--old-data", old_data, "real old-task training manifest (setting B)");
    tin->add_option("--pseudo", pseudo_dir, "pseudo-pair store (setting C)");

    // eval
    auto* tev = app.add_subcommand("eval", "grouped PSNR/SSIM report");
    std::string model_ckpt, forward;
    std::vector<std::string> eval_data, groups;
    int expert = 1;
    tev->add_option("--model", model_ckpt)->required()->check(CLI::ExistingFile);
    tev->add_option("--data", eval_data, "one manifest per severity group")->required()->delimiter(',');
    tev->add_option("--groups", groups, "groups to report, e.g. mild,moderate,severe")->delimiter(',');
    tev->add_option("--forward", forward, "fork | base | expanded (default from the checkpoint role)");
    tev->add_option("--expert", expert);

    // describe
    auto* tde = app.add_subcommand("describe", "parameter counts, FLOPs and partition summary");
    int size = 63;
    tde->add_option("--model", model_ckpt)->check(CLI::ExistingFile);
    tde->add_option("--size", size)->check(CLI::PositiveNumber);

    // export-curves
    auto* tcu = app.add_subcommand("export-curves", "align incremental histories into one CSV table");
    std::vector<std::string> histories;
    tcu->add_option("--history", histories, "label=path/history.jsonl")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const KeyValueConfig cfg = load_config(g);
        const std::uint64_t seed = seed_of(g, cfg);

        if (*scenes) {
            const fs::path dir = out_dir(g);
            for (int i = 0; i < scene_count; ++i) {
                char name[32];
                std::snprintf(name, sizeof(name), "scene_%04d.png", i);
                write_png(dir / name, synthetic_scene(scene_size, scene_size, mix_seed(seed, i)));
            }
            std::printf("wrote %d scenes to %s\n", scene_count, dir.c_str());
        } else if (*gen) {
            BuildOptions opt;
            opt.patch = patch;
            opt.stride = stride;
            opt.severity = parse_severity(severity);
            opt.new_factor = parse_new_factor(new_factor);
            if (!only.empty())
                opt.only = parse_kind(only);
            opt.seed = seed;
            opt.max_patches = max_patches;
            const auto m = build_dataset(list_images(clean_dir), opt, out_dir(g));
            std::printf("entries %zu errors %zu\n", m.entries.size(), m.errors.size());
        } else if (*tex) {
            const auto res = train_experts(read_manifests(ex_data), read_manifests(ex_val), network_from(cfg),
                                           train_from(cfg, seed), {out_dir(g)});
            std::printf("%s\n", res.history.back().dump().c_str());
        } else if (*tba) {
            const NetworkConfig net = network_from(cfg);
            std::vector<ModelCheckpoint> experts;
            if (!net.no_expert_init) {
                require(!experts_dir.empty(), ErrorKind::invalid_input, "--experts is required unless no_expert_init");
                for (int k = 1; k <= net.experts; ++k)
                    experts.push_back(load_checkpoint(fs::path(experts_dir) / ("expert_" + std::to_string(k) + ".ckpt")));
            }
            const auto init = assemble_base(experts, net, mix_seed(seed, 41));
            const auto res = train_base(read_manifest(data_dir), read_manifest(val_dir), init, train_from(cfg, seed),
                                        {out_dir(g)});
            std::printf("best_epoch %d %s\n", res.best_epoch, res.history[res.best_epoch - 1].dump().c_str());
        } else if (*tgan) {
            const fs::path dir = out_dir(g);
            const auto m = read_manifest(data_dir);
            std::vector<Tensor> clean, distorted;
            for (auto& p : load_clean(m))
                clean.push_back(std::move(p.pixels));
            for (auto& p : load_distorted(m))
                distorted.push_back(std::move(p.pixels));
            const auto res = train_gan(clean, distorted, load_checkpoint(base_ckpt), gan_from(cfg, seed));
            save_checkpoint(res.generator, dir / "generator.ckpt");
            save_checkpoint(res.discriminator, dir / "discriminator.ckpt");
            std::string hist;
            for (const auto& l : res.history)
                hist += to_json(l).dump() + "\n";
            write_text(dir / "history.jsonl", hist);
            std::printf("best_epoch %d holdout_cycle %.6f\n", res.best_epoch,
                        res.history[res.best_epoch - 1].holdout_cycle);
        } else if (*tps) {
            const auto r = load_checkpoint(base_ckpt);
            const auto pairs = synthesize_pseudo(load_clean(read_manifest(data_dir)), load_checkpoint(gen_ckpt), r);
            const auto store = write_pseudo_store(pairs, out_dir(g), seed);
            const std::size_t bad = verify_pseudo_store(store, r);
            require(bad == 0, ErrorKind::invariant, std::to_string(bad) + " pseudo pairs fail y2' == R(x1')");
            std::printf("pseudo pairs %zu verified\n", pairs.size());
        } else if (*twu) {
            const auto res = warmup_expanded(read_manifest(data_dir), read_manifest(val_dir),
                                             load_checkpoint(base_ckpt), train_from(cfg, seed), {out_dir(g)});
            if (!res.history.empty())
                std::printf("%s\n", res.history.back().dump().c_str());
        } else if (*tin) {
            std::vector<DataHandle> handles = {{HandleKind::new_train, data_dir},
                                               {HandleKind::new_val, new_val},
                                               {HandleKind::old_val, old_val}};
            if (!old_data.empty())
                handles.push_back({HandleKind::old_real_train, old_data});
            if (!pseudo_dir.empty())
                handles.push_back({HandleKind::old_pseudo_train, pseudo_dir});
            const SettingSpec spec(parse_setting(setting), handles);
            const auto res = train_incremental(spec, load_checkpoint(base_ckpt), load_checkpoint(expanded_ckpt),
                                               train_from(cfg, seed), {out_dir(g)});
            nlohmann::json summary = {{"setting", setting},
                                      {"best_epoch", res.best_epoch},
                                      {"initial_old_psnr", res.initial_old_psnr},
                                      {"initial_old_ssim", res.initial_old_ssim},
                                      {"initial_new_psnr", res.initial_new_psnr},
                                      {"initial_new_ssim", res.initial_new_ssim},
                                      {"best", res.history[res.best_epoch - 1]},
                                      {"last", res.history.back()}};
            write_text(fs::path(g.out) / "summary.json", summary.dump(2) + "\n");
            std::printf("%s\n", summary.dump().c_str());
        } else if (*tev) {
            const auto model = load_checkpoint(model_ckpt);
            const ForwardKind kind = forward.empty() ? default_forward(model) : parse_forward(forward);
            auto manifests = read_manifests(eval_data);
            if (!groups.empty()) {
                std::vector<DatasetManifest> keep;
                for (const auto& grp : groups) {
                    const Severity s = parse_severity(grp);
                    bool found = false;
                    for (const auto& m : manifests)
                        if (m.severity == s) {
                            keep.push_back(m);
                            found = true;
                        }
                    require(found, ErrorKind::invalid_input, "no manifest for group " + grp);
                }
                manifests = std::move(keep);
            }
            const auto rep = evaluate(model, kind, manifests, expert);
            std::cout << report_text(rep);
            if (!g.out.empty()) {
                const fs::path dir = out_dir(g);
                write_text(dir / "report.txt", report_text(rep));
                write_text(dir / "report.json", to_json(rep).dump(2) + "\n");
            }
        } else if (*tde) {
            std::string text;
            char line[256];
            if (model_ckpt.empty()) {
                const NetworkConfig net = network_from(cfg);
                const double b = count_flops(net, Architecture::base, size, size);
                const double e = count_flops(net, Architecture::expanded, size, size);
                const auto inc = merge_incremental(init_base(net, seed), init_expanded(init_base(net, seed), seed));
                std::ostringstream os;
                os << "config " << to_json(net).dump() << "\nsize " << size << "\nparams_base "
                   << count_params(restrict_to(inc, Role::base_R)) << "\nparams_expanded "
                   << count_params(restrict_to(inc, Role::expanded_H));
                std::snprintf(line, sizeof(line), "\nflops_base %.6e\nflops_expanded %.6e\nflops_ratio %.6f\n", b, e,
                              e / b);
                os << line;
                text = os.str() + partition_summary(inc);
            } else {
                const auto m = load_checkpoint(model_ckpt);
                std::snprintf(line, sizeof(line), "role %s\nstep %lld\nparams %lld\n", to_string(m.role).c_str(),
                              m.step, count_params(m));
                text = line;
                if (m.role != Role::generator_G && m.role != Role::discriminator_D) {
                    std::snprintf(line, sizeof(line), "size %d\nflops %.6e\n", size, count_flops(m, size, size));
                    text += line;
                }
                if (m.role == Role::incremental)
                    text += partition_summary(m);
            }
            std::cout << text;
            if (!g.out.empty())
                write_text(g.out, text);
        } else if (*tcu) {
            std::vector<CurveSource> sources;
            for (const auto& h : histories) {
                const auto eq = h.find('=');
                require(eq != std::string::npos && eq > 0, ErrorKind::invalid_input,
                        "--history expects label=path, got '" + h + "'");
                sources.push_back({h.substr(0, eq), h.substr(eq + 1)});
            }
            const std::string csv = export_curves(sources);
            if (g.out.empty())
                std::cout << csv;
            else
                write_text(g.out, csv);
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error (%s): %s\n", to_string(e.kind()), e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
