#include "blend/dataset.hpp"
#include "blend/error.hpp"
#include "blend/network.hpp"
#include "blend/optim.hpp"
#include "blend/scenes.hpp"
#include "blend/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace blend;
namespace fs = std::filesystem;

namespace {

NetworkConfig tiny()
{
    NetworkConfig c;
    c.blocks = 2;
    c.channels = 4;
    return c;
}

TrainConfig quick()
{
    TrainConfig t;
    t.epochs = 2;
    t.warmup_epochs = 1;
    t.batch = 4;
    t.mu = 1e-3;
    return t;
}

// Builds (once per process) small datasets: old blended, new with haze, a pseudo-task copy, experts.
struct Corpus {
    fs::path root = fs::temp_directory_path() / "blend_unit_train";
    DatasetManifest old_data, new_data, fake_pseudo;
    std::vector<DatasetManifest> experts;

    Corpus()
    {
        fs::remove_all(root);
        fs::create_directories(root / "clean");
        for (int i = 0; i < 2; ++i)
            write_png(root / "clean" / ("s" + std::to_string(i) + ".png"), synthetic_scene(32, 32, 100 + i));
        BuildOptions o;
        o.patch = 16;
        o.stride = 16;
        o.seed = 1;
        const auto imgs = list_images(root / "clean");
        old_data = build_dataset(imgs, o, root / "old");
        o.new_factor = DistortionKind::haze;
        new_data = build_dataset(imgs, o, root / "new");
        o.new_factor.reset();
        for (auto k : {DistortionKind::blur, DistortionKind::noise, DistortionKind::jpeg}) {
            o.only = k;
            experts.push_back(build_dataset(imgs, o, root / ("e" + std::to_string(experts.size()))));
        }
        fake_pseudo = old_data;
        fake_pseudo.task = "pseudo";
        write_manifest(fake_pseudo, root / "old"); // same files, tagged as a pseudo store
        fake_pseudo = read_manifest(root / "old");
    }
};

Corpus& corpus()
{
    static Corpus c;
    return c;
}

bool in_group(const ParameterPartition& p, ParamGroup g, const std::string& n)
{
    switch (g) {
    case ParamGroup::shared: return p.shared.count(n) > 0;
    case ParamGroup::base_private: return p.base_private.count(n) > 0;
    case ParamGroup::expanded_private: return p.expanded_private.count(n) > 0;
    }
    return false;
}

std::uint64_t group_hash(const ModelCheckpoint& m, ParamGroup g)
{
    const auto p = partition_params(m);
    return parameter_hash(m.params, [&](const std::string& n) { return in_group(p, g, n); });
}

} // namespace

TEST_CASE("learning-rate schedule")
{
    CHECK(cosine_lr(1.0, 0, 10) == 1.0);
    CHECK(cosine_lr(1.0, 5, 10) == doctest::Approx(0.5));
    CHECK(cosine_lr(1.0, 10, 10) == doctest::Approx(0.0));
    const auto r = lr_schedule(2.5, 10, 1e-4, 1e-3);
    CHECK(r.expanded == doctest::Approx(1e-4 * (1 + std::cos(M_PI * 0.25)) / 2));
    CHECK(r.shared == doctest::Approx(1e-3 * r.expanded));
    CHECK(lr_schedule(3, 10, 1e-4, 0.0).shared == 0.0);
}

TEST_CASE("adam first step and zero learning rate")
{
    ParamSet ps;
    ps.add("a", Tensor({2}, 1.0));
    ps.add("b", Tensor({1}, 1.0));
    GradMap g;
    g["a"] = Tensor({2}, 0.0);
    g["a"][0] = 3.0;
    g["a"][1] = -0.5;
    Adam opt;
    opt.step(ps, g, 0.1);
    CHECK(ps.get("a")[0] == doctest::Approx(1.0 - 0.1 * 3.0 / (3.0 + 1e-8)));
    CHECK(ps.get("a")[1] == doctest::Approx(1.0 + 0.1));
    CHECK(ps.get("b")[0] == 1.0);
    const Tensor before = ps.get("a");
    opt.step(ps, g, 0.0);
    CHECK(max_abs_diff(before, ps.get("a")) == 0.0);
}

TEST_CASE("fork stage routes each batch to its own expert")
{
    auto& c = corpus();
    auto fork = init_fork_model(tiny(), 3);
    const auto before = fork;
    Adam opt;
    const auto batch = load_pairs(c.experts[1]);
    fork_step(fork, opt, 2, {batch.begin(), batch.begin() + 2}, 1e-3);
    for (const auto& n : fork.params.names()) {
        const bool moved = max_abs_diff(fork.params.get(n), before.params.get(n)) > 0.0;
        if (n.rfind("expert1/", 0) == 0 || n.rfind("expert3/", 0) == 0)
            CHECK_MESSAGE(!moved, n);
    }
    CHECK(max_abs_diff(fork.params.get("expert2/block1/conv_in.w"), before.params.get("expert2/block1/conv_in.w")) > 0);
}

TEST_CASE("expert training needs single-distortion data")
{
    auto& c = corpus();
    CHECK_THROWS_AS(train_experts({c.old_data, c.old_data, c.old_data}, {}, tiny(), quick()), Error);
    const auto res = train_experts(c.experts, c.experts, tiny(), quick());
    CHECK(res.experts.size() == 3);
    CHECK(res.history.size() == 2);
    CHECK(res.fork.role == Role::single_expert);
}

TEST_CASE("warm-up leaves the shared parameters untouched; rho = 0 freezes them in incremental training")
{
    auto& c = corpus();
    const auto base = train_base(c.old_data, c.old_data, init_base(tiny(), 1), quick()).best;
    const auto warm = warmup_expanded(c.new_data, c.new_data, base, quick()).expanded;
    const auto is_shared = [](const std::string& n) { return classify_param(n, 3) == ParamGroup::shared; };
    CHECK(parameter_hash(warm.params, is_shared) == parameter_hash(base.params, is_shared));
    const auto merged = merge_incremental(base, warm);
    for (std::uint64_t i = 0; i < 4; ++i) {
        const Tensor probe = synthetic_scene(16, 16, 300 + i).pixels;
        CHECK(max_abs_diff(base_forward(merged, probe).output, base_forward(base, probe).output) == 0.0);
    }

    const fs::path root = c.root;
    TrainConfig t = quick();
    t.rho = 0.0;
    const SettingSpec spec(Setting::C_pseudo, {{HandleKind::new_train, root / "new"},
                                               {HandleKind::new_val, root / "new"},
                                               {HandleKind::old_val, root / "old"},
                                               {HandleKind::old_pseudo_train, root / "old"}});
    const auto res = train_incremental(spec, base, warm, t);
    const auto start = merge_incremental(base, warm);
    CHECK(group_hash(res.last, ParamGroup::shared) == group_hash(start, ParamGroup::shared));
    CHECK(group_hash(res.last, ParamGroup::base_private) == group_hash(start, ParamGroup::base_private));
    CHECK(group_hash(res.last, ParamGroup::expanded_private) != group_hash(start, ParamGroup::expanded_private));
    for (const auto& h : res.history) {
        CHECK(h["loss_decomposition_error"].get<double>() < 1e-12);
        CHECK(h["lr_shared"].get<double>() == 0.0);
    }

    // lambda2 = 0: the old term contributes nothing
    t = quick();
    t.lambda2 = 0.0;
    const auto zero = train_incremental(spec, base, warm, t);
    for (const auto& h : zero.history)
        CHECK(h["loss_total"].get<double>() == doctest::Approx(h["loss_new"].get<double>()).epsilon(1e-12));

    // fine-tuning keeps theta_P1 fixed and moves theta_S at the full rate
    const SettingSpec ft(Setting::finetune, {{HandleKind::new_train, root / "new"},
                                             {HandleKind::new_val, root / "new"},
                                             {HandleKind::old_val, root / "old"}});
    const auto fres = train_incremental(ft, base, warm, quick());
    CHECK(group_hash(fres.last, ParamGroup::base_private) == group_hash(start, ParamGroup::base_private));
    CHECK(group_hash(fres.last, ParamGroup::shared) != group_hash(start, ParamGroup::shared));
    CHECK(fres.history[0]["lr_shared"] == fres.history[0]["lr_expanded"]);
}

TEST_CASE("setting data access is enforced")
{
    auto& c = corpus();
    const fs::path root = c.root;
    const std::vector<DataHandle> common = {{HandleKind::new_train, root / "new"},
                                            {HandleKind::new_val, root / "new"},
                                            {HandleKind::old_val, root / "old"}};
    auto with = [&](DataHandle h) {
        auto v = common;
        v.push_back(h);
        return v;
    };
    CHECK_THROWS_AS(SettingSpec(Setting::C_pseudo, with({HandleKind::old_real_train, root / "old"})), Error);
    CHECK_THROWS_AS(SettingSpec(Setting::A_new_only, with({HandleKind::old_real_train, root / "old"})), Error);
    CHECK_THROWS_AS(SettingSpec(Setting::finetune, with({HandleKind::old_real_train, root / "old"})), Error);
    CHECK_THROWS_AS(SettingSpec(Setting::B_joint, common), Error);
    CHECK_THROWS_AS(SettingSpec(Setting::C_pseudo, common), Error);
    CHECK_NOTHROW(SettingSpec(Setting::B_joint, with({HandleKind::old_real_train, root / "old"})));
    // a real-data manifest presented as the pseudo store is refused on open
    const SettingSpec spec(Setting::C_pseudo, with({HandleKind::old_pseudo_train, root / "e0"}));
    try {
        spec.open(HandleKind::old_pseudo_train);
        FAIL("expected an access violation");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::access_violation);
    }
    CHECK_THROWS_AS(spec.open(HandleKind::old_real_train), Error);
    CHECK_THROWS_AS(parse_setting("D"), Error);
}
