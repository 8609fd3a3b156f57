#include "blend/config.hpp"
#include "blend/error.hpp"
#include "blend/evaluate.hpp"
#include "blend/network.hpp"
#include "blend/scenes.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

using namespace blend;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("blend_unit_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run(const std::string& args)
{
    const std::string cmd = std::string(BLENDCTL_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("evaluation report groups and orders samples")
{
    NetworkConfig net;
    net.blocks = 2;
    net.channels = 4;
    const auto base = init_base(net, 1);
    std::vector<SamplePair> a, b;
    for (int i = 0; i < 3; ++i) {
        ImagePatch clean = synthetic_scene(12, 12, i);
        clean.id = "c" + std::to_string(2 - i);
        a.push_back({clean, clean});
        b.push_back({clean, clean});
    }
    const auto rep = evaluate(base, ForwardKind::base, {{"severe", a}, {"mild", b}});
    REQUIRE(rep.samples.size() == 6);
    CHECK(rep.samples[0].group == "mild");
    CHECK(rep.samples[0].id == "c0");
    CHECK(rep.groups.at("mild").count == 3);
    CHECK(rep.groups.at("severe").input_psnr == 100.0);
    CHECK(to_json(rep, false).contains("groups"));
    CHECK(report_text(rep).find("group severe") != std::string::npos);
    CHECK_THROWS_AS(evaluate(base, ForwardKind::expanded, {{"mild", b}}), Error);
    CHECK_THROWS_AS(evaluate(base, ForwardKind::base, {{"mild", {{ImagePatch(8, 8), ImagePatch(8, 8)}}}}), Error);
    CHECK_THROWS_AS(default_forward(merge_incremental(base, init_expanded(base, 2))), Error);
}

TEST_CASE("curve export aligns histories and rejects mismatched epochs")
{
    const fs::path d = scratch("curves");
    auto write = [&](const std::string& name, int epochs) {
        std::ofstream os(d / name);
        for (int e = 1; e <= epochs; ++e)
            os << R"({"epoch":)" << e << R"(,"old_psnr":20.5,"old_ssim":0.5,"new_psnr":)" << 18 + e
               << R"(,"new_ssim":0.25})" << "\n";
    };
    write("a.jsonl", 3);
    write("b.jsonl", 3);
    write("c.jsonl", 2);
    const std::string csv = export_curves({{"A", d / "a.jsonl"}, {"C", d / "b.jsonl"}});
    CHECK(csv.rfind("epoch,A_old_psnr,A_old_ssim,A_new_psnr,A_new_ssim,C_old_psnr", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    CHECK(csv.find("\n3,20.5,0.5,21,0.25,20.5") != std::string::npos);
    try {
        export_curves({{"A", d / "a.jsonl"}, {"C", d / "c.jsonl"}});
        FAIL("expected an alignment error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::alignment);
    }
}

TEST_CASE("key-value configuration")
{
    const auto c = KeyValueConfig::parse("# comment\nchannels = 8\nmu=1e-3\n no_gates = yes \n", "inline");
    CHECK(c.get_int("channels", 0) == 8);
    CHECK(c.get_double("mu", 0) == 1e-3);
    CHECK(c.get_bool("no_gates", false));
    CHECK(c.get_string("missing", "x") == "x");
    CHECK_THROWS_AS(c.check_known({"channels", "mu"}), Error);
    CHECK_THROWS_AS(KeyValueConfig::parse("channels 8\n", "inline"), Error);
    CHECK_THROWS_AS(KeyValueConfig::parse("channels = eight\n", "inline").get_int("channels", 0), Error);
    CHECK_THROWS_AS(KeyValueConfig::parse("a = 1\na = 2\n", "inline"), Error);
}

TEST_CASE("command line exit codes")
{
    const fs::path d = scratch("cli");
    CHECK(run("--help") == 0);
    CHECK(run("") == 2);
    CHECK(run("describe --size 63") == 0);
    CHECK(run("eval --model " + (d / "none.ckpt").string() + " --data x") == 2);
    {
        std::ofstream(d / "bad.cfg") << "unknown_key = 1\n";
    }
    CHECK(run("--config " + (d / "bad.cfg").string() + " describe") == 2);
    CHECK(run("--out " + (d / "scenes").string() + " gen-scenes --count 2 --size 32") == 0);
    CHECK(fs::exists(d / "scenes" / "scene_0001.png"));
    CHECK(run("--out " + (d / "data").string() + " gen-data --clean-dir " + (d / "scenes").string()
              + " --patch 16 --stride 16 --severity extreme") == 2);
}
