#include "blend/dataset.hpp"

#include "blend/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace blend {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json header_json(const DatasetManifest& m)
{
    json h;
    h["format"] = "blend-manifest";
    h["version"] = kManifestVersion;
    h["task"] = m.task;
    h["severity"] = to_string(m.severity);
    h["new_factor"] = m.new_factor ? to_string(*m.new_factor) : "none";
    h["only"] = m.only ? to_string(*m.only) : "none";
    h["seed"] = m.seed;
    h["patch"] = m.patch;
    h["stride"] = m.stride;
    h["count"] = m.entries.size();
    return h;
}

std::string patch_name(std::size_t index)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu.png", index);
    return buf;
}

} // namespace

std::string manifest_text(const DatasetManifest& m)
{
    std::ostringstream os;
    os << header_json(m).dump() << '\n';
    for (const auto& e : m.entries) {
        json j;
        j["clean"] = e.clean_path;
        j["distorted"] = e.distorted_path;
        json chain = json::array();
        for (const auto& st : e.chain.stages)
            chain.push_back(format_stage(st));
        j["chain"] = chain;
        j["severity"] = to_string(e.chain.severity);
        j["seed"] = e.chain.seed;
        if (!e.provenance.empty())
            j["provenance"] = e.provenance;
        os << j.dump() << '\n';
    }
    for (const auto& err : m.errors)
        os << json{{"error", err}}.dump() << '\n';
    return os.str();
}

void write_manifest(const DatasetManifest& m, const fs::path& dir)
{
    fs::create_directories(dir);
    std::ofstream out(dir / kManifestName, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write manifest in " + dir.string());
    out << manifest_text(m);
}

DatasetManifest read_manifest(const fs::path& path)
{
    const fs::path file = fs::is_directory(path) ? path / kManifestName : path;
    std::ifstream in(file, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::invalid_input, "cannot open manifest " + file.string());
    DatasetManifest m;
    m.root = file.parent_path();
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::invalid_input, "empty manifest " + file.string());
    std::size_t declared = 0;
    try {
        const json h = json::parse(line);
        require(h.value("format", "") == "blend-manifest", ErrorKind::invalid_input, "not a manifest header");
        require(h.at("version").get<int>() == kManifestVersion, ErrorKind::invalid_input, "unsupported manifest version");
        m.task = h.at("task").get<std::string>();
        m.severity = parse_severity(h.at("severity").get<std::string>());
        m.new_factor = parse_new_factor(h.at("new_factor").get<std::string>());
        const auto only = h.at("only").get<std::string>();
        if (only != "none")
            m.only = parse_kind(only);
        m.seed = h.at("seed").get<std::uint64_t>();
        m.patch = h.at("patch").get<int>();
        m.stride = h.at("stride").get<int>();
        declared = h.at("count").get<std::size_t>();
        while (std::getline(in, line)) {
            if (line.empty())
                continue;
            const json j = json::parse(line);
            if (j.contains("error")) {
                m.errors.push_back(j.at("error").get<std::string>());
                continue;
            }
            ManifestEntry e;
            e.clean_path = j.at("clean").get<std::string>();
            e.distorted_path = j.at("distorted").get<std::string>();
            for (const auto& s : j.at("chain"))
                e.chain.stages.push_back(parse_stage(s.get<std::string>()));
            e.chain.severity = parse_severity(j.at("severity").get<std::string>());
            e.chain.seed = j.at("seed").get<std::uint64_t>();
            e.provenance = j.value("provenance", "");
            m.entries.push_back(std::move(e));
        }
    } catch (const json::exception& ex) {
        fail(ErrorKind::invalid_input, "malformed manifest " + file.string() + ": " + ex.what());
    }
    require(m.entries.size() == declared, ErrorKind::invalid_input,
            "manifest declares " + std::to_string(declared) + " entries but holds " + std::to_string(m.entries.size()));
    return m;
}

std::vector<fs::path> list_images(const fs::path& dir)
{
    require(fs::is_directory(dir), ErrorKind::invalid_input, "not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png")
            out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

DatasetManifest build_dataset(const std::vector<fs::path>& clean_images, const BuildOptions& opt,
                              const fs::path& out_dir)
{
    require(opt.patch >= 8 && opt.stride >= 1, ErrorKind::invalid_parameter, "patch must be >= 8 and stride >= 1");
    require(!(opt.only && opt.new_factor), ErrorKind::invalid_parameter, "single-distortion data has no new factor");

    DatasetManifest m;
    m.task = opt.only ? "single" : "blended";
    m.severity = opt.severity;
    m.new_factor = opt.new_factor;
    m.only = opt.only;
    m.seed = opt.seed;
    m.patch = opt.patch;
    m.stride = opt.stride;
    m.root = out_dir;

    struct Crop {
        std::size_t image;
        int y, x;
    };
    std::vector<ImagePatch> images;
    std::vector<Crop> crops;
    for (const auto& path : clean_images) {
        try {
            ImagePatch img = read_png(path);
            require(img.height() >= opt.patch && img.width() >= opt.patch, ErrorKind::invalid_input,
                    "smaller than the patch size");
            images.push_back(std::move(img));
        } catch (const Error& e) {
            m.errors.push_back(path.filename().string() + ": " + e.what());
            continue;
        }
        const auto& img = images.back();
        for (int y = 0; y + opt.patch <= img.height(); y += opt.stride)
            for (int x = 0; x + opt.patch <= img.width(); x += opt.stride)
                crops.push_back({images.size() - 1, y, x});
    }
    if (opt.max_patches && crops.size() > opt.max_patches)
        crops.resize(opt.max_patches);

    fs::create_directories(out_dir / "clean");
    fs::create_directories(out_dir / "distorted");
    const std::size_t n = crops.size();
    std::vector<ManifestEntry> entries(n);
    std::vector<std::string> failures(n);

#pragma omp parallel for schedule(dynamic)
    for (std::size_t k = 0; k < n; ++k) {
        try {
            const Crop& c = crops[k];
            const ImagePatch clean = quantized(crop(images[c.image], c.y, c.x, opt.patch, opt.patch));
            const std::uint64_t s = mix_seed(opt.seed, k);
            DegradationChain chain = opt.only ? sample_single(*opt.only, opt.severity, s)
                                              : sample_chain(opt.severity, opt.new_factor, s);
            const ImagePatch distorted = apply_chain(clean, chain);
            const std::string name = patch_name(k);
            write_png(out_dir / "clean" / name, clean);
            write_png(out_dir / "distorted" / name, distorted);
            entries[k] = {"clean/" + name, "distorted/" + name, std::move(chain), {}};
        } catch (const std::exception& e) {
            failures[k] = e.what();
        }
    }

    for (std::size_t k = 0; k < n; ++k) {
        if (failures[k].empty())
            m.entries.push_back(std::move(entries[k]));
        else
            m.errors.push_back("patch " + std::to_string(k) + ": " + failures[k]);
    }
    write_manifest(m, out_dir);
    return m;
}

std::vector<SamplePair> load_pairs(const DatasetManifest& m)
{
    std::vector<SamplePair> out(m.entries.size());
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        out[i].distorted = read_png(m.root / m.entries[i].distorted_path);
        out[i].clean = read_png(m.root / m.entries[i].clean_path);
    }
    return out;
}

std::vector<ImagePatch> load_clean(const DatasetManifest& m)
{
    std::vector<ImagePatch> out;
    out.reserve(m.entries.size());
    for (const auto& e : m.entries)
        out.push_back(read_png(m.root / e.clean_path));
    return out;
}

std::vector<ImagePatch> load_distorted(const DatasetManifest& m)
{
    std::vector<ImagePatch> out;
    out.reserve(m.entries.size());
    for (const auto& e : m.entries)
        out.push_back(read_png(m.root / e.distorted_path));
    return out;
}

void verify_manifest(const DatasetManifest& m)
{
    for (const auto& e : m.entries)
        for (const auto& p : {e.clean_path, e.distorted_path}) {
            try {
                (void)read_png(m.root / p);
            } catch (const Error& err) {
                fail(ErrorKind::invalid_input, "manifest entry " + p + ": " + err.what());
            }
        }
}

} // namespace blend
