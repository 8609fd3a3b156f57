#include "blend/evaluate.hpp"

#include "blend/error.hpp"
#include "blend/metrics.hpp"
#include "blend/network.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>

namespace blend {

ForwardKind default_forward(const ModelCheckpoint& model)
{
    switch (model.role) {
    case Role::single_expert: return ForwardKind::fork;
    case Role::base_R: return ForwardKind::base;
    case Role::expanded_H: return ForwardKind::expanded;
    case Role::incremental:
        fail(ErrorKind::invalid_input, "incremental checkpoints need an explicit forward (base or expanded)");
    default: fail(ErrorKind::invalid_input, "checkpoint role " + to_string(model.role) + " is not a restorer");
    }
}

ForwardKind parse_forward(const std::string& s)
{
    if (s == "fork")
        return ForwardKind::fork;
    if (s == "base")
        return ForwardKind::base;
    if (s == "expanded")
        return ForwardKind::expanded;
    fail(ErrorKind::invalid_input, "unknown forward '" + s + "' (fork, base, expanded)");
}

const char* to_string(ForwardKind k)
{
    switch (k) {
    case ForwardKind::fork: return "fork";
    case ForwardKind::base: return "base";
    case ForwardKind::expanded: return "expanded";
    }
    return "?";
}

Tensor restore(const ModelCheckpoint& model, ForwardKind kind, const Tensor& x, int expert)
{
    Tensor y;
    switch (kind) {
    case ForwardKind::fork: y = fork_forward(model, expert, x); break;
    case ForwardKind::base: y = base_forward(model, x).output; break;
    case ForwardKind::expanded: y = expanded_forward(model, x).output; break;
    }
    clamp01(y);
    return y;
}

namespace {

void check_model(const ModelCheckpoint& model, ForwardKind kind)
{
    switch (kind) {
    case ForwardKind::fork: require_role(model, {Role::single_expert}, "evaluate (fork)"); break;
    case ForwardKind::base: require_role(model, {Role::base_R, Role::incremental}, "evaluate (base)"); break;
    case ForwardKind::expanded:
        require_role(model, {Role::expanded_H, Role::incremental}, "evaluate (expanded)");
        break;
    }
}

std::vector<SampleRecord> score(const ModelCheckpoint& model, ForwardKind kind, const std::vector<SamplePair>& pairs,
                                const std::string& group, int expert)
{
    for (const auto& p : pairs)
        require(p.clean.pixels.same_shape(p.distorted.pixels) && p.clean.height() % 4 == 0
                    && p.clean.width() % 4 == 0 && p.clean.height() >= 11 && p.clean.width() >= 11,
                ErrorKind::invalid_input, "evaluation pair " + p.clean.id + " has unusable dimensions");
    std::vector<SampleRecord> out(pairs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const Tensor y = restore(model, kind, pairs[i].distorted.pixels, expert);
        SampleRecord& r = out[i];
        r.id = pairs[i].clean.id;
        r.group = group;
        r.psnr = psnr(y, pairs[i].clean.pixels);
        r.ssim = ssim(y, pairs[i].clean.pixels);
        r.input_psnr = psnr(pairs[i].distorted.pixels, pairs[i].clean.pixels);
        r.input_ssim = ssim(pairs[i].distorted.pixels, pairs[i].clean.pixels);
    }
    return out;
}

} // namespace

EvalReport evaluate(const ModelCheckpoint& model, ForwardKind kind, const std::vector<EvalSet>& sets, int expert)
{
    check_model(model, kind);
    const auto t0 = std::chrono::steady_clock::now();
    EvalReport rep;
    rep.forward = to_string(kind);
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(parameter_hash(model.params)));
    rep.model_id = to_string(model.role) + ":" + hash;
    for (const auto& s : sets) {
        auto recs = score(model, kind, s.pairs, s.group, expert);
        rep.samples.insert(rep.samples.end(), recs.begin(), recs.end());
        rep.dataset_id += (rep.dataset_id.empty() ? "" : "+") + s.group + "[" + std::to_string(s.pairs.size()) + "]";
    }
    std::sort(rep.samples.begin(), rep.samples.end(), [](const SampleRecord& a, const SampleRecord& b) {
        return std::tie(a.group, a.id) < std::tie(b.group, b.id);
    });
    for (const auto& r : rep.samples) {
        GroupSummary& g = rep.groups[r.group];
        ++g.count;
        g.psnr += r.psnr;
        g.ssim += r.ssim;
        g.input_psnr += r.input_psnr;
        g.input_ssim += r.input_ssim;
    }
    for (auto& [name, g] : rep.groups) {
        const double n = static_cast<double>(g.count);
        g.psnr /= n;
        g.ssim /= n;
        g.input_psnr /= n;
        g.input_ssim /= n;
    }
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

EvalReport evaluate(const ModelCheckpoint& model, ForwardKind kind, const std::vector<DatasetManifest>& manifests,
                    int expert)
{
    std::vector<EvalSet> sets;
    for (const auto& m : manifests) {
        std::string group = to_string(m.severity);
        for (const auto& s : sets)
            require(s.group != group, ErrorKind::invalid_input, "two manifests for group " + group);
        sets.push_back({group, load_pairs(m)});
    }
    return evaluate(model, kind, sets, expert);
}

std::pair<double, double> mean_quality(const ModelCheckpoint& model, ForwardKind kind,
                                       const std::vector<SamplePair>& pairs, int expert)
{
    require(!pairs.empty(), ErrorKind::invalid_input, "mean_quality over an empty set");
    check_model(model, kind);
    const auto recs = score(model, kind, pairs, "", expert);
    double p = 0.0, s = 0.0;
    for (const auto& r : recs) {
        p += r.psnr;
        s += r.ssim;
    }
    return {p / recs.size(), s / recs.size()};
}

nlohmann::json to_json(const EvalReport& r, bool with_samples)
{
    nlohmann::json j;
    j["model"] = r.model_id;
    j["dataset"] = r.dataset_id;
    j["forward"] = r.forward;
    j["wall_seconds"] = r.wall_seconds;
    for (const auto& [name, g] : r.groups)
        j["groups"][name] = {{"count", g.count},
                             {"psnr", g.psnr},
                             {"ssim", g.ssim},
                             {"input_psnr", g.input_psnr},
                             {"input_ssim", g.input_ssim}};
    if (with_samples) {
        j["samples"] = nlohmann::json::array();
        for (const auto& s : r.samples)
            j["samples"].push_back({{"id", s.id},
                                    {"group", s.group},
                                    {"psnr", s.psnr},
                                    {"ssim", s.ssim},
                                    {"input_psnr", s.input_psnr},
                                    {"input_ssim", s.input_ssim}});
    }
    return j;
}

std::string report_text(const EvalReport& r)
{
    std::string out = "model " + r.model_id + "\ndataset " + r.dataset_id + "\nforward " + r.forward + "\n";
    char line[256];
    for (const auto& [name, g] : r.groups) {
        std::snprintf(line, sizeof(line),
                      "group %s count %zu psnr %.4f ssim %.4f input_psnr %.4f input_ssim %.4f\n", name.c_str(),
                      g.count, g.psnr, g.ssim, g.input_psnr, g.input_ssim);
        out += line;
    }
    return out;
}

// --- curves -------------------------------------------------------------------------------

namespace {

struct CurveRow {
    long long epoch;
    double old_psnr, old_ssim, new_psnr, new_ssim;
};

std::vector<CurveRow> read_history(const std::filesystem::path& file)
{
    std::ifstream is(file);
    require(static_cast<bool>(is), ErrorKind::invalid_input, "cannot read history " + file.string());
    std::vector<CurveRow> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        try {
            const auto j = nlohmann::json::parse(line);
            rows.push_back({j.at("epoch").get<long long>(), j.at("old_psnr").get<double>(),
                            j.at("old_ssim").get<double>(), j.at("new_psnr").get<double>(),
                            j.at("new_ssim").get<double>()});
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::invalid_input, file.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

std::string export_curves(const std::vector<CurveSource>& sources)
{
    require(!sources.empty(), ErrorKind::invalid_input, "export_curves needs at least one history");
    std::vector<std::vector<CurveRow>> tables;
    for (const auto& s : sources)
        tables.push_back(read_history(s.history));
    const auto& ref = tables[0];
    for (std::size_t t = 1; t < tables.size(); ++t) {
        bool same = tables[t].size() == ref.size();
        for (std::size_t i = 0; same && i < ref.size(); ++i)
            same = tables[t][i].epoch == ref[i].epoch;
        require(same, ErrorKind::alignment,
                "history '" + sources[t].label + "' covers " + std::to_string(tables[t].size())
                    + " epochs that do not align with '" + sources[0].label + "' ("
                    + std::to_string(ref.size()) + " epochs)");
    }
    std::string out = "epoch";
    for (const auto& s : sources)
        for (const char* col : {"_old_psnr", "_old_ssim", "_new_psnr", "_new_ssim"})
            out += "," + s.label + col;
    out += "\n";
    for (std::size_t i = 0; i < ref.size(); ++i) {
        out += std::to_string(ref[i].epoch);
        for (const auto& t : tables)
            out += "," + fmt(t[i].old_psnr) + "," + fmt(t[i].old_ssim) + "," + fmt(t[i].new_psnr) + ","
                 + fmt(t[i].new_ssim);
        out += "\n";
    }
    return out;
}

} // namespace blend
